mod common;

use common::*;
use gtseg::eval::{score, CSV_FILE, JSON_FILE};
use gtseg::train::{load_data, train, train_fold, BATCH_HEADER, EPOCH_HEADER};
use gtseg_core::model::checkpoint;
use tempfile::tempdir;

fn rows(path: &std::path::Path) -> Vec<Vec<String>> {
    String::from_utf8(read(path))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn zero_epochs_checkpoints_initial_weights() {
    let d = tempdir().unwrap();
    let cfg = small_config(&["training.epochs=0"]);
    let outcomes = train(&cfg, d.path(), None, &mut std::io::sink()).unwrap();
    assert_eq!(outcomes.len(), 3);
    for o in &outcomes {
        assert!(o.checkpoint.exists());
        assert_eq!(String::from_utf8(read(&o.log)).unwrap(), format!("{EPOCH_HEADER}\n"));
        assert_eq!(String::from_utf8(read(&o.batch_log)).unwrap(), format!("{BATCH_HEADER}\n"));
        assert_eq!(o.best_val_dice, None);
    }
    // initial weights depend on the fold but not on anything trained
    let a = checkpoint::load(&outcomes[0].checkpoint).unwrap();
    let (samples, _) = load_data(&cfg).unwrap();
    let model_cfg = gtseg::train::model_config(&cfg, &samples).unwrap();
    assert_eq!(a.config(), &model_cfg);
    assert_ne!(read(&outcomes[0].checkpoint), read(&outcomes[1].checkpoint));
}

#[test]
fn fd_loss_log_respects_bounds() {
    let d = tempdir().unwrap();
    let cfg = small_config(&["training.epochs=2", "training.loss=\"fd\""]);
    let (samples, split) = load_data(&cfg).unwrap();
    let o = train_fold(&cfg, &samples, &split, 0, d.path(), &mut std::io::sink()).unwrap();
    let batches = rows(&o.batch_log);
    assert!(batches.len() >= 4);
    for r in &batches {
        let (loss, bce): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        // the log keeps 10 decimals
        assert!(loss >= 0.5 * bce - 1e-9 && loss <= bce + 1e-9, "{r:?}");
    }
}

#[test]
fn bce_validation_dice_improves_over_first_epochs() {
    let d = tempdir().unwrap();
    let cfg = small_config(&["data.count=16", "training.epochs=5", "training.loss=\"bce\"", "training.seed=0"]);
    let (samples, split) = load_data(&cfg).unwrap();
    let o = train_fold(&cfg, &samples, &split, 0, d.path(), &mut std::io::sink()).unwrap();
    let dice: Vec<f64> = o.epochs.iter().map(|e| e.val_dice).collect();
    assert!(dice.windows(2).all(|w| w[1] > w[0]), "{dice:?}");
}

#[test]
fn identical_runs_are_byte_identical() {
    let d = tempdir().unwrap();
    let cfg = small_config(&["training.epochs=2", "training.loss=\"fd\""]);
    train(&cfg, &d.path().join("a"), Some(1), &mut std::io::sink()).unwrap();
    train(&cfg, &d.path().join("b"), Some(1), &mut std::io::sink()).unwrap();
    let (a, b) = (snapshot(&d.path().join("a")), snapshot(&d.path().join("b")));
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);

    let other = small_config(&["training.epochs=2", "training.loss=\"fd\"", "training.seed=1"]);
    train(&other, &d.path().join("c"), Some(1), &mut std::io::sink()).unwrap();
    assert_ne!(read(d.path().join("a/fold1.ckpt")), read(d.path().join("c/fold1.ckpt")));
}

#[test]
fn eval_reports_one_row_per_sample_plus_aggregate() {
    let d = tempdir().unwrap();
    let run = d.path().join("run");
    let flags = set_flags(&["training.epochs=1"]);
    let mut args: Vec<&str> = vec!["train", "--out", run.to_str().unwrap()];
    args.extend(flags.iter().map(String::as_str));
    let o = gtseg(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("fold ")).count(), 3);

    // single checkpoint over the configured data
    let ev = d.path().join("eval");
    let ckpt = run.join("fold0.ckpt");
    let mut args: Vec<&str> = vec!["eval", ckpt.to_str().unwrap(), "--out", ev.to_str().unwrap(), "--dump-masks"];
    args.extend(flags.iter().map(String::as_str));
    let o = gtseg(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(read(ev.join(CSV_FILE))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12 + 1);
    assert!(csv.lines().last().unwrap().starts_with("mean,"));
    let json: serde_json::Value = serde_json::from_slice(&read(ev.join(JSON_FILE))).unwrap();
    assert_eq!(json["samples"].as_array().unwrap().len(), 12);
    assert_eq!(json["summary"]["count"], 12);
    assert_eq!(std::fs::read_dir(ev.join("masks")).unwrap().count(), 12);

    // cross-validated: every sample once, scored by its held-out fold
    let cv = d.path().join("cv");
    let o = gtseg(&["eval", "--cv", run.to_str().unwrap(), "--out", cv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&read(cv.join(JSON_FILE))).unwrap();
    let samples = json["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 12);
    let folds: std::collections::BTreeSet<u64> = samples.iter().map(|s| s["fold"].as_u64().unwrap()).collect();
    assert_eq!(folds.len(), 3);
    assert_eq!(String::from_utf8(read(cv.join(CSV_FILE))).unwrap().lines().count(), 14);
}

#[test]
fn eval_rejects_incompatible_data() {
    let d = tempdir().unwrap();
    let cfg = small_config(&["training.epochs=0"]);
    train(&cfg, d.path(), Some(0), &mut std::io::sink()).unwrap();
    let ckpt = d.path().join("fold0.ckpt");
    // 36 px does not tile into 2 levels of 4×4 groups
    let flags = set_flags(&["data.size=36"]);
    let ev = d.path().join("e");
    let mut args: Vec<&str> = vec!["eval", ckpt.to_str().unwrap(), "--out", ev.to_str().unwrap()];
    args.extend(flags.iter().map(String::as_str));
    let o = gtseg(&args);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot process"), "{}", stderr(&o));
}

#[test]
fn all_background_prediction_flags_zero_sensitivity() {
    use gtseg_core::metrics::{confusion, report};
    use gtseg_core::Mask;
    let target = Mask::from_fn(8, 8, |y, _| u8::from(y < 3));
    let r = report(confusion(&Mask::new(8, 8), &target).unwrap(), None).unwrap();
    assert_eq!(r.se, 0.0);
    assert!(r.flags.empty_prediction);
    assert!(!r.flags.no_positives);
}

#[test]
fn checkpoint_on_its_training_data_matches_logged_dice() {
    let d = tempdir().unwrap();
    let cfg = small_config(&["data.count=16", "training.epochs=12", "training.augment=false"]);
    let (samples, split) = load_data(&cfg).unwrap();
    let o = train_fold(&cfg, &samples, &split, 0, d.path(), &mut std::io::sink()).unwrap();
    let logged = o.epochs[o.best_epoch - 1].train_dice;
    let model = checkpoint::load(&o.checkpoint).unwrap();
    let train_set: Vec<_> = samples.iter().filter(|s| split.fold_of(&s.id) != Some(0)).cloned().collect();
    let reports = score(&model, &train_set, 4, None).unwrap();
    let dice = reports.iter().map(|(_, r)| r.dice).sum::<f64>() / reports.len() as f64;
    assert!(dice >= logged - 0.05, "eval {dice} vs logged {logged}");
}
