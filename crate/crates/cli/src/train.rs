use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gtseg_core::data::{augment, kfold_split, patch_sample, read_dataset, synth_generate, FoldSplit, Sample};
use gtseg_core::fd::{self, fd_loss_graph};
use gtseg_core::metrics::{confusion, report};
use gtseg_core::model::{checkpoint, Ctx, GtUNet, GtUNetConfig, Mode};
use gtseg_core::tensor::{Adam, Graph, Tensor};
use gtseg_core::{Image, Mask};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataSource, LossKind, RunConfig};
use crate::{derive_seed, CliError, CliResult};

pub const EPOCH_HEADER: &str = "epoch,train_loss,train_bce,train_dice,val_dice";
pub const BATCH_HEADER: &str = "epoch,batch,loss,bce";

// Tags separating the derived random streams.
const INIT: u64 = 1;
const SHUFFLE: u64 = 2;
const AUGMENT: u64 = 3;
const PATCH: u64 = 4;
const VAL_PATCH: u64 = 5;

/// Samples and fold assignment described by the data section.
pub fn load_data(cfg: &RunConfig) -> CliResult<(Vec<Sample>, FoldSplit)> {
    let (samples, split) = match cfg.data.source {
        DataSource::Synth => (synth_generate(cfg.data.seed, cfg.data.count, cfg.data.size), None),
        DataSource::Directory => {
            let root = cfg.data.path.as_ref().ok_or_else(|| CliError::Usage("data.path is required".into()))?;
            read_dataset(root).map_err(|e| CliError::Data(format!("{}: {e}", root.display())))?
        }
    };
    if samples.is_empty() {
        return Err(CliError::Data("dataset is empty".into()));
    }
    let split = match split {
        Some(s) if s.fold_count == cfg.training.folds => s,
        _ => {
            let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
            kfold_split(&ids, cfg.training.folds, cfg.training.seed).map_err(|e| CliError::Data(e.to_string()))?
        }
    };
    Ok((samples, split))
}

/// Model configuration for the tiles that will actually be fed to it.
pub fn model_config(cfg: &RunConfig, samples: &[Sample]) -> CliResult<GtUNetConfig> {
    let dims = samples[0].image.dims();
    if let Some(s) = samples.iter().find(|s| s.image.dims() != dims) {
        return Err(CliError::Data(format!("sample {} is {:?}, expected {:?}", s.id, s.image.dims(), dims)));
    }
    let (h, w) = match cfg.data.patch {
        Some(p) if p.size > dims.0.min(dims.1) => {
            return Err(CliError::Data(format!("patch {} larger than {}x{} images", p.size, dims.0, dims.1)))
        }
        Some(p) => (p.size, p.size),
        None => dims,
    };
    let mut model = cfg.model.clone();
    model.input_size = [h, w];
    model.validate().map_err(|e| CliError::Data(format!("model does not fit {h}x{w} inputs: {e}")))?;
    Ok(model)
}

pub fn batch_tensor(images: &[&Image]) -> Tensor {
    let (h, w) = images[0].dims();
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        data.extend_from_slice(img.data());
    }
    Tensor::new(vec![images.len(), 1, h, w], data).expect("consistent batch")
}

/// Probability maps for every sample, in batches.
pub fn predict_all(model: &GtUNet, samples: &[Sample], batch: usize) -> CliResult<Vec<Image>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let x = batch_tensor(&chunk.iter().map(|s| &s.image).collect::<Vec<_>>());
        let y = model.predict(&x)?;
        let (h, w) = chunk[0].image.dims();
        for p in y.data().chunks(h * w) {
            out.push(Image::from_vec(h, w, p.to_vec())?);
        }
    }
    Ok(out)
}

pub fn dice(pred: &Mask, target: &Mask) -> CliResult<f64> {
    Ok(report(confusion(pred, target)?, None)?.dice)
}

pub fn mean_dice(probs: &[Image], samples: &[Sample]) -> CliResult<f64> {
    let mut total = 0.0;
    for (p, s) in probs.iter().zip(samples) {
        total += dice(&p.threshold(fd::THRESHOLD), &s.mask)?;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_bce: f64,
    pub train_dice: f64,
    pub val_dice: f64,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub batch_log: PathBuf,
    pub best_epoch: usize,
    pub best_val_dice: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

struct StepStats {
    loss: f64,
    bce: f64,
    dice_sum: f64,
}

fn train_step(model: &mut GtUNet, adam: &mut Adam, cfg: &RunConfig, batch: &[&Sample]) -> CliResult<StepStats> {
    let x = batch_tensor(&batch.iter().map(|s| &s.image).collect::<Vec<_>>());
    let masks: Vec<Mask> = batch.iter().map(|s| s.mask.clone()).collect();
    let target: Vec<f64> = masks.iter().flat_map(|m| m.data().iter().map(|&v| f64::from(v))).collect();
    let mut g = Graph::new();
    let xv = g.constant(x);
    let mut ctx = Ctx::new(&mut g, model.params(), Mode::Train);
    let probs = model.forward(&mut ctx, xv)?;
    let updates = std::mem::take(&mut ctx.bn_updates);
    let loss = match cfg.training.loss {
        LossKind::Bce => g.bce(probs, &target)?,
        LossKind::Fd => fd_loss_graph(&mut g, probs, &masks, &cfg.training.fd_params())?.0,
    };
    let p = g.data(probs);
    let bce = fd::bce(p, &target)?;
    let (h, w) = masks[0].dims();
    let mut dice_sum = 0.0;
    for (chunk, m) in p.chunks(h * w).zip(&masks) {
        let pred = Image::from_vec(h, w, chunk.to_vec())?.threshold(fd::THRESHOLD);
        dice_sum += dice(&pred, m)?;
    }
    let loss_value = g.data(loss)[0];
    let grads = g.backward(loss)?;
    let params = model.params_mut();
    params.zero_grad();
    params.accumulate(&grads)?;
    adam.step(params)?;
    model.apply_bn_updates(&updates);
    Ok(StepStats {
        loss: loss_value,
        bce,
        dice_sum,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.10}")
}

/// Trains one fold and writes `fold<i>.ckpt`, `fold<i>.csv` (per epoch) and
/// `fold<i>_batches.csv` (per step) into `out`.
pub fn train_fold(
    cfg: &RunConfig,
    samples: &[Sample],
    split: &FoldSplit,
    fold: usize,
    out: &Path,
    progress: &mut dyn Write,
) -> CliResult<FoldOutcome> {
    let seed = cfg.training.seed;
    let model_cfg = model_config(cfg, samples)?;
    let (val, train): (Vec<&Sample>, Vec<&Sample>) =
        samples.iter().partition(|s| split.fold_of(&s.id) == Some(fold));
    if val.is_empty() || train.is_empty() {
        return Err(CliError::Data(format!("fold {fold} leaves an empty training or validation set")));
    }
    let val: Vec<Sample> = match cfg.data.patch {
        Some(p) => {
            let mut v = Vec::new();
            for (i, s) in val.iter().enumerate() {
                v.extend(patch_sample(s, p.size, p.per_image, derive_seed(seed, &[VAL_PATCH, fold as u64, i as u64]))?);
            }
            v
        }
        None => val.into_iter().cloned().collect(),
    };

    std::fs::create_dir_all(out)?;
    let outcome_paths = (
        out.join(format!("fold{fold}.ckpt")),
        out.join(format!("fold{fold}.csv")),
        out.join(format!("fold{fold}_batches.csv")),
    );
    let mut model = GtUNet::new(model_cfg, derive_seed(seed, &[INIT, fold as u64]))?;
    let mut adam = Adam::new(cfg.optimizer.adam(), model.params())?;
    let mut epoch_log = format!("{EPOCH_HEADER}\n");
    let mut batch_log = format!("{BATCH_HEADER}\n");
    let mut records = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    if cfg.training.epochs == 0 {
        checkpoint::save(&model, &outcome_paths.0)?;
    }

    for epoch in 1..=cfg.training.epochs {
        let started = Instant::now();
        let mut epoch_set: Vec<Sample> = Vec::new();
        for (i, s) in train.iter().enumerate() {
            let tag = |k: u64| derive_seed(seed, &[k, fold as u64, epoch as u64, i as u64]);
            let tiles = match cfg.data.patch {
                Some(p) => patch_sample(s, p.size, p.per_image, tag(PATCH))?,
                None => vec![(*s).clone()],
            };
            for (j, t) in tiles.into_iter().enumerate() {
                epoch_set.push(if cfg.training.augment { augment(&t, derive_seed(tag(AUGMENT), &[j as u64])) } else { t });
            }
        }
        let mut order: Vec<usize> = (0..epoch_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SHUFFLE, fold as u64, epoch as u64])));

        let (mut loss_sum, mut bce_sum, mut dice_sum) = (0.0, 0.0, 0.0);
        for (b, idx) in order.chunks(cfg.training.batch_size).enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &epoch_set[i]).collect();
            let s = train_step(&mut model, &mut adam, cfg, &batch)?;
            let n = batch.len() as f64;
            loss_sum += s.loss * n;
            bce_sum += s.bce * n;
            dice_sum += s.dice_sum;
            writeln!(batch_log, "{epoch},{b},{},{}", fmt(s.loss), fmt(s.bce)).expect("string write");
        }
        let n = epoch_set.len() as f64;
        let val_dice = mean_dice(&predict_all(&model, &val, cfg.training.batch_size)?, &val)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_bce: bce_sum / n,
            train_dice: dice_sum / n,
            val_dice,
        };
        writeln!(
            epoch_log,
            "{epoch},{},{},{},{}",
            fmt(rec.train_loss),
            fmt(rec.train_bce),
            fmt(rec.train_dice),
            fmt(rec.val_dice)
        )
        .expect("string write");
        if best.is_none_or(|(_, d)| val_dice > d) {
            best = Some((epoch, val_dice));
            checkpoint::save(&model, &outcome_paths.0)?;
        }
        let _ = writeln!(
            progress,
            "fold {fold} epoch {epoch}/{} loss {:.4} train_dice {:.4} val_dice {:.4} ({:.1}s)",
            cfg.training.epochs,
            rec.train_loss,
            rec.train_dice,
            rec.val_dice,
            started.elapsed().as_secs_f64()
        );
        records.push(rec);
    }
    std::fs::write(&outcome_paths.1, epoch_log)?;
    std::fs::write(&outcome_paths.2, batch_log)?;
    Ok(FoldOutcome {
        fold,
        checkpoint: outcome_paths.0,
        log: outcome_paths.1,
        batch_log: outcome_paths.2,
        best_epoch: best.map_or(0, |b| b.0),
        best_val_dice: best.map(|b| b.1),
        epochs: records,
    })
}

/// Trains every fold (or just `only`) in sequence and writes the resolved
/// configuration to `<out>/config.json`.
pub fn train(cfg: &RunConfig, out: &Path, only: Option<usize>, progress: &mut dyn Write) -> CliResult<Vec<FoldOutcome>> {
    cfg.validate()?;
    let (samples, split) = load_data(cfg)?;
    model_config(cfg, &samples)?;
    if let Some(f) = only {
        if f >= split.fold_count {
            return Err(CliError::Usage(format!("fold {f} out of range 0..{}", split.fold_count)));
        }
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    let folds: Vec<usize> = match only {
        Some(f) => vec![f],
        None => (0..split.fold_count).collect(),
    };
    folds.into_iter().map(|f| train_fold(cfg, &samples, &split, f, out, progress)).collect()
}
