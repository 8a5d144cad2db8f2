use std::io::Write;
use std::path::{Path, PathBuf};

use gtseg_core::data::pgm::load_mask;
use gtseg_core::data::{kfold_split, synth_generate, write_dataset};
use gtseg_core::fd::{extract_contour, mask_descriptor, shape_factor, ContourSource, Degeneracy, FdParams};
use gtseg_core::model::{complexity, instrumented_counts, GtUNetConfig};
use gtseg_core::{Error, Mask};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::eval::{eval_checkpoint, eval_cv, EvalReport};
use crate::train::{train, FoldOutcome};
use crate::{CliError, CliResult};

/// Environment variable consulted when no seed is given explicitly.
pub const SEED_ENV: &str = "GTSEG_SEED";

/// Parses `GTSEG_SEED` when set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Where a run configuration comes from, in increasing precedence.
#[derive(Clone, Debug, Default)]
pub struct ConfigSource {
    pub file: Option<PathBuf>,
    /// `synth` or a dataset directory.
    pub data: Option<String>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    /// Fallback seed, used only when nothing else sets `training.seed`.
    pub env_seed: Option<u64>,
}

impl ConfigSource {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let (base, file_tree) = match &self.file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                let tree: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                (RunConfig::from_json(&text)?, Some(tree))
            }
            None => (RunConfig::default(), None),
        };
        let mut overrides = Vec::new();
        let seed_in_file = file_tree.as_ref().and_then(|t| t.pointer("/training/seed")).is_some();
        let seed_overridden = self.overrides.iter().any(|o| o.starts_with("training.seed="));
        if let Some(s) = self.env_seed.filter(|_| !seed_in_file && !seed_overridden && self.seed.is_none()) {
            overrides.push(format!("training.seed={s}"));
        }
        match self.data.as_deref() {
            None => {}
            Some("synth") => overrides.push("data.source=synth".into()),
            Some(dir) => {
                overrides.push("data.source=directory".into());
                overrides.push(format!("data.path={}", Value::String(dir.into())));
            }
        }
        overrides.extend(self.overrides.iter().cloned());
        if let Some(s) = self.seed {
            overrides.push(format!("training.seed={s}"));
        }
        let cfg = base.with_overrides(&overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn cmd_train(cfg: &RunConfig, out: &Path, fold: Option<usize>, stdout: &mut dyn Write, progress: &mut dyn Write) -> CliResult<Vec<FoldOutcome>> {
    let outcomes = train(cfg, out, fold, progress)?;
    for o in &outcomes {
        let dice = o.best_val_dice.map_or_else(|| "n/a".to_string(), |d| format!("{d:.4}"));
        writeln!(
            stdout,
            "fold {}: best val_dice {dice} at epoch {} -> {}",
            o.fold,
            o.best_epoch,
            o.checkpoint.display()
        )?;
    }
    Ok(outcomes)
}

/// What `eval` scores.
#[derive(Clone, Debug)]
pub enum EvalTarget {
    /// One checkpoint on the configured data.
    Checkpoint(PathBuf, RunConfig),
    /// Every fold checkpoint of a training run on its held-out samples.
    CrossValidation(PathBuf),
}

pub fn cmd_eval(target: &EvalTarget, out: &Path, dump_masks: bool, stdout: &mut dyn Write) -> CliResult<EvalReport> {
    let dump = dump_masks.then(|| out.join("masks"));
    let report = match target {
        EvalTarget::Checkpoint(ckpt, cfg) => eval_checkpoint(ckpt, cfg, dump.as_deref())?,
        EvalTarget::CrossValidation(run) => eval_cv(run, dump.as_deref())?,
    };
    report.write(out)?;
    let m = &report.summary.mean;
    let s = &report.summary.std;
    writeln!(stdout, "samples {}", report.summary.count)?;
    for (name, mean, std) in [
        ("acc", m.acc, s.acc),
        ("se", m.se, s.se),
        ("sp", m.sp, s.sp),
        ("js", m.js, s.js),
        ("dice", m.dice, s.dice),
    ] {
        writeln!(stdout, "{name:<5}{mean:.4} ± {std:.4}")?;
    }
    match (m.auc, s.auc) {
        (Some(a), Some(sd)) => writeln!(stdout, "auc  {a:.4} ± {sd:.4}")?,
        _ => writeln!(stdout, "auc  undefined (single-class target)")?,
    }
    writeln!(stdout, "reports written to {}", out.display())?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityArgs {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub group_h: usize,
    pub group_w: usize,
    pub phi: usize,
}

/// Prints the closed-form costs; with `verify`, also runs the instrumented
/// attention and fails if any term disagrees.
pub fn cmd_complexity(a: ComplexityArgs, verify: bool, as_json: bool, stdout: &mut dyn Write) -> CliResult<()> {
    let ComplexityArgs {
        height,
        width,
        channels,
        group_h,
        group_w,
        phi,
    } = a;
    let c = complexity(height, width, channels, group_h, group_w, phi).map_err(|e| CliError::Usage(e.to_string()))?;
    let counts = if verify {
        Some(instrumented_counts(height, width, channels, group_h, group_w, phi)?)
    } else {
        None
    };
    let agrees = counts.map(|n| n.matches(&c, height, width, channels, group_h, group_w, phi));

    if as_json {
        let mut v = json!({
            "input": {"H": height, "W": width, "C": channels, "h": group_h, "w": group_w, "phi": phi},
            "complexity": c,
        });
        if let (Some(n), Some(ok)) = (counts, agrees) {
            v["instrumented"] = json!(n);
            v["verified"] = json!(ok);
        }
        writeln!(stdout, "{}", serde_json::to_string_pretty(&v).expect("json"))?;
    } else {
        writeln!(stdout, "H={height} W={width} C={channels} h={group_h} w={group_w} phi={phi}")?;
        writeln!(stdout, "{:<20}{}", "omega_mhsa", c.omega_mhsa)?;
        writeln!(stdout, "{:<20}{}", "omega_gt_per_group", c.omega_gt_per_group)?;
        writeln!(stdout, "{:<20}{}", "num_groups", c.num_groups)?;
        writeln!(stdout, "{:<20}{}", "omega_gt_total", c.omega_gt_total)?;
        writeln!(stdout, "{:<20}{:.4}", "ratio", c.ratio)?;
        if let Some(n) = counts {
            writeln!(stdout, "instrumented:")?;
            writeln!(stdout, "  {:<18}{} (projection {} + attention {})", "global", n.global_total(), n.global_projection, n.global_attention)?;
            writeln!(stdout, "  {:<18}{} (projection {} + attention {})", "grouped", n.grouped_total(), n.grouped_projection, n.grouped_attention)?;
            writeln!(stdout, "  {:<18}{} (not part of the closed forms)", "position logits", n.grouped_position)?;
        }
    }
    match agrees {
        Some(false) => Err(CliError::Data("instrumented MAC counts disagree with the closed forms".into())),
        Some(true) if !as_json => {
            writeln!(stdout, "verify: ok")?;
            Ok(())
        }
        _ => Ok(()),
    }
}

fn describe(label: &str, path: &Path, mask: &Mask, params: &FdParams, source: ContourSource, stdout: &mut dyn Write) -> CliResult<()> {
    match extract_contour(mask) {
        Ok(c) => writeln!(
            stdout,
            "{label} {}: contour {} points, perimeter {:.3}, resampled to {}",
            path.display(),
            c.len(),
            c.perimeter(),
            params.n
        )?,
        Err(Error::NoForeground) => writeln!(stdout, "{label} {}: empty mask, no contour", path.display())?,
        Err(e) => return Err(e.into()),
    }
    match mask_descriptor(mask, params, source)? {
        Ok(d) => {
            let cells: Vec<String> = d.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(stdout, "  descriptors[{}]: {}", d.len(), cells.join(" "))?;
        }
        Err(Degeneracy::Empty) => writeln!(stdout, "  descriptors: none (empty mask)")?,
        Err(Degeneracy::NoScale) => writeln!(stdout, "  descriptors: none (contour has no scale)")?,
    }
    Ok(())
}

/// Compares two mask files: `a` plays the prediction, `b` the reference.
pub fn cmd_fd(a: &Path, b: &Path, params: &FdParams, stdout: &mut dyn Write) -> CliResult<()> {
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let read = |p: &Path| load_mask(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())));
    let (ma, mb) = (read(a)?, read(b)?);
    describe("a", a, &ma, params, ContourSource::Predicted, stdout)?;
    describe("b", b, &mb, params, ContourSource::Reference, stdout)?;
    let s = shape_factor(&ma, &mb, params)?;
    match (s.predicted, s.reference) {
        (None, None) => {}
        (Some(_), Some(_)) => writeln!(stdout, "degenerate: neither mask has a usable contour; shapes agree, delta_z = 0")?,
        (Some(d), None) => writeln!(stdout, "degenerate: a is {d:?}; penalty delta_z = 1")?,
        (None, Some(d)) => writeln!(stdout, "degenerate: b is {d:?}; penalty delta_z = 1")?,
    }
    writeln!(stdout, "delta_z {:.9}", s.delta_z)?;
    writeln!(stdout, "factor  {:.9} (beta {})", s.factor, params.beta)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SynthArgs {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    pub folds: usize,
    pub out: PathBuf,
}

/// Writes a synthetic dataset directory. Warns on `stderr` when the size
/// does not suit the default model.
pub fn cmd_synth(a: &SynthArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    if a.count == 0 || a.size == 0 {
        return Err(CliError::Usage("count and size must be positive".into()));
    }
    if a.folds < 2 || a.folds > a.count {
        return Err(CliError::Usage(format!("folds must be in 2..={}, got {}", a.count, a.folds)));
    }
    let model = GtUNetConfig::default();
    let divisor = model.required_divisor_h();
    if a.size % divisor != 0 {
        writeln!(
            stderr,
            "warning: size {} is not divisible by {divisor}; the default model ({} levels, {}x{} groups) cannot process it",
            a.size, model.levels, model.group_h, model.group_w
        )?;
    }
    let samples = synth_generate(a.seed, a.count, a.size);
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let split = kfold_split(&ids, a.folds, a.seed)?;
    write_dataset(&a.out, &samples, Some(&split))?;
    writeln!(stdout, "wrote {} samples of {}x{} to {}", a.count, a.size, a.size, a.out.display())?;
    Ok(())
}
