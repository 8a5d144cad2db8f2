use std::path::{Path, PathBuf};

use gtseg_core::data::pgm::save_mask;
use gtseg_core::data::Sample;
use gtseg_core::fd;
use gtseg_core::metrics::{confusion, report, summarize, MetricsReport, Summary, CSV_HEADER};
use gtseg_core::model::{checkpoint, GtUNet};
use serde::Serialize;

use crate::config::RunConfig;
use crate::train::{load_data, predict_all};
use crate::{CliError, CliResult};

pub const CSV_FILE: &str = "metrics.csv";
pub const JSON_FILE: &str = "metrics.json";
/// Label of the aggregate row.
pub const SUMMARY_LABEL: &str = "mean";

#[derive(Clone, Debug, Serialize)]
pub struct SampleReport {
    pub id: String,
    /// Fold whose checkpoint produced the prediction, in cross-validation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    #[serde(flatten)]
    pub report: MetricsReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub samples: Vec<SampleReport>,
    pub summary: Summary,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for s in &self.samples {
            out.push_str(&s.report.csv_row(&s.id));
            out.push('\n');
        }
        out.push_str(&self.summary.csv_row(SUMMARY_LABEL));
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes `metrics.csv` and `metrics.json` into `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CSV_FILE), self.to_csv())?;
        std::fs::write(dir.join(JSON_FILE), self.to_json())?;
        Ok(())
    }
}

fn check_fits(model: &GtUNet, samples: &[Sample]) -> CliResult<()> {
    for s in samples {
        let (h, w) = s.image.dims();
        model
            .config()
            .check_input(h, w)
            .map_err(|e| CliError::Data(format!("checkpoint cannot process sample {}: {e}", s.id)))?;
    }
    Ok(())
}

/// Per-sample metrics of `model` on `samples`; thresholded masks are written
/// to `dump` as `<id>.pgm` when given.
pub fn score(model: &GtUNet, samples: &[Sample], batch: usize, dump: Option<&Path>) -> CliResult<Vec<(String, MetricsReport)>> {
    check_fits(model, samples)?;
    if let Some(dir) = dump {
        std::fs::create_dir_all(dir)?;
    }
    let probs = predict_all(model, samples, batch)?;
    let mut out = Vec::with_capacity(samples.len());
    for (p, s) in probs.iter().zip(samples) {
        let pred = p.threshold(fd::THRESHOLD);
        let r = report(confusion(&pred, &s.mask)?, Some((p.data(), &s.mask)))?;
        if let Some(dir) = dump {
            save_mask(dir.join(format!("{}.pgm", s.id)), &pred)?;
        }
        out.push((s.id.clone(), r));
    }
    Ok(out)
}

fn assemble(rows: Vec<SampleReport>) -> CliResult<EvalReport> {
    if rows.is_empty() {
        return Err(CliError::Data("nothing to evaluate".into()));
    }
    let reports: Vec<MetricsReport> = rows.iter().map(|r| r.report).collect();
    Ok(EvalReport {
        summary: summarize(&reports)?,
        samples: rows,
    })
}

fn load_checkpoint(path: &Path) -> CliResult<GtUNet> {
    checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Evaluates one checkpoint on every sample of the configured data.
pub fn eval_checkpoint(ckpt: &Path, cfg: &RunConfig, dump: Option<&Path>) -> CliResult<EvalReport> {
    let model = load_checkpoint(ckpt)?;
    let (samples, _) = load_data(cfg)?;
    let rows = score(&model, &samples, cfg.training.batch_size, dump)?
        .into_iter()
        .map(|(id, report)| SampleReport { id, fold: None, report })
        .collect();
    assemble(rows)
}

/// Cross-validated evaluation of a training run: each sample is scored by
/// the checkpoint of the fold that held it out. The run's `config.json`
/// supplies data and split.
pub fn eval_cv(run: &Path, dump: Option<&Path>) -> CliResult<EvalReport> {
    let cfg = RunConfig::load(&run.join("config.json"))?;
    let (samples, split) = load_data(&cfg)?;
    let mut rows = Vec::with_capacity(samples.len());
    for fold in 0..split.fold_count {
        let ckpt: PathBuf = run.join(format!("fold{fold}.ckpt"));
        if !ckpt.exists() {
            return Err(CliError::Data(format!("missing checkpoint {}", ckpt.display())));
        }
        let model = load_checkpoint(&ckpt)?;
        let held_out: Vec<Sample> = samples.iter().filter(|s| split.fold_of(&s.id) == Some(fold)).cloned().collect();
        for (id, report) in score(&model, &held_out, cfg.training.batch_size, dump)? {
            rows.push(SampleReport { id, fold: Some(fold), report });
        }
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    assemble(rows)
}
