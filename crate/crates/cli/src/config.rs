use std::path::{Path, PathBuf};

use gtseg_core::fd::FdParams;
use gtseg_core::model::GtUNetConfig;
use gtseg_core::tensor::AdamConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: GtUNetConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerConfig {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Fd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    /// Sharpness of the FD shape factor.
    pub beta: f64,
    /// Normalized descriptors compared by the FD loss.
    pub descriptors: usize,
    /// Points per resampled contour.
    pub contour_points: usize,
    pub folds: usize,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let fd = FdParams::default();
        TrainingConfig {
            epochs: 200,
            batch_size: 12,
            loss: LossKind::Bce,
            beta: fd.beta,
            descriptors: fd.k,
            contour_points: fd.n,
            folds: 3,
            seed: 0,
            augment: true,
        }
    }
}

impl TrainingConfig {
    pub fn fd_params(&self) -> FdParams {
        FdParams {
            beta: self.beta,
            k: self.descriptors,
            n: self.contour_points,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synth,
    Directory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    pub size: usize,
    pub per_image: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Dataset root when `source` is `directory`.
    pub path: Option<PathBuf>,
    /// Side length of generated images.
    pub size: usize,
    /// Number of generated images.
    pub count: usize,
    /// Seed of the generator; independent of the training seed.
    pub seed: u64,
    pub patch: Option<PatchConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synth,
            path: None,
            size: 256,
            count: 248,
            seed: 0,
            patch: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key.path=value` overrides. Values are parsed as JSON and fall
    /// back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> CliResult<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = serde_json::to_value(self).expect("config serializes");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{item}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut tree;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| CliError::Usage(format!("override `{key}`: `{}` is not a section", parts[..i].join("."))))?;
                if i + 1 == parts.len() {
                    if !obj.contains_key(*part) {
                        return Err(CliError::Usage(format!("unknown config field `{key}`")));
                    }
                    obj.insert(part.to_string(), value.clone());
                    break;
                }
                node = obj
                    .get_mut(*part)
                    .ok_or_else(|| CliError::Usage(format!("unknown config section `{}`", parts[..=i].join("."))))?;
                if node.is_null() {
                    *node = Value::Object(Default::default());
                }
            }
        }
        serde_json::from_value(tree).map_err(|e| CliError::Usage(format!("override: {e}")))
    }

    /// Field-level checks that do not need the data.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, msg: String| Err(CliError::Usage(format!("{field}: {msg}")));
        self.model.validate().map_err(|e| CliError::Usage(format!("model: {e}")))?;
        self.optimizer.adam().validate().map_err(|e| CliError::Usage(format!("optimizer: {e}")))?;
        let t = &self.training;
        if t.batch_size == 0 {
            return bad("training.batch_size", "must be ≥ 1".into());
        }
        if t.folds < 2 {
            return bad("training.folds", format!("need at least 2, got {}", t.folds));
        }
        if t.loss == LossKind::Fd {
            t.fd_params().validate().map_err(|e| CliError::Usage(format!("training: {e}")))?;
        }
        let d = &self.data;
        if d.source == DataSource::Directory && d.path.is_none() {
            return bad("data.path", "required when data.source is `directory`".into());
        }
        if d.source == DataSource::Synth && (d.count == 0 || d.size == 0) {
            return bad("data", "synthetic count and size must be positive".into());
        }
        if let Some(p) = d.patch {
            if p.size == 0 || p.per_image == 0 {
                return bad("data.patch", "size and per_image must be positive".into());
            }
        }
        Ok(())
    }
}
