//! Run configuration: one TOML file drives training, evaluation, and
//! prediction. Unknown keys are rejected; every field has a default, and the
//! training defaults follow the published protocol (base lr 5e-5, momentum
//! 0.9, weight decay 5e-4, 720 crop, scale 0.5..2.0, 200 epochs with the
//! epoch-140 schedule change).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::AugmentParams;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::{StagePlan, TrainSettings};

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Tab-separated manifest of rgb/depth/label triplets plus split tags.
    pub manifest: PathBuf,
    /// identity | cityscapes | carla | cityscapes-to-carla
    pub class_map: String,
    pub augment: AugmentParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: PathBuf::from("data/manifest.tsv"),
            class_map: "identity".into(),
            augment: AugmentParams::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub power: f64,
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    /// Stage plan; omitted means the full three-stage 200-epoch protocol.
    pub plan: Option<StagePlan>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = TrainSettings::default();
        TrainConfig {
            base_lr: s.base_lr,
            momentum: s.momentum,
            weight_decay: s.weight_decay,
            power: s.power,
            checkpoint_every: s.checkpoint_every,
            out_dir: PathBuf::from("runs/default"),
            plan: None,
        }
    }
}

impl TrainConfig {
    pub fn settings(&self) -> TrainSettings {
        TrainSettings {
            base_lr: self.base_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            power: self.power,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn plan(&self) -> StagePlan {
        self.plan.clone().unwrap_or_else(StagePlan::full_default)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: String,
    /// Where reports (and dumped predictions) go.
    pub output_dir: PathBuf,
    /// Optional palette file (`id R G B` lines) overriding the built-in one.
    pub palette: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { split: "val".into(), output_dir: PathBuf::from("eval"), palette: None }
    }
}

impl RunConfig {
    /// Parse and validate; parse errors carry the offending key and position.
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.data.augment.validate()?;
        if let Some(plan) = &self.train.plan {
            plan.validate()?;
        }
        if !(self.train.base_lr > 0.0) {
            return Err(Error::Config("train.base_lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.train.momentum) {
            return Err(Error::Config("train.momentum must be in [0,1)".into()));
        }
        Ok(())
    }
}
