//! Staged training protocol.
//!
//! Stage 1 trains the RGB branch with its own reduction and head; stage 2
//! trains the depth branch the same way, initialized from the trained RGB
//! weights with the first convolution averaged over its input channels;
//! stage 3 assembles the fused model, loads both branch checkpoints, freezes
//! the two backbones by zeroing their learning rate, and trains the fusion
//! block and pyramid head.

pub mod optim;

pub use optim::{poly_lr, Optimizer};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentParams, Dataset};
use crate::error::{Error, Result};
use crate::labels::IGNORE_ID;
use crate::model::checkpoint::{self, derive_depth_entries};
use crate::model::{BranchMode, LayerGroup, Model, ModelConfig};
use crate::ops::{self, BnMode};
use crate::rng;
use crate::tape::Tape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    TrainRgb,
    TrainDepth,
    TrainFusion,
}

/// Epoch-indexed hyperparameter change within a stage.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEvent {
    pub epoch: usize,
    #[serde(default)]
    pub base_lr: Option<f64>,
    /// Weight decay override for the pyramid-head group from this epoch on.
    #[serde(default)]
    pub head_weight_decay: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub kind: StageKind,
    pub epochs: usize,
    #[serde(default)]
    pub base_lr: Option<f64>,
    #[serde(default)]
    pub events: Vec<ScheduleEvent>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<StageSpec>,
}

impl StagePlan {
    /// The published protocol: 200 epochs per stage with the epoch-140
    /// schedule change (base lr to 5e-4, pyramid weight decay to 0.999).
    pub fn full_default() -> Self {
        let event = ScheduleEvent { epoch: 140, base_lr: Some(5e-4), head_weight_decay: Some(0.999) };
        StagePlan {
            stages: vec![
                StageSpec { kind: StageKind::TrainRgb, epochs: 200, base_lr: None, events: vec![event] },
                StageSpec { kind: StageKind::TrainDepth, epochs: 200, base_lr: None, events: vec![event] },
                StageSpec { kind: StageKind::TrainFusion, epochs: 200, base_lr: None, events: vec![event] },
            ],
        }
    }

    /// Same three stages with custom epoch counts and no schedule events.
    pub fn compressed(rgb_epochs: usize, depth_epochs: usize, fusion_epochs: usize) -> Self {
        StagePlan {
            stages: vec![
                StageSpec { kind: StageKind::TrainRgb, epochs: rgb_epochs, base_lr: None, events: vec![] },
                StageSpec { kind: StageKind::TrainDepth, epochs: depth_epochs, base_lr: None, events: vec![] },
                StageSpec { kind: StageKind::TrainFusion, epochs: fusion_epochs, base_lr: None, events: vec![] },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("stage plan has no stages".into()));
        }
        if self.stages.iter().any(|s| s.epochs == 0) {
            return Err(Error::Config("every stage needs epochs >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub power: f64,
    /// Checkpoint every E epochs (0 = stage boundaries only).
    pub checkpoint_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            base_lr: 5e-5,
            momentum: 0.9,
            weight_decay: 0.0005,
            power: 0.9,
            checkpoint_every: 0,
        }
    }
}

pub struct StageOutcome {
    pub kind: StageKind,
    pub checkpoint: PathBuf,
    pub optimizer_state: PathBuf,
    pub mean_loss: f64,
    pub pixel_accuracy: f64,
    pub steps: u64,
}

pub struct RunSummary {
    pub stages: Vec<StageOutcome>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

struct TrainLog {
    file: BufWriter<File>,
    echo: bool,
}

impl TrainLog {
    fn open(path: &Path, echo: bool) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(TrainLog { file: BufWriter::new(file), echo })
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.file, "{text}").map_err(|e| Error::io("train log", e))?;
        if self.echo {
            println!("{text}");
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.file.flush().map_err(|e| Error::io("train log", e))
    }
}

fn stage_inputs(kind: StageKind) -> BranchMode {
    match kind {
        StageKind::TrainRgb => BranchMode::RgbOnly,
        StageKind::TrainDepth => BranchMode::DepthOnly,
        StageKind::TrainFusion => BranchMode::RgbD,
    }
}

fn stage_name(kind: StageKind) -> &'static str {
    match kind {
        StageKind::TrainRgb => "rgb",
        StageKind::TrainDepth => "depth",
        StageKind::TrainFusion => "fusion",
    }
}

/// Build the model for one stage, wiring in earlier-stage checkpoints.
fn build_stage_model(
    kind: StageKind,
    model_cfg: &ModelConfig,
    out_dir: &Path,
    seed: u64,
) -> Result<Model<f32>> {
    let cfg = model_cfg.clone().with_branches(stage_inputs(kind));
    let mut model = Model::new(cfg, seed)?;
    match kind {
        StageKind::TrainRgb => {}
        StageKind::TrainDepth => {
            let rgb_ckpt = out_dir.join("stage1_rgb_final.sgck");
            if rgb_ckpt.exists() {
                // depth branch starts from the trained RGB weights, first
                // conv averaged over the channel axis
                let entries = checkpoint::read_entries(&rgb_ckpt)?;
                let mut derived = derive_depth_entries(&entries);
                derived.extend(entries.into_iter().filter(|(n, _)| n.starts_with("head.")));
                let tmp = out_dir.join("stage2_depth_init.sgck");
                checkpoint::write_entries(&tmp, &derived)?;
                let report = checkpoint::load(&model, &tmp, false)?;
                log::info!(
                    "depth init from {}: {} loaded, {} missing",
                    rgb_ckpt.display(),
                    report.loaded.len(),
                    report.missing.len()
                );
            }
        }
        StageKind::TrainFusion => {
            for ckpt in [out_dir.join("stage1_rgb_final.sgck"), out_dir.join("stage2_depth_final.sgck")] {
                if !ckpt.exists() {
                    return Err(Error::Checkpoint(format!(
                        "stage 3 needs {}, run the earlier stages first",
                        ckpt.display()
                    )));
                }
                let report = checkpoint::load(&model, &ckpt, false)?;
                log::info!(
                    "fusion init from {}: {} loaded, {} missing, {} mismatched",
                    ckpt.display(),
                    report.loaded.len(),
                    report.missing.len(),
                    report.mismatched.len()
                );
            }
            model.set_group_requires_grad(LayerGroup::RgbBackbone, false);
            model.set_group_requires_grad(LayerGroup::DepthBackbone, false);
            // batch-size-1 statistics are per-image; the final stage trains
            // against the same frozen normalization inference will use
            // (backbones keep the running estimates from stages 1 and 2)
            model.set_bn_mode(BnMode::Frozen);
        }
    }
    Ok(model)
}

struct EpochStats {
    loss_sum: f64,
    correct: u64,
    labeled: u64,
    steps: u64,
}

#[allow(clippy::too_many_arguments)]
fn train_stage(
    model: &Model<f32>,
    kind: StageKind,
    stage_idx: usize,
    spec: &StageSpec,
    settings: &TrainSettings,
    data: &Dataset,
    aug: &AugmentParams,
    seed: u64,
    log: &mut TrainLog,
    out_dir: &Path,
    resume_state: Option<&Path>,
) -> Result<(Optimizer, EpochStats)> {
    let max_iter = (spec.epochs * data.len()) as u64;
    let mut opt = Optimizer::new(
        spec.base_lr.unwrap_or(settings.base_lr),
        settings.momentum,
        settings.weight_decay,
        settings.power,
        max_iter,
    );
    if kind == StageKind::TrainFusion {
        opt.set_group_multiplier(LayerGroup::RgbBackbone, 0.0);
        opt.set_group_multiplier(LayerGroup::DepthBackbone, 0.0);
    }
    if let Some(state) = resume_state {
        opt.load_state(state)?;
        log::info!("resumed optimizer at iter {}", opt.iter);
    }

    let params = model.parameters();
    let mut tape = Tape::new();
    let mut last = EpochStats { loss_sum: 0.0, correct: 0, labeled: 0, steps: 0 };
    let start_epoch = (opt.iter / data.len() as u64) as usize;

    for epoch in start_epoch..spec.epochs {
        for event in spec.events.iter().filter(|e| e.epoch == epoch) {
            if let Some(lr) = event.base_lr {
                log::warn!(
                    "epoch {epoch}: base learning rate {} -> {lr} per schedule (a 10x increase at paper values)",
                    opt.base_lr
                );
                opt.base_lr = lr;
            }
            if let Some(wd) = event.head_weight_decay {
                log::warn!(
                    "epoch {epoch}: pyramid-head weight decay -> {wd} per schedule ({} is implausibly large for a decay coefficient)",
                    wd
                );
                opt.set_group_weight_decay(LayerGroup::Head, wd);
            }
        }

        let mut order: Vec<usize> = (0..data.len()).collect();
        let shuffle_salt = (stage_idx as u64) << 32 | epoch as u64;
        order.shuffle(&mut rng::stream(seed, "shuffle", shuffle_salt));

        let mut stats = EpochStats { loss_sum: 0.0, correct: 0, labeled: 0, steps: 0 };
        for &idx in &order {
            let aug_salt = ((stage_idx as u64) << 40) | ((epoch as u64) << 20) | idx as u64;
            let sample = augment(&data.samples[idx], aug, &mut rng::stream(seed, "augment", aug_salt))?;

            tape.clear();
            let rgb = sample.rgb_batch()?;
            let depth = sample.depth_batch()?;
            let logits = match kind {
                StageKind::TrainRgb => model.forward(&mut tape, Some(&rgb), None)?,
                StageKind::TrainDepth => model.forward(&mut tape, None, Some(&depth))?,
                StageKind::TrainFusion => model.forward(&mut tape, Some(&rgb), Some(&depth))?,
            };
            let loss = ops::softmax_cross_entropy(&mut tape, &logits, &sample.labels)?;
            tape.backward(&loss)?;
            let lr = opt.step(&params)?;

            let loss_v = loss.item()? as f64;
            let pred = ops::argmax_classes(&logits)?;
            for (p, g) in pred.ids.iter().zip(&sample.labels.ids) {
                if *g != IGNORE_ID {
                    stats.labeled += 1;
                    if p == g {
                        stats.correct += 1;
                    }
                }
            }
            stats.loss_sum += loss_v;
            stats.steps += 1;
            log.line(&format!("iter={} epoch={epoch} lr={lr:.6e} loss={loss_v:.6}", opt.iter))?;
        }
        let acc = stats.correct as f64 / stats.labeled.max(1) as f64;
        log.line(&format!(
            "epoch={epoch} mean_loss={:.6} pixel_acc={acc:.4}",
            stats.loss_sum / stats.steps.max(1) as f64
        ))?;
        log.flush()?;
        last = stats;

        if settings.checkpoint_every > 0
            && (epoch + 1) % settings.checkpoint_every == 0
            && epoch + 1 < spec.epochs
        {
            let path = out_dir.join(format!(
                "stage{}_{}_epoch{:04}.sgck",
                stage_idx + 1,
                stage_name(kind),
                epoch + 1
            ));
            checkpoint::save(model, &path)?;
        }
    }
    Ok((opt, last))
}

/// Run the staged protocol end to end, leaving per-stage checkpoints,
/// optimizer state, and a combined training log in `out_dir`.
pub fn run_stages(
    plan: &StagePlan,
    model_cfg: &ModelConfig,
    settings: &TrainSettings,
    data: &Dataset,
    aug: &AugmentParams,
    out_dir: &Path,
    seed: u64,
    echo: bool,
) -> Result<RunSummary> {
    plan.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("train.log");
    let mut log = TrainLog::open(&log_path, echo)?;

    let mut outcomes = Vec::new();
    for (stage_idx, spec) in plan.stages.iter().enumerate() {
        let name = stage_name(spec.kind);
        log.line(&format!("# stage {} ({name}): {} epochs", stage_idx + 1, spec.epochs))?;
        let model = build_stage_model(spec.kind, model_cfg, out_dir, seed)?;
        let (opt, stats) = train_stage(
            &model, spec.kind, stage_idx, spec, settings, data, aug, seed, &mut log, out_dir, None,
        )?;
        let ckpt = out_dir.join(format!("stage{}_{name}_final.sgck", stage_idx + 1));
        checkpoint::save(&model, &ckpt)?;
        let opt_path = out_dir.join(format!("stage{}_{name}_final.sgck.optim", stage_idx + 1));
        opt.save_state(&opt_path)?;
        outcomes.push(StageOutcome {
            kind: spec.kind,
            checkpoint: ckpt,
            optimizer_state: opt_path,
            mean_loss: stats.loss_sum / stats.steps.max(1) as f64,
            pixel_accuracy: stats.correct as f64 / stats.labeled.max(1) as f64,
            steps: opt.iter,
        });
    }
    log.flush()?;
    let final_checkpoint = outcomes.last().expect("at least one stage").checkpoint.clone();
    Ok(RunSummary { stages: outcomes, final_checkpoint, log_path })
}

/// Train a single stage (for `--stage N` runs and resumption); earlier-stage
/// checkpoints must already exist in `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn run_single_stage(
    plan: &StagePlan,
    stage_idx: usize,
    model_cfg: &ModelConfig,
    settings: &TrainSettings,
    data: &Dataset,
    aug: &AugmentParams,
    out_dir: &Path,
    seed: u64,
    echo: bool,
    resume: Option<&Path>,
) -> Result<RunSummary> {
    plan.validate()?;
    let spec = plan.stages.get(stage_idx).ok_or_else(|| {
        Error::Config(format!(
            "stage {} out of range (plan has {})",
            stage_idx + 1,
            plan.stages.len()
        ))
    })?;
    if data.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let name = stage_name(spec.kind);
    let log_path = out_dir.join(format!("train_stage{}.log", stage_idx + 1));
    let mut log = TrainLog::open(&log_path, echo)?;

    let model = build_stage_model(spec.kind, model_cfg, out_dir, seed)?;
    if let Some(ckpt) = resume {
        let report = checkpoint::load(&model, ckpt, false)?;
        if !report.mismatched.is_empty() {
            return Err(Error::Checkpoint(format!(
                "resume checkpoint shape mismatch at {:?}",
                report.mismatched
            )));
        }
    }
    let resume_state = resume.map(|c| c.with_extension("sgck.optim"));
    let resume_state = resume_state.as_deref().filter(|p| p.exists());
    let (opt, stats) = train_stage(
        &model, spec.kind, stage_idx, spec, settings, data, aug, seed, &mut log, out_dir, resume_state,
    )?;
    let ckpt = out_dir.join(format!("stage{}_{name}_final.sgck", stage_idx + 1));
    checkpoint::save(&model, &ckpt)?;
    let opt_path = out_dir.join(format!("stage{}_{name}_final.sgck.optim", stage_idx + 1));
    opt.save_state(&opt_path)?;
    log.flush()?;
    Ok(RunSummary {
        stages: vec![StageOutcome {
            kind: spec.kind,
            checkpoint: ckpt.clone(),
            optimizer_state: opt_path,
            mean_loss: stats.loss_sum / stats.steps.max(1) as f64,
            pixel_accuracy: stats.correct as f64 / stats.labeled.max(1) as f64,
            steps: opt.iter,
        }],
        final_checkpoint: ckpt,
        log_path,
    })
}
