//! Command-line front end: dataset generation, training, evaluation,
//! prediction, and the verification suites.
//!
//! Exit codes: 0 success, 1 user error (bad flags, config, or files),
//! 2 internal failure (including failed verification checks).

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::data::{sample, synth, ClassMap, Dataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, palette, EvalOptions};
use crate::model::{checkpoint, Model};
use crate::ops::{self, BnMode};
use crate::tape::Tape;
use crate::train;
use crate::verify::{self, CheckResult};

/// RGB-D semantic segmentation: dual dilated-residual branches with fusion
/// and pyramid pooling.
#[derive(Parser, Debug)]
#[command(name = "rdseg", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Do not echo per-iteration training lines to stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multi-scale RGB-D dataset with labels and a manifest.
    Synth {
        /// Output directory for images and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Square image extent in pixels (>= 32).
        #[arg(long, default_value_t = 96)]
        size: usize,
        /// Class count including background (2..=255).
        #[arg(long, default_value_t = 6)]
        classes: usize,
        /// Root seed; identical seeds reproduce identical files.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Fraction of scenes tagged as the `val` split.
        #[arg(long, default_value_t = 0.0)]
        val_fraction: f64,
    },
    /// Train with the staged protocol (RGB branch, depth branch, then fusion
    /// and head over frozen backbones).
    Train {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Run only this stage (1-based index into the plan).
        #[arg(long)]
        stage: Option<usize>,
        /// Resume the selected stage from a checkpoint (with its `.optim`
        /// sidecar when present).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint: per-class IoU and mean IoU over a split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split tag to evaluate (defaults to the config's `eval.split`).
        #[arg(long)]
        split: Option<String>,
        /// Write one colorized prediction image per sample.
        #[arg(long)]
        dump_predictions: Option<PathBuf>,
    },
    /// Segment one image (colorized by default).
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// RGB input image.
        #[arg(long)]
        rgb: PathBuf,
        /// Depth input image (required by RGB-D models).
        #[arg(long)]
        depth: Option<PathBuf>,
        /// Output image path.
        #[arg(long)]
        out: PathBuf,
        /// Write raw class ids instead of palette colors.
        #[arg(long)]
        ids: bool,
    },
    /// Run verification suites and print one line per check.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Gradcheck,
    Oracle,
    Shapes,
    All,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NonFinite(_) | Error::Autodiff(_) => 2,
        _ => 1,
    }
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth { out, count, size, classes, seed, val_fraction } => {
            let params = synth::SynthParams {
                count,
                image_size: size,
                num_classes: classes,
                seed,
                val_fraction,
            };
            let report = synth::gen_synthetic(&params, &out)?;
            println!(
                "wrote {count} scenes ({size}x{size}, {classes} classes) to {}",
                out.display()
            );
            println!("manifest: {}", report.manifest_path.display());
            Ok(0)
        }

        Command::Train { config, stage, resume } => {
            let cfg = RunConfig::from_path(&config)?;
            let map = ClassMap::by_name(&cfg.data.class_map, cfg.model.num_classes)?;
            let data = Dataset::load_split(&cfg.data.manifest, "train", &map)?;
            let plan = cfg.train.plan();
            let settings = cfg.train.settings();
            let summary = match stage {
                Some(n) => {
                    if n == 0 {
                        return Err(Error::Config("--stage is 1-based".into()));
                    }
                    train::run_single_stage(
                        &plan,
                        n - 1,
                        &cfg.model,
                        &settings,
                        &data,
                        &cfg.data.augment,
                        &cfg.train.out_dir,
                        cfg.seed,
                        !cli.quiet,
                        resume.as_deref(),
                    )?
                }
                None => {
                    if resume.is_some() {
                        return Err(Error::Config("--resume needs --stage".into()));
                    }
                    train::run_stages(
                        &plan,
                        &cfg.model,
                        &settings,
                        &data,
                        &cfg.data.augment,
                        &cfg.train.out_dir,
                        cfg.seed,
                        !cli.quiet,
                    )?
                }
            };
            for outcome in &summary.stages {
                println!(
                    "stage {:?}: {} steps, mean loss {:.4}, pixel acc {:.3}, checkpoint {}",
                    outcome.kind,
                    outcome.steps,
                    outcome.mean_loss,
                    outcome.pixel_accuracy,
                    outcome.checkpoint.display()
                );
            }
            println!("log: {}", summary.log_path.display());
            Ok(0)
        }

        Command::Eval { config, checkpoint: ckpt, split, dump_predictions } => {
            let cfg = RunConfig::from_path(&config)?;
            let map = ClassMap::by_name(&cfg.data.class_map, cfg.model.num_classes)?;
            let split = split.unwrap_or_else(|| cfg.eval.split.clone());
            let data = Dataset::load_split(&cfg.data.manifest, &split, &map)?;
            let mut model = Model::<f32>::new(cfg.model.clone(), cfg.seed)?;
            checkpoint::load(&model, &ckpt, true)?;

            let pal = match &cfg.eval.palette {
                Some(path) => palette::load_palette(path, map.num_classes())?,
                None => palette::palette_for(&cfg.data.class_map, map.num_classes()),
            };
            let opts = EvalOptions { dump_predictions: dump_predictions.as_deref(), palette: pal };
            let report = evaluate(&mut model, &data, map.target_names(), &opts)?;

            print!("{}", report.to_text());
            std::fs::create_dir_all(&cfg.eval.output_dir)
                .map_err(|e| Error::io(&cfg.eval.output_dir, e))?;
            let txt = cfg.eval.output_dir.join(format!("report_{split}.txt"));
            let json = cfg.eval.output_dir.join(format!("report_{split}.json"));
            std::fs::write(&txt, report.to_text()).map_err(|e| Error::io(&txt, e))?;
            std::fs::write(&json, report.to_json()).map_err(|e| Error::io(&json, e))?;
            println!("report: {} and {}", txt.display(), json.display());
            Ok(0)
        }

        Command::Predict { config, checkpoint: ckpt, rgb, depth, out, ids } => {
            let cfg = RunConfig::from_path(&config)?;
            let model = Model::<f32>::new(cfg.model.clone(), cfg.seed)?;
            checkpoint::load(&model, &ckpt, true)?;
            let mut model = model;
            model.set_bn_mode(BnMode::Frozen);

            if model.config.has_depth() && depth.is_none() {
                return Err(Error::Value(
                    "this checkpoint is an RGB-D model: a depth image is required, pass --depth".into(),
                ));
            }
            if !model.config.has_depth() && depth.is_some() {
                return Err(Error::Value("model has no depth branch but --depth was given".into()));
            }

            // the label plane is unused for prediction; the identity map
            // keeps raw ids intact
            let map = ClassMap::identity(cfg.model.num_classes, "identity")?;
            let rgb_img = image::open(&rgb).map_err(|e| Error::image(&rgb, e))?.to_rgb8();
            let (w, h) = (rgb_img.width() as usize, rgb_img.height() as usize);
            let mut planar = vec![0.0f32; 3 * h * w];
            for (x, y, px) in rgb_img.enumerate_pixels() {
                let p = y as usize * w + x as usize;
                for c in 0..3 {
                    planar[c * h * w + p] = px.0[c] as f32 / 255.0;
                }
            }
            let rgb_t = crate::tensor::Tensor::from_vec(planar, &[1, 3, h, w])?;
            let depth_t = match &depth {
                Some(path) => {
                    let img = image::open(path).map_err(|e| Error::image(path, e))?;
                    let plane: Vec<f32> = match img {
                        image::DynamicImage::ImageLuma16(img) => {
                            img.pixels().map(|p| p.0[0] as f32 / 65535.0).collect()
                        }
                        image::DynamicImage::ImageLuma8(img) => {
                            img.pixels().map(|p| p.0[0] as f32 / 255.0).collect()
                        }
                        _ => {
                            return Err(Error::Data(format!(
                                "{}: depth must be 8- or 16-bit single-channel",
                                path.display()
                            )))
                        }
                    };
                    if plane.len() != h * w {
                        return Err(Error::Data("depth extents do not match rgb".into()));
                    }
                    Some(crate::tensor::Tensor::from_vec(plane, &[1, 1, h, w])?)
                }
                None => None,
            };

            let mut tape = Tape::paused();
            let logits = model.forward(&mut tape, Some(&rgb_t), depth_t.as_ref())?;
            let pred = ops::argmax_classes(&logits)?;
            if ids {
                sample::write_gray8(&out, &pred.ids, h, w)?;
            } else {
                let pal = match &cfg.eval.palette {
                    Some(path) => palette::load_palette(path, map.num_classes())?,
                    None => palette::palette_for(&cfg.data.class_map, map.num_classes()),
                };
                sample::write_colorized(&out, &pred, &pal)?;
            }
            println!("wrote {}", out.display());
            Ok(0)
        }

        Command::Verify { suite } => {
            let mut results: Vec<CheckResult> = Vec::new();
            match suite {
                Suite::Gradcheck => results.extend(verify::gradcheck_suite()),
                Suite::Oracle => results.extend(verify::oracle_suite()),
                Suite::Shapes => results.extend(verify::shape_suite()),
                Suite::All => {
                    results.extend(verify::gradcheck_suite());
                    results.extend(verify::oracle_suite());
                    results.extend(verify::shape_suite());
                }
            }
            let mut failed = 0usize;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                if !r.passed {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed", results.len(), failed);
            Ok(if failed == 0 { 0 } else { 2 })
        }
    }
}
