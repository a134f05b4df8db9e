//! Procedural multi-scale RGB-D scenes.
//!
//! Each scene is a textured background plus 3..8 shapes placed at virtual
//! distances; on-screen size scales as 1/distance and the depth plane stores
//! distance/10 over each shape. Shape classes come in small/large pairs that
//! share a prototype (kind and fill color), so a small shape near the camera
//! looks exactly like a large one farther away; color and outline alone
//! cannot tell them apart, while the depth plane can.

use std::path::{Path, PathBuf};

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::rng::stream;
use crate::tensor::Tensor;

use super::manifest::{write_manifest, ManifestEntry};
use super::sample::{save_sample, Sample};

#[derive(Clone, Copy, Debug)]
pub struct SynthParams {
    pub count: usize,
    pub image_size: usize,
    pub num_classes: usize,
    pub seed: u64,
    /// Fraction of scenes tagged as the `val` split (the tail of the set).
    pub val_fraction: f64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("synthetic count must be >= 1".into()));
        }
        if self.image_size < 32 {
            return Err(Error::Config("synthetic image_size must be >= 32".into()));
        }
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::Config("synthetic num_classes must be in 2..=255".into()));
        }
        if !(0.0..=1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Disk,
    Triangle,
    Bar,
}

/// One placed shape with its footprint bookkeeping.
#[derive(Clone, Debug)]
pub struct ShapeInstance {
    pub class_id: u8,
    pub kind: ShapeKind,
    pub distance: f64,
    pub center: (f64, f64),
    pub size_px: f64,
    /// Pixels the shape rasterizes to, before occlusion.
    pub raster_area: usize,
    /// Pixels still carrying this instance after nearer shapes painted over.
    pub visible_area: usize,
}

#[derive(Clone, Debug)]
pub struct SceneMeta {
    pub index: usize,
    pub shapes: Vec<ShapeInstance>,
}

pub struct SynthReport {
    pub scenes: Vec<SceneMeta>,
    pub manifest_path: PathBuf,
}

const PALETTE: [[f32; 3]; 8] = [
    [0.85, 0.25, 0.25],
    [0.25, 0.55, 0.85],
    [0.30, 0.75, 0.35],
    [0.85, 0.75, 0.25],
    [0.70, 0.35, 0.80],
    [0.90, 0.55, 0.20],
    [0.25, 0.75, 0.75],
    [0.80, 0.45, 0.55],
];

/// Prototype shared by a small/large class pair.
fn prototype(class_id: u8) -> (usize, bool) {
    let idx = (class_id - 1) as usize;
    (idx / 2, idx % 2 == 1)
}

fn kind_of(proto: usize) -> ShapeKind {
    match proto % 4 {
        0 => ShapeKind::Square,
        1 => ShapeKind::Disk,
        2 => ShapeKind::Triangle,
        _ => ShapeKind::Bar,
    }
}

fn base_color(proto: usize) -> [f32; 3] {
    PALETTE[proto % PALETTE.len()]
}

/// World extent as a fraction of the canvas at distance 1; the large variant
/// of a pair is exactly twice its small sibling.
fn world_size(class_id: u8) -> f64 {
    let (_, large) = prototype(class_id);
    if large {
        1.20
    } else {
        0.60
    }
}

fn inside(kind: ShapeKind, px: f64, py: f64, cx: f64, cy: f64, size: f64) -> bool {
    let half = size / 2.0;
    let (dx, dy) = (px - cx, py - cy);
    match kind {
        ShapeKind::Square => dx.abs() <= half && dy.abs() <= half,
        ShapeKind::Disk => dx * dx + dy * dy <= half * half,
        ShapeKind::Triangle => {
            // apex on top, base at the bottom of the bounding box
            dy >= -half && dy <= half && dx.abs() <= (dy + half) / 2.0
        }
        ShapeKind::Bar => dx.abs() <= half && dy.abs() <= size / 6.0,
    }
}

/// Specification of one scene before rasterization.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub shapes: Vec<(u8, f64, (f64, f64))>, // (class, distance, center in pixels)
}

/// Rasterize one scene; shapes are painted far to near so closer shapes
/// occlude. Returns the sample plus per-instance footprints.
pub fn render_scene(
    spec: &SceneSpec,
    size: usize,
    rng: &mut impl Rng,
) -> Result<(Sample, Vec<ShapeInstance>)> {
    let hw = size * size;
    let mut rgb = vec![0.0f32; 3 * hw];
    let mut depth = vec![1.0f32; hw];
    let mut ids = vec![0u8; hw];
    let mut owner = vec![usize::MAX; hw];

    // textured background
    for p in 0..hw {
        let g = rng.random_range(0.38..0.55) as f32;
        for c in 0..3 {
            rgb[c * hw + p] = (g + rng.random_range(-0.02..0.02) as f32).clamp(0.0, 1.0);
        }
    }

    let mut order: Vec<usize> = (0..spec.shapes.len()).collect();
    order.sort_by(|&a, &b| {
        spec.shapes[b].1.partial_cmp(&spec.shapes[a].1).expect("finite distances")
    });

    let mut instances: Vec<ShapeInstance> = spec
        .shapes
        .iter()
        .map(|&(class_id, distance, center)| {
            let (proto, _) = prototype(class_id);
            ShapeInstance {
                class_id,
                kind: kind_of(proto),
                distance,
                center,
                size_px: world_size(class_id) * size as f64 / distance,
                raster_area: 0,
                visible_area: 0,
            }
        })
        .collect();

    for &i in &order {
        let inst = instances[i].clone();
        let (proto, _) = prototype(inst.class_id);
        let base = base_color(proto);
        let mut color = [0.0f32; 3];
        for c in 0..3 {
            color[c] = (base[c] + rng.random_range(-0.08..0.08) as f32).clamp(0.05, 0.95);
        }
        let (cx, cy) = inst.center;
        let half = inst.size_px / 2.0 + 1.0;
        let x_lo = (cx - half).floor() as isize;
        let x_hi = (cx + half).ceil() as isize;
        let y_lo = (cy - half).floor() as isize;
        let y_hi = (cy + half).ceil() as isize;
        let depth_value = (inst.distance / 10.0) as f32;
        // the footprint counts every rasterized pixel, including those
        // falling outside the canvas, so it tracks 1/distance^2 exactly
        let mut raster = 0usize;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if !inside(inst.kind, px, py, cx, cy, inst.size_px) {
                    continue;
                }
                raster += 1;
                if x < 0 || y < 0 || x >= size as isize || y >= size as isize {
                    continue;
                }
                let p = y as usize * size + x as usize;
                ids[p] = inst.class_id;
                depth[p] = depth_value;
                owner[p] = i;
                for c in 0..3 {
                    rgb[c * hw + p] = color[c];
                }
            }
        }
        instances[i].raster_area = raster;
    }

    for &o in &owner {
        if o != usize::MAX {
            instances[o].visible_area += 1;
        }
    }

    let sample = Sample::new(
        Tensor::from_vec(rgb, &[3, size, size])?,
        Tensor::from_vec(depth, &[1, size, size])?,
        Labels::new(1, size, size, ids)?,
    )?;
    Ok((sample, instances))
}

/// Draw a random scene specification. Centers snap to the pixel-center grid
/// so a shape's rasterized footprint is a monotone function of its on-screen
/// size, independent of sub-pixel placement.
pub fn random_scene(params: &SynthParams, rng: &mut impl Rng) -> SceneSpec {
    let size = params.image_size as f64;
    let n_shapes = rng.random_range(3..=8usize);
    let shapes = (0..n_shapes)
        .map(|_| {
            let class_id = rng.random_range(1..params.num_classes) as u8;
            let distance = rng.random_range(1.5..4.0);
            let cx = (rng.random_range(0.15..0.85) * size).floor() + 0.5;
            let cy = (rng.random_range(0.15..0.85) * size).floor() + 0.5;
            (class_id, distance, (cx, cy))
        })
        .collect();
    SceneSpec { shapes }
}

/// Generate `count` scenes on disk: RGB (8-bit), depth (16-bit), labels
/// (8-bit train ids), plus a tab-separated manifest with split tags.
/// Bitwise identical for a fixed seed.
pub fn gen_synthetic(params: &SynthParams, out_dir: &Path) -> Result<SynthReport> {
    params.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let train_count = params.count - (params.count as f64 * params.val_fraction).round() as usize;
    let mut entries = Vec::with_capacity(params.count);
    let mut scenes = Vec::with_capacity(params.count);
    for i in 0..params.count {
        let mut rng = stream(params.seed, "synth", i as u64);
        let spec = random_scene(params, &mut rng);
        let (sample, shapes) = render_scene(&spec, params.image_size, &mut rng)?;

        let rgb = format!("scene_{i:04}_rgb.png");
        let depth = format!("scene_{i:04}_depth.png");
        let labels = format!("scene_{i:04}_labels.png");
        save_sample(
            &sample,
            &out_dir.join(&rgb),
            &out_dir.join(&depth),
            &out_dir.join(&labels),
        )?;
        entries.push(ManifestEntry {
            rgb: rgb.into(),
            depth: depth.into(),
            labels: labels.into(),
            split: if i < train_count { "train".into() } else { "val".into() },
        });
        scenes.push(SceneMeta { index: i, shapes });
    }
    let manifest_path = out_dir.join("manifest.tsv");
    write_manifest(&manifest_path, &entries)?;
    Ok(SynthReport { scenes, manifest_path })
}
