//! Training-time augmentation: random scale, crop, horizontal flip, and
//! RGB-only color jitter.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Labels, IGNORE_ID};
use crate::ops::resize::bilinear_axis;
use crate::tensor::Tensor;

use super::sample::Sample;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    pub scale_min: f64,
    pub scale_max: f64,
    pub crop: usize,
    pub hflip_prob: f64,
    pub jitter: bool,
    /// Also divide depth values by the spatial scale factor. Off by default:
    /// raw depth semantics are dataset-specific, so values pass through
    /// unchanged unless asked.
    pub scale_depth_values: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            scale_min: 0.5,
            scale_max: 2.0,
            crop: 720,
            hflip_prob: 0.5,
            jitter: true,
            scale_depth_values: false,
        }
    }
}

impl AugmentParams {
    /// Parameters that make augment the identity for `size`-sized inputs.
    pub fn neutral(size: usize) -> Self {
        AugmentParams {
            scale_min: 1.0,
            scale_max: 1.0,
            crop: size,
            hflip_prob: 0.0,
            jitter: false,
            scale_depth_values: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 {
            return Err(Error::Config("augment crop must be >= 1".into()));
        }
        if !(self.scale_min > 0.0) || self.scale_max < self.scale_min {
            return Err(Error::Config(format!(
                "augment scale range [{}, {}] is invalid",
                self.scale_min, self.scale_max
            )));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config("hflip_prob must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Bilinear plane resize (both directions; data-path only, not tracked).
pub fn resize_plane(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let ys = bilinear_axis(h, oh);
    let xs = bilinear_axis(w, ow);
    let mut out = vec![0.0f32; oh * ow];
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = src[y0 * w + x0] as f64 * (1.0 - fx) + src[y0 * w + x1] as f64 * fx;
            let bot = src[y1 * w + x0] as f64 * (1.0 - fx) + src[y1 * w + x1] as f64 * fx;
            out[oy * ow + ox] = (top * (1.0 - fy) + bot * fy) as f32;
        }
    }
    out
}

/// Nearest-neighbor resize for label maps (pixel-center convention).
pub fn resize_labels(ids: &[u8], h: usize, w: usize, oh: usize, ow: usize) -> Vec<u8> {
    let ry = h as f64 / oh as f64;
    let rx = w as f64 / ow as f64;
    let mut out = vec![0u8; oh * ow];
    for oy in 0..oh {
        let sy = (((oy as f64 + 0.5) * ry - 0.5).round().max(0.0) as usize).min(h - 1);
        for ox in 0..ow {
            let sx = (((ox as f64 + 0.5) * rx - 0.5).round().max(0.0) as usize).min(w - 1);
            out[oy * ow + ox] = ids[sy * w + sx];
        }
    }
    out
}

fn crop_or_pad_f32(src: &[f32], h: usize, w: usize, y0: usize, x0: usize, c: usize, fill: f32) -> Vec<f32> {
    let mut out = vec![fill; c * c];
    for y in 0..c.min(h.saturating_sub(y0)) {
        for x in 0..c.min(w.saturating_sub(x0)) {
            out[y * c + x] = src[(y0 + y) * w + (x0 + x)];
        }
    }
    out
}

fn crop_or_pad_u8(src: &[u8], h: usize, w: usize, y0: usize, x0: usize, c: usize, fill: u8) -> Vec<u8> {
    let mut out = vec![fill; c * c];
    for y in 0..c.min(h.saturating_sub(y0)) {
        for x in 0..c.min(w.saturating_sub(x0)) {
            out[y * c + x] = src[(y0 + y) * w + (x0 + x)];
        }
    }
    out
}

fn flip_plane_f32(p: &mut [f32], h: usize, w: usize) {
    for y in 0..h {
        p[y * w..(y + 1) * w].reverse();
    }
}

/// Left-right mirror of every plane; applying it twice restores the sample.
pub fn flip_sample(sample: &Sample) -> Result<Sample> {
    let (h, w) = sample.hw();
    let mut rgb = sample.rgb.to_vec();
    for c in 0..3 {
        flip_plane_f32(&mut rgb[c * h * w..(c + 1) * h * w], h, w);
    }
    let mut depth = sample.depth.to_vec();
    flip_plane_f32(&mut depth, h, w);
    let mut ids = sample.labels.ids.clone();
    for y in 0..h {
        ids[y * w..(y + 1) * w].reverse();
    }
    Sample::new(
        Tensor::from_vec(rgb, &[3, h, w])?,
        Tensor::from_vec(depth, &[1, h, w])?,
        Labels::new(1, h, w, ids)?,
    )
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn jitter_rgb(rgb: &mut [f32], hw: usize, brightness: f32, contrast: f32, saturation: f32) {
    for v in rgb.iter_mut() {
        *v = (*v * brightness).clamp(0.0, 1.0);
    }
    let mut mean_gray = 0.0f64;
    for p in 0..hw {
        mean_gray += luma(rgb[p], rgb[hw + p], rgb[2 * hw + p]) as f64;
    }
    let mean_gray = (mean_gray / hw as f64) as f32;
    for v in rgb.iter_mut() {
        *v = (mean_gray + (*v - mean_gray) * contrast).clamp(0.0, 1.0);
    }
    for p in 0..hw {
        let l = luma(rgb[p], rgb[hw + p], rgb[2 * hw + p]);
        for c in 0..3 {
            let v = &mut rgb[c * hw + p];
            *v = (l + (*v - l) * saturation).clamp(0.0, 1.0);
        }
    }
}

/// Apply scale, crop, flip, jitter in that order. Deterministic for a fixed
/// rng state; draw order is scale, crop-y, crop-x, flip, then the three
/// jitter factors (draws are skipped when a step cannot vary).
pub fn augment(sample: &Sample, params: &AugmentParams, rng: &mut impl Rng) -> Result<Sample> {
    params.validate()?;
    let (h, w) = sample.hw();

    // 1. random scale
    let s = if params.scale_max > params.scale_min {
        rng.random_range(params.scale_min..params.scale_max)
    } else {
        params.scale_min
    };
    let (sh, sw) = if s == 1.0 {
        (h, w)
    } else {
        (
            ((h as f64 * s).round() as usize).max(1),
            ((w as f64 * s).round() as usize).max(1),
        )
    };
    let (mut rgb, mut depth, mut ids);
    if (sh, sw) != (h, w) {
        let src = sample.rgb.to_vec();
        rgb = Vec::with_capacity(3 * sh * sw);
        for c in 0..3 {
            rgb.extend(resize_plane(&src[c * h * w..(c + 1) * h * w], h, w, sh, sw));
        }
        depth = resize_plane(&sample.depth.to_vec(), h, w, sh, sw);
        if params.scale_depth_values {
            for v in depth.iter_mut() {
                *v = (*v / s as f32).clamp(0.0, 1.0);
            }
        }
        ids = resize_labels(&sample.labels.ids, h, w, sh, sw);
    } else {
        rgb = sample.rgb.to_vec();
        depth = sample.depth.to_vec();
        ids = sample.labels.ids.clone();
    }

    // 2. random crop (content padded with 0 / ignore when short)
    let c = params.crop;
    let y0 = if sh > c { rng.random_range(0..=sh - c) } else { 0 };
    let x0 = if sw > c { rng.random_range(0..=sw - c) } else { 0 };
    if (sh, sw) != (c, c) {
        let mut out = Vec::with_capacity(3 * c * c);
        for ch in 0..3 {
            out.extend(crop_or_pad_f32(&rgb[ch * sh * sw..(ch + 1) * sh * sw], sh, sw, y0, x0, c, 0.0));
        }
        rgb = out;
        depth = crop_or_pad_f32(&depth, sh, sw, y0, x0, c, 0.0);
        ids = crop_or_pad_u8(&ids, sh, sw, y0, x0, c, IGNORE_ID);
    }

    // 3. horizontal flip
    if params.hflip_prob > 0.0 && rng.random_range(0.0..1.0) < params.hflip_prob {
        for ch in 0..3 {
            flip_plane_f32(&mut rgb[ch * c * c..(ch + 1) * c * c], c, c);
        }
        flip_plane_f32(&mut depth, c, c);
        for y in 0..c {
            ids[y * c..(y + 1) * c].reverse();
        }
    }

    // 4. color jitter, rgb only
    if params.jitter {
        let b = rng.random_range(0.8..1.2) as f32;
        let ct = rng.random_range(0.8..1.2) as f32;
        let st = rng.random_range(0.8..1.2) as f32;
        jitter_rgb(&mut rgb, c * c, b, ct, st);
    }

    Sample::new(
        Tensor::from_vec(rgb, &[3, c, c])?,
        Tensor::from_vec(depth, &[1, c, c])?,
        Labels::new(1, c, c, ids)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn checker_sample(size: usize) -> Sample {
        let mut rgb = vec![0.0f32; 3 * size * size];
        let mut depth = vec![0.0f32; size * size];
        let mut ids = vec![0u8; size * size];
        for y in 0..size {
            for x in 0..size {
                let p = y * size + x;
                let v = ((x / 4 + y / 4) % 2) as f32;
                rgb[p] = v;
                rgb[size * size + p] = 1.0 - v;
                rgb[2 * size * size + p] = x as f32 / size as f32;
                depth[p] = 0.25 + 0.5 * v;
                ids[p] = (v as u8) + 1;
            }
        }
        Sample::new(
            Tensor::from_vec(rgb, &[3, size, size]).unwrap(),
            Tensor::from_vec(depth, &[1, size, size]).unwrap(),
            Labels::new(1, size, size, ids).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn neutral_parameters_are_identity() {
        let s = checker_sample(32);
        let mut rng = stream(1, "aug", 0);
        let out = augment(&s, &AugmentParams::neutral(32), &mut rng).unwrap();
        assert_eq!(out.rgb.to_vec(), s.rgb.to_vec());
        assert_eq!(out.depth.to_vec(), s.depth.to_vec());
        assert_eq!(out.labels.ids, s.labels.ids);
    }

    #[test]
    fn flip_is_an_involution() {
        let s = checker_sample(16);
        let once = flip_sample(&s).unwrap();
        let twice = flip_sample(&once).unwrap();
        assert_eq!(twice.rgb.to_vec(), s.rgb.to_vec());
        assert_eq!(twice.depth.to_vec(), s.depth.to_vec());
        assert_eq!(twice.labels.ids, s.labels.ids);
        assert_ne!(once.rgb.to_vec(), s.rgb.to_vec());
    }

    #[test]
    fn half_scale_halves_extents_before_crop() {
        let s = checker_sample(64);
        let params = AugmentParams {
            scale_min: 0.5,
            scale_max: 0.5,
            crop: 32,
            hflip_prob: 0.0,
            jitter: false,
            scale_depth_values: false,
        };
        let mut rng = stream(2, "aug", 0);
        let out = augment(&s, &params, &mut rng).unwrap();
        assert_eq!(out.hw(), (32, 32));
        // 64 * 0.5 = 32 exactly; crop becomes identity
        assert_eq!(out.labels.ids, resize_labels(&s.labels.ids, 64, 64, 32, 32));
    }

    #[test]
    fn short_side_is_padded_with_ignore() {
        let s = checker_sample(16);
        let params = AugmentParams {
            scale_min: 1.0,
            scale_max: 1.0,
            crop: 24,
            hflip_prob: 0.0,
            jitter: false,
            scale_depth_values: false,
        };
        let mut rng = stream(3, "aug", 0);
        let out = augment(&s, &params, &mut rng).unwrap();
        assert_eq!(out.hw(), (24, 24));
        assert_eq!(out.labels.ids[23 * 24 + 23], IGNORE_ID);
        assert_eq!(out.rgb.to_vec()[23 * 24 + 23], 0.0);
        assert_eq!(out.labels.ids[0], s.labels.ids[0]);
    }

    #[test]
    fn same_seed_is_bitwise_reproducible() {
        let s = checker_sample(48);
        let params = AugmentParams { crop: 32, ..Default::default() };
        let a = augment(&s, &params, &mut stream(7, "aug", 5)).unwrap();
        let b = augment(&s, &params, &mut stream(7, "aug", 5)).unwrap();
        assert_eq!(a.rgb.to_vec(), b.rgb.to_vec());
        assert_eq!(a.labels.ids, b.labels.ids);
    }

    #[test]
    fn planes_stay_aligned_under_crop_and_flip() {
        // a tagged block travels identically in all three planes
        let mut s = checker_sample(40);
        let mut rgb = s.rgb.to_vec();
        let mut depth = s.depth.to_vec();
        let mut ids = s.labels.ids.clone();
        for y in 10..14 {
            for x in 20..24 {
                let p = y * 40 + x;
                rgb[p] = 0.123;
                depth[p] = 0.777;
                ids[p] = 9;
            }
        }
        s = Sample::new(
            Tensor::from_vec(rgb, &[3, 40, 40]).unwrap(),
            Tensor::from_vec(depth, &[1, 40, 40]).unwrap(),
            Labels::new(1, 40, 40, ids).unwrap(),
        )
        .unwrap();
        let params = AugmentParams {
            scale_min: 1.0,
            scale_max: 1.0,
            crop: 30,
            hflip_prob: 1.0,
            jitter: false,
            scale_depth_values: false,
        };
        for salt in 0..5 {
            let out = augment(&s, &params, &mut stream(11, "aug", salt)).unwrap();
            for p in 0..30 * 30 {
                if out.labels.ids[p] == 9 {
                    assert_eq!(out.rgb.to_vec()[p], 0.123);
                    assert_eq!(out.depth.to_vec()[p], 0.777);
                }
            }
        }
    }

    #[test]
    fn jitter_leaves_depth_untouched() {
        let s = checker_sample(16);
        let params = AugmentParams {
            scale_min: 1.0,
            scale_max: 1.0,
            crop: 16,
            hflip_prob: 0.0,
            jitter: true,
            scale_depth_values: false,
        };
        let out = augment(&s, &params, &mut stream(5, "aug", 0)).unwrap();
        assert_eq!(out.depth.to_vec(), s.depth.to_vec());
        assert!(out.rgb.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(out.rgb.to_vec(), s.rgb.to_vec());
    }
}
