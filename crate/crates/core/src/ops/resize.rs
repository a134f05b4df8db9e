//! Bilinear upsampling, reflection padding, spatial cropping.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PadSpec {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

/// Pixel-center source lookup for one axis: `(lo, hi, frac)` per output index,
/// from `s = (d + 0.5) * (in/out) - 0.5` clamped to `[0, in-1]`.
pub(crate) fn bilinear_axis(in_extent: usize, out_extent: usize) -> Vec<(usize, usize, f64)> {
    let ratio = in_extent as f64 / out_extent as f64;
    (0..out_extent)
        .map(|d| {
            let s = ((d as f64 + 0.5) * ratio - 0.5).clamp(0.0, (in_extent - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(in_extent - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear interpolation to a larger spatial extent. The blend weights per
/// output pixel sum to one; backward scatters the same weights.
pub fn bilinear_upsample<S: Scalar>(
    tape: &mut Tape<S>,
    input: &Tensor<S>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("bilinear output extent is zero".into()));
    }
    if out_h < h || out_w < w {
        return Err(Error::Shape(format!(
            "bilinear_upsample wants out >= in, got {h}x{w} -> {out_h}x{out_w}"
        )));
    }
    let ys = bilinear_axis(h, out_h);
    let xs = bilinear_axis(w, out_w);
    let plane = h * w;
    let out_plane = out_h * out_w;
    let mut out = vec![S::zero(); n * c * out_plane];
    {
        let xi = input.borrow();
        let src = &xi.data;
        out.par_chunks_mut(out_plane).enumerate().for_each(|(nc, dst)| {
            let x_plane = &src[nc * plane..][..plane];
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                let row0 = &x_plane[y0 * w..][..w];
                let row1 = &x_plane[y1 * w..][..w];
                let wy1 = S::from_double(fy);
                let wy0 = S::one() - wy1;
                let dst_row = &mut dst[oy * out_w..][..out_w];
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let wx1 = S::from_double(fx);
                    let wx0 = S::one() - wx1;
                    dst_row[ox] = wy0 * (wx0 * row0[x0] + wx1 * row0[x1])
                        + wy1 * (wx0 * row1[x0] + wx1 * row1[x1]);
                }
            }
        });
    }
    let out = Tensor::from_vec(out, &[n, c, out_h, out_w])?;
    out.ensure_finite("bilinear_upsample")?;
    if tape.should_record(&[input]) {
        tape.record(&[input], Op::BilinearUp { x: input.clone() }, &out);
    }
    Ok(out)
}

pub(crate) fn bilinear_backward<S: Scalar>(
    dy: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<S> {
    let ys = bilinear_axis(h, out_h);
    let xs = bilinear_axis(w, out_w);
    let plane = h * w;
    let out_plane = out_h * out_w;
    let mut dx = vec![S::zero(); n * c * plane];
    dx.par_chunks_mut(plane).enumerate().for_each(|(nc, dst)| {
        let dy_plane = &dy[nc * out_plane..][..out_plane];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let wy1 = S::from_double(fy);
            let wy0 = S::one() - wy1;
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let g = dy_plane[oy * out_w + ox];
                let wx1 = S::from_double(fx);
                let wx0 = S::one() - wx1;
                dst[y0 * w + x0] = dst[y0 * w + x0] + g * wy0 * wx0;
                dst[y0 * w + x1] = dst[y0 * w + x1] + g * wy0 * wx1;
                dst[y1 * w + x0] = dst[y1 * w + x0] + g * wy1 * wx0;
                dst[y1 * w + x1] = dst[y1 * w + x1] + g * wy1 * wx1;
            }
        }
    });
    dx
}

fn reflect_index(i: isize, extent: usize) -> usize {
    // symmetric reflection: ..., 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
    let n = extent as isize;
    let j = if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i };
    debug_assert!((0..n).contains(&j));
    j as usize
}

/// Mirror-pad the spatial extents. Used to round inputs up to a multiple of
/// the output stride; requires pad <= extent on each side.
pub fn reflect_pad<S: Scalar>(
    tape: &mut Tape<S>,
    input: &Tensor<S>,
    pad: PadSpec,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4()?;
    if pad.top > h || pad.bottom > h || pad.left > w || pad.right > w {
        return Err(Error::Shape(format!(
            "reflect_pad {pad:?} exceeds input extents {h}x{w}"
        )));
    }
    let oh = h + pad.top + pad.bottom;
    let ow = w + pad.left + pad.right;
    let plane = h * w;
    let out_plane = oh * ow;
    let mut out = vec![S::zero(); n * c * out_plane];
    {
        let xi = input.borrow();
        for nc in 0..n * c {
            let src = &xi.data[nc * plane..][..plane];
            let dst = &mut out[nc * out_plane..][..out_plane];
            for oy in 0..oh {
                let sy = reflect_index(oy as isize - pad.top as isize, h);
                for ox in 0..ow {
                    let sx = reflect_index(ox as isize - pad.left as isize, w);
                    dst[oy * ow + ox] = src[sy * w + sx];
                }
            }
        }
    }
    let out = Tensor::from_vec(out, &[n, c, oh, ow])?;
    if tape.should_record(&[input]) {
        tape.record(&[input], Op::ReflectPad { x: input.clone(), pad }, &out);
    }
    Ok(out)
}

pub(crate) fn reflect_pad_backward<S: Scalar>(
    dy: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    pad: &PadSpec,
) -> Vec<S> {
    let oh = h + pad.top + pad.bottom;
    let ow = w + pad.left + pad.right;
    let plane = h * w;
    let out_plane = oh * ow;
    let mut dx = vec![S::zero(); n * c * plane];
    for nc in 0..n * c {
        let g_plane = &dy[nc * out_plane..][..out_plane];
        let dst = &mut dx[nc * plane..][..plane];
        for oy in 0..oh {
            let sy = reflect_index(oy as isize - pad.top as isize, h);
            for ox in 0..ow {
                let sx = reflect_index(ox as isize - pad.left as isize, w);
                dst[sy * w + sx] = dst[sy * w + sx] + g_plane[oy * ow + ox];
            }
        }
    }
    dx
}

/// Take the `out_h x out_w` window at `(top, left)`; backward zero-pads.
pub fn crop_spatial<S: Scalar>(
    tape: &mut Tape<S>,
    input: &Tensor<S>,
    top: usize,
    left: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4()?;
    if top + out_h > h || left + out_w > w || out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!(
            "crop ({top},{left})+{out_h}x{out_w} outside {h}x{w}"
        )));
    }
    let plane = h * w;
    let out_plane = out_h * out_w;
    let mut out = vec![S::zero(); n * c * out_plane];
    {
        let xi = input.borrow();
        for nc in 0..n * c {
            let src = &xi.data[nc * plane..][..plane];
            let dst = &mut out[nc * out_plane..][..out_plane];
            for oy in 0..out_h {
                let s = (top + oy) * w + left;
                dst[oy * out_w..][..out_w].copy_from_slice(&src[s..s + out_w]);
            }
        }
    }
    let out = Tensor::from_vec(out, &[n, c, out_h, out_w])?;
    if tape.should_record(&[input]) {
        tape.record(&[input], Op::CropSpatial { x: input.clone(), top, left }, &out);
    }
    Ok(out)
}

pub(crate) fn crop_backward<S: Scalar>(
    dy: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    top: usize,
    left: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<S> {
    let plane = h * w;
    let out_plane = out_h * out_w;
    let mut dx = vec![S::zero(); n * c * plane];
    for nc in 0..n * c {
        let g_plane = &dy[nc * out_plane..][..out_plane];
        let dst = &mut dx[nc * plane..][..plane];
        for oy in 0..out_h {
            let s = (top + oy) * w + left;
            for ox in 0..out_w {
                dst[s + ox] = dst[s + ox] + g_plane[oy * out_w + ox];
            }
        }
    }
    dx
}
