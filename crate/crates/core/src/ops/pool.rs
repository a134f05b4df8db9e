//! Max pooling and global average pooling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        PoolSpec { kernel: (kernel, kernel), stride: (stride, stride), padding: (padding, padding) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::Value("pool kernel and stride must be >= 1".into()));
        }
        if self.padding.0 >= self.kernel.0 || self.padding.1 >= self.kernel.1 {
            return Err(Error::Value("pool padding must be smaller than the kernel".into()));
        }
        Ok(())
    }

    pub fn output_extents(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let nh = (h + 2 * self.padding.0).checked_sub(self.kernel.0);
        let nw = (w + 2 * self.padding.1).checked_sub(self.kernel.1);
        match (nh, nw) {
            (Some(nh), Some(nw)) => Ok((nh / self.stride.0 + 1, nw / self.stride.1 + 1)),
            _ => Err(Error::Shape(format!(
                "pool output empty for input {h}x{w} with {self:?}"
            ))),
        }
    }
}

/// Window maximum. Padding positions never win; backward routes the gradient
/// to the argmax, first occurrence in row-major order on ties.
pub fn max_pool2d<S: Scalar>(
    tape: &mut Tape<S>,
    input: &Tensor<S>,
    spec: &PoolSpec,
) -> Result<Tensor<S>> {
    spec.validate()?;
    let (n, c, h, w) = input.dims4()?;
    let (oh, ow) = spec.output_extents(h, w)?;
    if input.numel() > u32::MAX as usize {
        return Err(Error::Shape("max_pool input too large to index".into()));
    }

    let plane = h * w;
    let out_plane = oh * ow;
    let mut out = vec![S::zero(); n * c * out_plane];
    let mut argmax = vec![0u32; n * c * out_plane];
    {
        let xi = input.borrow();
        for nc in 0..n * c {
            let x_plane = &xi.data[nc * plane..][..plane];
            for oy in 0..oh {
                for ox in 0..ow {
                    let y0 = (oy * spec.stride.0) as isize - spec.padding.0 as isize;
                    let x0 = (ox * spec.stride.1) as isize - spec.padding.1 as isize;
                    let mut best = S::neg_infinity();
                    let mut best_idx = 0usize;
                    let mut seen = false;
                    for ky in 0..spec.kernel.0 {
                        let iy = y0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..spec.kernel.1 {
                            let ix = x0 + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = iy as usize * w + ix as usize;
                            let v = x_plane[idx];
                            if !seen || v > best {
                                seen = true;
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    debug_assert!(seen, "pool window fully inside padding");
                    out[nc * out_plane + oy * ow + ox] = best;
                    argmax[nc * out_plane + oy * ow + ox] = (nc * plane + best_idx) as u32;
                }
            }
        }
    }

    let out = Tensor::from_vec(out, &[n, c, oh, ow])?;
    out.ensure_finite("max_pool2d")?;
    if tape.should_record(&[input]) {
        tape.record(&[input], Op::MaxPool { x: input.clone(), argmax }, &out);
    }
    Ok(out)
}

pub(crate) fn max_pool_backward<S: Scalar>(dy: &[S], argmax: &[u32], x_numel: usize) -> Vec<S> {
    let mut dx = vec![S::zero(); x_numel];
    for (&g, &idx) in dy.iter().zip(argmax) {
        dx[idx as usize] = dx[idx as usize] + g;
    }
    dx
}

/// Per-channel spatial mean: `[N,C,H,W] -> [N,C,1,1]`.
pub fn global_avg_pool<S: Scalar>(tape: &mut Tape<S>, input: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4()?;
    let plane = h * w;
    let inv = S::from_double(1.0 / plane as f64);
    let mut out = vec![S::zero(); n * c];
    {
        let xi = input.borrow();
        for nc in 0..n * c {
            let mut acc = S::zero();
            for &v in &xi.data[nc * plane..][..plane] {
                acc = acc + v;
            }
            out[nc] = acc * inv;
        }
    }
    let out = Tensor::from_vec(out, &[n, c, 1, 1])?;
    out.ensure_finite("global_avg_pool")?;
    if tape.should_record(&[input]) {
        tape.record(&[input], Op::GlobalAvgPool { x: input.clone() }, &out);
    }
    Ok(out)
}

pub(crate) fn global_avg_pool_backward<S: Scalar>(
    dy: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let plane = h * w;
    let inv = S::from_double(1.0 / plane as f64);
    let mut dx = vec![S::zero(); n * c * plane];
    for nc in 0..n * c {
        let g = dy[nc] * inv;
        for v in &mut dx[nc * plane..(nc + 1) * plane] {
            *v = g;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;

    #[test]
    fn single_window_takes_max() {
        let mut tape = Tape::paused();
        let x = Tensor::from_vec(vec![1.0f32, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let out = max_pool2d(&mut tape, &x, &PoolSpec::new(2, 2, 0)).unwrap();
        assert_eq!(out.shape(), vec![1, 1, 1, 1]);
        assert_eq!(out.to_vec(), vec![4.0]);
    }

    #[test]
    fn backward_routes_to_argmax_only() {
        let mut tape = Tape::new();
        let x = Tensor::from_vec(vec![1.0f32, 2.0, 3.0, 4.0], &[1, 1, 2, 2])
            .unwrap()
            .with_requires_grad();
        let out = max_pool2d(&mut tape, &x, &PoolSpec::new(2, 2, 0)).unwrap();
        let loss = sum_all(&mut tape, &out).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn tie_breaks_to_first_row_major() {
        let mut tape = Tape::new();
        let x = Tensor::from_vec(vec![5.0f32, 5.0, 5.0, 5.0], &[1, 1, 2, 2])
            .unwrap()
            .with_requires_grad();
        let out = max_pool2d(&mut tape, &x, &PoolSpec::new(2, 2, 0)).unwrap();
        let loss = sum_all(&mut tape, &out).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn padded_pool_extents() {
        let spec = PoolSpec::new(3, 2, 1);
        assert_eq!(spec.output_extents(48, 48).unwrap(), (24, 24));
        assert!(PoolSpec::new(2, 2, 0).output_extents(1, 1).is_err());
    }

    #[test]
    fn gap_of_constant_is_constant_and_mean_is_exact() {
        let mut tape = Tape::paused();
        let c = Tensor::<f32>::full(&[2, 3, 4, 4], 2.5).unwrap();
        let out = global_avg_pool(&mut tape, &c).unwrap();
        assert_eq!(out.shape(), vec![2, 3, 1, 1]);
        assert!(out.to_vec().iter().all(|&v| (v - 2.5).abs() < 1e-6));

        let x = Tensor::from_vec(vec![1.0f32, 3.0, 5.0, 7.0], &[1, 1, 2, 2]).unwrap();
        assert_eq!(global_avg_pool(&mut tape, &x).unwrap().to_vec(), vec![4.0]);
    }

    #[test]
    fn gap_extent_contract() {
        let mut tape = Tape::paused();
        let x = Tensor::<f32>::zeros(&[2, 16, 9, 9]).unwrap();
        assert_eq!(global_avg_pool(&mut tape, &x).unwrap().shape(), vec![2, 16, 1, 1]);
    }

    #[test]
    fn gap_backward_spreads_uniformly() {
        let mut tape = Tape::new();
        let x = Tensor::<f32>::full(&[1, 1, 2, 2], 1.0).unwrap().with_requires_grad();
        let out = global_avg_pool(&mut tape, &x).unwrap();
        let loss = sum_all(&mut tape, &out).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.25; 4]);
    }
}
