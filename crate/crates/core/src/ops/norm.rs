//! Batch normalization with train and frozen modes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by batch statistics and update the running estimates.
    Train,
    /// Normalize by the stored running statistics; never mutates them.
    Frozen,
}

/// Per-channel scale/shift learnables plus running statistics.
pub struct BatchNormState<S: Scalar> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub momentum: f64,
    pub eps: f64,
    pub mode: BnMode,
}

impl<S: Scalar> BatchNormState<S> {
    /// Fresh state: gamma ones, beta zeros, running mean 0 / var 1.
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNormState {
            gamma: Tensor::full(&[channels], S::one())?.with_requires_grad(),
            beta: Tensor::zeros(&[channels])?.with_requires_grad(),
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], S::one())?,
            momentum: 0.1,
            eps: 1e-5,
            mode: BnMode::Train,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }
}

/// Normalize per channel, then scale and shift.
///
/// Train mode uses biased batch statistics over `N*H*W` and folds them into
/// the running estimates as `running <- (1-momentum)*running + momentum*batch`.
/// Differentiable w.r.t. input, gamma, and beta; `eps` keeps the divisor
/// positive even for constant inputs.
pub fn batch_norm<S: Scalar>(
    tape: &mut Tape<S>,
    input: &Tensor<S>,
    state: &BatchNormState<S>,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4()?;
    if c != state.channels() {
        return Err(Error::Shape(format!(
            "batch_norm expects {} channels, got {c}",
            state.channels()
        )));
    }
    let count = n * h * w;
    if count == 0 {
        return Err(Error::Shape("batch_norm over empty spatial extent".into()));
    }
    let plane = h * w;
    let eps = S::from_double(state.eps);
    let train = state.mode == BnMode::Train;

    let (mean, var): (Vec<S>, Vec<S>) = if train {
        let xi = input.borrow();
        let inv_count = S::from_double(1.0 / count as f64);
        let mut mean = vec![S::zero(); c];
        let mut var = vec![S::zero(); c];
        for ci in 0..c {
            let mut acc = S::zero();
            for ni in 0..n {
                let row = &xi.data[(ni * c + ci) * plane..][..plane];
                for &v in row {
                    acc = acc + v;
                }
            }
            let m = acc * inv_count;
            let mut sq = S::zero();
            for ni in 0..n {
                let row = &xi.data[(ni * c + ci) * plane..][..plane];
                for &v in row {
                    let d = v - m;
                    sq = sq + d * d;
                }
            }
            mean[ci] = m;
            var[ci] = sq * inv_count;
        }
        (mean, var)
    } else {
        (state.running_mean.to_vec(), state.running_var.to_vec())
    };

    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();

    let gamma = state.gamma.to_vec();
    let beta = state.beta.to_vec();
    let mut xhat = vec![S::zero(); n * c * plane];
    let mut out_data = vec![S::zero(); n * c * plane];
    {
        let xi = input.borrow();
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                let (m, istd, g, b) = (mean[ci], inv_std[ci], gamma[ci], beta[ci]);
                for p in 0..plane {
                    let nx = (xi.data[base + p] - m) * istd;
                    xhat[base + p] = nx;
                    out_data[base + p] = g * nx + b;
                }
            }
        }
    }

    if train {
        let mom = S::from_double(state.momentum);
        let keep = S::one() - mom;
        let mut rm = state.running_mean.to_vec();
        let mut rv = state.running_var.to_vec();
        for ci in 0..c {
            rm[ci] = keep * rm[ci] + mom * mean[ci];
            rv[ci] = keep * rv[ci] + mom * var[ci];
        }
        state.running_mean.set_data(&rm)?;
        state.running_var.set_data(&rv)?;
    }

    let out = Tensor::from_vec(out_data, &[n, c, h, w])?;
    out.ensure_finite("batch_norm")?;

    let tracked = [input, &state.gamma, &state.beta];
    if tape.should_record(&tracked) {
        tape.record(
            &tracked,
            Op::BatchNorm {
                x: input.clone(),
                gamma: state.gamma.clone(),
                beta: state.beta.clone(),
                xhat,
                inv_std,
                train,
            },
            &out,
        );
    }
    Ok(out)
}

/// Gradients for input, gamma, beta.
///
/// Train mode: `dx = gamma*inv_std * (dy - mean(dy) - xhat*mean(dy*xhat))`
/// with means over the per-channel normalization set. Frozen mode drops the
/// two mean terms because the statistics are constants.
pub(crate) fn backward<S: Scalar>(
    dy: &[S],
    xhat: &[S],
    inv_std: &[S],
    gamma: &[S],
    train: bool,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let plane = h * w;
    let count = n * plane;
    let inv_count = S::from_double(1.0 / count as f64);
    let mut dx = vec![S::zero(); dy.len()];
    let mut dgamma = vec![S::zero(); c];
    let mut dbeta = vec![S::zero(); c];

    for ci in 0..c {
        let mut sum_dy = S::zero();
        let mut sum_dy_xhat = S::zero();
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for p in 0..plane {
                sum_dy = sum_dy + dy[base + p];
                sum_dy_xhat = sum_dy_xhat + dy[base + p] * xhat[base + p];
            }
        }
        dgamma[ci] = sum_dy_xhat;
        dbeta[ci] = sum_dy;

        let scale = gamma[ci] * inv_std[ci];
        if train {
            let m_dy = sum_dy * inv_count;
            let m_dy_xhat = sum_dy_xhat * inv_count;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for p in 0..plane {
                    dx[base + p] =
                        scale * (dy[base + p] - m_dy - xhat[base + p] * m_dy_xhat);
                }
            }
        } else {
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for p in 0..plane {
                    dx[base + p] = scale * dy[base + p];
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn train_mode_centers_constant_input() {
        let mut tape = Tape::paused();
        let state = BatchNormState::<f32>::new(2).unwrap();
        let x = Tensor::full(&[1, 2, 3, 3], 7.5).unwrap();
        let out = batch_norm(&mut tape, &x, &state).unwrap();
        assert!(out.to_vec().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn frozen_unit_stats_is_identity() {
        let mut tape = Tape::paused();
        let mut state = BatchNormState::<f32>::new(1).unwrap();
        state.mode = BnMode::Frozen;
        let x = Tensor::from_vec(vec![0.5f32, -1.5, 2.0, 0.0], &[1, 1, 2, 2]).unwrap();
        let out = batch_norm(&mut tape, &x, &state).unwrap();
        for (o, i) in out.to_vec().iter().zip(x.to_vec()) {
            assert_relative_eq!(*o, i, max_relative = 1e-4);
        }
    }

    #[test]
    fn two_value_channel_normalizes_to_unit_spread() {
        // channel holding [1,3]: mean 2, biased var 1
        let mut tape = Tape::paused();
        let state = BatchNormState::<f64>::new(1).unwrap();
        let x = Tensor::from_vec(vec![1.0f64, 3.0], &[1, 1, 1, 2]).unwrap();
        let out = batch_norm(&mut tape, &x, &state).unwrap();
        let want = 1.0 / (1.0 + state.eps).sqrt();
        let got = out.to_vec();
        assert_relative_eq!(got[0], -want, max_relative = 1e-12);
        assert_relative_eq!(got[1], want, max_relative = 1e-12);
    }

    #[test]
    fn frozen_mode_never_mutates_running_stats() {
        let mut tape = Tape::paused();
        let mut state = BatchNormState::<f32>::new(1).unwrap();
        state.running_mean.set_data(&[0.25]).unwrap();
        state.running_var.set_data(&[2.0]).unwrap();
        state.mode = BnMode::Frozen;
        let x = Tensor::from_vec(vec![5.0f32, -3.0], &[1, 1, 1, 2]).unwrap();
        batch_norm(&mut tape, &x, &state).unwrap();
        assert_eq!(state.running_mean.to_vec(), vec![0.25]);
        assert_eq!(state.running_var.to_vec(), vec![2.0]);
    }

    #[test]
    fn train_mode_updates_running_stats() {
        let mut tape = Tape::paused();
        let state = BatchNormState::<f64>::new(1).unwrap();
        let x = Tensor::from_vec(vec![1.0f64, 3.0], &[1, 1, 1, 2]).unwrap();
        batch_norm(&mut tape, &x, &state).unwrap();
        // running <- 0.9*prev + 0.1*batch
        assert_relative_eq!(state.running_mean.to_vec()[0], 0.2, max_relative = 1e-12);
        assert_relative_eq!(state.running_var.to_vec()[0], 0.9 + 0.1, max_relative = 1e-12);
        assert!(state.running_var.to_vec()[0] >= 0.0);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let mut tape = Tape::paused();
        let state = BatchNormState::<f32>::new(3).unwrap();
        let x = Tensor::<f32>::zeros(&[1, 2, 2, 2]).unwrap();
        assert!(batch_norm(&mut tape, &x, &state).is_err());
    }
}
