//! Per-pixel softmax cross-entropy with an ignore id.

use crate::error::{Error, Result};
use crate::labels::{Labels, IGNORE_ID};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape};
use crate::tensor::Tensor;

/// Mean over non-ignored pixels of `-log softmax(logits)[label]`.
///
/// Ignored pixels contribute neither loss nor gradient. Returns 0 (and warns)
/// when every pixel is ignored.
pub fn softmax_cross_entropy<S: Scalar>(
    tape: &mut Tape<S>,
    logits: &Tensor<S>,
    labels: &Labels,
) -> Result<Tensor<S>> {
    let (n, k, h, w) = logits.dims4()?;
    if (labels.n, labels.h, labels.w) != (n, h, w) {
        return Err(Error::Shape(format!(
            "labels ({},{},{}) do not match logits ({n},{k},{h},{w})",
            labels.n, labels.h, labels.w
        )));
    }
    labels.validate(k)?;

    let plane = h * w;
    let mut probs = vec![S::zero(); n * k * plane];
    let mut total = S::zero();
    let mut valid = 0usize;
    {
        let li = logits.borrow();
        for ni in 0..n {
            let base = ni * k * plane;
            for p in 0..plane {
                let mut max = li.data[base + p];
                for ki in 1..k {
                    let v = li.data[base + ki * plane + p];
                    if v > max {
                        max = v;
                    }
                }
                let mut denom = S::zero();
                for ki in 0..k {
                    let e = (li.data[base + ki * plane + p] - max).exp();
                    probs[base + ki * plane + p] = e;
                    denom = denom + e;
                }
                let inv = S::one() / denom;
                for ki in 0..k {
                    probs[base + ki * plane + p] = probs[base + ki * plane + p] * inv;
                }
                let label = labels.ids[ni * plane + p];
                if label != IGNORE_ID {
                    let z = li.data[base + (label as usize) * plane + p];
                    total = total + (denom.ln() + max - z);
                    valid += 1;
                }
            }
        }
    }

    let loss_value = if valid == 0 {
        log::warn!("softmax_cross_entropy: every pixel ignored, returning 0");
        S::zero()
    } else {
        total * S::from_double(1.0 / valid as f64)
    };
    let out = Tensor::scalar(loss_value);
    out.ensure_finite("softmax_cross_entropy")?;
    if tape.should_record(&[logits]) {
        tape.record(
            &[logits],
            Op::CrossEntropy { logits: logits.clone(), probs, labels: labels.clone(), valid },
            &out,
        );
    }
    Ok(out)
}

pub(crate) fn backward<S: Scalar>(
    d_loss: S,
    probs: &[S],
    labels: &Labels,
    valid: usize,
    n: usize,
    k: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let plane = h * w;
    let mut dl = vec![S::zero(); n * k * plane];
    if valid == 0 {
        return dl;
    }
    let scale = d_loss * S::from_double(1.0 / valid as f64);
    for ni in 0..n {
        let base = ni * k * plane;
        for p in 0..plane {
            let label = labels.ids[ni * plane + p];
            if label == IGNORE_ID {
                continue;
            }
            for ki in 0..k {
                let idx = base + ki * plane + p;
                let indicator = if ki == label as usize { S::one() } else { S::zero() };
                dl[idx] = scale * (probs[idx] - indicator);
            }
        }
    }
    dl
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_logits_cost_ln_k() {
        let mut tape = Tape::paused();
        for k in [2usize, 5, 19] {
            let logits = Tensor::<f64>::full(&[1, k, 2, 2], 0.3).unwrap();
            let labels = Labels::filled(1, 2, 2, 0);
            let loss = softmax_cross_entropy(&mut tape, &logits, &labels).unwrap();
            assert_relative_eq!(loss.item().unwrap(), (k as f64).ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn all_ignored_gives_zero_loss_and_zero_grads() {
        let mut tape = Tape::new();
        let logits = Tensor::<f32>::full(&[1, 3, 2, 2], 1.0).unwrap().with_requires_grad();
        let labels = Labels::filled(1, 2, 2, IGNORE_ID);
        let loss = softmax_cross_entropy(&mut tape, &logits, &labels).unwrap();
        assert_eq!(loss.item().unwrap(), 0.0);
        tape.backward(&loss).unwrap();
        assert_eq!(logits.grad().unwrap(), vec![0.0; 12]);
    }

    #[test]
    fn two_class_single_pixel_scalar_oracle() {
        // logits [2, 0], label 0 -> loss = ln(1 + e^-2)
        let mut tape = Tape::paused();
        let logits = Tensor::from_vec(vec![2.0f64, 0.0], &[1, 2, 1, 1]).unwrap();
        let labels = Labels::filled(1, 1, 1, 0);
        let loss = softmax_cross_entropy(&mut tape, &logits, &labels).unwrap();
        let want = (1.0 + (-2.0f64).exp()).ln();
        assert_relative_eq!(loss.item().unwrap(), want, max_relative = 1e-12);
        assert_relative_eq!(loss.item().unwrap(), 0.126928, max_relative = 1e-5);
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        let mut tape = Tape::paused();
        let logits = Tensor::<f32>::full(&[1, 2, 1, 1], 0.0).unwrap();
        let labels = Labels::filled(1, 1, 1, 2);
        assert!(softmax_cross_entropy(&mut tape, &logits, &labels).is_err());
    }

    #[test]
    fn gradient_sums_to_zero_over_classes() {
        let mut tape = Tape::new();
        let logits = Tensor::from_vec(
            vec![0.5f64, -1.0, 2.0, 0.1, 0.0, 1.0, -0.5, 0.7],
            &[1, 2, 2, 2],
        )
        .unwrap()
        .with_requires_grad();
        let mut labels = Labels::filled(1, 2, 2, 0);
        labels.ids[1] = 1;
        labels.ids[2] = IGNORE_ID;
        let loss = softmax_cross_entropy(&mut tape, &logits, &labels).unwrap();
        tape.backward(&loss).unwrap();
        let g = logits.grad().unwrap();
        let plane = 4;
        for p in 0..plane {
            let sum: f64 = (0..2).map(|k| g[k * plane + p]).sum();
            assert!(sum.abs() < 1e-12, "class-axis gradient sum at pixel {p} = {sum}");
        }
        // ignored pixel gets exactly zero
        assert_eq!(g[2], 0.0);
        assert_eq!(g[plane + 2], 0.0);
    }
}
