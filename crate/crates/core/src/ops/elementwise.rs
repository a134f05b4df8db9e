//! Elementwise and reduction ops, channel concatenation, argmax.

use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::scalar::Scalar;
use crate::tape::{Op, Tape};
use crate::tensor::Tensor;

fn check_same_shape<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Elementwise sum; backward passes the gradient unchanged to both inputs.
pub fn add<S: Scalar>(tape: &mut Tape<S>, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_same_shape(a, b, "add")?;
    let data: Vec<S> = {
        let ai = a.borrow();
        let bi = b.borrow();
        ai.data.iter().zip(&bi.data).map(|(&x, &y)| x + y).collect()
    };
    let out = Tensor::from_vec(data, &a.shape())?;
    out.ensure_finite("add")?;
    if tape.should_record(&[a, b]) {
        tape.record(&[a, b], Op::Add { a: a.clone(), b: b.clone() }, &out);
    }
    Ok(out)
}

/// Elementwise product.
pub fn mul<S: Scalar>(tape: &mut Tape<S>, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_same_shape(a, b, "mul")?;
    let data: Vec<S> = {
        let ai = a.borrow();
        let bi = b.borrow();
        ai.data.iter().zip(&bi.data).map(|(&x, &y)| x * y).collect()
    };
    let out = Tensor::from_vec(data, &a.shape())?;
    out.ensure_finite("mul")?;
    if tape.should_record(&[a, b]) {
        tape.record(&[a, b], Op::Mul { a: a.clone(), b: b.clone() }, &out);
    }
    Ok(out)
}

/// Multiply every element by a constant.
pub fn scale<S: Scalar>(tape: &mut Tape<S>, x: &Tensor<S>, c: S) -> Result<Tensor<S>> {
    let data: Vec<S> = x.borrow().data.iter().map(|&v| v * c).collect();
    let out = Tensor::from_vec(data, &x.shape())?;
    out.ensure_finite("scale")?;
    if tape.should_record(&[x]) {
        tape.record(&[x], Op::Scale { x: x.clone(), c }, &out);
    }
    Ok(out)
}

/// Sum of all elements, as a scalar tensor.
pub fn sum_all<S: Scalar>(tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let total = {
        let xi = x.borrow();
        xi.data.iter().copied().fold(S::zero(), |acc, v| acc + v)
    };
    let out = Tensor::scalar(total);
    out.ensure_finite("sum_all")?;
    if tape.should_record(&[x]) {
        tape.record(&[x], Op::SumAll { x: x.clone() }, &out);
    }
    Ok(out)
}

/// Mean of all elements, as a scalar tensor.
pub fn mean_all<S: Scalar>(tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let n = x.numel();
    if n == 0 {
        return Err(Error::Shape("mean_all of empty tensor".into()));
    }
    let s = sum_all(tape, x)?;
    scale(tape, &s, S::from_double(1.0 / n as f64))
}

/// `max(0, x)` elementwise.
pub fn relu<S: Scalar>(tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let data: Vec<S> = x
        .borrow()
        .data
        .iter()
        .map(|&v| if v > S::zero() { v } else { S::zero() })
        .collect();
    let out = Tensor::from_vec(data, &x.shape())?;
    out.ensure_finite("relu")?;
    if tape.should_record(&[x]) {
        tape.record(&[x], Op::Relu { x: x.clone() }, &out);
    }
    Ok(out)
}

/// Stack `b`'s channels after `a`'s; spatial and batch extents must match.
/// Backward splits the gradient at the channel boundary.
pub fn concat_channels<S: Scalar>(
    tape: &mut Tape<S>,
    a: &Tensor<S>,
    b: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (na, ca, ha, wa) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::Shape(format!(
            "concat_channels: batch/spatial mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let plane = ha * wa;
    let mut data = vec![S::zero(); na * (ca + cb) * plane];
    {
        let ai = a.borrow();
        let bi = b.borrow();
        for ni in 0..na {
            let dst = &mut data[ni * (ca + cb) * plane..][..(ca + cb) * plane];
            dst[..ca * plane].copy_from_slice(&ai.data[ni * ca * plane..][..ca * plane]);
            dst[ca * plane..].copy_from_slice(&bi.data[ni * cb * plane..][..cb * plane]);
        }
    }
    let out = Tensor::from_vec(data, &[na, ca + cb, ha, wa])?;
    if tape.should_record(&[a, b]) {
        tape.record(&[a, b], Op::ConcatChannels { a: a.clone(), b: b.clone() }, &out);
    }
    Ok(out)
}

/// Per-pixel argmax over the class axis; ties go to the lowest class id.
pub fn argmax_classes<S: Scalar>(logits: &Tensor<S>) -> Result<Labels> {
    let (n, k, h, w) = logits.dims4()?;
    if k == 0 || k > 255 {
        return Err(Error::Value(format!("argmax supports 1..=255 classes, got {k}")));
    }
    let inner = logits.borrow();
    let plane = h * w;
    let mut ids = vec![0u8; n * plane];
    for ni in 0..n {
        let base = ni * k * plane;
        for p in 0..plane {
            let mut best = inner.data[base + p];
            let mut best_k = 0usize;
            for ki in 1..k {
                let v = inner.data[base + ki * plane + p];
                if v > best {
                    best = v;
                    best_k = ki;
                }
            }
            ids[ni * plane + p] = best_k as u8;
        }
    }
    Labels::new(n, h, w, ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_identity_and_arithmetic() {
        let mut tape = Tape::paused();
        let a = Tensor::from_vec(vec![1.0f32, 2.0], &[2]).unwrap();
        let zero = Tensor::zeros(&[2]).unwrap();
        assert_eq!(add(&mut tape, &a, &zero).unwrap().to_vec(), vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![3.0f32, 4.0], &[2]).unwrap();
        assert_eq!(add(&mut tape, &a, &b).unwrap().to_vec(), vec![4.0, 6.0]);
        assert!(add(&mut tape, &a, &Tensor::zeros(&[3]).unwrap()).is_err());
    }

    #[test]
    fn backward_of_sum_add_is_ones() {
        let mut tape = Tape::new();
        let a = Tensor::from_vec(vec![1.0f32, 2.0], &[2]).unwrap().with_requires_grad();
        let b = Tensor::from_vec(vec![3.0f32, 4.0], &[2]).unwrap().with_requires_grad();
        let s = add(&mut tape, &a, &b).unwrap();
        let loss = sum_all(&mut tape, &s).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 1.0]);
        assert_eq!(b.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn fanout_gradients_accumulate() {
        // loss = sum(a + a) -> grad(a) = 2s
        let mut tape = Tape::new();
        let a = Tensor::from_vec(vec![1.0f32, -1.0], &[2]).unwrap().with_requires_grad();
        let s = add(&mut tape, &a, &a).unwrap();
        let loss = sum_all(&mut tape, &s).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn elementwise_square_gradient() {
        // loss = sum(w * w) at w = [1,-2,3] -> grad = [2,-4,6]
        let mut tape = Tape::new();
        let w = Tensor::from_vec(vec![1.0f32, -2.0, 3.0], &[3]).unwrap().with_requires_grad();
        let sq = mul(&mut tape, &w, &w).unwrap();
        let loss = sum_all(&mut tape, &sq).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(w.grad().unwrap(), vec![2.0, -4.0, 6.0]);
    }

    #[test]
    fn constant_loss_writes_no_gradients() {
        let mut tape = Tape::new();
        let c = Tensor::from_vec(vec![5.0f32], &[1]).unwrap();
        let loss = sum_all(&mut tape, &c).unwrap();
        assert!(tape.backward(&loss).is_err(), "constant loss is not tracked");
        assert!(c.grad().is_none());
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::paused();
        let x = Tensor::from_vec(vec![-1.0f32, 0.0, 2.0], &[3]).unwrap();
        assert_eq!(relu(&mut tape, &x).unwrap().to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn concat_extents_and_identity() {
        let mut tape = Tape::paused();
        let a = Tensor::<f32>::zeros(&[1, 512, 9, 9]).unwrap();
        let b = Tensor::<f32>::zeros(&[1, 512, 9, 9]).unwrap();
        assert_eq!(concat_channels(&mut tape, &a, &b).unwrap().shape(), vec![1, 1024, 9, 9]);

        let x = Tensor::from_vec(vec![1.0f32, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let empty = Tensor::from_vec(Vec::new(), &[1, 0, 2, 2]).unwrap();
        let same = concat_channels(&mut tape, &x, &empty).unwrap();
        assert_eq!(same.shape(), x.shape());
        assert_eq!(same.to_vec(), x.to_vec());
    }

    #[test]
    fn concat_backward_routes_to_own_channels() {
        let mut tape = Tape::new();
        let a = Tensor::<f32>::full(&[1, 1, 2, 2], 1.0).unwrap().with_requires_grad();
        let b = Tensor::<f32>::full(&[1, 1, 2, 2], 2.0).unwrap().with_requires_grad();
        let cat = concat_channels(&mut tape, &a, &b).unwrap();
        // select only b's channel: multiply by a mask that zeroes a's channel
        let mask = Tensor::from_vec(
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            &[1, 2, 2, 2],
        )
        .unwrap();
        let picked = mul(&mut tape, &cat, &mask).unwrap();
        let loss = sum_all(&mut tape, &picked).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![0.0; 4], "a receives zero grad");
        assert_eq!(b.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn argmax_lowest_id_wins_ties() {
        let logits =
            Tensor::from_vec(vec![1.0f32, 0.5, 1.0, 0.5, 0.2, 2.0], &[1, 3, 1, 2]).unwrap();
        // pixel 0: classes [1.0, 1.0, 0.2] -> tie between 0 and 1 -> 0
        // pixel 1: classes [0.5, 0.5, 2.0] -> 2
        let labels = argmax_classes(&logits).unwrap();
        assert_eq!(labels.ids, vec![0, 2]);
    }

    #[test]
    fn forward_identical_with_and_without_recording() {
        let x = Tensor::from_vec(vec![1.0f32, -2.0, 3.0], &[3]).unwrap().with_requires_grad();
        let mut on = Tape::new();
        let mut off = Tape::paused();
        let y_on = relu(&mut on, &x).unwrap();
        let y_off = relu(&mut off, &x).unwrap();
        assert_eq!(y_on.to_vec(), y_off.to_vec());
        assert_eq!(on.len(), 2, "leaf + relu recorded");
        assert_eq!(off.len(), 0);
    }
}
