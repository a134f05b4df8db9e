//! Central-finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Taped gradient of `f` at `x`, as f64 values.
pub fn analytic_gradient<S, F>(f: F, x: &Tensor<S>) -> Result<Vec<f64>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &Tensor<S>) -> Result<Tensor<S>>,
{
    let probe = Tensor::from_vec(x.to_vec(), &x.shape())?.with_requires_grad();
    let mut tape = Tape::new();
    let y = f(&mut tape, &probe)?;
    if !y.is_scalar() {
        return Err(Error::Autodiff(format!(
            "grad_check needs a scalar-valued function, got shape {:?}",
            y.shape()
        )));
    }
    y.ensure_finite("grad_check forward")?;
    tape.backward(&y)?;
    let grad = probe
        .grad()
        .ok_or_else(|| Error::Autodiff("grad_check: no gradient reached x".into()))?;
    Ok(grad.iter().map(|v| v.to_double()).collect())
}

/// Central-difference gradient of `f` at `x`, as f64 values. Each element's
/// divisor is the actually-representable span `(x+eps) - (x-eps)`.
pub fn numeric_gradient<S, F>(f: F, x: &Tensor<S>, eps: f64) -> Result<Vec<f64>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &Tensor<S>) -> Result<Tensor<S>>,
{
    if eps <= 0.0 {
        return Err(Error::Value("grad_check eps must be positive".into()));
    }
    let shape = x.shape();
    let base = x.to_vec();
    let point = Tensor::from_vec(base.clone(), &shape)?;
    let eval = |values: &[S]| -> Result<f64> {
        point.set_data(values)?;
        let mut quiet = Tape::paused();
        let out = f(&mut quiet, &point)?;
        if !out.is_scalar() {
            return Err(Error::Autodiff("grad_check function became non-scalar".into()));
        }
        let v = out.item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check probe".into()));
        }
        Ok(v.to_double())
    };
    let mut numeric = Vec::with_capacity(base.len());
    let mut work = base.clone();
    for i in 0..base.len() {
        let orig = base[i];
        let plus = S::from_double(orig.to_double() + eps);
        let minus = S::from_double(orig.to_double() - eps);
        work[i] = plus;
        let fp = eval(&work)?;
        work[i] = minus;
        let fm = eval(&work)?;
        work[i] = orig;
        numeric.push((fp - fm) / (plus.to_double() - minus.to_double()));
    }
    Ok(numeric)
}

/// Taped gradient w.r.t. an in-place parameter: `f` rebuilds the forward
/// graph on the given tape and reads `param` somewhere inside it.
pub fn analytic_param_gradient<S, F>(f: F, param: &Tensor<S>) -> Result<Vec<f64>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>) -> Result<Tensor<S>>,
{
    param.set_requires_grad(true);
    param.clear_grad();
    let mut tape = Tape::new();
    let y = f(&mut tape)?;
    if !y.is_scalar() {
        return Err(Error::Autodiff(format!(
            "grad_check needs a scalar-valued function, got shape {:?}",
            y.shape()
        )));
    }
    tape.backward(&y)?;
    let analytic = param
        .grad()
        .ok_or_else(|| Error::Autodiff("grad_check_param: no gradient reached param".into()))?;
    param.clear_grad();
    Ok(analytic.iter().map(|v| v.to_double()).collect())
}

/// Central-difference gradient w.r.t. an in-place parameter, restoring its
/// values afterwards.
pub fn numeric_param_gradient<S, F>(f: F, param: &Tensor<S>, eps: f64) -> Result<Vec<f64>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>) -> Result<Tensor<S>>,
{
    if eps <= 0.0 {
        return Err(Error::Value("grad_check eps must be positive".into()));
    }
    let base = param.to_vec();
    let eval = |values: &[S]| -> Result<f64> {
        param.set_data(values)?;
        let mut quiet = Tape::paused();
        let out = f(&mut quiet)?;
        let v = out.item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check probe".into()));
        }
        Ok(v.to_double())
    };
    let mut numeric = Vec::with_capacity(base.len());
    let mut work = base.clone();
    for i in 0..base.len() {
        let orig = base[i];
        let plus = S::from_double(orig.to_double() + eps);
        let minus = S::from_double(orig.to_double() - eps);
        work[i] = plus;
        let fp = eval(&work)?;
        work[i] = minus;
        let fm = eval(&work)?;
        work[i] = orig;
        numeric.push((fp - fm) / (plus.to_double() - minus.to_double()));
    }
    param.set_data(&base)?;
    Ok(numeric)
}

/// Finite-difference check of a scalar function of one in-place parameter.
pub fn grad_check_param<S, F>(f: F, param: &Tensor<S>, eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>) -> Result<Tensor<S>>,
{
    let analytic = analytic_param_gradient(&f, param)?;
    let numeric = numeric_param_gradient(&f, param, eps)?;
    Ok(max_rel_error(&analytic, &numeric))
}

/// Compare the taped gradient of a scalar-valued function against central
/// finite differences.
///
/// Returns the max over elements of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` where
/// `numeric = (f(x + eps*e) - f(x - eps*e)) / (2*eps)`. The divisor uses the
/// actually-representable perturbation so the estimate stays tight at low
/// precision.
pub fn grad_check<S, F>(f: F, x: &Tensor<S>, eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &Tensor<S>) -> Result<Tensor<S>>,
{
    let analytic = analytic_gradient(&f, x)?;
    let numeric = numeric_gradient(&f, x, eps)?;
    Ok(max_rel_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{mul, sum_all};

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_vec(vec![1.0f64, -0.5, 2.0], &[3]).unwrap();
        let err = grad_check(|t, x| sum_all(t, x), &x, 1e-4).unwrap();
        assert!(err <= 1e-9, "err = {err}");
    }

    #[test]
    fn quadratic_matches_finite_differences() {
        let x = Tensor::from_vec(vec![0.7f64, -1.3, 0.4, 1.9], &[4]).unwrap();
        let err = grad_check(
            |t, x| {
                let sq = mul(t, x, x)?;
                sum_all(t, &sq)
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(err <= 1e-6, "err = {err}");
    }

    #[test]
    fn relu_away_from_kink() {
        use crate::ops::relu;
        let x = Tensor::from_vec(vec![0.8f64, -0.9, 1.4, -2.0], &[4]).unwrap();
        let err = grad_check(
            |t, x| {
                let r = relu(t, x)?;
                sum_all(t, &r)
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(err <= 1e-6, "err = {err}");
    }

    #[test]
    fn rejects_non_scalar_functions() {
        let x = Tensor::from_vec(vec![1.0f64, 2.0], &[2]).unwrap();
        assert!(grad_check(|t, x| mul(t, x, x), &x, 1e-3).is_err());
        assert!(grad_check(|t, x| sum_all(t, x), &x, 0.0).is_err());
    }
}
