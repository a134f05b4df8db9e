//! Dense rank-1..4 tensors in canonical (batch, channel, height, width) order.
//!
//! A `Tensor` is a cheap-to-clone handle (`Rc<RefCell<..>>`) over row-major
//! storage plus an optional gradient buffer and a reference to the tape node
//! that produced it. Tensors are immutable after forward creation except for
//! their gradient buffer and, for normalization statistics, explicit
//! `set_data` updates between steps.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::NodeRef;

pub const MAX_RANK: usize = 4;

pub(crate) struct Inner<S: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub grad: Option<Vec<S>>,
    pub requires_grad: bool,
    pub node: Option<NodeRef>,
}

/// Shared handle to a dense tensor.
pub struct Tensor<S: Scalar = f32> {
    inner: Rc<RefCell<Inner<S>>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

fn check_rank(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Shape(format!(
            "rank must be 1..={MAX_RANK}, got shape {shape:?}"
        )));
    }
    Ok(())
}

fn check_positive(shape: &[usize]) -> Result<()> {
    check_rank(shape)?;
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
    }
    Ok(())
}

pub fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                grad: None,
                requires_grad: false,
                node: None,
            })),
        }
    }

    /// Tensor from explicit row-major values. Zero extents are permitted so
    /// degenerate slices (e.g. a 0-channel map) can flow through concat.
    pub fn from_vec(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        check_rank(shape)?;
        let n = numel_of(shape);
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} wants {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self::from_parts(shape.to_vec(), data))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_positive(shape)?;
        Ok(Self::from_parts(shape.to_vec(), vec![S::zero(); numel_of(shape)]))
    }

    pub fn full(shape: &[usize], value: S) -> Result<Self> {
        check_positive(shape)?;
        Ok(Self::from_parts(shape.to_vec(), vec![value; numel_of(shape)]))
    }

    /// Uniform values in `[lo, hi)`. Bitwise reproducible for a fixed rng state.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Result<Self> {
        check_positive(shape)?;
        if !(lo < hi) {
            return Err(Error::Value(format!("uniform bounds [{lo}, {hi}) are empty")));
        }
        let data = (0..numel_of(shape))
            .map(|_| S::from_double(rng.random_range(lo..hi)))
            .collect();
        Ok(Self::from_parts(shape.to_vec(), data))
    }

    /// He-uniform init for convolution weights: bound `sqrt(6 / fan_in)`.
    pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Result<Self> {
        if fan_in == 0 {
            return Err(Error::Value("he_uniform needs fan_in >= 1".into()));
        }
        let bound = (6.0 / fan_in as f64).sqrt();
        Self::uniform(shape, -bound, bound, rng)
    }

    pub fn scalar(value: S) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    /// The (batch, channel, height, width) extents of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        let inner = self.inner.borrow();
        match inner.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::Shape(format!("expected rank 4, got {:?}", inner.shape))),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn item(&self) -> Result<S> {
        let inner = self.inner.borrow();
        if inner.data.len() != 1 {
            return Err(Error::Shape(format!(
                "item() on non-scalar tensor of shape {:?}",
                inner.shape
            )));
        }
        Ok(inner.data[0])
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.inner.borrow().data.clone()
    }

    /// Overwrite the stored values in place (shape must match).
    pub fn set_data(&self, values: &[S]) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if values.len() != inner.data.len() {
            return Err(Error::Shape(format!(
                "set_data length {} != tensor numel {}",
                values.len(),
                inner.data.len()
            )));
        }
        inner.data.copy_from_slice(values);
        Ok(())
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn set_requires_grad(&self, on: bool) {
        self.inner.borrow_mut().requires_grad = on;
    }

    pub fn with_requires_grad(self) -> Self {
        self.set_requires_grad(true);
        self
    }

    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.borrow().grad.clone()
    }

    pub fn clear_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Add `delta` into the gradient buffer, allocating zeros first if absent.
    pub(crate) fn accumulate_grad(&self, delta: &[S]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(delta.len(), inner.data.len());
        match inner.grad.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi = *gi + *di;
                }
            }
            None => inner.grad = Some(delta.to_vec()),
        }
    }

    pub(crate) fn fill_grad_zeros_if_absent(&self) {
        let mut inner = self.inner.borrow_mut();
        if inner.grad.is_none() {
            let n = inner.data.len();
            inner.grad = Some(vec![S::zero(); n]);
        }
    }

    pub(crate) fn node_ref(&self) -> Option<NodeRef> {
        self.inner.borrow().node
    }

    pub(crate) fn set_node(&self, node: NodeRef) {
        self.inner.borrow_mut().node = Some(node);
    }

    pub(crate) fn borrow(&self) -> Ref<'_, Inner<S>> {
        self.inner.borrow()
    }

    /// Two handles to the same storage?
    pub fn same_storage(&self, other: &Tensor<S>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Detached copy of the values under a different element type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        let inner = self.inner.borrow();
        let data = inner.data.iter().map(|&v| T::from_double(v.to_double())).collect();
        Tensor::from_parts(inner.shape.clone(), data)
    }

    /// Fail if any stored value is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        let inner = self.inner.borrow();
        if inner.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context.to_string()));
        }
        Ok(())
    }

    /// Reinterpret the same values under a new shape of equal element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor<S>> {
        check_rank(shape)?;
        let inner = self.inner.borrow();
        if numel_of(shape) != inner.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} to {shape:?}",
                inner.shape
            )));
        }
        Ok(Tensor::from_parts(shape.to_vec(), inner.data.clone()))
    }
}
