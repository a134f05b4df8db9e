//! Reverse-mode automatic differentiation over a dynamically recorded tape.
//!
//! Every tracked operation pushes one node holding handles to its inputs,
//! its output, and whatever activations its backward rule needs. The tape is
//! rebuilt on every forward pass (define-by-run); `clear` bumps a generation
//! counter so node references held by tensors from earlier passes become
//! stale instead of silently aliasing.

use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::ops::conv::ConvGeom;

use crate::ops::resize::PadSpec;
use crate::ops::{conv, loss, norm, pool, resize};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Reference to a node on a specific tape generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRef {
    pub(crate) generation: u64,
    pub(crate) index: usize,
}

pub(crate) enum Op<S: Scalar> {
    /// Tracked input (parameter) first used this generation.
    Leaf { t: Tensor<S> },
    Add { a: Tensor<S>, b: Tensor<S> },
    Mul { a: Tensor<S>, b: Tensor<S> },
    Scale { x: Tensor<S>, c: S },
    SumAll { x: Tensor<S> },
    ConcatChannels { a: Tensor<S>, b: Tensor<S> },
    Relu { x: Tensor<S> },
    Conv2d { x: Tensor<S>, w: Tensor<S>, bias: Option<Tensor<S>>, geom: ConvGeom },
    BatchNorm {
        x: Tensor<S>,
        gamma: Tensor<S>,
        beta: Tensor<S>,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        train: bool,
    },
    MaxPool { x: Tensor<S>, argmax: Vec<u32> },
    GlobalAvgPool { x: Tensor<S> },
    BilinearUp { x: Tensor<S> },
    ReflectPad { x: Tensor<S>, pad: PadSpec },
    CropSpatial { x: Tensor<S>, top: usize, left: usize },
    CrossEntropy { logits: Tensor<S>, probs: Vec<S>, labels: Labels, valid: usize },
}

pub(crate) struct Node<S: Scalar> {
    pub op: Op<S>,
    pub out: Tensor<S>,
}

/// Recorded computation history for one forward pass.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    generation: u64,
    recording: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), generation: 0, recording: true }
    }

    /// A tape that records nothing; forward results are unaffected.
    pub fn paused() -> Self {
        Tape { nodes: Vec::new(), generation: 0, recording: false }
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop all nodes and invalidate every node reference handed out so far.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.generation += 1;
    }

    fn is_current(&self, t: &Tensor<S>) -> bool {
        t.node_ref().is_some_and(|n| n.generation == self.generation)
    }

    /// Is this tensor part of the current recording (or a gradient-bearing leaf)?
    pub fn is_tracked(&self, t: &Tensor<S>) -> bool {
        t.requires_grad() || self.is_current(t)
    }

    pub(crate) fn should_record(&self, inputs: &[&Tensor<S>]) -> bool {
        self.recording && inputs.iter().any(|t| self.is_tracked(t))
    }

    /// Push a node, registering gradient-bearing leaves on first use.
    pub(crate) fn record(&mut self, inputs: &[&Tensor<S>], op: Op<S>, out: &Tensor<S>) {
        for t in inputs {
            if t.requires_grad() && !self.is_current(t) {
                let index = self.nodes.len();
                self.nodes.push(Node { op: Op::Leaf { t: (*t).clone() }, out: (*t).clone() });
                t.set_node(NodeRef { generation: self.generation, index });
            }
        }
        let index = self.nodes.len();
        self.nodes.push(Node { op, out: out.clone() });
        out.set_node(NodeRef { generation: self.generation, index });
    }

    /// Propagate `d(loss)/d(tensor)` into every tracked tensor's grad buffer.
    ///
    /// The seed gradient is 1; gradients accumulate (`+=`) across fan-out.
    /// Leaves that end up off the loss path receive an explicit zero grad.
    pub fn backward(&mut self, loss: &Tensor<S>) -> Result<()> {
        if !loss.is_scalar() {
            return Err(Error::Autodiff(format!(
                "loss must be scalar, got shape {:?}",
                loss.shape()
            )));
        }
        let node = loss.node_ref().ok_or_else(|| {
            Error::Autodiff("loss is not tracked on any tape".into())
        })?;
        if node.generation != self.generation {
            return Err(Error::Autodiff(
                "loss belongs to a cleared tape generation".into(),
            ));
        }
        loss.accumulate_grad(&[S::one()]);
        for index in (0..=node.index).rev() {
            self.backward_node(index)?;
        }
        for n in &self.nodes[..=node.index] {
            if let Op::Leaf { t } = &n.op {
                t.fill_grad_zeros_if_absent();
            }
        }
        Ok(())
    }

    fn backward_node(&self, index: usize) -> Result<()> {
        let node = &self.nodes[index];
        let dy = {
            let inner = node.out.borrow();
            match &inner.grad {
                Some(g) => g.clone(),
                None => return Ok(()),
            }
        };

        match &node.op {
            Op::Leaf { .. } => {}

            Op::Add { a, b } => {
                if self.is_tracked(a) {
                    a.accumulate_grad(&dy);
                }
                if self.is_tracked(b) {
                    b.accumulate_grad(&dy);
                }
            }

            Op::Mul { a, b } => {
                if self.is_tracked(a) {
                    let da: Vec<S> = {
                        let bi = b.borrow();
                        dy.iter().zip(&bi.data).map(|(&g, &v)| g * v).collect()
                    };
                    a.accumulate_grad(&da);
                }
                if self.is_tracked(b) {
                    let db: Vec<S> = {
                        let ai = a.borrow();
                        dy.iter().zip(&ai.data).map(|(&g, &v)| g * v).collect()
                    };
                    b.accumulate_grad(&db);
                }
            }

            Op::Scale { x, c } => {
                if self.is_tracked(x) {
                    let dx: Vec<S> = dy.iter().map(|&g| g * *c).collect();
                    x.accumulate_grad(&dx);
                }
            }

            Op::SumAll { x } => {
                if self.is_tracked(x) {
                    let dx = vec![dy[0]; x.numel()];
                    x.accumulate_grad(&dx);
                }
            }

            Op::ConcatChannels { a, b } => {
                let (da, db) = {
                    let (n, _, h, w) = node.out.dims4()?;
                    let ca = a.dims4()?.1;
                    let cb = b.dims4()?.1;
                    split_channels(&dy, n, ca, cb, h, w)
                };
                if self.is_tracked(a) {
                    a.accumulate_grad(&da);
                }
                if self.is_tracked(b) {
                    b.accumulate_grad(&db);
                }
            }

            Op::Relu { x } => {
                if self.is_tracked(x) {
                    let dx: Vec<S> = {
                        let xi = x.borrow();
                        dy.iter()
                            .zip(&xi.data)
                            .map(|(&g, &v)| if v > S::zero() { g } else { S::zero() })
                            .collect()
                    };
                    x.accumulate_grad(&dx);
                }
            }

            Op::Conv2d { x, w, bias, geom } => {
                if self.is_tracked(x) {
                    let dx = {
                        let wi = w.borrow();
                        conv::backward_input(&dy, &wi.data, geom)
                    };
                    x.accumulate_grad(&dx);
                }
                if self.is_tracked(w) {
                    let dw = {
                        let xi = x.borrow();
                        conv::backward_weights(&dy, &xi.data, geom)
                    };
                    w.accumulate_grad(&dw);
                }
                if let Some(b) = bias {
                    if self.is_tracked(b) {
                        let db = conv::backward_bias(&dy, geom);
                        b.accumulate_grad(&db);
                    }
                }
            }

            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let (n, c, h, w) = x.dims4()?;
                let gamma_data = gamma.to_vec();
                let (dx, dgamma, dbeta) =
                    norm::backward(&dy, xhat, inv_std, &gamma_data, *train, n, c, h, w);
                if self.is_tracked(x) {
                    x.accumulate_grad(&dx);
                }
                if self.is_tracked(gamma) {
                    gamma.accumulate_grad(&dgamma);
                }
                if self.is_tracked(beta) {
                    beta.accumulate_grad(&dbeta);
                }
            }

            Op::MaxPool { x, argmax } => {
                if self.is_tracked(x) {
                    let dx = pool::max_pool_backward(&dy, argmax, x.numel());
                    x.accumulate_grad(&dx);
                }
            }

            Op::GlobalAvgPool { x } => {
                if self.is_tracked(x) {
                    let (n, c, h, w) = x.dims4()?;
                    let dx = pool::global_avg_pool_backward(&dy, n, c, h, w);
                    x.accumulate_grad(&dx);
                }
            }

            Op::BilinearUp { x } => {
                if self.is_tracked(x) {
                    let (n, c, h, w) = x.dims4()?;
                    let (_, _, oh, ow) = node.out.dims4()?;
                    let dx = resize::bilinear_backward(&dy, n, c, h, w, oh, ow);
                    x.accumulate_grad(&dx);
                }
            }

            Op::ReflectPad { x, pad } => {
                if self.is_tracked(x) {
                    let (n, c, h, w) = x.dims4()?;
                    let dx = resize::reflect_pad_backward(&dy, n, c, h, w, pad);
                    x.accumulate_grad(&dx);
                }
            }

            Op::CropSpatial { x, top, left } => {
                if self.is_tracked(x) {
                    let (n, c, h, w) = x.dims4()?;
                    let (_, _, oh, ow) = node.out.dims4()?;
                    let dx = resize::crop_backward(&dy, n, c, h, w, *top, *left, oh, ow);
                    x.accumulate_grad(&dx);
                }
            }

            Op::CrossEntropy { logits, probs, labels, valid } => {
                if self.is_tracked(logits) {
                    let (n, k, h, w) = logits.dims4()?;
                    let dl = loss::backward(dy[0], probs, labels, *valid, n, k, h, w);
                    logits.accumulate_grad(&dl);
                }
            }
        }
        Ok(())
    }
}

fn split_channels<S: Scalar>(
    dy: &[S],
    n: usize,
    ca: usize,
    cb: usize,
    h: usize,
    w: usize,
) -> (Vec<S>, Vec<S>) {
    let plane = h * w;
    let mut da = vec![S::zero(); n * ca * plane];
    let mut db = vec![S::zero(); n * cb * plane];
    for ni in 0..n {
        let src = &dy[ni * (ca + cb) * plane..][..(ca + cb) * plane];
        da[ni * ca * plane..][..ca * plane].copy_from_slice(&src[..ca * plane]);
        db[ni * cb * plane..][..cb * plane].copy_from_slice(&src[ca * plane..]);
    }
    (da, db)
}
