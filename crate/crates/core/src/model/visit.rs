//! Parameter enumeration: stable dotted paths for every tensor in a model.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which top-level component a parameter belongs to; the trainer freezes and
/// schedules by group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerGroup {
    RgbBackbone,
    DepthBackbone,
    Fusion,
    Head,
}

impl LayerGroup {
    pub fn name(self) -> &'static str {
        match self {
            LayerGroup::RgbBackbone => "rgb",
            LayerGroup::DepthBackbone => "depth",
            LayerGroup::Fusion => "fuse",
            LayerGroup::Head => "head",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnScale,
    BnShift,
    BnMean,
    BnVar,
}

/// One named tensor of a model.
pub struct Entry<S: Scalar> {
    pub path: String,
    pub tensor: Tensor<S>,
    pub kind: ParamKind,
    pub group: LayerGroup,
}

impl<S: Scalar> Entry<S> {
    /// Updated by the optimizer (running statistics are not).
    pub fn learnable(&self) -> bool {
        !matches!(self.kind, ParamKind::BnMean | ParamKind::BnVar)
    }

    /// Weight decay applies to convolution weights only.
    pub fn decayable(&self) -> bool {
        matches!(self.kind, ParamKind::ConvWeight)
    }
}

/// Collector threaded through the layer tree.
pub struct EntrySink<'a, S: Scalar> {
    group: LayerGroup,
    out: &'a mut Vec<Entry<S>>,
}

impl<'a, S: Scalar> EntrySink<'a, S> {
    pub fn new(group: LayerGroup, out: &'a mut Vec<Entry<S>>) -> Self {
        EntrySink { group, out }
    }

    pub fn push(&mut self, path: String, tensor: &Tensor<S>, kind: ParamKind) {
        self.out.push(Entry { path, tensor: tensor.clone(), kind, group: self.group });
    }
}
