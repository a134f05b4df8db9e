//! Building blocks: conv layers, conv+BN+ReLU units, bottleneck blocks.

use rand::Rng;

use crate::error::Result;
use crate::ops::{self, BatchNormState, BnMode, ConvSpec};
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::visit::{EntrySink, ParamKind};

/// Convolution with He-uniform weights and an optional zero-initialized bias.
pub struct ConvLayer<S: Scalar> {
    pub spec: ConvSpec,
    pub weight: Tensor<S>,
    pub bias: Option<Tensor<S>>,
}

impl<S: Scalar> ConvLayer<S> {
    pub fn new(spec: ConvSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let fan_in = spec.in_channels * spec.kernel.0 * spec.kernel.1;
        let weight = Tensor::he_uniform(&spec.weight_shape(), fan_in, rng)?.with_requires_grad();
        let bias = if spec.has_bias {
            Some(Tensor::zeros(&[spec.out_channels])?.with_requires_grad())
        } else {
            None
        };
        Ok(ConvLayer { spec, weight, bias })
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        ops::conv2d(tape, x, &self.weight, self.bias.as_ref(), &self.spec)
    }

    pub fn visit(&self, prefix: &str, sink: &mut EntrySink<'_, S>) {
        sink.push(format!("{prefix}.weight"), &self.weight, ParamKind::ConvWeight);
        if let Some(b) = &self.bias {
            sink.push(format!("{prefix}.bias"), b, ParamKind::ConvBias);
        }
    }
}

pub(crate) fn visit_bn<S: Scalar>(
    bn: &BatchNormState<S>,
    prefix: &str,
    sink: &mut EntrySink<'_, S>,
) {
    sink.push(format!("{prefix}.gamma"), &bn.gamma, ParamKind::BnScale);
    sink.push(format!("{prefix}.beta"), &bn.beta, ParamKind::BnShift);
    sink.push(format!("{prefix}.running_mean"), &bn.running_mean, ParamKind::BnMean);
    sink.push(format!("{prefix}.running_var"), &bn.running_var, ParamKind::BnVar);
}

/// conv + Batch Normalization + ReLU.
pub struct ConvBnRelu<S: Scalar> {
    pub conv: ConvLayer<S>,
    pub bn: BatchNormState<S>,
}

impl<S: Scalar> ConvBnRelu<S> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rate: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let spec = ConvSpec::new(in_channels, out_channels, kernel)
            .with_stride(stride)
            .with_rate(rate)
            .with_same_padding();
        Ok(ConvBnRelu { conv: ConvLayer::new(spec, rng)?, bn: BatchNormState::new(out_channels)? })
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.conv.forward(tape, x)?;
        let y = ops::batch_norm(tape, &y, &self.bn)?;
        ops::relu(tape, &y)
    }

    pub fn visit(&self, prefix: &str, sink: &mut EntrySink<'_, S>) {
        self.conv.visit(&format!("{prefix}.conv"), sink);
        visit_bn(&self.bn, &format!("{prefix}.bn"), sink);
    }

    pub fn set_bn_mode(&mut self, mode: BnMode) {
        self.bn.mode = mode;
    }
}

/// Bottleneck residual block: 1x1 reduce, 3x3 (dilated, carries the stage
/// stride), 1x1 expand, with a projection shortcut on shape change.
pub struct Bottleneck<S: Scalar> {
    conv1: ConvLayer<S>,
    bn1: BatchNormState<S>,
    conv2: ConvLayer<S>,
    bn2: BatchNormState<S>,
    conv3: ConvLayer<S>,
    bn3: BatchNormState<S>,
    proj: Option<(ConvLayer<S>, BatchNormState<S>)>,
}

impl<S: Scalar> Bottleneck<S> {
    pub fn new(
        in_channels: usize,
        planes: usize,
        stride: usize,
        rate: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let out_channels = planes * 4;
        let conv1 = ConvLayer::new(ConvSpec::new(in_channels, planes, 1), rng)?;
        let conv2 = ConvLayer::new(
            ConvSpec::new(planes, planes, 3).with_stride(stride).with_rate(rate).with_same_padding(),
            rng,
        )?;
        let conv3 = ConvLayer::new(ConvSpec::new(planes, out_channels, 1), rng)?;
        let proj = if stride != 1 || in_channels != out_channels {
            let p = ConvLayer::new(
                ConvSpec::new(in_channels, out_channels, 1).with_stride(stride),
                rng,
            )?;
            Some((p, BatchNormState::new(out_channels)?))
        } else {
            None
        };
        Ok(Bottleneck {
            conv1,
            bn1: BatchNormState::new(planes)?,
            conv2,
            bn2: BatchNormState::new(planes)?,
            conv3,
            bn3: BatchNormState::new(out_channels)?,
            proj,
        })
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.conv1.forward(tape, x)?;
        let y = ops::batch_norm(tape, &y, &self.bn1)?;
        let y = ops::relu(tape, &y)?;
        let y = self.conv2.forward(tape, &y)?;
        let y = ops::batch_norm(tape, &y, &self.bn2)?;
        let y = ops::relu(tape, &y)?;
        let y = self.conv3.forward(tape, &y)?;
        let y = ops::batch_norm(tape, &y, &self.bn3)?;
        let shortcut = match &self.proj {
            Some((conv, bn)) => {
                let s = conv.forward(tape, x)?;
                ops::batch_norm(tape, &s, bn)?
            }
            None => x.clone(),
        };
        let y = ops::add(tape, &y, &shortcut)?;
        ops::relu(tape, &y)
    }

    pub fn visit(&self, prefix: &str, sink: &mut EntrySink<'_, S>) {
        self.conv1.visit(&format!("{prefix}.conv1"), sink);
        visit_bn(&self.bn1, &format!("{prefix}.bn1"), sink);
        self.conv2.visit(&format!("{prefix}.conv2"), sink);
        visit_bn(&self.bn2, &format!("{prefix}.bn2"), sink);
        self.conv3.visit(&format!("{prefix}.conv3"), sink);
        visit_bn(&self.bn3, &format!("{prefix}.bn3"), sink);
        if let Some((conv, bn)) = &self.proj {
            conv.visit(&format!("{prefix}.proj.conv"), sink);
            visit_bn(bn, &format!("{prefix}.proj.bn"), sink);
        }
    }

    pub fn set_bn_mode(&mut self, mode: BnMode) {
        self.bn1.mode = mode;
        self.bn2.mode = mode;
        self.bn3.mode = mode;
        if let Some((_, bn)) = &mut self.proj {
            bn.mode = mode;
        }
    }
}
