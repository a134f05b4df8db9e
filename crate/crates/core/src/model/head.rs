//! Fusion block and pyramid pooling head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{self, BnMode, ConvSpec};
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::config::{BranchSpec, FusionMode, ModelConfig};
use super::layers::{ConvBnRelu, ConvLayer};
use super::visit::EntrySink;

/// 1x1 reduction of each branch's top features, then sum or concat.
pub struct FusionBlock<S: Scalar> {
    pub mode: FusionMode,
    pub reduce_rgb: Option<ConvBnRelu<S>>,
    pub reduce_depth: Option<ConvBnRelu<S>>,
}

impl<S: Scalar> FusionBlock<S> {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let top = config.top_channels();
        let width = config.fusion_width();
        let reduce_rgb = if config.has_rgb() {
            Some(ConvBnRelu::new(top, width, 1, 1, 1, rng)?)
        } else {
            None
        };
        let reduce_depth = if config.has_depth() {
            Some(ConvBnRelu::new(top, width, 1, 1, 1, rng)?)
        } else {
            None
        };
        Ok(FusionBlock { mode: config.fusion_mode, reduce_rgb, reduce_depth })
    }

    /// Single-branch models pass the reduced map straight through.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        rgb_top: Option<&Tensor<S>>,
        depth_top: Option<&Tensor<S>>,
    ) -> Result<Tensor<S>> {
        let rgb = match (&self.reduce_rgb, rgb_top) {
            (Some(reduce), Some(top)) => Some(reduce.forward(tape, top)?),
            (None, None) => None,
            _ => return Err(Error::Value("fusion block: rgb features misconfigured".into())),
        };
        let depth = match (&self.reduce_depth, depth_top) {
            (Some(reduce), Some(top)) => Some(reduce.forward(tape, top)?),
            (None, None) => None,
            _ => return Err(Error::Value("fusion block: depth features misconfigured".into())),
        };
        match (rgb, depth) {
            (Some(r), Some(d)) => match self.mode {
                FusionMode::Sum => ops::add(tape, &r, &d),
                FusionMode::Concat => ops::concat_channels(tape, &r, &d),
            },
            (Some(r), None) => Ok(r),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::Value("fusion block has no inputs".into())),
        }
    }

    pub fn visit(&self, prefix: &str, sink: &mut EntrySink<'_, S>) {
        if let Some(r) = &self.reduce_rgb {
            r.visit(&format!("{prefix}.rgb"), sink);
        }
        if let Some(d) = &self.reduce_depth {
            d.visit(&format!("{prefix}.depth"), sink);
        }
    }

    pub fn set_bn_mode(&mut self, mode: BnMode) {
        if let Some(r) = &mut self.reduce_rgb {
            r.set_bn_mode(mode);
        }
        if let Some(d) = &mut self.reduce_depth {
            d.set_bn_mode(mode);
        }
    }
}

/// Parallel conv+BN+ReLU branches at multiple dilation rates, summed, with an
/// optional global-average-pooling context branch concatenated before the
/// 1x1 classifier, and a final bilinear upsample by the output stride.
pub struct PyramidHead<S: Scalar> {
    branch_specs: Vec<BranchSpec>,
    branches: Vec<ConvBnRelu<S>>,
    gap: Option<ConvBnRelu<S>>,
    pub classifier: ConvLayer<S>,
}

impl<S: Scalar> PyramidHead<S> {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let fused = config.fused_channels();
        let width = config.fusion_width();
        let specs = config.pyramid.branch_specs();
        let mut branches = Vec::with_capacity(specs.len());
        for spec in &specs {
            branches.push(ConvBnRelu::new(fused, width, spec.kernel, 1, spec.rate, rng)?);
        }
        let gap = if config.pyramid.uses_gap() {
            // the context branch normalizes a 1x1 map: batch statistics are
            // degenerate there (zero variance, zero gradient), so its BN is
            // permanently frozen and acts as a learnable affine map
            let mut unit = ConvBnRelu::new(fused, width, 1, 1, 1, rng)?;
            unit.bn.mode = BnMode::Frozen;
            Some(unit)
        } else {
            None
        };
        let classifier_in = if gap.is_some() { 2 * width } else { width };
        let classifier = ConvLayer::new(
            ConvSpec::new(classifier_in, config.num_classes, 1).with_bias(true),
            rng,
        )?;
        Ok(PyramidHead { branch_specs: specs, branches, gap, classifier })
    }

    /// Logits at `(h*output_stride, w*output_stride)`.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        fused: &Tensor<S>,
        output_stride: usize,
    ) -> Result<Tensor<S>> {
        let (_, _, h, w) = fused.dims4()?;
        let mut sum: Option<Tensor<S>> = None;
        for branch in &self.branches {
            let y = branch.forward(tape, fused)?;
            sum = Some(match sum {
                Some(acc) => ops::add(tape, &acc, &y)?,
                None => y,
            });
        }
        let mut features = sum.expect("pyramid has at least one branch");
        if let Some(gap) = &self.gap {
            let pooled = ops::global_avg_pool(tape, fused)?;
            let ctx = gap.forward(tape, &pooled)?;
            let ctx = ops::bilinear_upsample(tape, &ctx, h, w)?;
            features = ops::concat_channels(tape, &features, &ctx)?;
        }
        let logits = self.classifier.forward(tape, &features)?;
        ops::bilinear_upsample(tape, &logits, h * output_stride, w * output_stride)
    }

    pub fn visit(&self, prefix: &str, sink: &mut EntrySink<'_, S>) {
        for (i, branch) in self.branches.iter().enumerate() {
            branch.visit(&format!("{prefix}.branch{i}"), sink);
        }
        if let Some(gap) = &self.gap {
            gap.visit(&format!("{prefix}.gap"), sink);
        }
        self.classifier.visit(&format!("{prefix}.classifier"), sink);
    }

    pub fn set_bn_mode(&mut self, mode: BnMode) {
        for branch in &mut self.branches {
            branch.set_bn_mode(mode);
        }
        if let Some(gap) = &mut self.gap {
            // stays frozen regardless of the requested mode
            gap.set_bn_mode(BnMode::Frozen);
        }
    }

    /// (kernel, rate) of each parallel branch, for topology assertions.
    pub fn branch_specs(&self) -> &[BranchSpec] {
        &self.branch_specs
    }

    pub fn has_gap(&self) -> bool {
        self.gap.is_some()
    }
}
