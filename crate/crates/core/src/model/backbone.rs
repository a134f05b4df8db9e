//! Dilated residual encoder.
//!
//! Stem of three 3x3 convs (stride 2 on the first) + BN + ReLU, a 3x3
//! stride-2 max pool, then four bottleneck stages. Output stride below 32 is
//! obtained by switching stage-entry strides to dilation, which leaves every
//! parameter shape unchanged.

use rand::Rng;

use crate::error::Result;
use crate::ops::{self, BnMode, PoolSpec};
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::layers::{Bottleneck, ConvBnRelu};
use super::visit::EntrySink;

pub struct Stage<S: Scalar> {
    blocks: Vec<Bottleneck<S>>,
}

impl<S: Scalar> Stage<S> {
    fn new(
        in_channels: usize,
        planes: usize,
        depth: usize,
        stride: usize,
        rate: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(depth);
        for i in 0..depth {
            let (cin, s) = if i == 0 { (in_channels, stride) } else { (planes * 4, 1) };
            blocks.push(Bottleneck::new(cin, planes, s, rate, rng)?);
        }
        Ok(Stage { blocks })
    }

    fn forward(&self, tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut y = x.clone();
        for block in &self.blocks {
            y = block.forward(tape, &y)?;
        }
        Ok(y)
    }

    fn visit(&self, prefix: &str, sink: &mut EntrySink<'_, S>) {
        for (i, block) in self.blocks.iter().enumerate() {
            block.visit(&format!("{prefix}.{i}"), sink);
        }
    }

    fn set_bn_mode(&mut self, mode: BnMode) {
        for block in &mut self.blocks {
            block.set_bn_mode(mode);
        }
    }
}

pub struct Backbone<S: Scalar> {
    stem: Vec<ConvBnRelu<S>>,
    pool: PoolSpec,
    stages: Vec<Stage<S>>,
}

impl<S: Scalar> Backbone<S> {
    pub fn new(config: &ModelConfig, in_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        let [s1, s2, s3] = config.stem_widths();
        let stem = vec![
            ConvBnRelu::new(in_channels, s1, 3, 2, 1, rng)?,
            ConvBnRelu::new(s1, s2, 3, 1, 1, rng)?,
            ConvBnRelu::new(s2, s3, 3, 1, 1, rng)?,
        ];
        let planes = config.stage_planes();
        let plan = config.stage_plan();
        let mut stages = Vec::with_capacity(4);
        let mut cin = s3;
        for i in 0..4 {
            let (stride, rate) = plan[i];
            stages.push(Stage::new(cin, planes[i], config.block_depths[i], stride, rate, rng)?);
            cin = planes[i] * 4;
        }
        Ok(Backbone { stem, pool: PoolSpec::new(3, 2, 1), stages })
    }

    /// Top feature maps at the configured output stride.
    pub fn forward(&self, tape: &mut Tape<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut y = x.clone();
        for unit in &self.stem {
            y = unit.forward(tape, &y)?;
        }
        y = ops::max_pool2d(tape, &y, &self.pool)?;
        for stage in &self.stages {
            y = stage.forward(tape, &y)?;
        }
        Ok(y)
    }

    /// Stem entries are `stem.conv1..3` / `stem.bn1..3`; stages are
    /// `res2..res5` with zero-based block indices.
    pub fn visit(&self, prefix: &str, sink: &mut EntrySink<'_, S>) {
        for (i, unit) in self.stem.iter().enumerate() {
            unit.conv.visit(&format!("{prefix}.stem.conv{}", i + 1), sink);
            super::layers::visit_bn(&unit.bn, &format!("{prefix}.stem.bn{}", i + 1), sink);
        }
        for (i, stage) in self.stages.iter().enumerate() {
            stage.visit(&format!("{prefix}.res{}", i + 2), sink);
        }
    }

    pub fn set_bn_mode(&mut self, mode: BnMode) {
        for unit in &mut self.stem {
            unit.set_bn_mode(mode);
        }
        for stage in &mut self.stages {
            stage.set_bn_mode(mode);
        }
    }

    /// The first stem convolution's weight tensor (`[C, in, 3, 3]`).
    pub fn stem_conv1_weight(&self) -> &Tensor<S> {
        &self.stem[0].conv.weight
    }
}
