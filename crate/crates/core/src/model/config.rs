//! Architecture hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the reduced RGB and depth maps are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Sum,
    Concat,
}

/// Pyramid head topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PyramidPreset {
    /// Five branches: 1x1, then 3x3 at rates {2,4,8,16}, summed, plus a
    /// global-average-pooling context branch concatenated before the
    /// classifier.
    #[serde(rename = "paper")]
    Paper,
    /// Baseline topology: four 3x3 branches at rates {6,12,18,24}, summed,
    /// no global-average-pooling context.
    #[serde(rename = "deeplab-v2")]
    DeeplabV2,
}

/// One pyramid branch: kernel extent and dilation rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchSpec {
    pub kernel: usize,
    pub rate: usize,
}

impl PyramidPreset {
    pub fn branch_specs(self) -> Vec<BranchSpec> {
        match self {
            PyramidPreset::Paper => vec![
                BranchSpec { kernel: 1, rate: 1 },
                BranchSpec { kernel: 3, rate: 2 },
                BranchSpec { kernel: 3, rate: 4 },
                BranchSpec { kernel: 3, rate: 8 },
                BranchSpec { kernel: 3, rate: 16 },
            ],
            PyramidPreset::DeeplabV2 => vec![
                BranchSpec { kernel: 3, rate: 6 },
                BranchSpec { kernel: 3, rate: 12 },
                BranchSpec { kernel: 3, rate: 18 },
                BranchSpec { kernel: 3, rate: 24 },
            ],
        }
    }

    pub fn uses_gap(self) -> bool {
        matches!(self, PyramidPreset::Paper)
    }
}

/// Which encoder branches the model carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchMode {
    RgbOnly,
    DepthOnly,
    RgbD,
}

/// Per-stage (stride, dilation) pairs for the four residual stages.
pub type StagePlan = [(usize, usize); 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Ratio of input extent to top feature-map extent: 8, 16, or 32.
    pub output_stride: usize,
    /// Blocks per residual stage (paper scale `[3,4,23,3]`).
    pub block_depths: [usize; 4],
    /// Channel-width scaling; 1.0 is paper scale (2048 top channels).
    pub width_multiplier: f64,
    pub fusion_mode: FusionMode,
    /// Reduced width of each branch before fusion, at multiplier 1.
    pub fusion_channels: usize,
    pub pyramid: PyramidPreset,
    pub num_classes: usize,
    pub branches: BranchMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            output_stride: 8,
            block_depths: [2, 2, 2, 2],
            width_multiplier: 0.125,
            fusion_mode: FusionMode::Concat,
            fusion_channels: 512,
            pyramid: PyramidPreset::Paper,
            num_classes: 19,
            branches: BranchMode::RgbD,
        }
    }
}

impl ModelConfig {
    /// Small default that trains on CPU in minutes: depths `[2,2,2,2]`,
    /// width 1/8 (top channels 256, fusion width 64).
    pub fn toy(num_classes: usize) -> Self {
        ModelConfig { num_classes, ..Default::default() }
    }

    /// Paper-scale dimensions: ResNet-101 depths, full width.
    pub fn paper_scale(num_classes: usize) -> Self {
        ModelConfig {
            block_depths: [3, 4, 23, 3],
            width_multiplier: 1.0,
            num_classes,
            ..Default::default()
        }
    }

    pub fn with_branches(mut self, branches: BranchMode) -> Self {
        self.branches = branches;
        self
    }

    pub fn with_output_stride(mut self, os: usize) -> Self {
        self.output_stride = os;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if ![8, 16, 32].contains(&self.output_stride) {
            return Err(Error::Config(format!(
                "output_stride must be 8, 16, or 32, got {}",
                self.output_stride
            )));
        }
        if self.block_depths.iter().any(|&d| d == 0) {
            return Err(Error::Config("block_depths must all be >= 1".into()));
        }
        if !(self.width_multiplier > 0.0) {
            return Err(Error::Config("width_multiplier must be positive".into()));
        }
        if self.num_classes == 0 || self.num_classes > 255 {
            return Err(Error::Config(format!(
                "num_classes must be in 1..=255, got {}",
                self.num_classes
            )));
        }
        if self.fusion_channels == 0 {
            return Err(Error::Config("fusion_channels must be >= 1".into()));
        }
        Ok(())
    }

    /// Channel count after width scaling, at least 1.
    pub fn scaled(&self, base: usize) -> usize {
        ((base as f64 * self.width_multiplier).round() as usize).max(1)
    }

    pub fn stem_widths(&self) -> [usize; 3] {
        [self.scaled(64), self.scaled(64), self.scaled(128)]
    }

    /// Bottleneck mid widths per stage; output widths are 4x these.
    pub fn stage_planes(&self) -> [usize; 4] {
        [self.scaled(64), self.scaled(128), self.scaled(256), self.scaled(512)]
    }

    /// Top feature-map channel count (2048 at paper scale).
    pub fn top_channels(&self) -> usize {
        self.stage_planes()[3] * 4
    }

    pub fn fusion_width(&self) -> usize {
        self.scaled(self.fusion_channels)
    }

    /// Channel count of the fused map entering the pyramid.
    pub fn fused_channels(&self) -> usize {
        match (self.branches, self.fusion_mode) {
            (BranchMode::RgbD, FusionMode::Concat) => 2 * self.fusion_width(),
            _ => self.fusion_width(),
        }
    }

    /// (stride, dilation) per residual stage.
    ///
    /// Lower output strides swap stage-entry striding for dilation so the
    /// parameter shapes stay identical across settings.
    pub fn stage_plan(&self) -> StagePlan {
        match self.output_stride {
            32 => [(1, 1), (2, 1), (2, 1), (2, 1)],
            16 => [(1, 1), (2, 1), (2, 1), (1, 2)],
            8 => [(1, 1), (2, 1), (1, 2), (1, 4)],
            _ => unreachable!("validated output_stride"),
        }
    }

    /// Top feature extents for an input already divisible by the stride.
    pub fn feature_extents(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.output_stride, w / self.output_stride)
    }

    pub fn has_rgb(&self) -> bool {
        matches!(self.branches, BranchMode::RgbOnly | BranchMode::RgbD)
    }

    pub fn has_depth(&self) -> bool {
        matches!(self.branches, BranchMode::DepthOnly | BranchMode::RgbD)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_widths() {
        let cfg = ModelConfig::toy(6);
        assert_eq!(cfg.top_channels(), 256);
        assert_eq!(cfg.fusion_width(), 64);
        assert_eq!(cfg.stem_widths(), [8, 8, 16]);
    }

    #[test]
    fn paper_scale_top_channels() {
        let cfg = ModelConfig::paper_scale(19);
        assert_eq!(cfg.top_channels(), 2048);
        assert_eq!(cfg.fusion_width(), 512);
        assert_eq!(cfg.block_depths, [3, 4, 23, 3]);
    }

    #[test]
    fn stage_plans_per_output_stride() {
        let mut cfg = ModelConfig::toy(6);
        cfg.output_stride = 32;
        assert_eq!(cfg.stage_plan(), [(1, 1), (2, 1), (2, 1), (2, 1)]);
        cfg.output_stride = 16;
        assert_eq!(cfg.stage_plan(), [(1, 1), (2, 1), (2, 1), (1, 2)]);
        cfg.output_stride = 8;
        assert_eq!(cfg.stage_plan(), [(1, 1), (2, 1), (1, 2), (1, 4)]);
        cfg.output_stride = 9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn deeplab_v2_preset_topology() {
        let rates: Vec<usize> =
            PyramidPreset::DeeplabV2.branch_specs().iter().map(|b| b.rate).collect();
        assert_eq!(rates, vec![6, 12, 18, 24]);
        assert!(!PyramidPreset::DeeplabV2.uses_gap());
        assert!(PyramidPreset::Paper.uses_gap());
        assert_eq!(PyramidPreset::Paper.branch_specs().len(), 5);
        assert_eq!(PyramidPreset::Paper.branch_specs()[0].kernel, 1);
    }
}
