//! The full segmentation network: dual dilated-residual branches, fusion
//! block, pyramid pooling head, and checkpoint round-tripping.

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod head;
pub mod layers;
pub mod visit;

pub use config::{BranchMode, BranchSpec, FusionMode, ModelConfig, PyramidPreset};
pub use visit::{Entry, LayerGroup, ParamKind};

use crate::error::{Error, Result};
use crate::ops::{self, BnMode, PadSpec};
use crate::rng;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

use backbone::Backbone;
use head::{FusionBlock, PyramidHead};
use visit::EntrySink;

/// Intermediate maps surfaced for shape and invariant checks.
pub struct ForwardArtifacts<S: Scalar> {
    pub logits: Tensor<S>,
    pub rgb_features: Option<Tensor<S>>,
    pub depth_features: Option<Tensor<S>>,
    pub fused: Tensor<S>,
}

pub struct Model<S: Scalar = f32> {
    pub config: ModelConfig,
    rgb: Option<Backbone<S>>,
    depth: Option<Backbone<S>>,
    fuse: FusionBlock<S>,
    head: PyramidHead<S>,
}

impl<S: Scalar> Model<S> {
    /// Build with He-uniform conv weights drawn from the root seed's `init`
    /// stream; BN scales start at one, shifts and biases at zero.
    pub fn new(config: ModelConfig, root_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(root_seed, "init", 0);
        let rgb = if config.has_rgb() {
            Some(Backbone::new(&config, 3, &mut rng)?)
        } else {
            None
        };
        let depth = if config.has_depth() {
            Some(Backbone::new(&config, 1, &mut rng)?)
        } else {
            None
        };
        let fuse = FusionBlock::new(&config, &mut rng)?;
        let head = PyramidHead::new(&config, &mut rng)?;
        Ok(Model { config, rgb, depth, fuse, head })
    }

    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        rgb: Option<&Tensor<S>>,
        depth: Option<&Tensor<S>>,
    ) -> Result<Tensor<S>> {
        Ok(self.forward_detailed(tape, rgb, depth)?.logits)
    }

    /// Full forward pass. Inputs whose extents are not divisible by the
    /// output stride are reflection-padded up to the next multiple and the
    /// logits cropped back.
    pub fn forward_detailed(
        &self,
        tape: &mut Tape<S>,
        rgb: Option<&Tensor<S>>,
        depth: Option<&Tensor<S>>,
    ) -> Result<ForwardArtifacts<S>> {
        if self.config.has_rgb() != rgb.is_some() {
            return Err(Error::Value(if rgb.is_some() {
                "model has no RGB branch but an RGB input was supplied".into()
            } else {
                "model requires an RGB input".into()
            }));
        }
        if self.config.has_depth() != depth.is_some() {
            return Err(Error::Value(if depth.is_some() {
                "model has no depth branch but a depth input was supplied".into()
            } else {
                "model requires a depth input".into()
            }));
        }

        let (n, h, w) = match (rgb, depth) {
            (Some(r), Some(d)) => {
                let (rn, rc, rh, rw) = r.dims4()?;
                let (dn, dc, dh, dw) = d.dims4()?;
                if rc != 3 {
                    return Err(Error::Shape(format!("rgb input wants 3 channels, got {rc}")));
                }
                if dc != 1 {
                    return Err(Error::Shape(format!("depth input wants 1 channel, got {dc}")));
                }
                if (rn, rh, rw) != (dn, dh, dw) {
                    return Err(Error::Shape(format!(
                        "rgb {:?} and depth {:?} extents differ",
                        r.shape(),
                        d.shape()
                    )));
                }
                (rn, rh, rw)
            }
            (Some(r), None) => {
                let (rn, rc, rh, rw) = r.dims4()?;
                if rc != 3 {
                    return Err(Error::Shape(format!("rgb input wants 3 channels, got {rc}")));
                }
                (rn, rh, rw)
            }
            (None, Some(d)) => {
                let (dn, dc, dh, dw) = d.dims4()?;
                if dc != 1 {
                    return Err(Error::Shape(format!("depth input wants 1 channel, got {dc}")));
                }
                (dn, dh, dw)
            }
            (None, None) => return Err(Error::Value("model forward needs an input".into())),
        };
        let _ = n;

        let os = self.config.output_stride;
        let pad = PadSpec {
            top: 0,
            bottom: (os - h % os) % os,
            left: 0,
            right: (os - w % os) % os,
        };
        let padded = pad.bottom != 0 || pad.right != 0;

        let mut pad_input = |t: Option<&Tensor<S>>| -> Result<Option<Tensor<S>>> {
            match t {
                Some(t) if padded => Ok(Some(ops::reflect_pad(tape, t, pad)?)),
                Some(t) => Ok(Some(t.clone())),
                None => Ok(None),
            }
        };
        let rgb_in = pad_input(rgb)?;
        let depth_in = pad_input(depth)?;

        let rgb_features = match (&self.rgb, &rgb_in) {
            (Some(backbone), Some(x)) => Some(backbone.forward(tape, x)?),
            _ => None,
        };
        let depth_features = match (&self.depth, &depth_in) {
            (Some(backbone), Some(x)) => Some(backbone.forward(tape, x)?),
            _ => None,
        };

        let fused = self.fuse.forward(tape, rgb_features.as_ref(), depth_features.as_ref())?;
        let logits_full = self.head.forward(tape, &fused, os)?;
        let logits = if padded {
            ops::crop_spatial(tape, &logits_full, 0, 0, h, w)?
        } else {
            logits_full
        };
        Ok(ForwardArtifacts { logits, rgb_features, depth_features, fused })
    }

    /// Every parameter and normalization statistic with its dotted path,
    /// in a deterministic order.
    pub fn entries(&self) -> Vec<Entry<S>> {
        let mut out = Vec::new();
        if let Some(b) = &self.rgb {
            let mut sink = EntrySink::new(LayerGroup::RgbBackbone, &mut out);
            b.visit("rgb", &mut sink);
        }
        if let Some(b) = &self.depth {
            let mut sink = EntrySink::new(LayerGroup::DepthBackbone, &mut out);
            b.visit("depth", &mut sink);
        }
        {
            let mut sink = EntrySink::new(LayerGroup::Fusion, &mut out);
            self.fuse.visit("fuse", &mut sink);
        }
        {
            let mut sink = EntrySink::new(LayerGroup::Head, &mut out);
            self.head.visit("head", &mut sink);
        }
        out
    }

    /// Learnable parameters only (conv weights/biases, BN scale/shift).
    pub fn parameters(&self) -> Vec<Entry<S>> {
        self.entries().into_iter().filter(|e| e.learnable()).collect()
    }

    pub fn set_bn_mode(&mut self, mode: BnMode) {
        if let Some(b) = &mut self.rgb {
            b.set_bn_mode(mode);
        }
        if let Some(b) = &mut self.depth {
            b.set_bn_mode(mode);
        }
        self.fuse.set_bn_mode(mode);
        self.head.set_bn_mode(mode);
    }

    pub fn set_group_bn_mode(&mut self, group: LayerGroup, mode: BnMode) {
        match group {
            LayerGroup::RgbBackbone => {
                if let Some(b) = &mut self.rgb {
                    b.set_bn_mode(mode);
                }
            }
            LayerGroup::DepthBackbone => {
                if let Some(b) = &mut self.depth {
                    b.set_bn_mode(mode);
                }
            }
            LayerGroup::Fusion => self.fuse.set_bn_mode(mode),
            LayerGroup::Head => self.head.set_bn_mode(mode),
        }
    }

    /// Toggle gradient tracking for a whole group (frozen groups skip both
    /// gradient computation and optimizer updates).
    pub fn set_group_requires_grad(&mut self, group: LayerGroup, on: bool) {
        for e in self.entries() {
            if e.group == group && e.learnable() {
                e.tensor.set_requires_grad(on);
            }
        }
    }

    pub fn head(&self) -> &PyramidHead<S> {
        &self.head
    }

    pub fn rgb_backbone(&self) -> Option<&Backbone<S>> {
        self.rgb.as_ref()
    }

    pub fn depth_backbone(&self) -> Option<&Backbone<S>> {
        self.depth.as_ref()
    }
}

/// Average RGB first-conv weights over the input-channel axis:
/// `[C,3,k,k] -> [C,1,k,k]`.
pub fn init_depth_stem_from_rgb<S: Scalar>(rgb_weights: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, ci, kh, kw) = rgb_weights.dims4()?;
    if ci != 3 {
        return Err(Error::Shape(format!(
            "expected 3 input channels in RGB stem weights, got {ci}"
        )));
    }
    let src = rgb_weights.to_vec();
    let taps = kh * kw;
    let third = S::from_double(1.0 / 3.0);
    let mut out = vec![S::zero(); c * taps];
    for co in 0..c {
        for t in 0..taps {
            let a = src[(co * 3) * taps + t];
            let b = src[(co * 3 + 1) * taps + t];
            let d = src[(co * 3 + 2) * taps + t];
            out[co * taps + t] = (a + b + d) * third;
        }
    }
    Tensor::from_vec(out, &[c, 1, kh, kw])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_rgbd() -> Model<f32> {
        Model::new(ModelConfig::toy(5), 7).unwrap()
    }

    #[test]
    fn toy_extent_contracts() {
        let model = Model::<f32>::new(
            ModelConfig::toy(5).with_branches(BranchMode::RgbOnly),
            7,
        )
        .unwrap();
        let mut tape = Tape::paused();
        let rgb = Tensor::zeros(&[1, 3, 96, 96]).unwrap();
        let art = model.forward_detailed(&mut tape, Some(&rgb), None).unwrap();
        assert_eq!(art.logits.shape(), vec![1, 5, 96, 96]);
        assert_eq!(art.rgb_features.unwrap().shape()[2..], [12, 12]);
    }

    #[test]
    fn rgbd_same_output_shape() {
        let model = toy_rgbd();
        let mut tape = Tape::paused();
        let rgb = Tensor::zeros(&[1, 3, 96, 96]).unwrap();
        let depth = Tensor::zeros(&[1, 1, 96, 96]).unwrap();
        let logits = model.forward(&mut tape, Some(&rgb), Some(&depth)).unwrap();
        assert_eq!(logits.shape(), vec![1, 5, 96, 96]);
    }

    #[test]
    fn missing_depth_is_an_error() {
        let model = toy_rgbd();
        let mut tape = Tape::paused();
        let rgb = Tensor::zeros(&[1, 3, 96, 96]).unwrap();
        assert!(model.forward(&mut tape, Some(&rgb), None).is_err());
    }

    #[test]
    fn indivisible_extents_pad_and_crop_back() {
        let model = toy_rgbd();
        let mut tape = Tape::paused();
        let rgb = Tensor::zeros(&[1, 3, 97, 101]).unwrap();
        let depth = Tensor::zeros(&[1, 1, 97, 101]).unwrap();
        let logits = model.forward(&mut tape, Some(&rgb), Some(&depth)).unwrap();
        assert_eq!(logits.shape(), vec![1, 5, 97, 101]);
    }

    #[test]
    fn frozen_forward_is_deterministic() {
        let mut model = toy_rgbd();
        model.set_bn_mode(crate::ops::BnMode::Frozen);
        let mut tape = Tape::paused();
        let mut rng = crate::rng::stream(3, "input", 0);
        let rgb = Tensor::uniform(&[1, 3, 32, 32], 0.0, 1.0, &mut rng).unwrap();
        let depth = Tensor::uniform(&[1, 1, 32, 32], 0.0, 1.0, &mut rng).unwrap();
        let a = model.forward(&mut tape, Some(&rgb), Some(&depth)).unwrap();
        let b = model.forward(&mut tape, Some(&rgb), Some(&depth)).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn stem_average_is_channel_mean() {
        let w = Tensor::from_vec(vec![0.3f32, 0.6, 0.9], &[1, 3, 1, 1]).unwrap();
        let avg = init_depth_stem_from_rgb(&w).unwrap();
        assert_eq!(avg.shape(), vec![1, 1, 1, 1]);
        assert!((avg.to_vec()[0] - 0.6).abs() < 1e-7);

        let zero = Tensor::<f32>::zeros(&[4, 3, 3, 3]).unwrap();
        assert!(init_depth_stem_from_rgb(&zero).unwrap().to_vec().iter().all(|&v| v == 0.0));

        let mut rng = crate::rng::stream(1, "t", 0);
        let w = Tensor::<f64>::uniform(&[64, 3, 3, 3], -1.0, 1.0, &mut rng).unwrap();
        let avg = init_depth_stem_from_rgb(&w).unwrap();
        assert_eq!(avg.shape(), vec![64, 1, 3, 3]);
        let (src, dst) = (w.to_vec(), avg.to_vec());
        for co in 0..64 {
            for t in 0..9 {
                let want = (src[co * 27 + t] + src[co * 27 + 9 + t] + src[co * 27 + 18 + t]) / 3.0;
                assert!((dst[co * 9 + t] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn entry_paths_follow_naming_scheme() {
        let model = toy_rgbd();
        let paths: Vec<String> = model.entries().iter().map(|e| e.path.clone()).collect();
        assert!(paths.contains(&"rgb.stem.conv1.weight".to_string()));
        assert!(paths.contains(&"rgb.res4.1.conv2.weight".to_string()));
        assert!(paths.contains(&"depth.res5.0.proj.conv.weight".to_string()));
        assert!(paths.contains(&"fuse.rgb.conv.weight".to_string()));
        assert!(paths.contains(&"head.classifier.bias".to_string()));
        let unique: std::collections::HashSet<_> = paths.iter().collect();
        assert_eq!(unique.len(), paths.len(), "paths must be unique");
    }
}
