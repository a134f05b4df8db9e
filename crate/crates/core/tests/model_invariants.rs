//! Architecture-level invariants: gradient connectivity, zero-depth
//! behavior, baseline pyramid topology.

use rdseg::labels::Labels;
use rdseg::model::{BranchMode, FusionMode, Model, ModelConfig, PyramidPreset};
use rdseg::ops::{self, BnMode};
use rdseg::rng::stream;
use rdseg::tape::Tape;
use rdseg::tensor::Tensor;

use rand::RngExt;

fn micro(num_classes: usize) -> ModelConfig {
    ModelConfig {
        block_depths: [1, 1, 1, 1],
        width_multiplier: 1.0 / 16.0,
        num_classes,
        ..ModelConfig::toy(num_classes)
    }
}

#[test]
fn every_learnable_parameter_receives_gradient() {
    let model = Model::<f32>::new(micro(4), 31).unwrap();
    let mut rng = stream(31, "conn", 0);
    let rgb = Tensor::uniform(&[1, 3, 32, 32], 0.0, 1.0, &mut rng).unwrap();
    let depth = Tensor::uniform(&[1, 1, 32, 32], 0.0, 1.0, &mut rng).unwrap();
    let labels = Labels::new(
        1,
        32,
        32,
        (0..32 * 32).map(|_| rng.random_range(0..4u32) as u8).collect(),
    )
    .unwrap();

    let mut tape = Tape::new();
    let logits = model.forward(&mut tape, Some(&rgb), Some(&depth)).unwrap();
    let loss = ops::softmax_cross_entropy(&mut tape, &logits, &labels).unwrap();
    tape.backward(&loss).unwrap();

    for e in model.parameters() {
        let grad = e.tensor.grad().unwrap_or_else(|| panic!("{} has no grad", e.path));
        assert!(
            grad.iter().any(|&g| g != 0.0),
            "{} has an identically-zero gradient",
            e.path
        );
    }
}

#[test]
fn zero_depth_logits_are_input_independent_with_sum_fusion() {
    let cfg = ModelConfig { fusion_mode: FusionMode::Sum, ..micro(4) };
    let mut model = Model::<f32>::new(cfg, 17).unwrap();
    model.set_bn_mode(BnMode::Frozen);
    let mut rng = stream(17, "zd", 0);
    let rgb = Tensor::uniform(&[1, 3, 32, 32], 0.0, 1.0, &mut rng).unwrap();
    let zeros_a = Tensor::zeros(&[1, 1, 32, 32]).unwrap();
    let zeros_b = Tensor::full(&[1, 1, 32, 32], 0.0).unwrap();
    let real = Tensor::uniform(&[1, 1, 32, 32], 0.1, 1.0, &mut rng).unwrap();

    let mut tape = Tape::paused();
    let a = model.forward(&mut tape, Some(&rgb), Some(&zeros_a)).unwrap();
    let b = model.forward(&mut tape, Some(&rgb), Some(&zeros_b)).unwrap();
    let c = model.forward(&mut tape, Some(&rgb), Some(&real)).unwrap();
    assert_eq!(a.to_vec(), b.to_vec(), "any all-zero depth image gives identical logits");
    assert_ne!(a.to_vec(), c.to_vec(), "a real depth image changes the logits");
}

#[test]
fn deeplab_v2_preset_reproduces_baseline_topology() {
    let cfg = ModelConfig {
        pyramid: PyramidPreset::DeeplabV2,
        branches: BranchMode::RgbOnly,
        ..micro(4)
    };
    let model = Model::<f32>::new(cfg, 5).unwrap();
    let specs = model.head().branch_specs();
    assert_eq!(specs.len(), 4, "four summed branches");
    assert_eq!(specs.iter().map(|b| b.rate).collect::<Vec<_>>(), vec![6, 12, 18, 24]);
    assert!(specs.iter().all(|b| b.kernel == 3));
    assert!(!model.head().has_gap(), "no global-average-pooling context");

    // it still runs end to end
    let mut tape = Tape::paused();
    let rgb = Tensor::zeros(&[1, 3, 32, 32]).unwrap();
    let logits = model.forward(&mut tape, Some(&rgb), None).unwrap();
    assert_eq!(logits.shape(), vec![1, 4, 32, 32]);
}

#[test]
fn paper_head_preset_topology() {
    let model = Model::<f32>::new(micro(4), 5).unwrap();
    let specs = model.head().branch_specs();
    assert_eq!(specs.len(), 5);
    assert_eq!(specs[0].kernel, 1);
    assert_eq!(specs.iter().skip(1).map(|b| b.rate).collect::<Vec<_>>(), vec![2, 4, 8, 16]);
    assert!(model.head().has_gap());
}

#[test]
fn pyramid_branch_impulse_response_is_2r_plus_1() {
    // composite check through a head-style branch unit: conv(+BN identity)
    // with ones weights responds within exactly (2r+1)^2 around an impulse
    use rdseg::ops::ConvSpec;
    for rate in [2usize, 4, 8, 16] {
        let size = 4 * rate + 5;
        let center = size / 2;
        let spec = ConvSpec::new(1, 1, 3).with_rate(rate).with_same_padding();
        let w = Tensor::<f32>::full(&spec.weight_shape(), 1.0).unwrap();
        let mut x = vec![0.0f32; size * size];
        x[center * size + center] = 1.0;
        let xt = Tensor::from_vec(x, &[1, 1, size, size]).unwrap();
        let mut tape = Tape::paused();
        let bn = rdseg::ops::BatchNormState::<f32>::new(1).unwrap();
        let mut frozen = bn;
        frozen.mode = BnMode::Frozen;
        let y = ops::conv2d(&mut tape, &xt, &w, None, &spec).unwrap();
        let y = ops::batch_norm(&mut tape, &y, &frozen).unwrap();
        let y = ops::relu(&mut tape, &y).unwrap();
        let out = y.to_vec();
        let r = rate as isize;
        let mut max_extent = 0isize;
        for yy in 0..size {
            for xx in 0..size {
                if out[yy * size + xx].abs() > 1e-9 {
                    let (dy, dx) = (yy as isize - center as isize, xx as isize - center as isize);
                    assert!(dy.abs() <= r && dx.abs() <= r, "response outside (2r+1)^2 at rate {rate}");
                    max_extent = max_extent.max(dy.abs()).max(dx.abs());
                }
            }
        }
        assert_eq!(max_extent, r, "support must reach the window corners at rate {rate}");
    }
}

#[test]
fn checkpoint_compatible_across_output_strides() {
    // same seed, different output strides: parameter shapes and values agree
    let a = Model::<f32>::new(micro(4).with_output_stride(8), 3).unwrap();
    let b = Model::<f32>::new(micro(4).with_output_stride(32), 3).unwrap();
    let (ea, eb) = (a.entries(), b.entries());
    assert_eq!(ea.len(), eb.len());
    for (x, y) in ea.iter().zip(&eb) {
        assert_eq!(x.path, y.path);
        assert_eq!(x.tensor.shape(), y.tensor.shape(), "{} shape differs", x.path);
    }

    // a checkpoint from one stride loads strictly into the other
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("os8.sgck");
    rdseg::model::checkpoint::save(&a, &ckpt).unwrap();
    let report = rdseg::model::checkpoint::load(&b, &ckpt, true).unwrap();
    assert!(report.is_clean());
}
