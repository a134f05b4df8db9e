//! Verification suites: gradient checks, convolution oracles, receptive
//! fields, IoU counting oracles, schedule values, and shape contracts.
//!
//! Shared by the `verify` CLI command and the acceptance tests so both run
//! the same checks.

use rand::RngExt;

use crate::data::synth::{render_scene, SceneSpec};
use crate::error::Result;
use crate::eval::ConfusionMatrix;
use crate::gradcheck::{
    analytic_gradient, analytic_param_gradient, max_rel_error, numeric_gradient,
    numeric_param_gradient,
};
use crate::labels::{Labels, IGNORE_ID};
use crate::model::{BranchMode, Model, ModelConfig};
use crate::ops::{self, BatchNormState, BnMode, ConvSpec, PoolSpec};
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::train::poly_lr;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), passed, detail: detail.into() }
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn record_err(name: &str, err: impl std::fmt::Display) -> CheckResult {
    CheckResult::new(name, false, format!("error: {err}"))
}

// ---------------------------------------------------------------------------
// gradient suite
//
// Every case is built twice from the same seed (the generators draw in f64,
// so both precisions hold identical values). Double precision is checked
// directly against central differences at 1e-6; the single-precision
// analytic gradient is checked against the same double-precision differences
// at 1e-3, which keeps the reference tight where f32 arithmetic itself is
// the noise floor.

const GRAD_SEEDS: [u64; 5] = [101, 202, 303, 404, 505];
const TOL_F64: f64 = 1e-6;
const TOL_F32: f64 = 1e-3;

/// Weighted-sum readout `sum(c * y)` with fixed positive coefficients, so
/// every output element contributes a well-scaled gradient.
fn readout<S: Scalar>(tape: &mut Tape<S>, y: &Tensor<S>, c: &Tensor<S>) -> Result<Tensor<S>> {
    let picked = ops::mul(tape, y, c)?;
    ops::sum_all(tape, &picked)
}

fn coeffs<S: Scalar>(shape: &[usize], seed: u64) -> Tensor<S> {
    Tensor::uniform(shape, 0.5, 1.5, &mut stream(seed, "coeffs", 0)).expect("coeff tensor")
}

#[derive(Clone, Copy, Debug)]
enum Wrt {
    Input,
    Weights,
    Bias,
    Gamma,
    Beta,
}

impl Wrt {
    fn tag(self) -> &'static str {
        match self {
            Wrt::Input => "input",
            Wrt::Weights => "weights",
            Wrt::Bias => "bias",
            Wrt::Gamma => "gamma",
            Wrt::Beta => "beta",
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum OpCase {
    Conv { rate: usize, wrt: Wrt },
    BatchNorm { train: bool, wrt: Wrt },
    Relu,
    MaxPool,
    Gap,
    Bilinear,
    CrossEntropy { multi_pixel: bool },
    Fusion { sum: bool },
}

impl OpCase {
    fn name(self) -> String {
        match self {
            OpCase::Conv { rate, wrt } => format!("conv2d-r{rate}/{}", wrt.tag()),
            OpCase::BatchNorm { train, wrt } => format!(
                "batch_norm-{}/{}",
                if train { "train" } else { "frozen" },
                wrt.tag()
            ),
            OpCase::Relu => "relu/input".into(),
            OpCase::MaxPool => "max_pool/input".into(),
            OpCase::Gap => "global_avg_pool/input".into(),
            OpCase::Bilinear => "bilinear/input".into(),
            OpCase::CrossEntropy { multi_pixel } => {
                format!("cross_entropy{}/logits", if multi_pixel { "-9px" } else { "" })
            }
            OpCase::Fusion { sum } => {
                format!("fusion-{}/input", if sum { "sum" } else { "concat" })
            }
        }
    }

    fn eps(self) -> f64 {
        match self {
            // smooth nonlinear ops want a small step; linear and
            // piecewise-linear ops (probed away from their kinks) are
            // insensitive to it
            OpCase::BatchNorm { .. } | OpCase::CrossEntropy { .. } => 1e-5,
            _ => 1e-4,
        }
    }
}

type CheckFn<S> = Box<dyn Fn(&mut Tape<S>, &Tensor<S>) -> Result<Tensor<S>>>;

/// Build one op case: the scalar function under test plus the tensor the
/// gradient is taken against.
fn build_case<S: Scalar>(case: OpCase, seed: u64) -> (CheckFn<S>, Tensor<S>) {
    match case {
        OpCase::Conv { rate, wrt } => {
            let h = 12;
            let spec = ConvSpec::new(2, 3, 3).with_rate(rate).with_same_padding().with_bias(true);
            let x = Tensor::<S>::uniform(&[1, 2, h, h], -1.0, 1.0, &mut stream(seed, "cx", 0)).unwrap();
            let w = Tensor::<S>::uniform(&spec.weight_shape(), -0.5, 0.5, &mut stream(seed, "cw", 0)).unwrap();
            let b = Tensor::<S>::uniform(&[3], -0.5, 0.5, &mut stream(seed, "cb", 0)).unwrap();
            let c = coeffs::<S>(&[1, 3, h, h], seed);
            match wrt {
                Wrt::Input => (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        let y = ops::conv2d(tape, probe, &w, Some(&b), &spec)?;
                        readout(tape, &y, &c)
                    }) as CheckFn<S>,
                    x,
                ),
                Wrt::Weights => (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        let y = ops::conv2d(tape, &x, probe, Some(&b), &spec)?;
                        readout(tape, &y, &c)
                    }),
                    w,
                ),
                _ => (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        let y = ops::conv2d(tape, &x, &w, Some(probe), &spec)?;
                        readout(tape, &y, &c)
                    }),
                    b,
                ),
            }
        }

        OpCase::BatchNorm { train, wrt } => {
            let gamma = Tensor::<S>::uniform(&[3], 0.5, 1.5, &mut stream(seed, "bng", 0)).unwrap();
            let beta = Tensor::<S>::uniform(&[3], -0.5, 0.5, &mut stream(seed, "bnb", 0)).unwrap();
            let x = Tensor::<S>::uniform(&[2, 3, 4, 4], -1.5, 1.5, &mut stream(seed, "bnx", 0)).unwrap();
            let c = coeffs::<S>(&[2, 3, 4, 4], seed);
            let state_with = move |g: &Tensor<S>, b: &Tensor<S>| BatchNormState {
                gamma: g.clone(),
                beta: b.clone(),
                running_mean: Tensor::full(&[3], S::from_double(0.1)).unwrap(),
                running_var: Tensor::full(&[3], S::from_double(0.8)).unwrap(),
                momentum: 0.1,
                eps: 1e-5,
                mode: if train { BnMode::Train } else { BnMode::Frozen },
            };
            match wrt {
                Wrt::Gamma => (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        let st = state_with(probe, &beta);
                        let y = ops::batch_norm(tape, &x, &st)?;
                        readout(tape, &y, &c)
                    }) as CheckFn<S>,
                    gamma,
                ),
                Wrt::Beta => (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        let st = state_with(&gamma, probe);
                        let y = ops::batch_norm(tape, &x, &st)?;
                        readout(tape, &y, &c)
                    }),
                    beta,
                ),
                _ => (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        let st = state_with(&gamma, &beta);
                        let y = ops::batch_norm(tape, probe, &st)?;
                        readout(tape, &y, &c)
                    }),
                    x,
                ),
            }
        }

        OpCase::Relu => {
            let mut rng = stream(seed, "relu", 0);
            let data: Vec<S> = (0..24)
                .map(|_| {
                    let sign = if rng.random_range(0.0..1.0f64) < 0.5 { -1.0 } else { 1.0 };
                    S::from_double(sign * rng.random_range(0.3..1.5))
                })
                .collect();
            let x = Tensor::from_vec(data, &[1, 2, 3, 4]).unwrap();
            let c = coeffs::<S>(&[1, 2, 3, 4], seed);
            (
                Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                    let y = ops::relu(tape, probe)?;
                    readout(tape, &y, &c)
                }),
                x,
            )
        }

        OpCase::MaxPool => {
            // well-separated values so perturbations never flip an argmax
            let mut rng = stream(seed, "pool", 0);
            let mut order: Vec<usize> = (0..36).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            let data: Vec<S> = order
                .iter()
                .map(|&i| S::from_double(i as f64 * 0.6 + rng.random_range(0.0..0.05)))
                .collect();
            let x = Tensor::from_vec(data, &[1, 1, 6, 6]).unwrap();
            let spec = PoolSpec::new(3, 2, 1);
            let c = coeffs::<S>(&[1, 1, 3, 3], seed);
            (
                Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                    let y = ops::max_pool2d(tape, probe, &spec)?;
                    readout(tape, &y, &c)
                }),
                x,
            )
        }

        OpCase::Gap => {
            let x = Tensor::<S>::uniform(&[2, 3, 5, 4], -1.0, 1.0, &mut stream(seed, "gap", 0)).unwrap();
            let c = coeffs::<S>(&[2, 3, 1, 1], seed);
            (
                Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                    let y = ops::global_avg_pool(tape, probe)?;
                    readout(tape, &y, &c)
                }),
                x,
            )
        }

        OpCase::Bilinear => {
            let x = Tensor::<S>::uniform(&[1, 2, 3, 5], -1.0, 1.0, &mut stream(seed, "bil", 0)).unwrap();
            let c = coeffs::<S>(&[1, 2, 7, 11], seed);
            (
                Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                    let y = ops::bilinear_upsample(tape, probe, 7, 11)?;
                    readout(tape, &y, &c)
                }),
                x,
            )
        }

        OpCase::CrossEntropy { multi_pixel } => {
            if multi_pixel {
                let x = Tensor::<S>::uniform(&[1, 4, 3, 3], -1.0, 1.0, &mut stream(seed, "ce9", 0)).unwrap();
                let mut labels = Labels::filled(1, 3, 3, 1);
                labels.ids[4] = IGNORE_ID;
                labels.ids[7] = 3;
                (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        ops::softmax_cross_entropy(tape, probe, &labels)
                    }) as CheckFn<S>,
                    x,
                )
            } else {
                let x = Tensor::<S>::uniform(&[1, 4, 1, 1], -1.0, 1.0, &mut stream(seed, "ce", 0)).unwrap();
                let labels = Labels::filled(1, 1, 1, (seed % 4) as u8);
                (
                    Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                        ops::softmax_cross_entropy(tape, probe, &labels)
                    }),
                    x,
                )
            }
        }

        OpCase::Fusion { sum } => {
            let spec = ConvSpec::new(4, 2, 1);
            let w1 = Tensor::<S>::uniform(&spec.weight_shape(), -0.7, 0.7, &mut stream(seed, "fw1", 0)).unwrap();
            let w2 = Tensor::<S>::uniform(&spec.weight_shape(), -0.7, 0.7, &mut stream(seed, "fw2", 0)).unwrap();
            let x = Tensor::<S>::uniform(&[1, 4, 3, 3], -1.0, 1.0, &mut stream(seed, "fx", 0)).unwrap();
            let out_ch = if sum { 2 } else { 4 };
            let c = coeffs::<S>(&[1, out_ch, 3, 3], seed);
            (
                Box::new(move |tape: &mut Tape<S>, probe: &Tensor<S>| {
                    let a = ops::conv2d(tape, probe, &w1, None, &spec)?;
                    let b = ops::conv2d(tape, probe, &w2, None, &spec)?;
                    let fused = if sum {
                        ops::add(tape, &a, &b)?
                    } else {
                        ops::concat_channels(tape, &a, &b)?
                    };
                    readout(tape, &fused, &c)
                }),
                x,
            )
        }
    }
}

fn run_check(
    results: &mut Vec<CheckResult>,
    name: String,
    tol: f64,
    check: impl FnOnce() -> Result<f64>,
) {
    match check() {
        Ok(err) => {
            results.push(CheckResult::new(
                name,
                err <= tol,
                format!("max rel err {err:.3e} (tol {tol:.0e})"),
            ));
        }
        Err(e) => results.push(record_err(&name, e)),
    }
}

/// One case in both precisions against a shared double-precision reference.
fn check_case(results: &mut Vec<CheckResult>, case: OpCase, seed: u64) {
    let name = case.name();
    let (f64_fn, x64) = build_case::<f64>(case, seed);
    let reference = match numeric_gradient(&f64_fn, &x64, case.eps()) {
        Ok(n) => n,
        Err(e) => {
            results.push(record_err(&format!("{name}/seed{seed}"), e));
            return;
        }
    };
    run_check(results, format!("f64/{name}/seed{seed}"), TOL_F64, || {
        Ok(max_rel_error(&analytic_gradient(&f64_fn, &x64)?, &reference))
    });
    let (f32_fn, x32) = build_case::<f32>(case, seed);
    run_check(results, format!("f32/{name}/seed{seed}"), TOL_F32, || {
        Ok(max_rel_error(&analytic_gradient(&f32_fn, &x32)?, &reference))
    });
}

fn op_cases() -> Vec<OpCase> {
    let mut cases = Vec::new();
    for rate in [1usize, 2, 4, 8, 16] {
        for wrt in [Wrt::Input, Wrt::Weights, Wrt::Bias] {
            cases.push(OpCase::Conv { rate, wrt });
        }
    }
    for train in [true, false] {
        for wrt in [Wrt::Input, Wrt::Gamma, Wrt::Beta] {
            cases.push(OpCase::BatchNorm { train, wrt });
        }
    }
    cases.extend([
        OpCase::Relu,
        OpCase::MaxPool,
        OpCase::Gap,
        OpCase::Bilinear,
        OpCase::CrossEntropy { multi_pixel: false },
        OpCase::CrossEntropy { multi_pixel: true },
        OpCase::Fusion { sum: true },
        OpCase::Fusion { sum: false },
    ]);
    cases
}

/// Tiny but complete architecture for end-to-end checks: stem, four
/// bottleneck stages, both branches, fusion, pyramid with GAP, loss.
fn micro_config() -> ModelConfig {
    ModelConfig {
        output_stride: 8,
        block_depths: [1, 1, 1, 1],
        width_multiplier: 1.0 / 32.0,
        num_classes: 3,
        ..ModelConfig::toy(3)
    }
}

/// Push every pre-ReLU activation well away from zero (scale 0.5, shift +4)
/// so central differences never cross a kink; the piecewise-linear ops have
/// dedicated cases of their own.
fn smooth_bn_surgery<S: Scalar>(model: &Model<S>) {
    for e in model.entries() {
        match e.kind {
            crate::model::ParamKind::BnScale => {
                e.tensor.set_data(&vec![S::from_double(0.5); e.tensor.numel()]).unwrap();
            }
            crate::model::ParamKind::BnShift => {
                e.tensor.set_data(&vec![S::from_double(4.0); e.tensor.numel()]).unwrap();
            }
            _ => {}
        }
    }
}

struct ModelCase<S: Scalar> {
    model: Model<S>,
    rgb: Tensor<S>,
    depth: Tensor<S>,
    labels: Labels,
}

fn build_model_case<S: Scalar>(seed: u64) -> Result<ModelCase<S>> {
    let model: Model<S> = Model::new(micro_config(), seed)?;
    smooth_bn_surgery(&model);
    let mut lrng = stream(seed, "labels", 0);
    let labels = Labels::new(
        1,
        16,
        16,
        (0..256).map(|_| lrng.random_range(0..3u32) as u8).collect(),
    )?;
    let rgb = Tensor::<S>::uniform(&[1, 3, 16, 16], 0.1, 0.9, &mut stream(seed, "mrgb", 0))?;
    let depth = Tensor::<S>::uniform(&[1, 1, 16, 16], 0.1, 1.0, &mut stream(seed, "mdep", 0))?;
    Ok(ModelCase { model, rgb, depth, labels })
}

/// End-to-end loss plus a small linear probe of the checked tensor.
///
/// A deep model's gradient elements span several orders of magnitude; the
/// smallest sit below finite-difference resolution, where an elementwise
/// relative metric reads pure noise. Adding `0.05 * sum(c * probe)` shifts
/// every element of the checked gradient into a well-scaled range while any
/// backward error still shows up 1:1 in the residual.
fn model_loss_probed<S: Scalar>(
    case: &ModelCase<S>,
    tape: &mut Tape<S>,
    rgb: &Tensor<S>,
    probe: &Tensor<S>,
    probe_coeffs: &Tensor<S>,
    lift: f64,
) -> Result<Tensor<S>> {
    let logits = case.model.forward(tape, Some(rgb), Some(&case.depth))?;
    let ce = ops::softmax_cross_entropy(tape, &logits, &case.labels)?;
    let lin = ops::mul(tape, probe, probe_coeffs)?;
    let lin = ops::sum_all(tape, &lin)?;
    let lin = ops::scale(tape, &lin, S::from_double(lift))?;
    ops::add(tape, &ce, &lin)
}

fn gradcheck_full_model(results: &mut Vec<CheckResult>, seeds: &[u64]) {
    const EPS: f64 = 1e-4;
    for &seed in seeds {
        let (c64, c32) = match (build_model_case::<f64>(seed), build_model_case::<f32>(seed)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                results.push(record_err(&format!("model/build/seed{seed}"), e));
                continue;
            }
        };

        // gradient w.r.t. the RGB input, through the whole network
        let c_rgb64 = coeffs::<f64>(&[1, 3, 16, 16], seed ^ 0x5f);
        let c_rgb32 = coeffs::<f32>(&[1, 3, 16, 16], seed ^ 0x5f);
        let f64_fn =
            |tape: &mut Tape<f64>, x: &Tensor<f64>| model_loss_probed(&c64, tape, x, x, &c_rgb64, 0.5);
        let f32_fn =
            |tape: &mut Tape<f32>, x: &Tensor<f32>| model_loss_probed(&c32, tape, x, x, &c_rgb32, 0.5);
        match numeric_gradient(&f64_fn, &c64.rgb, EPS) {
            Ok(reference) => {
                run_check(results, format!("f64/model-end-to-end/rgb-input/seed{seed}"), TOL_F64, || {
                    Ok(max_rel_error(&analytic_gradient(&f64_fn, &c64.rgb)?, &reference))
                });
                run_check(results, format!("f32/model-end-to-end/rgb-input/seed{seed}"), TOL_F32, || {
                    Ok(max_rel_error(&analytic_gradient(&f32_fn, &c32.rgb)?, &reference))
                });
            }
            Err(e) => results.push(record_err(&format!("model-end-to-end/rgb-input/seed{seed}"), e)),
        }

        // and w.r.t. the first stem convolution weights, the deepest parameter
        let w64 = c64.model.rgb_backbone().unwrap().stem_conv1_weight().clone();
        let w32 = c32.model.rgb_backbone().unwrap().stem_conv1_weight().clone();
        let c_w64 = coeffs::<f64>(&w64.shape(), seed ^ 0xa3);
        let c_w32 = coeffs::<f32>(&w32.shape(), seed ^ 0xa3);
        let p64_fn =
            |tape: &mut Tape<f64>| model_loss_probed(&c64, tape, &c64.rgb, &w64, &c_w64, 5.0);
        let p32_fn =
            |tape: &mut Tape<f32>| model_loss_probed(&c32, tape, &c32.rgb, &w32, &c_w32, 5.0);
        match numeric_param_gradient(&p64_fn, &w64, EPS) {
            Ok(reference) => {
                run_check(results, format!("f64/model-end-to-end/stem-weight/seed{seed}"), TOL_F64, || {
                    Ok(max_rel_error(&analytic_param_gradient(&p64_fn, &w64)?, &reference))
                });
                run_check(results, format!("f32/model-end-to-end/stem-weight/seed{seed}"), TOL_F32, || {
                    Ok(max_rel_error(&analytic_param_gradient(&p32_fn, &w32)?, &reference))
                });
            }
            Err(e) => results.push(record_err(&format!("model-end-to-end/stem-weight/seed{seed}"), e)),
        }
    }
}

/// Criterion: every differentiable op and the full toy model pass
/// finite-difference checks, 1e-3 in single precision and 1e-6 in double,
/// over the fixed seed set.
pub fn gradcheck_suite() -> Vec<CheckResult> {
    let mut results = Vec::new();
    for case in op_cases() {
        for &seed in &GRAD_SEEDS {
            check_case(&mut results, case, seed);
        }
    }
    gradcheck_full_model(&mut results, &GRAD_SEEDS);
    results
}

// ---------------------------------------------------------------------------
// convolution oracles

/// Direct-summation reference: the discrete definition applied literally,
/// with explicit zero padding, accumulating in (channel, row, column) tap
/// order starting from the bias.
#[allow(clippy::too_many_arguments)]
fn conv2d_naive(
    x: &[f32],
    (n, ci, h, w): (usize, usize, usize, usize),
    wgt: &[f32],
    (co, kh, kw): (usize, usize, usize),
    bias: Option<&[f32]>,
    stride: (usize, usize),
    rate: usize,
    padding: (usize, usize),
) -> Vec<f32> {
    let oh = (h + 2 * padding.0 - (rate * (kh - 1) + 1)) / stride.0 + 1;
    let ow = (w + 2 * padding.1 - (rate * (kw - 1) + 1)) / stride.1 + 1;
    let mut out = vec![0.0f32; n * co * oh * ow];
    for ni in 0..n {
        for coi in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[coi]);
                    for cii in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride.0 + ky * rate) as isize - padding.0 as isize;
                                let ix = (ox * stride.1 + kx * rate) as isize - padding.1 as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((ni * ci + cii) * h + iy as usize) * w + ix as usize]
                                    * wgt[((coi * ci + cii) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((ni * co + coi) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Spread a k x k kernel onto the `k + (k-1)(r-1)` grid with zeros between
/// taps, so a rate-1 convolution reproduces the dilated one.
fn zero_insert_kernel(w: &[f32], co: usize, ci: usize, k: usize, rate: usize) -> (Vec<f32>, usize) {
    let big = k + (k - 1) * (rate - 1);
    let mut out = vec![0.0f32; co * ci * big * big];
    for cc in 0..co * ci {
        for ky in 0..k {
            for kx in 0..k {
                out[(cc * big + ky * rate) * big + kx * rate] = w[(cc * k + ky) * k + kx];
            }
        }
    }
    (out, big)
}

fn run_conv_production(
    x: &Tensor<f32>,
    w: &Tensor<f32>,
    bias: Option<&Tensor<f32>>,
    spec: &ConvSpec,
) -> Result<Vec<f32>> {
    let mut tape = Tape::paused();
    Ok(ops::conv2d(&mut tape, x, w, bias, spec)?.to_vec())
}

/// Criterion: dilated conv equals (a) the zero-inserted-kernel standard conv
/// and (b) the direct-summation reference, within 1e-6 absolute.
pub fn dilated_conv_oracle(cases_per_rate: usize, naive_cases: usize) -> Vec<CheckResult> {
    let mut results = Vec::new();
    let mut worst_rewrite = 0.0f32;
    let mut rewrite_count = 0usize;

    for (ri, &rate) in [2usize, 4, 8, 16].iter().enumerate() {
        for case in 0..cases_per_rate {
            let seed = (ri * cases_per_rate + case) as u64;
            let mut rng = stream(977, "conv-oracle", seed);
            let n = rng.random_range(1..=2usize);
            let ci = rng.random_range(1..=3usize);
            let co = rng.random_range(1..=2usize);
            let k = *[1usize, 3, 5].get(rng.random_range(0..3usize)).unwrap();
            let eff = k + (k - 1) * (rate - 1);
            let h = eff + rng.random_range(0..6usize);
            let w = eff + rng.random_range(0..6usize);
            let stride = rng.random_range(1..=2usize);
            let pad = rng.random_range(0..=rate);

            let spec = ConvSpec {
                in_channels: ci,
                out_channels: co,
                kernel: (k, k),
                stride: (stride, stride),
                rate,
                padding: (pad, pad),
                has_bias: true,
            };
            let x = Tensor::<f32>::uniform(&[n, ci, h, w], -1.0, 1.0, &mut rng).unwrap();
            let wt = Tensor::<f32>::uniform(&spec.weight_shape(), -1.0, 1.0, &mut rng).unwrap();
            let b = Tensor::<f32>::uniform(&[co], -0.5, 0.5, &mut rng).unwrap();

            let dilated = match run_conv_production(&x, &wt, Some(&b), &spec) {
                Ok(v) => v,
                Err(e) => {
                    results.push(record_err(&format!("conv-rewrite/r{rate}/case{case}"), e));
                    continue;
                }
            };
            let (big_w, big_k) = zero_insert_kernel(&wt.to_vec(), co, ci, k, rate);
            let rewrite_spec = ConvSpec {
                in_channels: ci,
                out_channels: co,
                kernel: (big_k, big_k),
                stride: (stride, stride),
                rate: 1,
                padding: (pad, pad),
                has_bias: true,
            };
            let big_wt = Tensor::from_vec(big_w, &rewrite_spec.weight_shape()).unwrap();
            match run_conv_production(&x, &big_wt, Some(&b), &rewrite_spec) {
                Ok(standard) => {
                    let diff = max_abs_diff(&dilated, &standard);
                    worst_rewrite = worst_rewrite.max(diff);
                    rewrite_count += 1;
                    if diff > 1e-6 {
                        results.push(CheckResult::new(
                            format!("conv-rewrite/r{rate}/case{case}"),
                            false,
                            format!("abs diff {diff:.3e} > 1e-6"),
                        ));
                    }
                }
                Err(e) => results.push(record_err(&format!("conv-rewrite/r{rate}/case{case}"), e)),
            }
        }
    }
    results.push(CheckResult::new(
        "conv-rewrite-oracle",
        rewrite_count == cases_per_rate * 4,
        format!("{rewrite_count} randomized cases, worst abs diff {worst_rewrite:.3e}"),
    ));

    let mut worst_naive = 0.0f32;
    let mut naive_done = 0usize;
    for case in 0..naive_cases {
        let mut rng = stream(1313, "conv-naive", case as u64);
        let rate = *[1usize, 2, 4, 8, 16].get(case % 5).unwrap();
        let n = rng.random_range(1..=2usize);
        let ci = rng.random_range(1..=2usize);
        let co = rng.random_range(1..=2usize);
        let k = *[1usize, 3].get(rng.random_range(0..2usize)).unwrap();
        let eff = k + (k - 1) * (rate - 1);
        let h = eff + rng.random_range(0..5usize);
        let w = eff + rng.random_range(0..5usize);
        let stride = rng.random_range(1..=2usize);
        let pad = rng.random_range(0..=(rate.min(3)));
        let spec = ConvSpec {
            in_channels: ci,
            out_channels: co,
            kernel: (k, k),
            stride: (stride, stride),
            rate,
            padding: (pad, pad),
            has_bias: case % 2 == 0,
        };
        let x = Tensor::<f32>::uniform(&[n, ci, h, w], -1.0, 1.0, &mut rng).unwrap();
        let wt = Tensor::<f32>::uniform(&spec.weight_shape(), -1.0, 1.0, &mut rng).unwrap();
        let b = if spec.has_bias {
            Some(Tensor::<f32>::uniform(&[co], -0.5, 0.5, &mut rng).unwrap())
        } else {
            None
        };
        match run_conv_production(&x, &wt, b.as_ref(), &spec) {
            Ok(got) => {
                let want = conv2d_naive(
                    &x.to_vec(),
                    (n, ci, h, w),
                    &wt.to_vec(),
                    (co, k, k),
                    b.as_ref().map(|t| t.to_vec()).as_deref(),
                    (stride, stride),
                    rate,
                    (pad, pad),
                );
                let diff = max_abs_diff(&got, &want);
                worst_naive = worst_naive.max(diff);
                naive_done += 1;
                if diff > 1e-6 {
                    results.push(CheckResult::new(
                        format!("conv-direct-sum/case{case}"),
                        false,
                        format!("abs diff {diff:.3e} > 1e-6"),
                    ));
                }
            }
            Err(e) => results.push(record_err(&format!("conv-direct-sum/case{case}"), e)),
        }
    }
    results.push(CheckResult::new(
        "conv-direct-sum-oracle",
        naive_done == naive_cases,
        format!("{naive_done} cases against the direct-summation reference, worst abs diff {worst_naive:.3e}"),
    ));
    results
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

/// Criterion: a 3x3 kernel at rate r responds exactly within a
/// (2r+1) x (2r+1) window around an impulse.
pub fn receptive_field_suite() -> Vec<CheckResult> {
    let mut results = Vec::new();
    for rate in [2usize, 4, 8, 16] {
        let name = format!("receptive-field/r{rate}");
        let size = 4 * rate + 5;
        let center = size / 2;
        let spec = ConvSpec::new(1, 1, 3).with_rate(rate).with_same_padding();
        let mut x = vec![0.0f32; size * size];
        x[center * size + center] = 1.0;
        let xt = Tensor::from_vec(x, &[1, 1, size, size]).unwrap();
        let w = Tensor::<f32>::full(&spec.weight_shape(), 1.0).unwrap();
        match run_conv_production(&xt, &w, None, &spec) {
            Ok(out) => {
                let mut nonzero = Vec::new();
                for y in 0..size {
                    for xcol in 0..size {
                        if out[y * size + xcol] != 0.0 {
                            nonzero.push((y as isize - center as isize, xcol as isize - center as isize));
                        }
                    }
                }
                let r = rate as isize;
                let max_dy = nonzero.iter().map(|p| p.0.abs()).max().unwrap_or(-1);
                let max_dx = nonzero.iter().map(|p| p.1.abs()).max().unwrap_or(-1);
                let within = nonzero.iter().all(|&(dy, dx)| dy.abs() <= r && dx.abs() <= r);
                let passed = within && max_dy == r && max_dx == r && nonzero.len() == 9;
                results.push(CheckResult::new(
                    name,
                    passed,
                    format!(
                        "support box {}x{} (want {}x{}), {} taps (want 9)",
                        2 * max_dy + 1,
                        2 * max_dx + 1,
                        2 * r + 1,
                        2 * r + 1,
                        nonzero.len()
                    ),
                ));
            }
            Err(e) => results.push(record_err(&name, e)),
        }
    }
    results
}

// ---------------------------------------------------------------------------
// IoU and schedule oracles

/// Criterion: streaming confusion-matrix IoU equals brute-force per-pixel
/// counting, exactly for counts and to 1e-12 for IoU.
pub fn iou_oracle(cases: usize) -> Vec<CheckResult> {
    let mut results = Vec::new();
    let mut worst = 0.0f64;
    let mut exact = true;
    for case in 0..cases {
        let mut rng = stream(4242, "iou", case as u64);
        let k = rng.random_range(2..=6usize);
        let h = rng.random_range(4..=16usize);
        let w = rng.random_range(4..=16usize);
        let gt_ids: Vec<u8> = (0..h * w)
            .map(|_| {
                if rng.random_range(0.0..1.0f64) < 0.1 {
                    IGNORE_ID
                } else {
                    rng.random_range(0..k as u32) as u8
                }
            })
            .collect();
        let pred_ids: Vec<u8> = (0..h * w).map(|_| rng.random_range(0..k as u32) as u8).collect();
        let gt = Labels::new(1, h, w, gt_ids).unwrap();
        let pred = Labels::new(1, h, w, pred_ids).unwrap();

        let mut cm = ConfusionMatrix::new(k);
        cm.accumulate(&gt, &pred).unwrap();

        // brute force: recount every (gt, pred) pair independently
        let mut brute = vec![0u64; k * k];
        for (&g, &p) in gt.ids.iter().zip(&pred.ids) {
            if g != IGNORE_ID {
                brute[g as usize * k + p as usize] += 1;
            }
        }
        for g in 0..k {
            for p in 0..k {
                if cm.count(g, p) != brute[g * k + p] {
                    exact = false;
                }
            }
        }
        let summary = cm.iou();
        for c in 0..k {
            let tp = brute[c * k + c];
            let total_g: u64 = (0..k).map(|p| brute[c * k + p]).sum();
            let total_p: u64 = (0..k).map(|g| brute[g * k + c]).sum();
            let denom = total_g + total_p - tp;
            let want = if denom == 0 { None } else { Some(tp as f64 / denom as f64) };
            match (summary.per_class[c], want) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => exact = false,
            }
        }
    }
    results.push(CheckResult::new(
        "iou-brute-force-oracle",
        exact && worst <= 1e-12,
        format!("{cases} random pairs, counts exact: {exact}, worst IoU diff {worst:.3e}"),
    ));

    // worked example
    let gt = Labels::new(1, 2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = Labels::new(1, 2, 2, vec![0, 1, 1, 1]).unwrap();
    let mut cm = ConfusionMatrix::new(2);
    cm.accumulate(&gt, &pred).unwrap();
    let mean = cm.iou().mean.unwrap();
    results.push(CheckResult::new(
        "iou-worked-example",
        (mean - 7.0 / 12.0).abs() <= 1e-12,
        format!("counts [[1,1],[0,2]] -> mean {mean:.12} (want 7/12)"),
    ));
    results
}

/// Criterion: poly schedule endpoints and midpoint at the published values.
pub fn poly_schedule_suite() -> Vec<CheckResult> {
    let base = 5e-5;
    let max_iter = 1_000_000u64;
    let at0 = poly_lr(base, 0, max_iter, 0.9);
    let at_mid = poly_lr(base, max_iter / 2, max_iter, 0.9);
    let at_end = poly_lr(base, max_iter, max_iter, 0.9);
    // independent route for the midpoint: exp(0.9 ln 0.5)
    let mid_oracle = base * (0.9 * 0.5f64.ln()).exp();
    let rel = ((at_mid - mid_oracle) / mid_oracle).abs();
    vec![
        CheckResult::new("poly/iter0", at0 == base, format!("{at0:e} (want exactly {base:e})")),
        CheckResult::new(
            "poly/midpoint",
            rel <= 1e-9,
            format!("{at_mid:.6e} vs oracle {mid_oracle:.6e} (rel {rel:.2e})"),
        ),
        CheckResult::new("poly/end", at_end == 0.0, format!("{at_end:e} (want exactly 0)")),
    ]
}

// ---------------------------------------------------------------------------
// shape suite

/// Criterion: top features are exactly input/os and logits exactly match the
/// input extents, for every output stride and branch mode; parameter shapes
/// are identical across output strides.
pub fn shape_suite() -> Vec<CheckResult> {
    let mut results = Vec::new();
    for os in [8usize, 16, 32] {
        for branches in [BranchMode::RgbOnly, BranchMode::RgbD] {
            let tag = match branches {
                BranchMode::RgbOnly => "rgb",
                _ => "rgb-d",
            };
            let cfg = ModelConfig::toy(5).with_output_stride(os).with_branches(branches);
            let model: Model<f32> = match Model::new(cfg, 13) {
                Ok(m) => m,
                Err(e) => {
                    results.push(record_err(&format!("shapes/os{os}/{tag}"), e));
                    continue;
                }
            };
            for (h, w) in [(96usize, 96usize), (256, 512)] {
                let name = format!("shapes/os{os}/{tag}/{h}x{w}");
                let run = || -> Result<(Vec<usize>, Vec<usize>)> {
                    let mut tape = Tape::paused();
                    let rgb = Tensor::zeros(&[1, 3, h, w])?;
                    let depth = Tensor::zeros(&[1, 1, h, w])?;
                    let art = model.forward_detailed(
                        &mut tape,
                        Some(&rgb),
                        matches!(branches, BranchMode::RgbD).then_some(&depth),
                    )?;
                    let feat = art.rgb_features.as_ref().expect("rgb branch present").shape();
                    Ok((feat, art.logits.shape()))
                };
                match run() {
                    Ok((feat, logits)) => {
                        let want_feat = [h / os, w / os];
                        let passed = feat[2..] == want_feat && logits == vec![1, 5, h, w];
                        results.push(CheckResult::new(
                            name,
                            passed,
                            format!("features {:?} (want {:?}), logits {:?}", &feat[2..], want_feat, logits),
                        ));
                    }
                    Err(e) => results.push(record_err(&name, e)),
                }
            }
        }
    }

    // paper-scale config: 720x720 static shape check plus cross-stride
    // parameter-shape equality (the checkpoint-compatibility property)
    let mut shape_sets: Vec<Vec<(String, Vec<usize>)>> = Vec::new();
    for os in [8usize, 16, 32] {
        let cfg = ModelConfig::paper_scale(19).with_output_stride(os);
        let name = format!("shapes/paper-scale/os{os}/720x720");
        match Model::<f32>::new(cfg.clone(), 13) {
            Ok(model) => {
                let (fh, fw) = cfg.feature_extents(720, 720);
                let passed = (fh, fw) == (720 / os, 720 / os) && cfg.top_channels() == 2048;
                results.push(CheckResult::new(
                    name,
                    passed,
                    format!("top features {fh}x{fw} at {} channels", cfg.top_channels()),
                ));
                shape_sets.push(
                    model.entries().iter().map(|e| (e.path.clone(), e.tensor.shape())).collect(),
                );
            }
            Err(e) => results.push(record_err(&name, e)),
        }
    }
    let compatible = shape_sets.windows(2).all(|w| w[0] == w[1]);
    results.push(CheckResult::new(
        "shapes/paper-scale/cross-stride-parameter-shapes",
        shape_sets.len() == 3 && compatible,
        format!(
            "{} parameter shapes identical across os in {{8,16,32}}: {compatible}",
            shape_sets.first().map(|s| s.len()).unwrap_or(0)
        ),
    ));
    results
}

// ---------------------------------------------------------------------------
// scale/depth correlation of the synthetic generator

/// The generated scenes' core property: within a class, smaller footprints
/// sit at strictly greater depths.
pub fn synthetic_scale_depth_suite() -> Vec<CheckResult> {
    let mut rng = stream(55, "verify-synth", 0);
    let mut ok = true;
    let mut checked = 0usize;
    for class_id in 1..5u8 {
        let mut areas = Vec::new();
        for _ in 0..6 {
            let d = rng.random_range(1.5..5.0);
            let spec = SceneSpec { shapes: vec![(class_id, d, (48.5, 48.5))] };
            match render_scene(&spec, 96, &mut stream(55, "verify-synth-scene", checked as u64)) {
                Ok((_, inst)) => areas.push((inst[0].raster_area, d)),
                Err(_) => ok = false,
            }
            checked += 1;
        }
        areas.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in areas.windows(2) {
            if pair[0].0 < pair[1].0 && pair[0].1 <= pair[1].1 {
                ok = false;
            }
        }
    }
    vec![CheckResult::new(
        "synthetic/scale-depth-correlation",
        ok,
        format!("{checked} single-shape scenes, footprint strictly anti-monotone in depth"),
    )]
}

/// Everything `verify --suite oracle` runs.
pub fn oracle_suite() -> Vec<CheckResult> {
    let mut results = dilated_conv_oracle(50, 50);
    results.extend(receptive_field_suite());
    results.extend(iou_oracle(100));
    results.extend(poly_schedule_suite());
    results.extend(synthetic_scale_depth_suite());
    results
}
