//! Dilated 2-D convolution.
//!
//! The rate-`r` kernel reads taps spaced `r` pixels apart, so a k×k filter
//! covers `k + (k-1)(r-1)` input pixels per axis without extra parameters;
//! `r = 1` is standard convolution. Out-of-range taps contribute zero.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Op, Tape};
use crate::tensor::Tensor;

/// Static description of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub rate: usize,
    pub padding: (usize, usize),
    pub has_bias: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: (1, 1),
            rate: 1,
            padding: (0, 0),
            has_bias: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = (stride, stride);
        self
    }

    pub fn with_rate(mut self, rate: usize) -> Self {
        self.rate = rate;
        self
    }

    pub fn with_padding(mut self, ph: usize, pw: usize) -> Self {
        self.padding = (ph, pw);
        self
    }

    /// Padding `r*(k-1)/2` so stride-1 output extents equal input extents.
    pub fn with_same_padding(mut self) -> Self {
        self.padding = (
            self.rate * (self.kernel.0 - 1) / 2,
            self.rate * (self.kernel.1 - 1) / 2,
        );
        self
    }

    pub fn with_bias(mut self, on: bool) -> Self {
        self.has_bias = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Value("conv channels must be >= 1".into()));
        }
        if kh == 0 || kw == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Value(format!("kernel must be odd positive, got {kh}x{kw}")));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::Value("stride must be >= 1".into()));
        }
        if self.rate == 0 {
            return Err(Error::Value("dilation rate must be >= 1".into()));
        }
        Ok(())
    }

    /// Span of input pixels covered by one kernel placement.
    pub fn effective_kernel(&self) -> (usize, usize) {
        (
            self.kernel.0 + (self.kernel.0 - 1) * (self.rate - 1),
            self.kernel.1 + (self.kernel.1 - 1) * (self.rate - 1),
        )
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    pub fn output_extents(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (eh, ew) = self.effective_kernel();
        let num_h = (h + 2 * self.padding.0).checked_sub(eh);
        let num_w = (w + 2 * self.padding.1).checked_sub(ew);
        match (num_h, num_w) {
            (Some(nh), Some(nw)) => Ok((nh / self.stride.0 + 1, nw / self.stride.1 + 1)),
            _ => Err(Error::Shape(format!(
                "conv output empty: input {h}x{w}, effective kernel {eh}x{ew}, padding {:?}",
                self.padding
            ))),
        }
    }
}

/// Fully resolved geometry for one conv invocation.
#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub rate: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn resolve(spec: &ConvSpec, n: usize, ci: usize, h: usize, w: usize) -> Result<Self> {
        let (oh, ow) = spec.output_extents(h, w)?;
        Ok(ConvGeom {
            n,
            ci,
            h,
            w,
            co: spec.out_channels,
            kh: spec.kernel.0,
            kw: spec.kernel.1,
            sh: spec.stride.0,
            sw: spec.stride.1,
            rate: spec.rate,
            ph: spec.padding.0,
            pw: spec.padding.1,
            oh,
            ow,
        })
    }

    /// Valid output-column range for a kernel column `kx`, plus the first
    /// input column it reads. Columns outside the range fall in padding.
    #[inline]
    fn ox_range(&self, kx: usize) -> Option<(usize, usize, usize)> {
        let base = kx * self.rate;
        let ox_lo = if base >= self.pw { 0 } else { (self.pw - base).div_ceil(self.sw) };
        let hi = self.w + self.pw;
        if base >= hi {
            return None;
        }
        let ox_hi = ((hi - 1 - base) / self.sw).min(self.ow - 1);
        if ox_lo > ox_hi {
            return None;
        }
        Some((ox_lo, ox_hi, ox_lo * self.sw + base - self.pw))
    }
}

/// `out[n,co,i,j] = bias[co] + sum_{ci,l,m} x[n,ci, i*sh + r*l - ph, j*sw + r*m - pw] * w[co,ci,l,m]`
///
/// Records the node when any input is tracked; differentiable w.r.t. input,
/// weights, and bias with dedicated backward kernels.
pub fn conv2d<S: Scalar>(
    tape: &mut Tape<S>,
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    spec: &ConvSpec,
) -> Result<Tensor<S>> {
    spec.validate()?;
    let (n, ci, h, w) = input.dims4()?;
    if ci != spec.in_channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {ci}",
            spec.in_channels
        )));
    }
    if weights.shape() != spec.weight_shape() {
        return Err(Error::Shape(format!(
            "conv weights {:?} do not match spec {:?}",
            weights.shape(),
            spec.weight_shape()
        )));
    }
    match (spec.has_bias, bias) {
        (true, Some(b)) => {
            if b.shape() != [spec.out_channels] {
                return Err(Error::Shape(format!(
                    "conv bias shape {:?}, want [{}]",
                    b.shape(),
                    spec.out_channels
                )));
            }
        }
        (false, None) => {}
        _ => return Err(Error::Value("conv bias presence disagrees with spec".into())),
    }

    let geom = ConvGeom::resolve(spec, n, ci, h, w)?;
    let out_data = {
        let xi = input.borrow();
        let wi = weights.borrow();
        let bias_data = bias.map(|b| b.to_vec());
        forward(&xi.data, &wi.data, bias_data.as_deref(), &geom)
    };
    let out = Tensor::from_vec(out_data, &[n, spec.out_channels, geom.oh, geom.ow])?;
    out.ensure_finite("conv2d")?;

    let mut tracked: Vec<&Tensor<S>> = vec![input, weights];
    if let Some(b) = bias {
        tracked.push(b);
    }
    if tape.should_record(&tracked) {
        tape.record(
            &tracked,
            Op::Conv2d {
                x: input.clone(),
                w: weights.clone(),
                bias: bias.cloned(),
                geom,
            },
            &out,
        );
    }
    Ok(out)
}

pub(crate) fn forward<S: Scalar>(
    x: &[S],
    w: &[S],
    bias: Option<&[S]>,
    g: &ConvGeom,
) -> Vec<S> {
    let out_plane = g.oh * g.ow;
    let in_plane = g.h * g.w;
    let ksize = g.kh * g.kw;
    let mut out = vec![S::zero(); g.n * g.co * out_plane];

    out.par_chunks_mut(out_plane).enumerate().for_each(|(nc, plane)| {
        let ni = nc / g.co;
        let coi = nc % g.co;
        if let Some(b) = bias {
            plane.fill(b[coi]);
        }
        for cii in 0..g.ci {
            let x_plane = &x[(ni * g.ci + cii) * in_plane..][..in_plane];
            let w_k = &w[(coi * g.ci + cii) * ksize..][..ksize];
            for ky in 0..g.kh {
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ky * g.rate) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let x_row = &x_plane[iy as usize * g.w..][..g.w];
                    let o_row = &mut plane[oy * g.ow..][..g.ow];
                    for kx in 0..g.kw {
                        let Some((ox_lo, ox_hi, ix0)) = g.ox_range(kx) else { continue };
                        let tap = w_k[ky * g.kw + kx];
                        let mut ix = ix0;
                        for o in o_row.iter_mut().take(ox_hi + 1).skip(ox_lo) {
                            *o = *o + x_row[ix] * tap;
                            ix += g.sw;
                        }
                    }
                }
            }
        }
    });
    out
}

pub(crate) fn backward_input<S: Scalar>(dy: &[S], w: &[S], g: &ConvGeom) -> Vec<S> {
    let out_plane = g.oh * g.ow;
    let in_plane = g.h * g.w;
    let ksize = g.kh * g.kw;
    let mut dx = vec![S::zero(); g.n * g.ci * in_plane];

    dx.par_chunks_mut(in_plane).enumerate().for_each(|(nc, plane)| {
        let ni = nc / g.ci;
        let cii = nc % g.ci;
        for coi in 0..g.co {
            let dy_plane = &dy[(ni * g.co + coi) * out_plane..][..out_plane];
            let w_k = &w[(coi * g.ci + cii) * ksize..][..ksize];
            for ky in 0..g.kh {
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ky * g.rate) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dy_row = &dy_plane[oy * g.ow..][..g.ow];
                    let dx_row = &mut plane[iy as usize * g.w..][..g.w];
                    for kx in 0..g.kw {
                        let Some((ox_lo, ox_hi, ix0)) = g.ox_range(kx) else { continue };
                        let tap = w_k[ky * g.kw + kx];
                        let mut ix = ix0;
                        for &gv in dy_row.iter().take(ox_hi + 1).skip(ox_lo) {
                            dx_row[ix] = dx_row[ix] + gv * tap;
                            ix += g.sw;
                        }
                    }
                }
            }
        }
    });
    dx
}

pub(crate) fn backward_weights<S: Scalar>(dy: &[S], x: &[S], g: &ConvGeom) -> Vec<S> {
    let out_plane = g.oh * g.ow;
    let in_plane = g.h * g.w;
    let ksize = g.kh * g.kw;
    let mut dw = vec![S::zero(); g.co * g.ci * ksize];

    dw.par_chunks_mut(ksize).enumerate().for_each(|(cc, taps)| {
        let coi = cc / g.ci;
        let cii = cc % g.ci;
        for ni in 0..g.n {
            let dy_plane = &dy[(ni * g.co + coi) * out_plane..][..out_plane];
            let x_plane = &x[(ni * g.ci + cii) * in_plane..][..in_plane];
            for ky in 0..g.kh {
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ky * g.rate) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let x_row = &x_plane[iy as usize * g.w..][..g.w];
                    let dy_row = &dy_plane[oy * g.ow..][..g.ow];
                    for kx in 0..g.kw {
                        let Some((ox_lo, ox_hi, ix0)) = g.ox_range(kx) else { continue };
                        let mut acc = S::zero();
                        let mut ix = ix0;
                        for &gv in dy_row.iter().take(ox_hi + 1).skip(ox_lo) {
                            acc = acc + gv * x_row[ix];
                            ix += g.sw;
                        }
                        taps[ky * g.kw + kx] = taps[ky * g.kw + kx] + acc;
                    }
                }
            }
        }
    });
    dw
}

pub(crate) fn backward_bias<S: Scalar>(dy: &[S], g: &ConvGeom) -> Vec<S> {
    let out_plane = g.oh * g.ow;
    let mut db = vec![S::zero(); g.co];
    for ni in 0..g.n {
        for (coi, d) in db.iter_mut().enumerate() {
            let plane = &dy[(ni * g.co + coi) * out_plane..][..out_plane];
            for &v in plane {
                *d = *d + v;
            }
        }
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_conv(
        x: &[f32],
        xshape: &[usize],
        w: &[f32],
        spec: &ConvSpec,
        bias: Option<&[f32]>,
    ) -> Tensor<f32> {
        let mut tape = Tape::paused();
        let xt = Tensor::from_vec(x.to_vec(), xshape).unwrap();
        let wt = Tensor::from_vec(w.to_vec(), &spec.weight_shape()).unwrap();
        let bt = bias.map(|b| Tensor::from_vec(b.to_vec(), &[spec.out_channels]).unwrap());
        conv2d(&mut tape, &xt, &wt, bt.as_ref(), spec).unwrap()
    }

    #[test]
    fn scalar_product() {
        let spec = ConvSpec::new(1, 1, 1);
        let out = run_conv(&[3.0], &[1, 1, 1, 1], &[0.5], &spec, None);
        assert_eq!(out.to_vec(), vec![1.5]);
    }

    #[test]
    fn one_dimensional_dilated_case() {
        // input [1,2,3,4,5], kernel [1,1,1] (1x3), rate 2, padding (0,2):
        // o[j] = sum_l x[j + 2l - 2] = x[j-2] + x[j] + x[j+2] with zero padding.
        let spec = ConvSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: (1, 3),
            stride: (1, 1),
            rate: 2,
            padding: (0, 2),
            has_bias: false,
        };
        let out = run_conv(
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[1, 1, 1, 5],
            &[1.0, 1.0, 1.0],
            &spec,
            None,
        );
        assert_eq!(out.to_vec(), vec![4.0, 6.0, 9.0, 6.0, 8.0]);
    }

    #[test]
    fn same_padding_preserves_extents() {
        for rate in [1, 2, 4, 8] {
            let spec = ConvSpec::new(2, 3, 3).with_rate(rate).with_same_padding();
            let (oh, ow) = spec.output_extents(33, 17).unwrap();
            assert_eq!((oh, ow), (33, 17), "rate {rate}");
        }
    }

    #[test]
    fn rejects_even_kernel_and_bad_channels() {
        assert!(ConvSpec::new(1, 1, 2).validate().is_err());
        assert!(ConvSpec::new(0, 1, 3).validate().is_err());
        let spec = ConvSpec::new(1, 1, 3);
        assert!(spec.output_extents(1, 1).is_err());
    }

    #[test]
    fn strided_output_extents() {
        // (H + 2p - (r(k-1)+1))/s + 1
        let spec = ConvSpec::new(1, 1, 3).with_stride(2).with_padding(1, 1);
        assert_eq!(spec.output_extents(96, 96).unwrap(), (48, 48));
        assert_eq!(spec.output_extents(97, 97).unwrap(), (49, 49));
    }
}
