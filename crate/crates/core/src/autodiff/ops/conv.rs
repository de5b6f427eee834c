//! Cross-correlation layers: dense convolution via im2col + GEMM, and
//! per-channel (depthwise) convolution by direct loops.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Op;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::linalg::{gemm, Layout};
use crate::tensor::Tensor;

/// Stride, zero padding and dilation of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub const UNIT: ConvGeometry = ConvGeometry { stride: 1, padding: 0, dilation: 1 };

    /// Stride 1, padding chosen so the spatial size is preserved.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        ConvGeometry { stride: 1, padding: dilation * (kernel - 1) / 2, dilation }
    }

    fn output_extent(&self, op: &'static str, extent: usize, k: usize) -> Result<usize> {
        if self.stride == 0 || self.dilation == 0 {
            return Err(shape_err(op, "stride and dilation must be >= 1"));
        }
        if k.is_multiple_of(2) {
            return Err(shape_err(op, format!("kernel size {k} must be odd")));
        }
        let span = self.dilation * (k - 1) + 1;
        let padded = extent + 2 * self.padding;
        if padded < span {
            return Err(shape_err(op, format!("kernel span {span} exceeds padded extent {padded}")));
        }
        let rem = padded - span;
        if !rem.is_multiple_of(self.stride) {
            return Err(shape_err(
                op,
                format!("output size is not exact: ({padded} - {span}) % {} != 0", self.stride),
            ));
        }
        Ok(rem / self.stride + 1)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
    geom: ConvGeometry,
}

impl ConvDims {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.geom == ConvGeometry::UNIT
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col(input: &[f64], d: &ConvDims) -> Vec<f64> {
    let n = d.pixels();
    let mut cols = vec![0.0; d.rows() * n];
    let (s, p, dil) = (d.geom.stride, d.geom.padding as isize, d.geom.dilation);
    for ci in 0..d.cin {
        let plane = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (ci * d.k + ky) * d.k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..d.ho {
                    let iy = (oy * s) as isize - p + (ky * dil) as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    let out = &mut dst[oy * d.wo..(oy + 1) * d.wo];
                    let off = (kx * dil) as isize - p;
                    if s == 1 {
                        let (lo, hi) = valid_range(off, d.wo, d.w);
                        if lo < hi {
                            let a = (lo as isize + off) as usize;
                            out[lo..hi].copy_from_slice(&src[a..a + (hi - lo)]);
                        }
                    } else {
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * s) as isize + off;
                            if ix >= 0 && ix < d.w as isize {
                                *o = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], d: &ConvDims) -> Vec<f64> {
    let n = d.pixels();
    let mut out = vec![0.0; d.cin * d.h * d.w];
    let (s, p, dil) = (d.geom.stride, d.geom.padding as isize, d.geom.dilation);
    for ci in 0..d.cin {
        let plane = &mut out[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (ci * d.k + ky) * d.k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..d.ho {
                    let iy = (oy * s) as isize - p + (ky * dil) as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    let g = &src[oy * d.wo..(oy + 1) * d.wo];
                    let off = (kx * dil) as isize - p;
                    if s == 1 {
                        let (lo, hi) = valid_range(off, d.wo, d.w);
                        if lo < hi {
                            let a = (lo as isize + off) as usize;
                            dst[a..a + (hi - lo)]
                                .iter_mut()
                                .zip(&g[lo..hi])
                                .for_each(|(x, y)| *x += y);
                        }
                    } else {
                        for (ox, gv) in g.iter().enumerate() {
                            let ix = (ox * s) as isize + off;
                            if ix >= 0 && ix < d.w as isize {
                                dst[ix as usize] += gv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output columns `ox` in `[lo, hi)` read input column `ox + off` inside `[0, w)`.
fn valid_range(off: isize, wo: usize, w: usize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = ((w as isize - off).max(0) as usize).min(wo);
    (lo.min(hi), hi)
}

fn dims_3d(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(shape_err(op, format!("expected [C,H,W], got {shape:?}"))),
    }
}

fn dims_4d(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [a, b, c, d] => Ok((a, b, c, d)),
        _ => Err(shape_err(op, format!("expected a 4-d kernel, got {shape:?}"))),
    }
}

impl Graph {
    /// Dense cross-correlation of `input` `[C_in,H,W]` with `kernel` `[C_out,C_in,k,k]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, geom: ConvGeometry) -> Result<Var> {
        let (cin, h, w) = dims_3d("conv2d", self.shape(input))?;
        let (cout, kcin, kh, kw) = dims_4d("conv2d", self.shape(kernel))?;
        if kcin != cin {
            return Err(shape_err(
                "conv2d",
                format!("input has {cin} channels, kernel expects {kcin}"),
            ));
        }
        if kh != kw {
            return Err(shape_err("conv2d", format!("kernel must be square, got {kh}x{kw}")));
        }
        let ho = geom.output_extent("conv2d", h, kh)?;
        let wo = geom.output_extent("conv2d", w, kw)?;
        let d = ConvDims { cin, h, w, cout, k: kh, ho, wo, geom };

        let x = self.value(input).data();
        let kern = self.value(kernel).data();
        let mut out = vec![0.0; cout * d.pixels()];
        let owned;
        let cols: &[f64] = if d.is_pointwise() {
            x
        } else {
            owned = im2col(x, &d);
            &owned
        };
        gemm(
            cout,
            d.rows(),
            d.pixels(),
            kern,
            Layout::RowMajor,
            cols,
            Layout::RowMajor,
            &mut out,
            0.0,
        );
        let value = Tensor::new([cout, ho, wo], out)?;
        Ok(self.push(value, Op::Conv2d { input, kernel, dims: d }))
    }

    /// Per-channel cross-correlation: `kernel` is `[C,1,k,k]`, one filter per channel.
    pub fn depthwise_conv2d(&mut self, input: Var, kernel: Var, geom: ConvGeometry) -> Result<Var> {
        let (c, h, w) = dims_3d("depthwise_conv2d", self.shape(input))?;
        let (kc, one, kh, kw) = dims_4d("depthwise_conv2d", self.shape(kernel))?;
        if kc != c || one != 1 {
            return Err(shape_err(
                "depthwise_conv2d",
                format!("kernel {:?} does not match {c} input channels", self.shape(kernel)),
            ));
        }
        if kh != kw {
            return Err(shape_err("depthwise_conv2d", "kernel must be square"));
        }
        let ho = geom.output_extent("depthwise_conv2d", h, kh)?;
        let wo = geom.output_extent("depthwise_conv2d", w, kw)?;
        let d = ConvDims { cin: c, h, w, cout: c, k: kh, ho, wo, geom };
        let out = depthwise_forward(self.value(input).data(), self.value(kernel).data(), &d);
        let value = Tensor::new([c, ho, wo], out)?;
        Ok(self.push(value, Op::Depthwise { input, kernel, dims: d }))
    }

    /// Depthwise spatial filtering followed by a 1x1 channel-mixing convolution.
    pub fn depthwise_separable_conv2d(
        &mut self,
        input: Var,
        depthwise: Var,
        pointwise: Var,
        geom: ConvGeometry,
    ) -> Result<Var> {
        let spatial = self.depthwise_conv2d(input, depthwise, geom)?;
        self.conv2d(spatial, pointwise, ConvGeometry::UNIT)
    }
}

/// One kernel tap applied along one output row: output columns `lo..hi` of
/// `out_row` read input columns `ix0, ix0 + stride, ...` of `in_row`.
struct Tap {
    tap: usize,
    in_row: usize,
    out_row: usize,
    lo: usize,
    hi: usize,
    ix0: usize,
}

fn depthwise_taps(d: &ConvDims, mut f: impl FnMut(Tap)) {
    let (s, p, dil) = (d.geom.stride, d.geom.padding as isize, d.geom.dilation);
    for c in 0..d.cin {
        for ky in 0..d.k {
            for kx in 0..d.k {
                let off = (kx * dil) as isize - p;
                let lo = ((-off).max(0) as usize).div_ceil(s);
                let hi = ((d.w as isize - off).max(0) as usize).div_ceil(s).min(d.wo);
                if lo >= hi {
                    continue;
                }
                let ix0 = (lo as isize * s as isize + off) as usize;
                for oy in 0..d.ho {
                    let iy = (oy * s) as isize - p + (ky * dil) as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    f(Tap {
                        tap: (c * d.k + ky) * d.k + kx,
                        in_row: (c * d.h + iy as usize) * d.w,
                        out_row: (c * d.ho + oy) * d.wo,
                        lo,
                        hi,
                        ix0,
                    });
                }
            }
        }
    }
}

fn depthwise_forward(x: &[f64], kern: &[f64], d: &ConvDims) -> Vec<f64> {
    let mut out = vec![0.0; d.cin * d.ho * d.wo];
    let s = d.geom.stride;
    depthwise_taps(d, |t| {
        let wv = kern[t.tap];
        let dst = &mut out[t.out_row + t.lo..t.out_row + t.hi];
        let src = &x[t.in_row + t.ix0..];
        if s == 1 {
            dst.iter_mut().zip(src).for_each(|(o, v)| *o += wv * v);
        } else {
            dst.iter_mut().zip(src.iter().step_by(s)).for_each(|(o, v)| *o += wv * v);
        }
    });
    out
}

pub(super) fn conv2d_backward(
    g: &Graph,
    input: Var,
    kernel: Var,
    d: &ConvDims,
    grad: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let mut out = Vec::new();
    let x = g.value(input).data();
    let kern = g.value(kernel).data();
    let n = d.pixels();
    let owned;
    let cols: &[f64] = if d.is_pointwise() {
        x
    } else if g.requires_grad(kernel) {
        owned = im2col(x, d);
        &owned
    } else {
        &[]
    };
    if g.requires_grad(kernel) {
        // dK[Cout, R] = dY[Cout, N] . cols[R, N]^T
        let mut dk = vec![0.0; d.cout * d.rows()];
        gemm(d.cout, n, d.rows(), grad, Layout::RowMajor, cols, Layout::Transposed, &mut dk, 0.0);
        out.push((kernel, dk));
    }
    if g.requires_grad(input) {
        // dcols[R, N] = K[Cout, R]^T . dY[Cout, N]
        let mut dcols = vec![0.0; d.rows() * n];
        gemm(d.rows(), d.cout, n, kern, Layout::Transposed, grad, Layout::RowMajor, &mut dcols, 0.0);
        let dx = if d.is_pointwise() { dcols } else { col2im(&dcols, d) };
        out.push((input, dx));
    }
    out
}

pub(super) fn depthwise_backward(
    g: &Graph,
    input: Var,
    kernel: Var,
    d: &ConvDims,
    grad: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let mut out = Vec::new();
    let x = g.value(input).data();
    let kern = g.value(kernel).data();
    let s = d.geom.stride;
    if g.requires_grad(kernel) {
        let mut dk = vec![0.0; kern.len()];
        depthwise_taps(d, |t| {
            let gr = &grad[t.out_row + t.lo..t.out_row + t.hi];
            let src = &x[t.in_row + t.ix0..];
            dk[t.tap] += if s == 1 {
                gr.iter().zip(src).map(|(a, b)| a * b).sum::<f64>()
            } else {
                gr.iter().zip(src.iter().step_by(s)).map(|(a, b)| a * b).sum::<f64>()
            };
        });
        out.push((kernel, dk));
    }
    if g.requires_grad(input) {
        let mut dx = vec![0.0; x.len()];
        depthwise_taps(d, |t| {
            let wv = kern[t.tap];
            let gr = &grad[t.out_row + t.lo..t.out_row + t.hi];
            let dst = &mut dx[t.in_row + t.ix0..];
            if s == 1 {
                dst.iter_mut().zip(gr).for_each(|(o, v)| *o += wv * v);
            } else {
                dst.iter_mut().step_by(s).zip(gr).for_each(|(o, v)| *o += wv * v);
            }
        });
        out.push((input, dx));
    }
    out
}

/// Parameter count of a bias-free dense `k x k` convolution.
pub fn conv_param_count(cin: usize, cout: usize, k: usize) -> usize {
    cin * cout * k * k
}

/// Parameter count of a bias-free depthwise-separable convolution.
pub fn separable_param_count(cin: usize, cout: usize, k: usize) -> usize {
    cin * k * k + cin * cout
}
