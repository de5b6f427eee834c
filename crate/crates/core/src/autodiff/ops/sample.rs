use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Op;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::math;
use crate::tensor::Tensor;

/// Four (pixel offset, weight) pairs of a bilinear lookup.
pub type Taps = [(usize, f64); 4];

/// Bilinear taps for the sub-pixel location `(x, y)` (column, row) of an
/// `h x w` grid, or `None` when the location lies outside `[0,w-1] x [0,h-1]`.
pub fn bilinear_taps(h: usize, w: usize, x: f64, y: f64) -> Option<Taps> {
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = math::floor(x) as usize;
    let y0 = math::floor(y) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    Some([
        (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * w + x1, fx * (1.0 - fy)),
        (y1 * w + x0, (1.0 - fx) * fy),
        (y1 * w + x1, fx * fy),
    ])
}

impl Graph {
    /// Samples `map` `[C,H,W]` at each point, producing `[P, C]`. Points that
    /// are `None` or out of bounds yield zero rows.
    pub fn bilinear_gather(&mut self, map: Var, points: &[Option<(f64, f64)>]) -> Result<Var> {
        let (c, h, w) = match *self.shape(map) {
            [c, h, w] => (c, h, w),
            ref s => return Err(shape_err("bilinear_gather", format!("expected [C,H,W], got {s:?}"))),
        };
        let taps: Vec<Option<Taps>> = points
            .iter()
            .map(|p| p.and_then(|(x, y)| bilinear_taps(h, w, x, y)))
            .collect();
        let src = self.value(map).data();
        let plane = h * w;
        let mut out = vec![0.0; taps.len() * c];
        for (p, t) in taps.iter().enumerate() {
            if let Some(t) = t {
                for ch in 0..c {
                    let base = ch * plane;
                    out[p * c + ch] = t.iter().map(|&(i, wt)| wt * src[base + i]).sum();
                }
            }
        }
        let value = Tensor::new([taps.len(), c], out)?;
        Ok(self.push(value, Op::BilinearGather { input: map, taps }))
    }
}

pub(super) fn gather_backward(g: &Graph, input: Var, taps: &[Option<Taps>], grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let shape = g.shape(input);
    let (c, plane) = (shape[0], shape[1] * shape[2]);
    let mut dx = vec![0.0; c * plane];
    for (p, t) in taps.iter().enumerate() {
        if let Some(t) = t {
            for ch in 0..c {
                let gv = grad[p * c + ch];
                for &(i, wt) in t {
                    dx[ch * plane + i] += wt * gv;
                }
            }
        }
    }
    vec![(input, dx)]
}
