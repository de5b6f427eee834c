//! Histogram-binned average precision, differentiable almost everywhere.
//!
//! Each distance is spread over its two nearest bin centers with triangular
//! weights. With a single positive, precision at a bin is `1 / (1 + n)`
//! where `n` is the negative mass in that bin and closer ones, and AP is the
//! positive's membership-weighted precision. That weight only falls with
//! distance, so AP never drops when the positive moves closer or a negative
//! moves away.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Op;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};

/// Binning of the distance axis `[0, max_distance]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApBinning {
    pub bins: usize,
    pub max_distance: f64,
}

impl Default for ApBinning {
    fn default() -> Self {
        ApBinning { bins: 25, max_distance: 2.0 }
    }
}

impl ApBinning {
    fn width(&self) -> f64 {
        self.max_distance / (self.bins - 1) as f64
    }

    /// Triangular membership of `d` in bin `b` and its derivative.
    fn membership(&self, d: f64, b: usize) -> (f64, f64) {
        let delta = self.width();
        let off = d - b as f64 * delta;
        let t = 1.0 - off.abs() / delta;
        if t <= 0.0 {
            (0.0, 0.0)
        } else if off > 0.0 {
            (t, -1.0 / delta)
        } else if off < 0.0 {
            (t, 1.0 / delta)
        } else {
            (t, 0.0)
        }
    }

    /// Indices of the (at most two) bins with non-zero membership.
    fn support(&self, d: f64) -> core::ops::Range<usize> {
        let pos = d / self.width();
        let lo = crate::math::floor(pos).max(0.0) as usize;
        lo.min(self.bins - 1)..(lo + 2).min(self.bins)
    }
}

struct RowForward {
    pos: Vec<f64>,
    /// `1 + ` cumulative negative mass up to and including each bin.
    rank: Vec<f64>,
    ap: f64,
}

fn row_forward(bin: &ApBinning, row: &[f64]) -> RowForward {
    let nb = bin.bins;
    let mut pos = vec![0.0; nb];
    let mut neg = vec![0.0; nb];
    for (l, &d) in row.iter().enumerate() {
        let d = d.clamp(0.0, bin.max_distance);
        for b in bin.support(d) {
            let (q, _) = bin.membership(d, b);
            if l == 0 {
                pos[b] += q;
            } else {
                neg[b] += q;
            }
        }
    }
    let mut rank = vec![0.0; nb];
    let mut acc = 1.0;
    let mut ap = 0.0;
    for b in 0..nb {
        acc += neg[b];
        rank[b] = acc;
        ap += pos[b] / acc;
    }
    RowForward { pos, rank, ap }
}

impl Graph {
    /// Average precision per row of `distances` `[N, L]`. Column 0 of each row
    /// is the single positive, the other columns are negatives.
    pub fn soft_average_precision(&mut self, distances: Var, binning: ApBinning) -> Result<Var> {
        let (n, l) = match *self.shape(distances) {
            [n, l] if l >= 1 => (n, l),
            ref s => return Err(shape_err("soft_average_precision", format!("expected [N, L>=1], got {s:?}"))),
        };
        if binning.bins < 2 || binning.max_distance <= 0.0 {
            return Err(shape_err("soft_average_precision", "need >= 2 bins over a positive range"));
        }
        let src = self.value(distances).data();
        let out: Vec<f64> = (0..n).map(|r| row_forward(&binning, &src[r * l..(r + 1) * l]).ap).collect();
        let value = crate::Tensor::new([n], out)?;
        Ok(self.push(value, Op::SoftAp { input: distances, binning }))
    }
}

pub(super) fn soft_ap_backward(g: &Graph, input: Var, bin: &ApBinning, grad: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let shape = g.shape(input);
    let (n, l) = (shape[0], shape[1]);
    let src = g.value(input).data();
    let nb = bin.bins;
    let mut dx = vec![0.0; n * l];
    let mut d_pos = vec![0.0; nb];
    let mut d_neg = vec![0.0; nb];
    for r in 0..n {
        let row = &src[r * l..(r + 1) * l];
        let f = row_forward(bin, row);
        // a negative in bin b pushes down the precision of bins b..
        let mut acc = 0.0;
        for b in (0..nb).rev() {
            acc -= f.pos[b] / (f.rank[b] * f.rank[b]);
            d_neg[b] = acc;
            d_pos[b] = 1.0 / f.rank[b];
        }
        let gr = grad[r];
        for (j, &d) in row.iter().enumerate() {
            if !(0.0..=bin.max_distance).contains(&d) {
                continue;
            }
            let mut s = 0.0;
            for b in bin.support(d) {
                let (_, dq) = bin.membership(d, b);
                s += dq * if j == 0 { d_pos[b] } else { d_neg[b] };
            }
            dx[r * l + j] = gr * s;
        }
    }
    vec![(input, dx)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn ap(row: &[f64]) -> f64 {
        row_forward(&ApBinning::default(), row).ap
    }

    #[test]
    fn isolated_positive_has_unit_precision() {
        assert!((ap(&[0.0, 1.5, 1.9, 2.0]) - 1.0).abs() < 1e-12);
        assert!((ap(&[0.3, 1.0, 1.2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_behind_every_negative() {
        let v = ap(&[2.0, 0.0, 0.0, 0.0]);
        assert!((v - 0.25).abs() < 1e-12, "{v}");
    }

    #[test]
    fn shares_bin_with_one_negative() {
        // Positive and one negative share the bin exactly: precision 1/2.
        let v = ap(&[0.5, 0.5, 1.9]);
        assert!((v - 0.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn monotone_inside_a_bin() {
        // the cumulative-mass form dips between bin centers here
        let far = ap(&[1.0, 0.0, 1.0]);
        let mid = ap(&[1.0 - 1.0 / 24.0, 0.0, 1.0]);
        let near = ap(&[1.0 - 1.0 / 12.0, 0.0, 1.0]);
        assert!((far - 1.0 / 3.0).abs() < 1e-12 && (near - 0.5).abs() < 1e-12);
        assert!((mid - (0.5 / 2.0 + 0.5 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn op_matches_row_helper() {
        let mut g = Graph::new();
        let d = g.constant(Tensor::new([2, 3], vec![0.1, 0.9, 1.7, 1.1, 0.2, 0.3]).unwrap());
        let out = g.soft_average_precision(d, ApBinning::default()).unwrap();
        let v = g.value(out).data();
        assert_eq!(v[0], ap(&[0.1, 0.9, 1.7]));
        assert_eq!(v[1], ap(&[1.1, 0.2, 0.3]));
    }
}
