//! Planar homographies and dense ground-truth correspondence maps.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Denominators and determinants at or below this magnitude are degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// A 3x3 projective map normalized so that `h[2][2] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl Homography {
    /// Normalizes by `m[2][2]` and checks invertibility.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("homography"));
        }
        let s = m[2][2];
        if s.abs() <= DEGENERATE_EPS {
            return Err(Error::Degenerate("homography with zero h33 cannot be normalized"));
        }
        let h = m.map(|row| row.map(|v| v / s));
        let out = Homography { h };
        let det = out.det();
        if det.abs() <= DEGENERATE_EPS {
            return Err(Error::Singular(det));
        }
        Ok(out)
    }

    /// Row-major 9 values.
    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::InvalidArgument { op: "homography", detail: format!("expected 9 values, got {}", v.len()) });
        }
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn identity() -> Self {
        Homography { h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography { h: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]] }
    }

    /// Scales x by `sx` and y by `sy`.
    pub fn scaling(sx: f64, sy: f64) -> Result<Self> {
        Self::new([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.h
    }

    pub fn row_major(&self) -> [f64; 9] {
        let h = &self.h;
        [h[0][0], h[0][1], h[0][2], h[1][0], h[1][1], h[1][2], h[2][0], h[2][1], h[2][2]]
    }

    pub fn det(&self) -> f64 {
        let h = &self.h;
        h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
            + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0])
    }

    /// Maps `(x, y)`; fails when the point lands at infinity.
    pub fn apply(&self, p: (f64, f64)) -> Result<(f64, f64)> {
        let h = &self.h;
        let w = h[2][0] * p.0 + h[2][1] * p.1 + h[2][2];
        if w.abs() <= DEGENERATE_EPS {
            return Err(Error::PointAtInfinity);
        }
        let x = (h[0][0] * p.0 + h[0][1] * p.1 + h[0][2]) / w;
        let y = (h[1][0] * p.0 + h[1][1] * p.1 + h[1][2]) / w;
        Ok((x, y))
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        let (a, b) = (&self.h, &other.h);
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Homography::new(m)
    }

    pub fn inverse(&self) -> Result<Homography> {
        let h = &self.h;
        let det = self.det();
        if det.abs() <= DEGENERATE_EPS {
            return Err(Error::Singular(det));
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| h[r0][c0] * h[r1][c1] - h[r0][c1] * h[r1][c0];
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        Homography::new(adj.map(|row| row.map(|v| v / det)))
    }

    /// The homography taking each `src[k]` to `dst[k]`, from four point pairs.
    pub fn from_correspondences(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Result<Homography> {
        // Unknowns h11..h32 with h33 = 1; two equations per pair.
        let mut a = [[0.0f64; 9]; 8];
        for k in 0..4 {
            let ((x, y), (u, v)) = (src[k], dst[k]);
            a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let sol = solve8(a).ok_or(Error::Degenerate("point configuration does not determine a homography"))?;
        Homography::new([[sol[0], sol[1], sol[2]], [sol[3], sol[4], sol[5]], [sol[6], sol[7], 1.0]])
    }
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve8(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let piv = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..8 {
            let pivot = a[col];
            let f = a[r][col] / pivot[col];
            for (v, p) in a[r].iter_mut().zip(pivot).skip(col) {
                *v -= f * p;
            }
        }
    }
    let mut x = [0.0; 8];
    for r in (0..8).rev() {
        let s: f64 = (r + 1..8).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][8] - s) / a[r][r];
    }
    Some(x)
}

/// Where each source pixel lands in the target image, with a validity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMap {
    /// `[H, W, 2]` target `(x, y)` per source pixel `(row, col)`.
    pub t: Tensor,
    /// `[H, W]`, 1 where the target lies inside the target image.
    pub valid: Tensor,
}

impl CorrespondenceMap {
    pub fn height(&self) -> usize {
        self.valid.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.valid.shape()[1]
    }

    /// Target of source pixel `(row, col)` when valid.
    pub fn get(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let k = row * self.width() + col;
        (self.valid.data()[k] != 0.0).then(|| (self.t.data()[2 * k], self.t.data()[2 * k + 1]))
    }

    /// Row-major targets of every source pixel, `None` where invalid.
    pub fn targets(&self) -> Vec<Option<(f64, f64)>> {
        (0..self.height()).flat_map(|r| (0..self.width()).map(move |c| (r, c))).map(|(r, c)| self.get(r, c)).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.data().iter().filter(|&&v| v != 0.0).count()
    }
}

/// `T(i, j) = h(j, i)`, valid when it falls within `[0, W'-1] x [0, H'-1]`
/// of the target. Points sent to infinity are invalid.
pub fn build_correspondence_map(h: &Homography, size: (usize, usize), target: (usize, usize)) -> CorrespondenceMap {
    let (rows, cols) = size;
    let (max_y, max_x) = (target.0 as f64 - 1.0, target.1 as f64 - 1.0);
    let mut t = Tensor::zeros([rows, cols, 2]);
    let mut valid = Tensor::zeros([rows, cols]);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            if let Ok((x, y)) = h.apply((j as f64, i as f64)) {
                t.data_mut()[2 * k] = x;
                t.data_mut()[2 * k + 1] = y;
                if (0.0..=max_x).contains(&x) && (0.0..=max_y).contains(&y) {
                    valid.data_mut()[k] = 1.0;
                }
            }
        }
    }
    CorrespondenceMap { t, valid }
}
