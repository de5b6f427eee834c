//! Brute-force reference implementations. Deliberately naive and written
//! independently of the library code paths they check.
#![allow(dead_code, clippy::too_many_arguments, clippy::type_complexity)]

/// Direct nested-loop cross-correlation of `[cin,h,w]` with `[cout,cin,k,k]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    dil: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    let wo = (w + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky * dil) as isize - pad as isize;
                            let ix = (ox * stride + kx * dil) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += input[(ci * h + iy as usize) * w + ix as usize]
                                * kernel[((co * cin + ci) * k + ky) * k + kx];
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    (out, ho, wo)
}

/// Per-channel correlation built from single-channel dense correlations.
pub fn depthwise(
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    k: usize,
    pad: usize,
    dil: usize,
) -> Vec<f64> {
    let mut out = Vec::new();
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        let kern = &kernel[ch * k * k..(ch + 1) * k * k];
        let (o, _, _) = conv2d(plane, 1, h, w, kern, 1, k, 1, pad, dil);
        out.extend(o);
    }
    out
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

/// Population covariance of the rows of `x` `[c, n]` by explicit double loops.
pub fn covariance(x: &[f64], c: usize, n: usize) -> Vec<f64> {
    let means: Vec<f64> = (0..c).map(|i| x[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let mut acc = 0.0;
            for p in 0..n {
                acc += (x[i * n + p] - means[i]) * (x[j * n + p] - means[j]);
            }
            out[i * c + j] = acc / n as f64;
        }
    }
    out
}

/// Pearson correlation matrix by explicit loops.
pub fn correlation(x: &[f64], c: usize, n: usize) -> Vec<f64> {
    let cov = covariance(x, c, n);
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let si = cov[i * c + i].sqrt();
            let sj = cov[j * c + j].sqrt();
            out[i * c + j] = cov[i * c + j] / (si * sj);
        }
    }
    out
}

/// Strict local maxima of `r` within a `(2r+1)^2` window, filtered by
/// thresholds, ranked by `r*s`, truncated to `topk`. Returns `(x, y, score)`.
pub fn nms(
    rep: &[f64],
    rel: &[f64],
    h: usize,
    w: usize,
    radius: usize,
    rep_thresh: f64,
    rel_thresh: f64,
    topk: usize,
) -> Vec<(usize, usize, f64)> {
    let mut found = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = rep[y * w + x];
            let mut is_max = true;
            for yy in 0..h {
                for xx in 0..w {
                    if (yy, xx) == (y, x) {
                        continue;
                    }
                    let dy = (yy as isize - y as isize).unsigned_abs();
                    let dx = (xx as isize - x as isize).unsigned_abs();
                    if dy <= radius && dx <= radius && rep[yy * w + xx] >= v {
                        is_max = false;
                    }
                }
            }
            if is_max && v >= rep_thresh && rel[y * w + x] >= rel_thresh {
                found.push((x, y, v * rel[y * w + x]));
            }
        }
    }
    // Descending score, ties by row-major position.
    found.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.1, a.0).cmp(&(b.1, b.0))));
    found.truncate(topk);
    found
}

/// Full distance matrix then per-row argmin (lowest index on ties).
pub fn nearest_neighbors(a: &[f32], b: &[f32], dim: usize) -> Vec<(usize, f64)> {
    let na = a.len() / dim;
    let nb = b.len() / dim;
    let mut dist = vec![vec![0.0f64; nb]; na];
    for i in 0..na {
        for j in 0..nb {
            dist[i][j] = (0..dim)
                .map(|d| {
                    let t = a[i * dim + d] as f64 - b[j * dim + d] as f64;
                    t * t
                })
                .sum::<f64>()
                .sqrt();
        }
    }
    (0..na)
        .map(|i| {
            let mut best = 0;
            for j in 1..nb {
                if dist[i][j] < dist[i][best] {
                    best = j;
                }
            }
            (best, dist[i][best])
        })
        .collect()
}

/// Mutual nearest neighbours by explicit two-way argmin.
pub fn mutual_nn(a: &[f32], b: &[f32], dim: usize) -> Vec<(usize, usize, f64)> {
    let fwd = nearest_neighbors(a, b, dim);
    let bwd = nearest_neighbors(b, a, dim);
    fwd.iter()
        .enumerate()
        .filter(|(i, (j, _))| bwd[*j].0 == *i)
        .map(|(i, &(j, d))| (i, j, d))
        .collect()
}

/// Fraction of matches whose projected point lands within each threshold.
pub fn mma(pairs: &[((f64, f64), (f64, f64))], h: &[[f64; 3]; 3], thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| {
            if pairs.is_empty() {
                return 0.0;
            }
            let ok = pairs
                .iter()
                .filter(|((xa, ya), (xb, yb))| {
                    let z = h[2][0] * xa + h[2][1] * ya + h[2][2];
                    let u = (h[0][0] * xa + h[0][1] * ya + h[0][2]) / z;
                    let v = (h[1][0] * xa + h[1][1] * ya + h[1][2]) / z;
                    ((u - xb).powi(2) + (v - yb).powi(2)).sqrt() <= t
                })
                .count();
            ok as f64 / pairs.len() as f64
        })
        .collect()
}

/// Eigenvalues of a symmetric `n x n` matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

/// Pixels `(row, col)` whose value beats every other pixel within Chebyshev
/// distance `r`.
pub fn strict_maxima(map: &[f64], h: usize, w: usize, r: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let v = map[(y * w as isize + x) as usize];
            let mut ok = true;
            for dy in -(r as isize)..=r as isize {
                for dx in -(r as isize)..=r as isize {
                    let (yy, xx) = (y + dy, x + dx);
                    if (dy, dx) == (0, 0) || yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    if map[(yy * w as isize + xx) as usize] >= v {
                        ok = false;
                    }
                }
            }
            if ok {
                out.push((y as usize, x as usize));
            }
        }
    }
    out
}

/// Squared Euclidean distance accumulated in f64.
pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum()
}

/// Index of the closest row of `set` (`[n, dim]`) to `q`, first on ties.
pub fn nearest(q: &[f32], set: &[f32], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, row) in set.chunks_exact(dim).enumerate() {
        let d = sq_dist(q, row);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Projective map of a point by a row-major 3x3 matrix.
pub fn project(m: &[f64; 9], x: f64, y: f64) -> (f64, f64) {
    let w = m[6] * x + m[7] * y + m[8];
    ((m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w)
}
