//! Keypoint extraction from repeatability and reliability maps.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::ops::bilinear_taps;
use crate::error::{arg_err, shape_err, Result};
use crate::image::Image;
use crate::math;
use crate::network::{FeatureMaps, Network, MIN_INPUT_SIZE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractConfig {
    pub rel_thresh: f64,
    pub rep_thresh: f64,
    pub topk: usize,
    /// Half-width of the square suppression window, in pixels.
    pub nms_radius: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { rel_thresh: 0.7, rep_thresh: 0.7, topk: 5000, nms_radius: 3 }
    }
}

/// A detection in original image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    /// Pyramid level the point was found at (1 for the full image).
    pub scale: f32,
    pub score: f32,
}

/// Keypoints in descending score order with one unit-norm descriptor row each.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KeypointSet {
    pub keypoints: Vec<Keypoint>,
    pub dim: usize,
    /// Row-major `[len, dim]`.
    pub descriptors: Vec<f32>,
}

impl KeypointSet {
    pub fn empty(dim: usize) -> Self {
        KeypointSet { keypoints: Vec::new(), dim, descriptors: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn descriptor(&self, i: usize) -> &[f32] {
        &self.descriptors[i * self.dim..(i + 1) * self.dim]
    }

    /// Checks the ordering, row count and unit-norm invariants.
    pub fn validate(&self) -> Result<()> {
        if self.descriptors.len() != self.keypoints.len() * self.dim {
            return Err(shape_err(
                "keypoint set",
                format!("{} keypoints but {} descriptor values at dim {}", self.len(), self.descriptors.len(), self.dim),
            ));
        }
        if self.keypoints.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(arg_err("keypoint set", "scores are not in descending order"));
        }
        for i in 0..self.len() {
            let n = math::sqrt(self.descriptor(i).iter().map(|&v| (v as f64) * (v as f64)).sum());
            if (n - 1.0).abs() > 1e-5 {
                return Err(arg_err("keypoint set", format!("descriptor {i} has norm {n}")));
            }
        }
        Ok(())
    }

    /// Keeps the first `k` entries.
    pub fn truncate(&mut self, k: usize) {
        self.keypoints.truncate(k);
        self.descriptors.truncate(k * self.dim);
    }
}

/// Pixels `(row, col)` that are strict maxima of `map` (`h x w`) over the
/// `(2r+1)^2` window around them, clipped at the borders.
pub fn local_maxima(map: &[f64], h: usize, w: usize, r: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map[y * w + x];
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            let strict = (y0..=y1).all(|yy| {
                map[yy * w + x0..=yy * w + x1]
                    .iter()
                    .enumerate()
                    .all(|(k, &u)| (yy == y && x0 + k == x) || u < v)
            });
            if strict {
                out.push((y, x));
            }
        }
    }
    out
}

/// Bilinear descriptor lookup at `(x, y)` of `[D, H, W]` data, renormalized.
fn sample_descriptor(desc: &[f64], d: usize, h: usize, w: usize, x: f64, y: f64) -> Option<Vec<f32>> {
    let taps = bilinear_taps(h, w, x, y)?;
    let plane = h * w;
    let v: Vec<f64> = (0..d).map(|c| taps.iter().map(|&(i, t)| t * desc[c * plane + i]).sum()).collect();
    let n = math::sqrt(v.iter().map(|a| a * a).sum());
    if !(n > 0.0) {
        return None;
    }
    Some(v.iter().map(|a| (a / n) as f32).collect())
}

/// Builds the set from ranked `(score, row, col)` candidates.
fn collect_set(maps: &FeatureMaps, d: usize, h: usize, w: usize, cand: Vec<(f64, usize, usize)>) -> KeypointSet {
    let mut set = KeypointSet::empty(d);
    for (score, y, x) in cand {
        if let Some(desc) = sample_descriptor(maps.descriptors.data(), d, h, w, x as f64, y as f64) {
            set.keypoints.push(Keypoint { x: x as f32, y: y as f32, scale: 1.0, score: score as f32 });
            set.descriptors.extend(desc);
        }
    }
    set
}

fn shape3(op: &'static str, s: &[usize]) -> Result<(usize, usize, usize)> {
    match *s {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(shape_err(op, format!("expected [C,H,W], got {s:?}"))),
    }
}

/// Strict local maxima of `R` passing both thresholds, ranked by `R * S`,
/// top-k kept, with descriptors sampled from `X`.
pub fn extract(maps: &FeatureMaps, cfg: &ExtractConfig) -> Result<KeypointSet> {
    let (d, h, w) = shape3("extract", maps.descriptors.shape())?;
    for m in [&maps.reliability, &maps.repeatability] {
        if m.shape() != [1, h, w] {
            return Err(shape_err("extract", format!("score map {:?} does not match {h}x{w}", m.shape())));
        }
    }
    let (r, s) = (maps.repeatability.data(), maps.reliability.data());
    let mut cand: Vec<(f64, usize, usize)> = local_maxima(r, h, w, cfg.nms_radius)
        .into_iter()
        .filter(|&(y, x)| r[y * w + x] >= cfg.rep_thresh && s[y * w + x] >= cfg.rel_thresh)
        .map(|(y, x)| (r[y * w + x] * s[y * w + x], y, x))
        .collect();
    // stable on ties: equal scores keep raster order
    cand.sort_by(|a, b| b.0.total_cmp(&a.0));
    cand.truncate(cfg.topk);
    Ok(collect_set(maps, d, h, w, cand))
}

/// Keypoints at the given pixels `(row, col)`, scored by `R * S` and
/// sorted by descending score. Pixels outside the maps are skipped.
pub fn keypoints_at(maps: &FeatureMaps, pixels: &[(usize, usize)]) -> Result<KeypointSet> {
    let (d, h, w) = shape3("keypoints_at", maps.descriptors.shape())?;
    let (r, s) = (maps.repeatability.data(), maps.reliability.data());
    let mut cand: Vec<(f64, usize, usize)> =
        pixels.iter().filter(|&&(y, x)| y < h && x < w).map(|&(y, x)| (r[y * w + x] * s[y * w + x], y, x)).collect();
    cand.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(collect_set(maps, d, h, w, cand))
}

/// `1, 2^(-1/4), 2^(-2/4), ...` while the smaller image side stays at least 16.
pub fn pyramid_scales(height: usize, width: usize) -> Vec<f64> {
    let side = height.min(width) as f64;
    (0..)
        .map(|k| math::powf(2.0, -(k as f64) / 4.0))
        .take_while(|s| math::round(side * s) >= MIN_INPUT_SIZE as f64)
        .collect()
}

/// Runs the network on each pyramid level, maps points back to the
/// original frame and merges them. Points from different levels closer than
/// `nms_radius` keep only the higher score.
pub fn extract_multiscale(net: &Network, image: &Image, scales: &[f64], cfg: &ExtractConfig) -> Result<KeypointSet> {
    if scales.is_empty() {
        return Err(arg_err("extract_multiscale", "no scales"));
    }
    if scales.iter().any(|s| !(*s > 0.0)) || scales.windows(2).any(|p| p[1] >= p[0]) {
        return Err(arg_err("extract_multiscale", format!("scales {scales:?} must be positive and descending")));
    }
    let (h, w) = (image.height(), image.width());
    let mut all: Vec<(Keypoint, Vec<f32>)> = Vec::new();
    let mut dim = net.config().descriptor_dim;
    for &s in scales {
        let (hs, ws) = (math::round(h as f64 * s) as usize, math::round(w as f64 * s) as usize);
        if hs.min(ws) < MIN_INPUT_SIZE {
            return Err(arg_err("extract_multiscale", format!("scale {s} gives {ws}x{hs}, below {MIN_INPUT_SIZE}")));
        }
        let level = if hs == h && ws == w { image.clone() } else { image.resize(hs, ws)? };
        let maps = net.forward(&level.to_tensor())?;
        let set = extract(&maps, cfg)?;
        dim = set.dim;
        let (fx, fy) = (w as f64 / ws as f64, h as f64 / hs as f64);
        for (i, k) in set.keypoints.iter().enumerate() {
            let x = ((k.x as f64 + 0.5) * fx - 0.5).clamp(0.0, w as f64 - 1.0);
            let y = ((k.y as f64 + 0.5) * fy - 0.5).clamp(0.0, h as f64 - 1.0);
            let kp = Keypoint { x: x as f32, y: y as f32, scale: s as f32, score: k.score };
            all.push((kp, set.descriptor(i).to_vec()));
        }
    }
    all.sort_by(|a, b| b.0.score.total_cmp(&a.0.score));
    let r2 = (cfg.nms_radius * cfg.nms_radius) as f32;
    let mut out = KeypointSet::empty(dim);
    for (kp, desc) in all {
        if out.keypoints.len() >= cfg.topk {
            break;
        }
        let dup = out.keypoints.iter().any(|q| {
            let (dx, dy) = (q.x - kp.x, q.y - kp.y);
            q.scale != kp.scale && dx * dx + dy * dy < r2
        });
        if !dup {
            out.keypoints.push(kp);
            out.descriptors.extend(desc);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn maps(r: Tensor, s: Tensor) -> FeatureMaps {
        let (h, w) = (r.shape()[1], r.shape()[2]);
        let desc = Tensor::from_fn([2, h, w], |i| if i < h * w { 1.0 } else { 0.5 });
        FeatureMaps { descriptors: desc, reliability: s, repeatability: r }
    }

    #[test]
    fn single_spike() {
        let r = Tensor::from_fn([1, 9, 9], |i| if i == 4 * 9 + 6 { 0.9 } else { 0.1 });
        let set = extract(&maps(r, Tensor::full([1, 9, 9], 1.0)), &ExtractConfig::default()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!((set.keypoints[0].x, set.keypoints[0].y), (6.0, 4.0));
        set.validate().unwrap();
    }

    #[test]
    fn constant_map_has_no_maxima() {
        let set = extract(&maps(Tensor::full([1, 9, 9], 0.9), Tensor::full([1, 9, 9], 1.0)), &ExtractConfig::default())
            .unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn scales_stop_at_min_size() {
        let s = pyramid_scales(64, 80);
        assert_eq!(s[0], 1.0);
        assert_eq!(s.len(), 9);
        assert!(s.windows(2).all(|p| p[1] < p[0]));
    }
}
