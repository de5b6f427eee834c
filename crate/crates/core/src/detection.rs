//! Detector training losses.
//!
//! The repeatability loss compares the first repeatability map `R` with the
//! second map resampled into the first frame (`R'_T`) patch by patch, and
//! adds a peakiness term so that flat maps are penalized. The reliability
//! loss ranks the true correspondence of each anchor descriptor against
//! sampled negatives with a binned average precision and weights it by the
//! predicted reliability.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{ApBinning, Graph, PatchReduction, Reduction, Var};
use crate::autodiff::ops::bilinear_taps;
use crate::error::{arg_err, shape_err, Error, Result};
use crate::geometry::CorrespondenceMap;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepeatabilityConfig {
    /// Side of the non-overlapping patches.
    pub patch_size: usize,
    pub cosim_weight: f64,
    pub peaky_weight: f64,
}

impl Default for RepeatabilityConfig {
    fn default() -> Self {
        RepeatabilityConfig { patch_size: 16, cosim_weight: 1.0, peaky_weight: 1.0 }
    }
}

impl RepeatabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(arg_err("repeatability config", format!("patch size {} < 2", self.patch_size)));
        }
        if !(self.cosim_weight >= 0.0 && self.peaky_weight >= 0.0) {
            return Err(arg_err("repeatability config", "weights must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReliabilityConfig {
    /// Negatives lie strictly farther than this from the true match, in pixels.
    pub sample_radius: f64,
    pub num_negatives: usize,
    /// AP level at which the loss does not care about the reliability score.
    pub kappa: f64,
    /// Anchors are taken on a grid with this spacing.
    pub anchor_stride: usize,
    pub binning: ApBinning,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        ReliabilityConfig {
            sample_radius: 8.0,
            num_negatives: 64,
            kappa: 0.5,
            anchor_stride: 4,
            binning: ApBinning::default(),
        }
    }
}

impl ReliabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: alloc::string::String| Err(arg_err("reliability config", d));
        if !(self.sample_radius >= 1.0) {
            return bad(format!("sample radius {} < 1", self.sample_radius));
        }
        if self.num_negatives == 0 || self.anchor_stride == 0 {
            return bad("num_negatives and anchor_stride must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return bad(format!("kappa {} outside [0, 1]", self.kappa));
        }
        if self.binning.bins < 2 || !(self.binning.max_distance > 0.0) {
            return bad("binning needs >= 2 bins over a positive range".into());
        }
        Ok(())
    }
}

/// Pixels of the first frame whose correspondence can be sampled from a
/// `(height, width)` map. `[1, H, W]` of zeros and ones.
pub fn warp_mask(t: &CorrespondenceMap, size: (usize, usize)) -> Tensor {
    let (h, w) = (t.height(), t.width());
    let data = t
        .targets()
        .into_iter()
        .map(|p| match p.and_then(|(x, y)| bilinear_taps(size.0, size.1, x, y)) {
            Some(_) => 1.0,
            None => 0.0,
        })
        .collect();
    Tensor::new([1, h, w], data).expect("sized from the map")
}

/// `R'_T(i, j) = R'(T(i, j))` by bilinear sampling, zero where `T` is
/// invalid or leaves `R'`. The result lives in the frame of `t`.
pub fn warp_repeatability(g: &mut Graph, r_prime: Var, t: &CorrespondenceMap) -> Result<Var> {
    let c = match *g.shape(r_prime) {
        [c, _, _] => c,
        ref s => return Err(shape_err("warp_repeatability", format!("expected [C,H,W], got {s:?}"))),
    };
    let rows = g.bilinear_gather(r_prime, &t.targets())?;
    if c == 1 {
        g.reshape(rows, &[1, t.height(), t.width()])
    } else {
        let cols = g.transpose(rows)?;
        g.reshape(cols, &[c, t.height(), t.width()])
    }
}

/// Value-level resampling for inspection and tests.
pub fn warp_map(r_prime: &Tensor, t: &CorrespondenceMap) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let r = g.constant(r_prime.clone());
    let out = warp_repeatability(&mut g, r, t)?;
    let mask = match *r_prime.shape() {
        [_, h, w] => warp_mask(t, (h, w)),
        _ => unreachable!("checked by warp_repeatability"),
    };
    Ok((g.value(out).clone(), mask))
}

/// Terms of the repeatability loss.
#[derive(Clone, Copy, Debug)]
pub struct RepeatabilityLoss {
    /// `cosim_weight * cosim + peaky_weight * peaky`.
    pub loss: Var,
    pub cosim: Var,
    pub peaky: Var,
    /// Patches that entered the averages.
    pub patches: usize,
}

impl RepeatabilityLoss {
    /// No patch had support; all terms are zero constants.
    pub fn is_empty(&self) -> bool {
        self.patches == 0
    }
}

/// Patch-wise cosine similarity plus peakiness between `r` and `r_t`, both
/// `[1, H, W]`, with `mask` `[1, H, W]` marking pixels where `r_t` is defined.
///
/// A patch takes part when it has at least one valid pixel and both masked
/// patches are non-zero. Peakiness is `max - mean` over the patch, for `r`
/// on its raw values and for `r_t` on its masked values, averaged over the
/// two maps.
pub fn repeatability_loss(
    g: &mut Graph,
    r: Var,
    r_t: Var,
    mask: &Tensor,
    cfg: &RepeatabilityConfig,
) -> Result<RepeatabilityLoss> {
    cfg.validate()?;
    let shape = g.shape(r).to_vec();
    if g.shape(r_t) != shape.as_slice() || mask.shape() != shape.as_slice() || shape.len() != 3 || shape[0] != 1 {
        return Err(shape_err(
            "repeatability_loss",
            format!("maps {:?} / {:?} and mask {:?} must share one [1,H,W] shape", shape, g.shape(r_t), mask.shape()),
        ));
    }
    let n = cfg.patch_size;
    let (h, w) = (shape[1], shape[2]);
    let (ph, pw) = (h / n, w / n);
    if ph == 0 || pw == 0 {
        return Ok(empty_repeat(g));
    }

    let m = g.constant(mask.clone());
    let a = g.mul(r, m)?;
    let b = g.mul(r_t, m)?;
    let ab = g.mul(a, b)?;
    let aa = g.square(a);
    let bb = g.square(b);
    let dot = g.patch_reduce(ab, n, PatchReduction::Sum)?;
    let na = g.patch_reduce(aa, n, PatchReduction::Sum)?;
    let nb = g.patch_reduce(bb, n, PatchReduction::Sum)?;

    let support = patch_support(mask, n);
    let (na_v, nb_v) = (g.value(na).data().to_vec(), g.value(nb).data().to_vec());
    let include: Vec<f64> = (0..ph * pw)
        .map(|p| if support[p] && na_v[p] > 0.0 && nb_v[p] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let count = include.iter().filter(|&&v| v > 0.0).count();
    if count == 0 {
        return Ok(empty_repeat(g));
    }
    let weights = g.constant(Tensor::new([1, ph, pw], include.clone())?);
    // Excluded patches get a unit denominator so nothing divides by zero.
    let pad = g.constant(Tensor::new([1, ph, pw], include.iter().map(|v| 1.0 - v).collect())?);
    let prod = g.mul(na, nb)?;
    let prod = g.add(prod, pad)?;
    let denom = g.sqrt(prod);
    let cos = g.div(dot, denom)?;
    let cos = g.mul(cos, weights)?;
    let cos_sum = g.sum(cos);
    let mean_cos = g.scale(cos_sum, 1.0 / count as f64);
    let cosim = g.scale(mean_cos, -1.0);
    let cosim = g.add_scalar(cosim, 1.0);

    let peak = |g: &mut Graph, x: Var| -> Result<Var> {
        let mx = g.patch_reduce(x, n, PatchReduction::Max)?;
        let sm = g.patch_reduce(x, n, PatchReduction::Sum)?;
        let mean = g.scale(sm, 1.0 / (n * n) as f64);
        let p = g.sub(mx, mean)?;
        let p = g.mul(p, weights)?;
        let s = g.sum(p);
        Ok(g.scale(s, 1.0 / count as f64))
    };
    let pr = peak(g, r)?;
    let pt = peak(g, b)?;
    let both = g.add(pr, pt)?;
    let avg = g.scale(both, -0.5);
    let peaky = g.add_scalar(avg, 1.0);

    let wc = g.scale(cosim, cfg.cosim_weight);
    let wp = g.scale(peaky, cfg.peaky_weight);
    let loss = g.add(wc, wp)?;
    Ok(RepeatabilityLoss { loss, cosim, peaky, patches: count })
}

fn empty_repeat(g: &mut Graph) -> RepeatabilityLoss {
    let zero = g.constant(Tensor::scalar(0.0));
    RepeatabilityLoss { loss: zero, cosim: zero, peaky: zero, patches: 0 }
}

/// Whether each full patch holds at least one non-zero mask pixel.
fn patch_support(mask: &Tensor, n: usize) -> Vec<bool> {
    let (h, w) = (mask.shape()[1], mask.shape()[2]);
    let (ph, pw) = (h / n, w / n);
    let d = mask.data();
    let mut out = vec![false; ph * pw];
    for (p, o) in out.iter_mut().enumerate() {
        let (py, px) = (p / pw, p % pw);
        *o = (0..n).any(|dy| d[(py * n + dy) * w + px * n..][..n].iter().any(|&v| v != 0.0));
    }
    out
}

/// Terms of the reliability loss.
#[derive(Clone, Copy, Debug)]
pub struct ReliabilityLoss {
    pub loss: Var,
    /// `[P]` average precision per anchor.
    pub ap: Var,
    /// `[P, 1 + num_negatives]` descriptor distances, positive first.
    pub distances: Var,
    pub anchors: usize,
}

/// Anchor pixels `(row, col)` on the stride grid whose correspondence falls
/// inside a `(height, width)` map, with their targets.
pub fn reliability_anchors(
    t: &CorrespondenceMap,
    size: (usize, usize),
    stride: usize,
) -> Vec<((usize, usize), (f64, f64))> {
    let start = stride / 2;
    let mut out = Vec::new();
    for row in (start..t.height()).step_by(stride.max(1)) {
        for col in (start..t.width()).step_by(stride.max(1)) {
            if let Some((x, y)) = t.get(row, col) {
                if bilinear_taps(size.0, size.1, x, y).is_some() {
                    out.push(((row, col), (x, y)));
                }
            }
        }
    }
    out
}

/// Pixels of an `h x w` grid strictly farther than `radius` from `center`:
/// `count` draws, uniform over that set.
fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    (h, w): (usize, usize),
    center: (f64, f64),
    radius: f64,
    count: usize,
) -> Option<Vec<(f64, f64)>> {
    let far = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
        dx * dx + dy * dy > radius * radius
    };
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < 16 * count {
        tries += 1;
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        if far(x, y) {
            out.push((x as f64, y as f64));
        }
    }
    if out.len() < count {
        // Rejection stalled: the admissible set is small, draw from it directly.
        let pool: Vec<(f64, f64)> =
            (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| far(x, y)).map(|(x, y)| (x as f64, y as f64)).collect();
        if pool.is_empty() {
            return None;
        }
        while out.len() < count {
            out.push(pool[rng.random_range(0..pool.len())]);
        }
    }
    Some(out)
}

/// Mean over anchors of `1 - (AP * S + kappa * (1 - S))`.
///
/// `x1` `[D,H,W]` and `s1` `[1,H,W]` live in the first frame, `x2`
/// `[D,H2,W2]` in the second, and `t` maps first-frame pixels into the
/// second. Each anchor's positive is `x2` sampled at its correspondence;
/// negatives are pixels of `x2` drawn with `rng`.
pub fn reliability_loss<R: Rng + ?Sized>(
    g: &mut Graph,
    x1: Var,
    x2: Var,
    s1: Var,
    t: &CorrespondenceMap,
    cfg: &ReliabilityConfig,
    rng: &mut R,
) -> Result<ReliabilityLoss> {
    cfg.validate()?;
    let (d, h, w) = match *g.shape(x1) {
        [d, h, w] => (d, h, w),
        ref s => return Err(shape_err("reliability_loss", format!("x1 must be [D,H,W], got {s:?}"))),
    };
    let (h2, w2) = match *g.shape(x2) {
        [d2, h2, w2] if d2 == d => (h2, w2),
        ref s => return Err(shape_err("reliability_loss", format!("x2 must be [{d},H,W], got {s:?}"))),
    };
    if g.shape(s1) != [1, h, w] || t.height() != h || t.width() != w {
        return Err(shape_err(
            "reliability_loss",
            format!("s1 {:?} and correspondences {}x{} must match x1 {h}x{w}", g.shape(s1), t.height(), t.width()),
        ));
    }
    let anchors = reliability_anchors(t, (h2, w2), cfg.anchor_stride);
    if anchors.is_empty() {
        return Err(Error::EmptySupervision);
    }
    let l = cfg.num_negatives + 1;
    let mut first = Vec::with_capacity(anchors.len() * l);
    let mut second = Vec::with_capacity(anchors.len() * l);
    let mut at = Vec::with_capacity(anchors.len());
    for &((row, col), target) in &anchors {
        let negs = sample_negatives(rng, (h2, w2), target, cfg.sample_radius, cfg.num_negatives)
            .ok_or(Error::EmptySupervision)?;
        let here = Some((col as f64, row as f64));
        at.push(here);
        first.extend(core::iter::repeat_n(here, l));
        second.push(Some(target));
        second.extend(negs.into_iter().map(Some));
    }
    let p = anchors.len();
    let a = g.bilinear_gather(x1, &first)?;
    let b = g.bilinear_gather(x2, &second)?;
    let diff = g.sub(a, b)?;
    let sq = g.square(diff);
    let d2 = g.reduce(sq, Reduction::Sum, &[1])?;
    // keeps the square root differentiable when a pair coincides
    let d2 = g.add_scalar(d2, 1e-12);
    let dist = g.sqrt(d2);
    let dist = g.reshape(dist, &[p, l])?;
    let ap = g.soft_average_precision(dist, cfg.binning)?;

    let s = g.bilinear_gather(s1, &at)?;
    let s = g.reshape(s, &[p])?;
    // 1 - kappa - S * (AP - kappa)
    let gap = g.add_scalar(ap, -cfg.kappa);
    let weighted = g.mul(s, gap)?;
    let per = g.scale(weighted, -1.0);
    let per = g.add_scalar(per, 1.0 - cfg.kappa);
    let loss = g.mean(per);
    Ok(ReliabilityLoss { loss, ap, distances: dist, anchors: p })
}
