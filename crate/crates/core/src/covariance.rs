//! Channel covariance of feature maps and the style/structure loss built
//! on the difference of two images' correlation matrices.
//!
//! Elements of the difference matrix above the mean are treated as style
//! (sensitive to appearance changes) and pushed towards zero; the rest are
//! structure and pushed towards their maximum. Only the strict upper
//! triangle participates since the matrix is symmetric with a zero diagonal.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Which stage a covariance matrix comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceKind {
    /// Population covariance of the raw channels.
    Raw,
    /// Covariance of standardized channels, i.e. Pearson correlations.
    Standardized,
    /// Elementwise absolute difference of two standardized covariances.
    Difference,
}

/// A `[C, C]` matrix tagged with the stage it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    pub values: Tensor,
    pub kind: CovarianceKind,
}

impl CovarianceMatrix {
    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }
}

/// Binary selectors over the strict upper triangle of a `[C, C]` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPair {
    pub style: Tensor,
    pub structure: Tensor,
    /// Mean of the strict upper-triangle elements.
    pub threshold: f64,
}

impl MaskPair {
    pub fn style_count(&self) -> usize {
        self.style.data().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn structure_count(&self) -> usize {
        self.structure.data().iter().filter(|&&v| v != 0.0).count()
    }

    /// Mean of `m` over the style selection, 0 when it is empty.
    pub fn style_mean(&self, m: &Tensor) -> f64 {
        selected_mean(m, &self.style)
    }

    /// Mean of `m` over the structure selection, 0 when it is empty.
    pub fn structure_mean(&self, m: &Tensor) -> f64 {
        selected_mean(m, &self.structure)
    }
}

fn selected_mean(m: &Tensor, mask: &Tensor) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (v, k) in m.data().iter().zip(mask.data()) {
        if *k != 0.0 {
            sum += v;
            n += 1;
        }
    }
    if n == 0 { 0.0 } else { sum / n as f64 }
}

/// Weights of the three training terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_reli: f64,
    pub lambda_repeat: f64,
    pub lambda_cov: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_reli: 1.0, lambda_repeat: 1.0, lambda_cov: 2.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_reli, self.lambda_repeat, self.lambda_cov];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument { op: "loss weights", detail: format!("{self:?} must be finite and >= 0") })
        }
    }
}

/// Which branches of the covariance loss are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CovBranches {
    pub style: bool,
    pub structure: bool,
}

impl Default for CovBranches {
    fn default() -> Self {
        CovBranches { style: true, structure: true }
    }
}

fn channels_by_pixels(g: &Graph, x: Var, op: &'static str) -> Result<(usize, usize)> {
    match *g.shape(x) {
        [c, h, w] if c > 0 => {
            if h * w < 2 {
                Err(Error::Degenerate("covariance needs at least two pixels"))
            } else {
                Ok((c, h * w))
            }
        }
        ref s => Err(shape_err(op, format!("expected [C, H, W], got {s:?}"))),
    }
}

/// Population covariance `(1/HW) (X - mu 1^T)(X - mu 1^T)^T` of a `[C, H, W]` map.
pub fn covariance(g: &mut Graph, x: Var) -> Result<Var> {
    let (c, n) = channels_by_pixels(g, x, "covariance")?;
    let flat = g.reshape(x, &[c, n])?;
    let mu = g.reduce(flat, crate::autodiff::Reduction::Mean, &[1])?;
    let mu = g.reshape(mu, &[c, 1])?;
    let mu = g.broadcast_axis(mu, 1, n)?;
    let centered = g.sub(flat, mu)?;
    let t = g.transpose(centered)?;
    let prod = g.matmul(centered, t)?;
    Ok(g.scale(prod, 1.0 / n as f64))
}

/// Per-channel zero mean, unit population variance. Constant channels become zeros.
pub fn standardize(g: &mut Graph, x: Var) -> Result<Var> {
    let (c, n) = channels_by_pixels(g, x, "standardize")?;
    let shape = g.shape(x).to_vec();
    let flat = g.reshape(x, &[c, n])?;
    let s = g.standardize_rows(flat)?;
    g.reshape(s, &shape)
}

/// `(1/HW) X_s X_s^T` of an already standardized `[C, H, W]` map.
pub fn standardized_covariance(g: &mut Graph, xs: Var) -> Result<Var> {
    let (c, n) = channels_by_pixels(g, xs, "standardized_covariance")?;
    let flat = g.reshape(xs, &[c, n])?;
    let t = g.transpose(flat)?;
    let prod = g.matmul(flat, t)?;
    Ok(g.scale(prod, 1.0 / n as f64))
}

/// `|s1 - s2|` elementwise.
pub fn covariance_difference(g: &mut Graph, s1: Var, s2: Var) -> Result<Var> {
    if g.shape(s1) != g.shape(s2) || g.shape(s1).len() != 2 {
        return Err(shape_err(
            "covariance_difference",
            format!("{:?} vs {:?}", g.shape(s1), g.shape(s2)),
        ));
    }
    let d = g.sub(s1, s2)?;
    Ok(g.abs(d))
}

/// Splits the strict upper triangle of `sigma_c` at its mean. Elements
/// strictly above the mean are style, the rest structure.
pub fn build_masks(sigma_c: &Tensor) -> Result<MaskPair> {
    let c = match *sigma_c.shape() {
        [a, b] if a == b => a,
        ref s => return Err(shape_err("build_masks", format!("expected square matrix, got {s:?}"))),
    };
    if c < 2 {
        return Err(Error::Degenerate("build_masks needs at least two channels"));
    }
    let d = sigma_c.data();
    let upper: Vec<usize> = (0..c).flat_map(|i| (i + 1..c).map(move |j| i * c + j)).collect();
    let threshold = upper.iter().map(|&k| d[k]).sum::<f64>() / upper.len() as f64;
    let mut style = Tensor::zeros([c, c]);
    let mut structure = Tensor::zeros([c, c]);
    for &k in &upper {
        if d[k] > threshold {
            style.data_mut()[k] = 1.0;
        } else {
            structure.data_mut()[k] = 1.0;
        }
    }
    Ok(MaskPair { style, structure, threshold })
}

fn masked_mean(g: &mut Graph, x: Var, mask: &Tensor, count: usize) -> Result<Var> {
    let m = g.constant(mask.clone());
    let picked = g.mul(x, m)?;
    let s = g.sum(picked);
    Ok(g.scale(s, 1.0 / count as f64))
}

/// Style mean plus one minus structure mean. An empty selection contributes
/// nothing, and disabled branches are skipped. The masks are constants, so
/// gradients reach `sigma_c` only through the selected values.
pub fn cov_loss(g: &mut Graph, sigma_c: Var, masks: &MaskPair, branches: CovBranches) -> Result<Var> {
    if g.shape(sigma_c) != masks.style.shape() {
        return Err(shape_err(
            "cov_loss",
            format!("matrix {:?} vs masks {:?}", g.shape(sigma_c), masks.style.shape()),
        ));
    }
    let mut loss = g.constant(Tensor::scalar(0.0));
    let n_style = masks.style_count();
    if branches.style && n_style > 0 {
        let m = masked_mean(g, sigma_c, &masks.style, n_style)?;
        loss = g.add(loss, m)?;
    }
    let n_structure = masks.structure_count();
    if branches.structure && n_structure > 0 {
        let m = masked_mean(g, sigma_c, &masks.structure, n_structure)?;
        let neg = g.scale(m, -1.0);
        let term = g.add_scalar(neg, 1.0);
        loss = g.add(loss, term)?;
    }
    Ok(loss)
}

/// `lambda_reli * reli + lambda_repeat * repeat + lambda_cov * cov`.
pub fn total_loss(g: &mut Graph, reli: Var, repeat: Var, cov: Var, w: &LossWeights) -> Result<Var> {
    for v in [reli, repeat, cov] {
        if g.value(v).numel() != 1 {
            return Err(shape_err("total_loss", format!("expected scalar, got {:?}", g.shape(v))));
        }
    }
    let a = g.scale(reli, w.lambda_reli);
    let b = g.scale(repeat, w.lambda_repeat);
    let c = g.scale(cov, w.lambda_cov);
    let ab = g.add(a, b)?;
    g.add(ab, c)
}

/// Result of the full covariance-loss pipeline on one image pair.
pub struct PairCovLoss {
    pub loss: Var,
    pub sigma_c: Tensor,
    pub masks: MaskPair,
}

/// Standardizes both maps, takes their correlation matrices, and applies
/// [`cov_loss`] to the absolute difference with masks rebuilt from it.
pub fn pair_cov_loss(g: &mut Graph, x1: Var, x2: Var, branches: CovBranches) -> Result<PairCovLoss> {
    if g.shape(x1)[0] != g.shape(x2)[0] {
        return Err(shape_err("pair_cov_loss", format!("{:?} vs {:?}", g.shape(x1), g.shape(x2))));
    }
    let s1 = standardize(g, x1)?;
    let s1 = standardized_covariance(g, s1)?;
    let s2 = standardize(g, x2)?;
    let s2 = standardized_covariance(g, s2)?;
    let sigma_c = covariance_difference(g, s1, s2)?;
    let values = g.value(sigma_c).clone();
    let masks = build_masks(&values)?;
    let loss = cov_loss(g, sigma_c, &masks, branches)?;
    Ok(PairCovLoss { loss, sigma_c: values, masks })
}

/// Plain-value matrices of one image pair, for inspection and dumps.
#[derive(Clone, Debug)]
pub struct CovarianceReport {
    pub standardized: [CovarianceMatrix; 2],
    pub difference: CovarianceMatrix,
    pub masks: MaskPair,
    pub loss: f64,
}

pub fn covariance_report(x1: &Tensor, x2: &Tensor) -> Result<CovarianceReport> {
    let mut g = Graph::new();
    let a = g.constant(x1.clone());
    let b = g.constant(x2.clone());
    let mut stages = Vec::with_capacity(2);
    for x in [a, b] {
        let s = standardize(&mut g, x)?;
        let s = standardized_covariance(&mut g, s)?;
        stages.push(s);
    }
    let d = covariance_difference(&mut g, stages[0], stages[1])?;
    let masks = build_masks(g.value(d))?;
    let loss = cov_loss(&mut g, d, &masks, CovBranches::default())?;
    let std_of = |v: Var| CovarianceMatrix { values: g.value(v).clone(), kind: CovarianceKind::Standardized };
    Ok(CovarianceReport {
        standardized: [std_of(stages[0]), std_of(stages[1])],
        difference: CovarianceMatrix { values: g.value(d).clone(), kind: CovarianceKind::Difference },
        masks,
        loss: g.value(loss).item(),
    })
}
