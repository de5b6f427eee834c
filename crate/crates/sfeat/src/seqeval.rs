//! Matching accuracy over a planar sequence.

use std::time::Instant;

use anyhow::{Context, Result};
use sfeat_core::image::Image;
use sfeat_core::keypoints::{extract_multiscale, pyramid_scales, ExtractConfig, KeypointSet};
use sfeat_core::matching::{match_descriptors, mean_mma, mma, MatchPolicy, MMA_THRESHOLDS};
use sfeat_core::network::Network;

use crate::report::{Curve, MmaSummary};
use crate::sequence::Sequence;

/// Pyramid levels to run on one image.
#[derive(Clone, Debug, PartialEq)]
pub enum Scales {
    /// `pyramid_scales` of each image.
    Auto,
    Fixed(Vec<f64>),
}

impl Scales {
    /// `auto` or a comma-separated list of descending factors.
    pub fn parse(s: &str) -> Result<Scales> {
        if s.trim() == "auto" {
            return Ok(Scales::Auto);
        }
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad scale {t:?}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scales::Fixed(v))
    }

    pub fn resolve(&self, img: &Image) -> Vec<f64> {
        match self {
            Scales::Auto => pyramid_scales(img.height(), img.width()),
            Scales::Fixed(v) => v.clone(),
        }
    }
}

pub fn extract_image(net: &Network, img: &Image, scales: &Scales, cfg: &ExtractConfig) -> Result<KeypointSet> {
    Ok(extract_multiscale(net, img, &scales.resolve(img), cfg)?)
}

/// Extracts on the reference once, then matches it against every target
/// and averages the per-pair accuracy curves.
pub fn evaluate_sequence(
    net: &Network,
    seq: &Sequence,
    scales: &Scales,
    cfg: &ExtractConfig,
    policy: MatchPolicy,
    label: &str,
) -> Result<MmaSummary> {
    let start = Instant::now();
    let a = extract_image(net, &seq.reference, scales, cfg)?;
    let mut reports = Vec::new();
    let (mut matches, mut keypoints) = (Vec::new(), Vec::new());
    for (img, h) in seq.targets.iter().zip(&seq.homographies) {
        let b = extract_image(net, img, scales, cfg)?;
        let m = match_descriptors(&a, &b, policy);
        reports.push(mma(&m, &a, &b, h, &MMA_THRESHOLDS));
        matches.push(m.len());
        keypoints.push((a.len(), b.len()));
    }
    Ok(MmaSummary {
        curve: Curve { label: label.to_string(), thresholds: MMA_THRESHOLDS.to_vec(), fractions: mean_mma(&reports) },
        pairs: seq.targets.len(),
        matches,
        keypoints,
        extract: *cfg,
        scales: scales.resolve(&seq.reference),
        seconds: start.elapsed().as_secs_f64(),
    })
}
