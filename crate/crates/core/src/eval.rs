//! Held-out evaluation on synthetic pairs.

use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::covariance_report;
use crate::error::Result;
use crate::image::Image;
use crate::keypoints::{extract, keypoints_at, ExtractConfig, KeypointSet};
use crate::matching::{match_descriptors, mma, MatchPolicy, MmaReport, MMA_THRESHOLDS};
use crate::network::Network;
use crate::synth::{synth_pair, AugConfig, PairSample};

/// `count` pairs cycling through `images`, drawn from one seeded stream.
pub fn held_out_pairs(images: &[Image], count: usize, aug: &AugConfig, seed: u64) -> Result<Vec<PairSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|k| synth_pair(&images[k % images.len()], &mut rng, aug)).collect()
}

/// Matching accuracy of one pair together with the keypoints used.
#[derive(Clone, Debug)]
pub struct PairEval {
    pub report: MmaReport,
    pub keypoints: [KeypointSet; 2],
}

/// Extracts keypoints in both views, matches them and scores the matches
/// against the pair's homography.
pub fn evaluate_pair(net: &Network, pair: &PairSample, cfg: &ExtractConfig, policy: MatchPolicy) -> Result<PairEval> {
    let (m1, m2) = net.forward_pair(&pair.i1.to_tensor(), &pair.i2.to_tensor())?;
    let a = extract(&m1, cfg)?;
    let b = extract(&m2, cfg)?;
    let matches = match_descriptors(&a, &b, policy);
    let report = mma(&matches, &a, &b, &pair.homography, &MMA_THRESHOLDS);
    Ok(PairEval { report, keypoints: [a, b] })
}

/// Same protocol with keypoints drawn uniformly at random (without
/// replacement) in each view, `budget[k]` of them in view `k`.
pub fn evaluate_random_pair<R: Rng + ?Sized>(
    net: &Network,
    pair: &PairSample,
    budget: [usize; 2],
    policy: MatchPolicy,
    rng: &mut R,
) -> Result<MmaReport> {
    let (m1, m2) = net.forward_pair(&pair.i1.to_tensor(), &pair.i2.to_tensor())?;
    let mut pick = |img: &Image, n: usize| -> Vec<(usize, usize)> {
        let w = img.width();
        let total = img.height() * w;
        index::sample(rng, total, n.min(total)).into_iter().map(|i| (i / w, i % w)).collect()
    };
    let pa = pick(&pair.i1, budget[0]);
    let pb = pick(&pair.i2, budget[1]);
    let a = keypoints_at(&m1, &pa)?;
    let b = keypoints_at(&m2, &pb)?;
    let matches = match_descriptors(&a, &b, policy);
    Ok(mma(&matches, &a, &b, &pair.homography, &MMA_THRESHOLDS))
}

/// Mean over pairs of the style-selected correlation difference of the
/// descriptor maps.
pub fn style_masked_mean(net: &Network, pairs: &[PairSample]) -> Result<f64> {
    let mut acc = 0.0;
    for p in pairs {
        let (m1, m2) = net.forward_pair(&p.i1.to_tensor(), &p.i2.to_tensor())?;
        let rep = covariance_report(&m1.descriptors, &m2.descriptors)?;
        acc += rep.masks.style_mean(&rep.difference.values);
    }
    Ok(if pairs.is_empty() { 0.0 } else { acc / pairs.len() as f64 })
}
