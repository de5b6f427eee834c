//! Matching-time measurement.

use std::time::Instant;

use anyhow::{ensure, Result};
use sfeat_core::keypoints::KeypointSet;
use sfeat_core::matching::{match_descriptors, MatchPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchStats {
    pub count_a: usize,
    pub count_b: usize,
    pub dim: usize,
    pub matches: usize,
    /// Seconds of each timed run, in order.
    pub runs: Vec<f64>,
    pub median: f64,
    pub min: f64,
}

/// One untimed warmup, then `repeats` timed calls of the matcher.
/// Empty inputs are reported without timing anything.
pub fn bench_match(a: &KeypointSet, b: &KeypointSet, repeats: usize, policy: MatchPolicy) -> Result<BenchStats> {
    ensure!(repeats >= 3, "repeats must be at least 3, got {repeats}");
    let mut stats =
        BenchStats { count_a: a.len(), count_b: b.len(), dim: a.dim, matches: 0, runs: Vec::new(), median: 0.0, min: 0.0 };
    if a.is_empty() || b.is_empty() {
        return Ok(stats);
    }
    stats.matches = match_descriptors(a, b, policy).len();
    for _ in 0..repeats {
        let t = Instant::now();
        let m = match_descriptors(a, b, policy);
        stats.runs.push(t.elapsed().as_secs_f64());
        std::hint::black_box(m);
    }
    let mut sorted = stats.runs.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    stats.median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    stats.min = sorted[0];
    Ok(stats)
}

pub fn render(s: &BenchStats) -> String {
    let runs: Vec<String> = s.runs.iter().map(|r| format!("{r:.6}")).collect();
    format!(
        "count_a {}\ncount_b {}\ndim {}\nmatches {}\nrepeats {}\nmedian_s {:.6}\nmin_s {:.6}\nruns_s {}\n",
        s.count_a,
        s.count_b,
        s.dim,
        s.matches,
        s.runs.len(),
        s.median,
        s.min,
        runs.join(" ")
    )
}
