//! Text training log, one line per optimizer step.
//!
//! Values are written in Rust's shortest round-trip float notation, so a log
//! parses back to the exact numbers that were recorded. Wall time goes to a
//! separate file to keep the log itself reproducible.

use anyhow::{anyhow, bail, Result};
use sfeat_core::train::StepRecord;

pub const HEADER: &str = "# step reli repeat cov total style_mean structure_mean";

pub fn format_record(r: &StepRecord) -> String {
    format!(
        "{} {} {} {} {} {} {}",
        r.step, r.reli, r.repeat, r.cov, r.total, r.style_mean, r.structure_mean
    )
}

pub fn parse(text: &str) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            bail!("line {}: expected 7 fields, found {}", n + 1, f.len());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| anyhow!("line {}: bad number {:?}", n + 1, f[i]));
        out.push(StepRecord {
            step: f[0].parse().map_err(|_| anyhow!("line {}: bad step", n + 1))?,
            reli: num(1)?,
            repeat: num(2)?,
            cov: num(3)?,
            total: num(4)?,
            style_mean: num(5)?,
            structure_mean: num(6)?,
        });
    }
    Ok(out)
}

/// Trailing moving average over `window` records.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}
