//! Line-oriented `key = value` training configuration.
//!
//! Blank lines and lines starting with `#` are ignored. `preset` (desk or
//! full) is applied first wherever it appears; every other key overrides a
//! single field. Unknown keys are rejected.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use sfeat_core::train::{Schedule, TrainConfig};

/// Training settings plus what the driver needs around them.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Write a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { train: TrainConfig::desk(), checkpoint_every: 0 }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("expected a boolean, got {v:?}"),
    }
}

fn parse_list(v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| s.trim().parse::<usize>().map_err(|_| anyhow!("bad list entry {s:?}"))).collect()
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
        entries.push((n + 1, k.trim().to_string(), v.trim().to_string()));
    }
    let mut cfg = RunConfig::default();
    if let Some((_, _, v)) = entries.iter().find(|(_, k, _)| k == "preset") {
        cfg.train = match v.as_str() {
            "desk" => TrainConfig::desk(),
            "full" => TrainConfig::full(),
            other => bail!("unknown preset {other:?}"),
        };
    }
    for (line, k, v) in &entries {
        apply(&mut cfg, k, v).with_context(|| format!("line {line}: {k}"))?;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, key: &str, v: &str) -> Result<()> {
    let t = &mut cfg.train;
    let f = || v.parse::<f64>().map_err(|_| anyhow!("expected a number, got {v:?}"));
    let u = || v.parse::<usize>().map_err(|_| anyhow!("expected a non-negative integer, got {v:?}"));
    match key {
        "preset" => {}
        "seed" => t.seed = v.parse().map_err(|_| anyhow!("bad seed {v:?}"))?,
        "steps" => t.schedule = Schedule::Steps(u()?),
        "epochs" => t.schedule = Schedule::Epochs(u()?),
        "batch_size" => t.batch_size = u()?,
        "lr" => t.adam.lr = f()?,
        "weight_decay" => t.adam.weight_decay = f()?,
        "beta1" => t.adam.beta1 = f()?,
        "beta2" => t.adam.beta2 = f()?,
        "eps" => t.adam.eps = f()?,
        "lambda_reli" => t.weights.lambda_reli = f()?,
        "lambda_repeat" => t.weights.lambda_repeat = f()?,
        "lambda_cov" => t.weights.lambda_cov = f()?,
        "crop" => t.aug.crop = u()?,
        "corner_jitter" => t.aug.corner_jitter = f()?,
        "brightness" => t.aug.photometric.brightness = f()?,
        "contrast" => t.aug.photometric.contrast = f()?,
        "hue" => t.aug.photometric.hue = f()?,
        "noise" => t.aug.photometric.noise = f()?,
        "patch_size" => t.repeat.patch_size = u()?,
        "cosim_weight" => t.repeat.cosim_weight = f()?,
        "peaky_weight" => t.repeat.peaky_weight = f()?,
        "sample_radius" => t.reli.sample_radius = f()?,
        "num_negatives" => t.reli.num_negatives = u()?,
        "kappa" => t.reli.kappa = f()?,
        "anchor_stride" => t.reli.anchor_stride = u()?,
        "ap_bins" => t.reli.binning.bins = u()?,
        "descriptor_dim" => t.backbone.descriptor_dim = u()?,
        "channel_widths" => t.backbone.channel_widths = parse_list(v)?,
        "dilations" => t.backbone.dilations = parse_list(v)?,
        "tail_dilation" => t.backbone.tail_dilation = u()?,
        "no_style" => t.ablation.no_style = parse_bool(v)?,
        "no_structure" => t.ablation.no_structure = parse_bool(v)?,
        "no_dsc" => t.ablation.no_dsc = parse_bool(v)?,
        "checkpoint_every" => cfg.checkpoint_every = u()?,
        _ => bail!("unknown key"),
    }
    Ok(())
}

/// Every setting in the same syntax `parse` reads.
pub fn render(cfg: &RunConfig) -> String {
    let t = &cfg.train;
    let mut s = String::new();
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let _ = writeln!(s, "seed = {}", t.seed);
    match t.schedule {
        Schedule::Steps(n) => writeln!(s, "steps = {n}"),
        Schedule::Epochs(n) => writeln!(s, "epochs = {n}"),
    }
    .ok();
    let lines = [
        ("batch_size", t.batch_size.to_string()),
        ("lr", t.adam.lr.to_string()),
        ("weight_decay", t.adam.weight_decay.to_string()),
        ("beta1", t.adam.beta1.to_string()),
        ("beta2", t.adam.beta2.to_string()),
        ("eps", t.adam.eps.to_string()),
        ("lambda_reli", t.weights.lambda_reli.to_string()),
        ("lambda_repeat", t.weights.lambda_repeat.to_string()),
        ("lambda_cov", t.weights.lambda_cov.to_string()),
        ("crop", t.aug.crop.to_string()),
        ("corner_jitter", t.aug.corner_jitter.to_string()),
        ("brightness", t.aug.photometric.brightness.to_string()),
        ("contrast", t.aug.photometric.contrast.to_string()),
        ("hue", t.aug.photometric.hue.to_string()),
        ("noise", t.aug.photometric.noise.to_string()),
        ("patch_size", t.repeat.patch_size.to_string()),
        ("cosim_weight", t.repeat.cosim_weight.to_string()),
        ("peaky_weight", t.repeat.peaky_weight.to_string()),
        ("sample_radius", t.reli.sample_radius.to_string()),
        ("num_negatives", t.reli.num_negatives.to_string()),
        ("kappa", t.reli.kappa.to_string()),
        ("anchor_stride", t.reli.anchor_stride.to_string()),
        ("ap_bins", t.reli.binning.bins.to_string()),
        ("descriptor_dim", t.backbone.descriptor_dim.to_string()),
        ("channel_widths", list(&t.backbone.channel_widths)),
        ("dilations", list(&t.backbone.dilations)),
        ("tail_dilation", t.backbone.tail_dilation.to_string()),
        ("no_style", t.ablation.no_style.to_string()),
        ("no_structure", t.ablation.no_structure.to_string()),
        ("no_dsc", t.ablation.no_dsc.to_string()),
        ("checkpoint_every", cfg.checkpoint_every.to_string()),
    ];
    for (k, v) in &lines {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}
