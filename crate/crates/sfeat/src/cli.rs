//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 for usage errors, 2 when data or a model cannot be used.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sfeat_core::descfile;
use sfeat_core::keypoints::{ExtractConfig, Keypoint, KeypointSet};
use sfeat_core::matching::{match_descriptors, MatchPolicy, MatchSet};
use sfeat_core::network::Network;
use sfeat_core::synth::{procedural_corpus, procedural_scene, synthetic_sequence, AugConfig, SceneKind};

use crate::config::{self, RunConfig};
use crate::sequence::{load_sequence, save_sequence, Sequence};
use crate::seqeval::{evaluate_sequence, extract_image, Scales};
use crate::{bench, driver, inspect, pnm, report};

#[derive(Parser, Debug)]
#[command(name = "sfeat", version, about = "Train, extract, match and evaluate learned local features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a network on a directory of PPM/PGM images.
    Train(TrainArgs),
    /// Detect keypoints and write them with their descriptors.
    Extract(ExtractArgs),
    /// Match two descriptor files.
    Match(MatchArgs),
    /// Mean matching accuracy over a planar sequence.
    EvalMma(EvalArgs),
    /// Dump correlation matrices and style/structure masks for an image pair.
    InspectCov(InspectArgs),
    /// Time descriptor matching.
    Bench(BenchArgs),
    /// Write a procedural training corpus.
    GenCorpus(GenCorpusArgs),
    /// Write a synthetic planar sequence with known homographies.
    GenSequence(GenSequenceArgs),
    /// Write random unit descriptors at random positions.
    GenDescriptors(GenDescriptorsArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// key = value settings; the desk preset when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop the style branch of the covariance loss.
    #[arg(long)]
    pub no_style: bool,
    /// Drop the structure branch of the covariance loss.
    #[arg(long)]
    pub no_structure: bool,
    /// Plain convolutions in the tail instead of depthwise-separable ones.
    #[arg(long)]
    pub no_dsc: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ExtractOpts {
    /// `auto` for the image pyramid, or descending factors such as 1,0.5
    #[arg(long, default_value = "auto")]
    pub scales: String,
    #[arg(long, default_value_t = ExtractConfig::default().rel_thresh)]
    pub rel_thresh: f64,
    #[arg(long, default_value_t = ExtractConfig::default().rep_thresh)]
    pub rep_thresh: f64,
    #[arg(long, default_value_t = ExtractConfig::default().topk)]
    pub topk: usize,
    #[arg(long, default_value_t = ExtractConfig::default().nms_radius)]
    pub nms_radius: usize,
}

impl ExtractOpts {
    fn config(&self) -> ExtractConfig {
        ExtractConfig {
            rel_thresh: self.rel_thresh,
            rep_thresh: self.rep_thresh,
            topk: self.topk,
            nms_radius: self.nms_radius,
        }
    }
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: ExtractOpts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    #[value(name = "nn")]
    Nn,
    #[value(name = "mutual_nn")]
    MutualNn,
}

impl From<PolicyArg> for MatchPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Nn => MatchPolicy::Nn,
            PolicyArg::MutualNn => MatchPolicy::MutualNn,
        }
    }
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum, default_value = "mutual_nn")]
    pub policy: PolicyArg,
    /// Match list destination; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub seq: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw the accuracy curve into this PPM file.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mutual_nn")]
    pub policy: PolicyArg,
    #[command(flatten)]
    pub opts: ExtractOpts,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, num_args = 2, value_names = ["IMG1", "IMG2"])]
    pub pair: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, value_enum, default_value = "mutual_nn")]
    pub policy: PolicyArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub count: usize,
    /// Side length of the square images
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GenSequenceArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Reference image; a procedural scene when omitted
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 160)]
    pub size: usize,
    #[arg(long, default_value_t = 5)]
    pub targets: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Identity geometry, appearance changes only.
    #[arg(long)]
    pub photometric_only: bool,
}

#[derive(Args, Debug)]
pub struct GenDescriptorsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` (program name first) and executes the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn load_network(path: &Path) -> Result<Network> {
    driver::read_checkpoint(path)?.into_network().with_context(|| format!("building network from {}", path.display()))
}

fn read_descriptors(path: &Path) -> Result<KeypointSet> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    descfile::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn render_matches(m: &MatchSet) -> String {
    let mut s = format!("# {} matches: index_a index_b distance\n", m.len());
    for x in &m.matches {
        let _ = writeln!(s, "{} {} {}", x.a, x.b, x.distance);
    }
    s
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Extract(a) => {
            let net = load_network(&a.ckpt)?;
            let img = pnm::read_rgb(&a.image)?;
            let scales = Scales::parse(&a.opts.scales)?;
            let set = extract_image(&net, &img, &scales, &a.opts.config())?;
            write_file(&a.out, descfile::encode(&set))?;
            println!("{} keypoints, {}-d descriptors -> {}", set.len(), set.dim, a.out.display());
            Ok(())
        }
        Command::Match(a) => {
            let (da, db) = (read_descriptors(&a.a)?, read_descriptors(&a.b)?);
            anyhow::ensure!(da.dim == db.dim, "descriptor sizes differ: {} vs {}", da.dim, db.dim);
            let m = match_descriptors(&da, &db, a.policy.into());
            let text = render_matches(&m);
            match a.out {
                Some(p) => {
                    write_file(&p, text)?;
                    println!("{} matches -> {}", m.len(), p.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::EvalMma(a) => {
            let net = load_network(&a.ckpt)?;
            let seq = load_sequence(&a.seq)?;
            let scales = Scales::parse(&a.opts.scales)?;
            let label = a.ckpt.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            let summary = evaluate_sequence(&net, &seq, &scales, &a.opts.config(), a.policy.into(), &label)?;
            write_file(&a.out, report::render_summary(&summary))?;
            if let Some(p) = &a.plot {
                pnm::write(p, &report::plot(std::slice::from_ref(&summary.curve), 240, 320))?;
            }
            for (t, f) in summary.curve.thresholds.iter().zip(&summary.curve.fractions) {
                println!("MMA@{t} {f:.4}");
            }
            Ok(())
        }
        Command::InspectCov(a) => {
            let net = load_network(&a.ckpt)?;
            let i1 = pnm::read_rgb(&a.pair[0])?;
            let i2 = pnm::read_rgb(&a.pair[1])?;
            let rep = inspect::pair_report(&net, &i1, &i2)?;
            inspect::dump(&rep, &a.out)?;
            let m = &rep.masks;
            println!(
                "style mean {:.6} over {} entries, structure mean {:.6} over {} entries -> {}",
                m.style_mean(&rep.difference.values),
                m.style_count(),
                m.structure_mean(&rep.difference.values),
                m.structure_count(),
                a.out.display()
            );
            Ok(())
        }
        Command::Bench(a) => {
            let (da, db) = (read_descriptors(&a.a)?, read_descriptors(&a.b)?);
            anyhow::ensure!(da.dim == db.dim, "descriptor sizes differ: {} vs {}", da.dim, db.dim);
            let stats = bench::bench_match(&da, &db, a.repeats, a.policy.into())?;
            let text = bench::render(&stats);
            if let Some(p) = &a.out {
                write_file(p, &text)?;
            }
            print!("{text}");
            Ok(())
        }
        Command::GenCorpus(a) => {
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            for (i, img) in procedural_corpus(a.count, a.size, a.size, a.seed).iter().enumerate() {
                pnm::write(&a.out.join(format!("scene_{i:04}.ppm")), img)?;
            }
            println!("{} images -> {}", a.count, a.out.display());
            Ok(())
        }
        Command::GenSequence(a) => {
            let reference = match &a.image {
                Some(p) => pnm::read_rgb(p)?,
                None => procedural_scene(SceneKind::Textured, a.size, a.size, a.seed),
            };
            let aug = if a.photometric_only { AugConfig::default().photometric_only() } else { AugConfig::default() };
            let s = synthetic_sequence(&reference, a.targets, &aug, a.seed)?;
            let seq = Sequence { reference: s.reference, targets: s.targets, homographies: s.homographies };
            save_sequence(&a.out, &seq)?;
            println!("sequence with {} targets -> {}", a.targets, a.out.display());
            Ok(())
        }
        Command::GenDescriptors(a) => {
            anyhow::ensure!(a.dim >= 1, "dim must be positive");
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut set = KeypointSet::empty(a.dim);
            for _ in 0..a.count {
                let v: Vec<f64> = (0..a.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                set.descriptors.extend(v.iter().map(|x| (x / n) as f32));
                let (x, y) = (rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
                set.keypoints.push(Keypoint { x, y, scale: 1.0, score: 1.0 });
            }
            write_file(&a.out, descfile::encode(&set))?;
            println!("{} x {} descriptors -> {}", a.count, a.dim, a.out.display());
            Ok(())
        }
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            config::parse(&text).with_context(|| format!("in config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    let ab = &mut cfg.train.ablation;
    ab.no_style |= a.no_style;
    ab.no_structure |= a.no_structure;
    ab.no_dsc |= a.no_dsc;
    let corpus = driver::load_corpus(&a.data)?;
    let steps = cfg.train.total_steps(corpus.len());
    let quiet = a.quiet;
    let out = driver::run(&cfg, &corpus, &a.out, |r| {
        if !quiet && (r.step % 10 == 0 || r.step as usize == steps) {
            eprintln!(
                "step {:>5}/{steps}  total {:.4}  reli {:.4}  repeat {:.4}  cov {:.4}",
                r.step, r.total, r.reli, r.repeat, r.cov
            );
        }
    })?;
    println!("{} steps, checkpoint {}, log {}", out.records.len(), out.checkpoint.display(), out.log.display());
    Ok(())
}
