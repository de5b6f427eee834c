//! File-backed training runs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sfeat_core::checkpoint::Checkpoint;
use sfeat_core::image::Image;
use sfeat_core::train::{StepRecord, Trainer};

use crate::config::{render, RunConfig};
use crate::{pnm, trainlog};

pub const LOG_FILE: &str = "train_log.txt";
pub const TIMING_FILE: &str = "timing.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const FINAL_CHECKPOINT: &str = "final.sftc";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.sftc";

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Checkpoint::decode(&bytes).with_context(|| format!("decoding checkpoint {}", path.display()))
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    // write-then-rename so an interrupted save never leaves a torn file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ck.encode()).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

/// Every PNM image in `dir`, sorted by file name, as three-channel images.
pub fn load_corpus(dir: &Path) -> Result<Vec<Image>> {
    if !dir.is_dir() {
        bail!("data directory {} does not exist", dir.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && pnm::is_pnm(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("data directory {} holds no .ppm/.pgm images", dir.display());
    }
    paths.iter().map(|p| pnm::read_rgb(p)).collect()
}

/// Paths produced by a finished run.
#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub log: PathBuf,
    pub timing: PathBuf,
    pub checkpoint: PathBuf,
    pub records: Vec<StepRecord>,
}

/// Trains on `corpus` and writes the log, timing, checkpoints and the
/// resolved configuration into `out`. A failing step leaves the last
/// successfully updated parameters in `last_good.sftc`.
pub fn run(cfg: &RunConfig, corpus: &[Image], out: &Path, mut progress: impl FnMut(&StepRecord)) -> Result<RunOutputs> {
    let crop = cfg.train.aug.crop;
    if let Some((i, img)) = corpus.iter().enumerate().find(|(_, im)| im.height() < crop || im.width() < crop) {
        bail!("corpus image {i} is {}x{}, smaller than the {crop}px crop", img.width(), img.height());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(CONFIG_FILE), render(cfg))?;
    let log_path = out.join(LOG_FILE);
    let timing_path = out.join(TIMING_FILE);
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut timing = BufWriter::new(File::create(&timing_path)?);
    writeln!(log, "{}", trainlog::HEADER)?;
    writeln!(timing, "# step seconds")?;

    let mut trainer = Trainer::new(cfg.train.clone())?;
    let steps = cfg.train.total_steps(corpus.len());
    let start = Instant::now();
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        let rec = match trainer.step(corpus) {
            Ok(r) => r,
            Err(e) => {
                let path = out.join(LAST_GOOD_CHECKPOINT);
                write_checkpoint(&path, &trainer.checkpoint())?;
                log.flush()?;
                return Err(anyhow::Error::new(e).context(format!(
                    "training stopped at step {}; last good parameters saved to {}",
                    trainer.steps_done() + 1,
                    path.display()
                )));
            }
        };
        writeln!(log, "{}", trainlog::format_record(&rec))?;
        writeln!(timing, "{} {:.3}", rec.step, start.elapsed().as_secs_f64())?;
        log.flush()?;
        timing.flush()?;
        if cfg.checkpoint_every > 0 && rec.step % cfg.checkpoint_every as u64 == 0 {
            write_checkpoint(&out.join(format!("step_{:06}.sftc", rec.step)), &trainer.checkpoint())?;
        }
        progress(&rec);
        records.push(rec);
    }
    let checkpoint = out.join(FINAL_CHECKPOINT);
    write_checkpoint(&checkpoint, &trainer.checkpoint())?;
    Ok(RunOutputs { log: log_path, timing: timing_path, checkpoint, records })
}
