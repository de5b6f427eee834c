//! Planar sequences in the HPatches directory layout.
//!
//! A sequence directory holds a reference image `1.ppm` (or `.pgm`), targets
//! `2..n` with the same naming, and one text file `H_1_k` per target with
//! the nine row-major entries of the homography from image 1 to image k.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sfeat_core::geometry::Homography;
use sfeat_core::image::Image;

use crate::pnm;

#[derive(Clone, Debug)]
pub struct Sequence {
    pub reference: Image,
    /// Images `2..=n` in order.
    pub targets: Vec<Image>,
    /// `homographies[k]` maps reference pixels into `targets[k]`.
    pub homographies: Vec<Homography>,
}

/// Parses the nine whitespace-separated reals of an `H_1_k` file.
pub fn parse_homography(text: &str) -> Result<Homography> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| anyhow!("not a number: {t:?}")))
        .collect::<Result<_>>()?;
    if vals.len() != 9 {
        bail!("expected 9 values, found {}", vals.len());
    }
    Ok(Homography::from_row_major(&vals)?)
}

fn image_path(dir: &Path, k: usize) -> Option<PathBuf> {
    ["ppm", "pgm", "pnm"].iter().map(|e| dir.join(format!("{k}.{e}"))).find(|p| p.is_file())
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    if !dir.is_dir() {
        bail!("sequence directory {} does not exist", dir.display());
    }
    let reference = pnm::read_rgb(
        &image_path(dir, 1).ok_or_else(|| anyhow!("missing reference image {}", dir.join("1.ppm").display()))?,
    )?;
    let mut seq = Sequence { reference, targets: Vec::new(), homographies: Vec::new() };
    let mut k = 2;
    while let Some(path) = image_path(dir, k) {
        let hpath = dir.join(format!("H_1_{k}"));
        if !hpath.is_file() {
            bail!("missing homography file {}", hpath.display());
        }
        let text = fs::read_to_string(&hpath).with_context(|| format!("reading {}", hpath.display()))?;
        let h = parse_homography(&text).with_context(|| format!("parsing {}", hpath.display()))?;
        seq.targets.push(pnm::read_rgb(&path)?);
        seq.homographies.push(h);
        k += 1;
    }
    if seq.targets.is_empty() {
        bail!("sequence {} has no target images (2.ppm, 3.ppm, ...)", dir.display());
    }
    Ok(seq)
}

/// Writes a sequence in the same layout, PPM images and `H_1_k` files.
pub fn save_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    pnm::write(&dir.join("1.ppm"), &seq.reference)?;
    for (i, (img, h)) in seq.targets.iter().zip(&seq.homographies).enumerate() {
        let k = i + 2;
        pnm::write(&dir.join(format!("{k}.ppm")), img)?;
        let m = h.row_major();
        let text = format!(
            "{:e} {:e} {:e}\n{:e} {:e} {:e}\n{:e} {:e} {:e}\n",
            m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8]
        );
        fs::write(dir.join(format!("H_1_{k}")), text)?;
    }
    Ok(())
}
