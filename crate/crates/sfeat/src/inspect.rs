//! Covariance dumps for one image pair.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use sfeat_core::covariance::{covariance_report, CovarianceReport};
use sfeat_core::image::Image;
use sfeat_core::network::Network;
use sfeat_core::Tensor;

use crate::pnm;

/// Matrix as whitespace-separated rows.
pub fn matrix_text(m: &Tensor) -> String {
    let c = m.shape()[1];
    let mut s = String::new();
    for row in m.data().chunks(c) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

/// Grey image of `m` with `(lo, hi)` mapped to black and white, each entry
/// drawn as a `cell x cell` block.
pub fn matrix_image(m: &Tensor, lo: f64, hi: f64, cell: usize) -> Image {
    let c = m.shape()[1];
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image::from_fn(1, c * cell, c * cell, |_, y, x| ((m.data()[(y / cell) * c + x / cell] - lo) / span).clamp(0.0, 1.0))
}

pub fn pair_report(net: &Network, a: &Image, b: &Image) -> Result<CovarianceReport> {
    let (m1, m2) = net.forward_pair(&a.to_tensor(), &b.to_tensor())?;
    Ok(covariance_report(&m1.descriptors, &m2.descriptors)?)
}

/// Writes the two correlation matrices, their difference and both masks
/// as text and PGM, plus a short summary.
pub fn dump(report: &CovarianceReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cell = 8;
    let diff = &report.difference.values;
    let dmax = diff.data().iter().copied().fold(0.0, f64::max);
    let items: [(&str, &Tensor, f64, f64); 5] = [
        ("sigma_s1", &report.standardized[0].values, -1.0, 1.0),
        ("sigma_s2", &report.standardized[1].values, -1.0, 1.0),
        ("sigma_c", diff, 0.0, dmax),
        ("mask_style", &report.masks.style, 0.0, 1.0),
        ("mask_structure", &report.masks.structure, 0.0, 1.0),
    ];
    for (name, m, lo, hi) in items {
        fs::write(out.join(format!("{name}.txt")), matrix_text(m))?;
        pnm::write(&out.join(format!("{name}.pgm")), &matrix_image(m, lo, hi, cell))?;
    }
    let masks = &report.masks;
    let summary = format!(
        "channels {}\nthreshold {}\nstyle_count {}\nstructure_count {}\nstyle_mean {}\nstructure_mean {}\ncov_loss {}\n",
        diff.shape()[0],
        masks.threshold,
        masks.style_count(),
        masks.structure_count(),
        masks.style_mean(diff),
        masks.structure_mean(diff),
        report.loss
    );
    fs::write(out.join("summary.txt"), summary)?;
    Ok(())
}
