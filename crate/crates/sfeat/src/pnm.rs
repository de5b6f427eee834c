//! Binary PGM (P5) and PPM (P6) images.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use sfeat_core::image::Image;

/// Decodes a P5 or P6 file. Values are scaled to `[0, 1]`; 16-bit samples
/// are big-endian as the format requires.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        ensure!(start < pos, "truncated header");
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => bail!("unsupported magic {other:?}, expected P5 or P6"),
    };
    let width: usize = token()?.parse().context("width")?;
    let height: usize = token()?.parse().context("height")?;
    let maxval: u32 = token()?.parse().context("maxval")?;
    ensure!(width > 0 && height > 0, "empty image {width}x{height}");
    ensure!((1..=65535).contains(&maxval), "maxval {maxval} out of range");
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bpv = if maxval > 255 { 2 } else { 1 };
    let need = width * height * channels * bpv;
    ensure!(bytes.len() >= pos + need, "raster needs {need} bytes, {} present", bytes.len().saturating_sub(pos));
    let raster = &bytes[pos..pos + need];
    let scale = maxval as f64;
    let sample = |i: usize| -> f64 {
        let v = if bpv == 2 { u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64 } else { raster[i] as f64 };
        (v / scale).min(1.0)
    };
    Ok(Image::from_fn(channels, height, width, |c, y, x| sample((y * width + x) * channels + c)))
}

/// 8-bit P5 for one channel, P6 for three.
pub fn encode(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => bail!("cannot store {c} channels as PNM"),
    };
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push((img.get(ch, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// Reads an image and converts it to three channels.
pub fn read_rgb(path: &Path) -> Result<Image> {
    Ok(read(path)?.to_rgb())
}

pub fn write(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode(img)?).with_context(|| format!("writing {}", path.display()))
}

pub fn is_pnm(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm" | "pnm"))
}
