//! Planar float images in `[0, 1]`, bilinear resampling, homographic
//! warping and photometric jitter.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::ops::bilinear_taps;
use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::math;
use crate::tensor::Tensor;

/// Channel-planar image: `data[c * H * W + y * W + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() != channels * height * width {
            return Err(Error::InvalidArgument {
                op: "image",
                detail: format!("{} values for {channels}x{height}x{width}", data.len()),
            });
        }
        Ok(Image { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image { channels, height, width, data: vec![value; channels * height * width] }
    }

    /// Builds from `f(channel, y, x)`.
    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image { channels, height, width, data }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [c, h, w] => Image::new(c, h, w, t.data().to_vec()),
            ref s => Err(Error::InvalidArgument { op: "image", detail: format!("expected [C, H, W], got {s:?}") }),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([self.channels, self.height, self.width], self.data.clone()).expect("sizes agree")
    }

    /// Three-channel copy; a single channel is replicated.
    pub fn to_rgb(&self) -> Image {
        match self.channels {
            3 => self.clone(),
            1 => Image::from_fn(3, self.height, self.width, |_, y, x| self.get(0, y, x)),
            _ => Image::from_fn(3, self.height, self.width, |c, y, x| self.get(c.min(self.channels - 1), y, x)),
        }
    }

    /// Luma with Rec. 601 weights, or the single channel itself.
    pub fn to_gray(&self) -> Image {
        if self.channels != 3 {
            return Image::from_fn(1, self.height, self.width, |_, y, x| self.get(0, y, x));
        }
        Image::from_fn(1, self.height, self.width, |_, y, x| {
            0.299 * self.get(0, y, x) + 0.587 * self.get(1, y, x) + 0.114 * self.get(2, y, x)
        })
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidArgument {
                op: "crop",
                detail: format!("{width}x{height} at ({x0},{y0}) exceeds {}x{}", self.width, self.height),
            });
        }
        Ok(Image::from_fn(self.channels, height, width, |c, y, x| self.get(c, y0 + y, x0 + x)))
    }

    /// Bilinear sample of channel `c` at `(x, y)`; `None` outside the pixel grid.
    pub fn sample(&self, c: usize, x: f64, y: f64) -> Option<f64> {
        let taps = bilinear_taps(self.height, self.width, x, y)?;
        let p = self.plane(c);
        Some(taps.iter().map(|&(k, w)| w * p[k]).sum())
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Resampled to `height x width`. When shrinking, each output pixel
    /// averages a grid of bilinear samples covering its footprint.
    pub fn resize(&self, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument { op: "resize", detail: format!("target {width}x{height}") });
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let ny = (math::ceil(sy) as usize).max(1);
        let nx = (math::ceil(sx) as usize).max(1);
        let (max_x, max_y) = (self.width as f64 - 1.0, self.height as f64 - 1.0);
        Ok(Image::from_fn(self.channels, height, width, |c, y, x| {
            let mut acc = 0.0;
            for a in 0..ny {
                for b in 0..nx {
                    // Sub-sample centres inside the output pixel footprint.
                    let py = (y as f64 + (a as f64 + 0.5) / ny as f64) * sy - 0.5;
                    let px = (x as f64 + (b as f64 + 0.5) / nx as f64) * sx - 0.5;
                    acc += self.sample(c, px.clamp(0.0, max_x), py.clamp(0.0, max_y)).unwrap_or(0.0);
                }
            }
            acc / (nx * ny) as f64
        }))
    }
}

/// Resamples `src` into a `height x width` frame so that
/// `out(h(p)) = src(p)`. Pixels whose preimage falls outside `src` are
/// filled with 0 and marked invalid in the returned `[H, W]` mask.
pub fn warp(src: &Image, h: &Homography, height: usize, width: usize) -> Result<(Image, Tensor)> {
    let inv = h.inverse()?;
    let mut out = Image::filled(src.channels, height, width, 0.0);
    let mut valid = Tensor::zeros([height, width]);
    for y in 0..height {
        for x in 0..width {
            let Ok((u, v)) = inv.apply((x as f64, y as f64)) else {
                continue;
            };
            let Some(taps) = bilinear_taps(src.height, src.width, u, v) else {
                continue;
            };
            valid.data_mut()[y * width + x] = 1.0;
            for c in 0..src.channels {
                let p = src.plane(c);
                out.data[(c * height + y) * width + x] = taps.iter().map(|&(k, w)| w * p[k]).sum();
            }
        }
    }
    Ok((out, valid))
}

/// Appearance change applied to an image before warping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Photometric {
    /// Added to every value.
    pub brightness: f64,
    /// Multiplies the deviation from the image mean.
    pub contrast: f64,
    /// Rotation of chroma about the gray axis, in radians.
    pub hue: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Seed of the noise stream.
    pub noise_seed: u64,
}

impl Photometric {
    pub fn identity() -> Self {
        Photometric { contrast: 1.0, ..Default::default() }
    }

    pub fn is_identity(&self) -> bool {
        self.brightness == 0.0 && self.contrast == 1.0 && self.hue == 0.0 && self.noise_sigma == 0.0
    }

    /// Applies hue, contrast, brightness and noise in that order, then clamps to `[0, 1]`.
    pub fn apply(&self, img: &Image) -> Image {
        if self.is_identity() {
            return img.clone();
        }
        let mean = img.data.iter().sum::<f64>() / img.data.len().max(1) as f64;
        let mut out = self.apply_color(img, mean);
        self.add_noise(&mut out);
        out
    }

    /// Hue rotation, contrast about `mean`, and brightness, clamped to `[0, 1]`.
    pub fn apply_color(&self, img: &Image, mean: f64) -> Image {
        let mut out = img.clone();
        if self.brightness == 0.0 && self.contrast == 1.0 && self.hue == 0.0 {
            return out;
        }
        if self.hue != 0.0 && img.channels == 3 {
            rotate_hue(&mut out, self.hue);
        }
        for v in out.data.iter_mut() {
            *v = (*v - mean) * self.contrast + mean + self.brightness;
        }
        out.clamp_unit();
        out
    }

    /// Adds seeded Gaussian noise and clamps to `[0, 1]`.
    pub fn add_noise(&self, img: &mut Image) {
        if self.noise_sigma <= 0.0 {
            return;
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(self.noise_seed);
        let normal = Normal::new(0.0, self.noise_sigma).expect("sigma is positive");
        for v in img.data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
        img.clamp_unit();
    }

    /// Draws parameters uniformly within the given magnitudes.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, cfg: &PhotometricRanges) -> Self {
        let sym = |rng: &mut R, m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        Photometric {
            brightness: sym(rng, cfg.brightness),
            contrast: 1.0 + sym(rng, cfg.contrast),
            hue: sym(rng, cfg.hue),
            noise_sigma: if cfg.noise > 0.0 { rng.random_range(0.0..=cfg.noise) } else { 0.0 },
            noise_seed: rng.random(),
        }
    }
}

/// Magnitudes of photometric jitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotometricRanges {
    pub brightness: f64,
    pub contrast: f64,
    pub hue: f64,
    pub noise: f64,
}

impl PhotometricRanges {
    pub const NONE: PhotometricRanges = PhotometricRanges { brightness: 0.0, contrast: 0.0, hue: 0.0, noise: 0.0 };
}

impl Default for PhotometricRanges {
    fn default() -> Self {
        PhotometricRanges { brightness: 0.2, contrast: 0.3, hue: 0.3, noise: 0.02 }
    }
}

/// Rotates every RGB vector by `angle` about the gray axis.
fn rotate_hue(img: &mut Image, angle: f64) {
    let (s, c) = (math::sin(angle), math::cos(angle));
    let k = 1.0 / math::sqrt(3.0);
    let n = img.height * img.width;
    let (r, rest) = img.data.split_at_mut(n);
    let (g, b) = rest.split_at_mut(n);
    for i in 0..n {
        let v = [r[i], g[i], b[i]];
        let dot = k * (v[0] + v[1] + v[2]);
        let cross = [k * (v[2] - v[1]), k * (v[0] - v[2]), k * (v[1] - v[0])];
        let rot: [f64; 3] = core::array::from_fn(|j| v[j] * c + cross[j] * s + k * dot * (1.0 - c));
        r[i] = rot[0];
        g[i] = rot[1];
        b[i] = rot[2];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_warp_is_exact() {
        let img = Image::from_fn(2, 5, 6, |c, y, x| (c * 31 + y * 7 + x) as f64 / 100.0);
        let (w, valid) = warp(&img, &Homography::identity(), 5, 6).unwrap();
        assert_eq!(w, img);
        assert!(valid.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn translated_warp_marks_border_invalid() {
        let img = Image::filled(1, 4, 4, 0.5);
        let (_, valid) = warp(&img, &Homography::translation(2.0, 0.0), 4, 4).unwrap();
        assert_eq!(valid.at(&[0, 1]), 0.0);
        assert_eq!(valid.at(&[0, 2]), 1.0);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::filled(3, 20, 30, 0.25);
        let r = img.resize(7, 11).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
        assert_eq!((r.height(), r.width()), (7, 11));
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = Image::from_fn(1, 5, 5, |_, y, x| (y * 5 + x) as f64 / 25.0);
        let r = img.resize(5, 5).unwrap();
        for (a, b) in r.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hue_rotation_keeps_gray_and_cycles() {
        let mut img = Image::from_fn(3, 2, 2, |c, y, x| (c + y + x) as f64 / 6.0);
        let orig = img.clone();
        rotate_hue(&mut img, 0.0);
        assert_eq!(img, orig);
        for _ in 0..3 {
            rotate_hue(&mut img, 2.0 * core::f64::consts::PI / 3.0);
        }
        for (a, b) in img.data().iter().zip(orig.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut gray = Image::filled(3, 1, 1, 0.4);
        rotate_hue(&mut gray, 1.0);
        assert!(gray.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn photometric_identity_is_noop() {
        let img = Image::from_fn(3, 3, 3, |c, y, x| (c * 9 + y * 3 + x) as f64 / 27.0);
        assert_eq!(Photometric::identity().apply(&img), img);
    }

    #[test]
    fn brightness_shift_changes_values() {
        let img = Image::filled(1, 2, 2, 0.5);
        let p = Photometric { brightness: 0.1, ..Photometric::identity() };
        assert!(p.apply(&img).data().iter().all(|&v| (v - 0.6).abs() < 1e-12));
    }
}
