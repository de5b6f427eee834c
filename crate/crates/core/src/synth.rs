//! Seeded training pairs and procedural scenes.
//!
//! A pair is a crop of a source image and a second view produced by a
//! random perspective warp of the crop corners plus a photometric change.
//! The correspondence map between the two views is exact.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{build_correspondence_map, CorrespondenceMap, Homography};
use crate::image::{Image, Photometric, PhotometricRanges};
use crate::math;

/// Augmentation settings for [`synth_pair`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugConfig {
    /// Side of the square crops.
    pub crop: usize,
    /// Corner displacement bound as a fraction of `crop`.
    pub corner_jitter: f64,
    pub photometric: PhotometricRanges,
    /// Attempts at drawing a well-conditioned homography.
    pub max_retries: usize,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig { crop: 64, corner_jitter: 0.15, photometric: PhotometricRanges::default(), max_retries: 32 }
    }
}

impl AugConfig {
    /// Geometry only, no appearance change.
    pub fn warp_only(self) -> Self {
        AugConfig { photometric: PhotometricRanges::NONE, ..self }
    }

    /// Appearance change only, identity geometry.
    pub fn photometric_only(self) -> Self {
        AugConfig { corner_jitter: 0.0, ..self }
    }
}

/// What was drawn to build a pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AugRecord {
    /// Top-left corner of the first crop in the source image.
    pub crop_offset: (usize, usize),
    /// Where the crop corners land in the second view, clockwise from top-left.
    pub corners: [(f64, f64); 4],
    pub photometric: Photometric,
}

/// Two views with the homography and dense correspondences from the first to the second.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub i1: Image,
    pub i2: Image,
    pub homography: Homography,
    pub t: CorrespondenceMap,
    pub record: AugRecord,
}

fn crop_corners(s: usize) -> [(f64, f64); 4] {
    let m = s as f64 - 1.0;
    [(0.0, 0.0), (m, 0.0), (m, m), (0.0, m)]
}

/// True when the quadrilateral is strictly convex with consistent winding.
fn is_convex(q: &[(f64, f64); 4]) -> bool {
    let cross = |k: usize| {
        let (a, b, c) = (q[k], q[(k + 1) % 4], q[(k + 2) % 4]);
        (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0)
    };
    let signs: Vec<f64> = (0..4).map(cross).collect();
    signs.iter().all(|&v| v > 1e-6) || signs.iter().all(|&v| v < -1e-6)
}

fn sample_homography<R: Rng + ?Sized>(rng: &mut R, cfg: &AugConfig) -> Result<(Homography, [(f64, f64); 4])> {
    let src = crop_corners(cfg.crop);
    if cfg.corner_jitter <= 0.0 {
        return Ok((Homography::identity(), src));
    }
    let r = cfg.corner_jitter * cfg.crop as f64;
    for _ in 0..cfg.max_retries.max(1) {
        let dst = src.map(|(x, y)| (x + rng.random_range(-r..=r), y + rng.random_range(-r..=r)));
        if !is_convex(&dst) {
            continue;
        }
        if let Ok(h) = Homography::from_correspondences(&src, &dst) {
            if h.inverse().is_ok() {
                return Ok((h, dst));
            }
        }
    }
    Err(Error::Degenerate("no well-conditioned homography within the retry budget"))
}

/// Builds a training pair from `image`.
///
/// The first view is a random `crop x crop` window. The second view samples
/// the colour-jittered source through the inverse of a random perspective
/// map of the crop corners, so content outside the first crop fills its
/// borders where available. Sensor noise is added to the second view after
/// warping. The contrast change is taken about the mean of the first crop.
pub fn synth_pair<R: Rng + ?Sized>(image: &Image, rng: &mut R, cfg: &AugConfig) -> Result<PairSample> {
    let s = cfg.crop;
    if s < 2 || image.height() < s || image.width() < s {
        return Err(Error::InvalidArgument {
            op: "synth_pair",
            detail: format!("crop {s} does not fit image {}x{}", image.width(), image.height()),
        });
    }
    let x0 = rng.random_range(0..=image.width() - s);
    let y0 = rng.random_range(0..=image.height() - s);
    let i1 = image.crop(x0, y0, s, s)?;
    let (homography, corners) = sample_homography(rng, cfg)?;
    let photometric = Photometric::sample(rng, &cfg.photometric);

    let mean = i1.data().iter().sum::<f64>() / i1.data().len() as f64;
    let appearance = photometric.apply_color(image, mean);
    let inv = homography.inverse()?;
    let mut i2 = Image::filled(image.channels(), s, s, 0.0);
    for y in 0..s {
        for x in 0..s {
            let Ok((u, v)) = inv.apply((x as f64, y as f64)) else {
                continue;
            };
            for c in 0..image.channels() {
                if let Some(val) = appearance.sample(c, u + x0 as f64, v + y0 as f64) {
                    i2.data_mut()[(c * s + y) * s + x] = val;
                }
            }
        }
    }
    photometric.add_noise(&mut i2);
    let t = build_correspondence_map(&homography, (s, s), (s, s));
    Ok(PairSample { i1, i2, homography, t, record: AugRecord { crop_offset: (x0, y0), corners, photometric } })
}

/// Families of generated scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    Checkerboard,
    Polygons,
    /// Polygons over band-limited colour noise, with the noise also
    /// modulating the shape fills.
    Textured,
}

/// Renders a colour scene with anti-aliased edges (4x4 supersampling).
pub fn procedural_scene(kind: SceneKind, height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shader: Shader = match kind {
        SceneKind::Checkerboard => checkerboard_shader(&mut rng, height, width),
        SceneKind::Polygons => polygon_shader(&mut rng, height, width),
        SceneKind::Textured => textured_shader(&mut rng, height, width),
    };
    const SS: usize = 4;
    let mut img = Image::filled(3, height, width, 0.0);
    let n = height * width;
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for a in 0..SS {
                for b in 0..SS {
                    let px = x as f64 + (b as f64 + 0.5) / SS as f64 - 0.5;
                    let py = y as f64 + (a as f64 + 0.5) / SS as f64 - 0.5;
                    let c = shader.color(px, py);
                    acc.iter_mut().zip(c).for_each(|(s, v)| *s += v);
                }
            }
            for (c, v) in acc.iter().enumerate() {
                img.data_mut()[c * n + y * width + x] = (v / (SS * SS) as f64).clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// `count` scenes cycling through the three families, seeded from `seed`.
pub fn procedural_corpus(count: usize, height: usize, width: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|k| {
            let kind = [SceneKind::Polygons, SceneKind::Textured, SceneKind::Checkerboard][k % 3];
            procedural_scene(kind, height, width, seed.wrapping_mul(0x9E37_79B9).wrapping_add(k as u64))
        })
        .collect()
}

enum Shape {
    Polygon(Vec<(f64, f64)>),
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, angle: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Polygon(p) => {
                // even-odd ray cast
                let mut inside = false;
                let n = p.len();
                for i in 0..n {
                    let (a, b) = (p[i], p[(i + n - 1) % n]);
                    if (a.1 > y) != (b.1 > y) && x < (b.0 - a.0) * (y - a.1) / (b.1 - a.1) + a.0 {
                        inside = !inside;
                    }
                }
                inside
            }
            Shape::Ellipse { cx, cy, rx, ry, angle } => {
                let (s, c) = (math::sin(*angle), math::cos(*angle));
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                (u / rx) * (u / rx) + (v / ry) * (v / ry) <= 1.0
            }
        }
    }
}

struct Shader {
    background: Background,
    shapes: Vec<(Shape, [f64; 3])>,
    /// Plane waves `(kx, ky, phase, rgb amplitude)` added to every colour.
    waves: Vec<(f64, f64, f64, [f64; 3])>,
}

enum Background {
    Gradient { base: [f64; 3], dx: [f64; 3], dy: [f64; 3] },
    Checker { cell: f64, angle: f64, a: [f64; 3], b: [f64; 3], offset: (f64, f64) },
}

impl Shader {
    fn color(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base_color(x, y);
        for (kx, ky, phase, amp) in &self.waves {
            let v = math::sin(kx * x + ky * y + phase);
            c.iter_mut().zip(amp).for_each(|(c, a)| *c += a * v);
        }
        c
    }

    fn base_color(&self, x: f64, y: f64) -> [f64; 3] {
        for (shape, col) in self.shapes.iter().rev() {
            if shape.contains(x, y) {
                return *col;
            }
        }
        match &self.background {
            Background::Gradient { base, dx, dy } => core::array::from_fn(|c| base[c] + dx[c] * x + dy[c] * y),
            Background::Checker { cell, angle, a, b, offset } => {
                let (s, c) = (math::sin(*angle), math::cos(*angle));
                let u = (c * x + s * y + offset.0) / cell;
                let v = (-s * x + c * y + offset.1) / cell;
                let parity = (math::floor(u) as i64 + math::floor(v) as i64).rem_euclid(2);
                if parity == 0 { *a } else { *b }
            }
        }
    }
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    core::array::from_fn(|_| rng.random_range(0.05..0.95))
}

fn random_shape<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> Shape {
    let (w, h) = (width as f64, height as f64);
    let scale = rng.random_range(0.06..0.25) * w.min(h);
    let (cx, cy) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
    if rng.random_bool(0.3) {
        Shape::Ellipse {
            cx,
            cy,
            rx: scale,
            ry: scale * rng.random_range(0.4..1.0),
            angle: rng.random_range(0.0..core::f64::consts::PI),
        }
    } else {
        let n = rng.random_range(3..7);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * core::f64::consts::PI)).collect();
        angles.sort_by(f64::total_cmp);
        let pts = angles
            .into_iter()
            .map(|a| {
                let r = scale * rng.random_range(0.5..1.0);
                (cx + r * math::cos(a), cy + r * math::sin(a))
            })
            .collect();
        Shape::Polygon(pts)
    }
}

fn polygon_shader<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> Shader {
    let span = (width + height) as f64;
    let base = random_color(rng);
    let background = Background::Gradient {
        base,
        dx: core::array::from_fn(|_| rng.random_range(-0.3..0.3) / span),
        dy: core::array::from_fn(|_| rng.random_range(-0.3..0.3) / span),
    };
    let area = (width * height) as f64;
    let count = ((area / 400.0) as usize).clamp(8, 200);
    let shapes = (0..count).map(|_| (random_shape(rng, height, width), random_color(rng))).collect();
    Shader { background, shapes, waves: Vec::new() }
}

fn textured_shader<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> Shader {
    let mut shader = polygon_shader(rng, height, width);
    shader.shapes.truncate(shader.shapes.len() / 2);
    // wavelengths from 4 to 24 px, amplitude falling with frequency
    shader.waves = (0..24)
        .map(|_| {
            let k = core::f64::consts::TAU / rng.random_range(4.0..24.0);
            let dir = rng.random_range(0.0..core::f64::consts::TAU);
            let amp = 0.25 / (1.0 + k * 4.0);
            let rgb = core::array::from_fn(|_| amp * rng.random_range(0.3..1.0));
            (k * math::cos(dir), k * math::sin(dir), rng.random_range(0.0..core::f64::consts::TAU), rgb)
        })
        .collect();
    shader
}

fn checkerboard_shader<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize) -> Shader {
    let background = Background::Checker {
        cell: rng.random_range(5.0..14.0),
        angle: rng.random_range(0.0..core::f64::consts::FRAC_PI_2),
        a: random_color(rng),
        b: random_color(rng),
        offset: (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)),
    };
    let area = (width * height) as f64;
    let count = ((area / 1500.0) as usize).clamp(3, 60);
    let shapes = (0..count).map(|_| (random_shape(rng, height, width), random_color(rng))).collect();
    Shader { background, shapes, waves: Vec::new() }
}

/// A reference image and `targets` views related to it by known homographies.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub reference: Image,
    pub targets: Vec<Image>,
    /// Maps reference pixel coordinates into each target.
    pub homographies: Vec<Homography>,
}

/// Full-frame views of `reference` under random perspective and photometric
/// changes, in the layout of a planar evaluation sequence.
pub fn synthetic_sequence(reference: &Image, targets: usize, cfg: &AugConfig, seed: u64) -> Result<SyntheticSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (reference.height(), reference.width());
    let side = h.min(w);
    let mut out = SyntheticSequence { reference: reference.clone(), targets: Vec::new(), homographies: Vec::new() };
    for _ in 0..targets {
        let src = [(0.0, 0.0), (w as f64 - 1.0, 0.0), (w as f64 - 1.0, h as f64 - 1.0), (0.0, h as f64 - 1.0)];
        let r = cfg.corner_jitter * side as f64;
        let mut found = None;
        for _ in 0..cfg.max_retries.max(1) {
            let dst = src.map(|(x, y)| {
                if r > 0.0 {
                    (x + rng.random_range(-r..=r), y + rng.random_range(-r..=r))
                } else {
                    (x, y)
                }
            });
            if r > 0.0 && !is_convex(&dst) {
                continue;
            }
            let hom = if r > 0.0 { Homography::from_correspondences(&src, &dst) } else { Ok(Homography::identity()) };
            if let Ok(hom) = hom {
                found = Some(hom);
                break;
            }
        }
        let hom = found.ok_or(Error::Degenerate("no well-conditioned homography within the retry budget"))?;
        let photometric = Photometric::sample(&mut rng, &cfg.photometric);
        let mean = reference.data().iter().sum::<f64>() / reference.data().len() as f64;
        let appearance = photometric.apply_color(reference, mean);
        let (mut view, _) = crate::image::warp(&appearance, &hom, h, w)?;
        photometric.add_noise(&mut view);
        out.targets.push(view);
        out.homographies.push(hom);
    }
    Ok(out)
}
