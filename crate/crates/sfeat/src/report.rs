//! MMA reports as text and as a curve plot.

use std::fmt::Write as _;

use sfeat_core::image::Image;
use sfeat_core::keypoints::ExtractConfig;

/// Accuracy curve of one method over pixel thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Evaluation summary written by `eval-mma`.
#[derive(Clone, Debug)]
pub struct MmaSummary {
    pub curve: Curve,
    pub pairs: usize,
    pub matches: Vec<usize>,
    pub keypoints: Vec<(usize, usize)>,
    pub extract: ExtractConfig,
    pub scales: Vec<f64>,
    pub seconds: f64,
}

/// Comment header with the settings, then `threshold<TAB>fraction` lines.
pub fn render_summary(s: &MmaSummary) -> String {
    let mut out = String::new();
    let e = &s.extract;
    let _ = writeln!(out, "# mean matching accuracy, {} pairs, mutual nearest neighbour", s.pairs);
    let _ = writeln!(
        out,
        "# rel_thresh {} rep_thresh {} topk {} nms_radius {} scales {:?}",
        e.rel_thresh, e.rep_thresh, e.topk, e.nms_radius, s.scales
    );
    for (k, (m, kp)) in s.matches.iter().zip(&s.keypoints).enumerate() {
        let _ = writeln!(out, "# pair 1-{}: {} + {} keypoints, {} matches", k + 2, kp.0, kp.1, m);
    }
    let _ = writeln!(out, "# seconds {:.3}", s.seconds);
    for (t, f) in s.curve.thresholds.iter().zip(&s.curve.fractions) {
        let _ = writeln!(out, "{t}\t{f}");
    }
    out
}

/// Reads back the `threshold<TAB>fraction` lines, ignoring comments.
pub fn parse_curve(text: &str) -> Option<Vec<(f64, f64)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (a, b) = l.split_once('\t')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        })
        .collect()
}

const PALETTE: [[f64; 3]; 6] =
    [[0.85, 0.1, 0.1], [0.1, 0.35, 0.85], [0.1, 0.6, 0.2], [0.8, 0.5, 0.0], [0.5, 0.1, 0.7], [0.2, 0.2, 0.2]];

/// Accuracy against threshold, one coloured polyline per curve on a white
/// canvas with axes and a light grid at every 0.1 of accuracy.
pub fn plot(curves: &[Curve], height: usize, width: usize) -> Image {
    let mut img = Image::filled(3, height, width, 1.0);
    let (left, right, top, bottom) = (24.0, width as f64 - 10.0, 10.0, height as f64 - 20.0);
    let tmax = curves.iter().flat_map(|c| c.thresholds.iter().copied()).fold(1.0, f64::max);
    let to_px = |t: f64, f: f64| (left + (right - left) * t / tmax, bottom - (bottom - top) * f.clamp(0.0, 1.0));
    let put = |img: &mut Image, x: f64, y: f64, rgb: [f64; 3]| {
        let (xi, yi) = (x.round() as isize, y.round() as isize);
        if xi >= 0 && yi >= 0 && (xi as usize) < width && (yi as usize) < height {
            let n = height * width;
            for (c, v) in rgb.iter().enumerate() {
                img.data_mut()[c * n + yi as usize * width + xi as usize] = *v;
            }
        }
    };
    for k in 0..=10 {
        let (_, y) = to_px(0.0, k as f64 / 10.0);
        let shade = if k == 0 { 0.0 } else { 0.85 };
        for x in left as usize..=right as usize {
            put(&mut img, x as f64, y, [shade; 3]);
        }
    }
    for y in top as usize..=bottom as usize {
        put(&mut img, left, y as f64, [0.0; 3]);
    }
    for t in 1..=tmax as usize {
        let (x, y) = to_px(t as f64, 0.0);
        for d in 0..4 {
            put(&mut img, x, y + d as f64, [0.0; 3]);
        }
    }
    for (i, c) in curves.iter().enumerate() {
        let col = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = c.thresholds.iter().zip(&c.fractions).map(|(&t, &f)| to_px(t, f)).collect();
        for seg in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
            let n = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
            for s in 0..=n {
                let a = s as f64 / n as f64;
                let (x, y) = (x0 + a * (x1 - x0), y0 + a * (y1 - y0));
                for (dx, dy) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)] {
                    put(&mut img, x + dx, y + dy, col);
                }
            }
        }
        for &(x, y) in &pts {
            for dy in -2..=2 {
                for dx in -2..=2 {
                    put(&mut img, x + dx as f64, y + dy as f64, col);
                }
            }
        }
    }
    img
}
