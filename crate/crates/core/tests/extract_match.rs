mod common;

use common::oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfeat_core::geometry::Homography;
use sfeat_core::image::Image;
use sfeat_core::keypoints::{
    extract, extract_multiscale, local_maxima, pyramid_scales, ExtractConfig, Keypoint, KeypointSet,
};
use sfeat_core::matching::{match_descriptors, mean_mma, mma, nearest_neighbors, MatchPolicy, MatchSet, MMA_THRESHOLDS};
use sfeat_core::network::{BackboneConfig, FeatureMaps, Network};
use sfeat_core::Tensor;

fn random_maps(rng: &mut ChaCha8Rng, d: usize, h: usize, w: usize) -> FeatureMaps {
    // quantized scores make exact ties common
    let q = |rng: &mut ChaCha8Rng| (rng.random_range(0..12) as f64) / 11.0;
    FeatureMaps {
        descriptors: Tensor::from_fn([d, h, w], |_| rng.random_range(-1.0..1.0)),
        reliability: Tensor::from_fn([1, h, w], |_| q(rng)),
        repeatability: Tensor::from_fn([1, h, w], |_| q(rng)),
    }
}

#[test]
fn maxima_match_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (h, w, r) = (rng.random_range(1..14), rng.random_range(1..14), rng.random_range(0..4));
        let map: Vec<f64> = (0..h * w).map(|_| rng.random_range(0..6) as f64).collect();
        assert_eq!(local_maxima(&map, h, w, r), oracle::strict_maxima(&map, h, w, r));
    }
}

#[test]
fn extraction_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (d, h, w) = (rng.random_range(1..6), rng.random_range(3..16), rng.random_range(3..16));
        let maps = random_maps(&mut rng, d, h, w);
        let cfg = ExtractConfig {
            rel_thresh: rng.random_range(0.0..0.6),
            rep_thresh: rng.random_range(0.0..0.6),
            topk: rng.random_range(1..20),
            nms_radius: rng.random_range(0..3),
        };
        let got = extract(&maps, &cfg).unwrap();

        let (r, s, x) = (maps.repeatability.data(), maps.reliability.data(), maps.descriptors.data());
        let mut want: Vec<(f64, usize, usize)> = oracle::strict_maxima(r, h, w, cfg.nms_radius)
            .into_iter()
            .filter(|&(y, x)| r[y * w + x] >= cfg.rep_thresh && s[y * w + x] >= cfg.rel_thresh)
            .map(|(y, x)| (r[y * w + x] * s[y * w + x], y, x))
            .collect();
        // stable sort keeps raster order among equal scores
        want.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        // zero descriptors cannot be normalized and are skipped
        want.retain(|&(_, y, xx)| (0..d).any(|c| x[(c * h + y) * w + xx] != 0.0));
        want.truncate(cfg.topk);

        assert_eq!(got.len(), want.len());
        for (i, &(score, y, xx)) in want.iter().enumerate() {
            let k = got.keypoints[i];
            assert_eq!((k.x, k.y), (xx as f32, y as f32));
            assert!((k.score as f64 - score).abs() < 1e-6);
            let n = (0..d).map(|c| x[(c * h + y) * w + xx].powi(2)).sum::<f64>().sqrt();
            for c in 0..d {
                assert!((got.descriptor(i)[c] as f64 - x[(c * h + y) * w + xx] / n).abs() < 1e-6);
            }
        }
        got.validate().unwrap();
    }
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> KeypointSet {
    KeypointSet {
        keypoints: (0..n)
            .map(|_| Keypoint { x: rng.random_range(0.0..50.0), y: rng.random_range(0.0..50.0), scale: 1.0, score: 1.0 })
            .collect(),
        dim,
        descriptors: (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

#[test]
fn nearest_neighbors_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let dim = rng.random_range(1..12);
        let (n, m) = (rng.random_range(1..300), rng.random_range(1..40));
        let a = random_set(&mut rng, n, dim);
        let b = random_set(&mut rng, m, dim);
        let (ab, ba) = nearest_neighbors(&a.descriptors, &b.descriptors, dim);
        for (i, &(j, d2)) in ab.iter().enumerate() {
            let (oj, od) = oracle::nearest(a.descriptor(i), &b.descriptors, dim);
            // a different index is only acceptable as an exact-tie equivalent
            let chosen = oracle::sq_dist(a.descriptor(i), b.descriptor(j));
            assert!(j == oj || (chosen - od).abs() < 1e-6, "row {i}: {j} vs {oj}");
            assert!((d2 as f64 - od).abs() < 1e-5 * od.max(1.0));
        }
        for (j, &(i, _)) in ba.iter().enumerate() {
            let (oi, od) = oracle::nearest(b.descriptor(j), &a.descriptors, dim);
            let chosen = oracle::sq_dist(b.descriptor(j), a.descriptor(i));
            assert!(i == oi || (chosen - od).abs() < 1e-6, "col {j}: {i} vs {oi}");
        }

        let mutual = match_descriptors(&a, &b, MatchPolicy::MutualNn);
        let want: Vec<(usize, usize)> = (0..n)
            .filter_map(|i| {
                let (j, _) = oracle::nearest(a.descriptor(i), &b.descriptors, dim);
                let (back, _) = oracle::nearest(b.descriptor(j), &a.descriptors, dim);
                (back == i).then_some((i, j))
            })
            .collect();
        let got: Vec<(usize, usize)> = mutual.matches.iter().map(|m| (m.a, m.b)).collect();
        assert_eq!(got, want);
        for m in &mutual.matches {
            let d = oracle::sq_dist(a.descriptor(m.a), b.descriptor(m.b)).sqrt();
            assert!((m.distance as f64 - d).abs() < 1e-5);
        }
        assert_eq!(match_descriptors(&a, &b, MatchPolicy::Nn).len(), n);
    }
}

#[test]
fn empty_and_mismatched_sets_give_no_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_set(&mut rng, 5, 3);
    assert!(match_descriptors(&a, &KeypointSet::empty(3), MatchPolicy::MutualNn).is_empty());
    assert!(match_descriptors(&KeypointSet::empty(3), &a, MatchPolicy::Nn).is_empty());
    let b = random_set(&mut rng, 5, 4);
    assert!(match_descriptors(&a, &b, MatchPolicy::Nn).is_empty());
}

fn mild_homography(rng: &mut ChaCha8Rng) -> Homography {
    Homography::from_row_major(&[
        1.0 + rng.random_range(-0.1..0.1),
        rng.random_range(-0.1..0.1),
        rng.random_range(-5.0..5.0),
        rng.random_range(-0.1..0.1),
        1.0 + rng.random_range(-0.1..0.1),
        rng.random_range(-5.0..5.0),
        rng.random_range(-1e-3..1e-3),
        rng.random_range(-1e-3..1e-3),
        1.0,
    ])
    .unwrap()
}

#[test]
fn mma_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let h = mild_homography(&mut rng);
        let n = rng.random_range(1..30);
        let a = random_set(&mut rng, n, 2);
        // b holds noisy projections of a, so errors span the thresholds
        let mut b = a.clone();
        for k in &mut b.keypoints {
            let (x, y) = oracle::project(&h.row_major(), k.x as f64, k.y as f64);
            k.x = (x + rng.random_range(-8.0..8.0)) as f32;
            k.y = (y + rng.random_range(-8.0..8.0)) as f32;
        }
        let matches = MatchSet {
            matches: (0..rng.random_range(0..40))
                .map(|_| sfeat_core::matching::Match {
                    a: rng.random_range(0..a.len()),
                    b: rng.random_range(0..b.len()),
                    distance: 0.0,
                })
                .collect(),
        };
        let rep = mma(&matches, &a, &b, &h, &MMA_THRESHOLDS);
        let m = h.row_major();
        for (ti, &t) in MMA_THRESHOLDS.iter().enumerate() {
            let correct = matches
                .matches
                .iter()
                .filter(|mt| {
                    let (pa, pb) = (a.keypoints[mt.a], b.keypoints[mt.b]);
                    let (x, y) = oracle::project(&m, pa.x as f64, pa.y as f64);
                    ((x - pb.x as f64).powi(2) + (y - pb.y as f64).powi(2)).sqrt() <= t
                })
                .count();
            let want = if matches.is_empty() { 0.0 } else { correct as f64 / matches.len() as f64 };
            assert!((rep.fractions()[ti] - want).abs() < 1e-6);
        }
    }
}

#[test]
fn mma_examples() {
    let pts = |v: &[(f32, f32)]| KeypointSet {
        keypoints: v.iter().map(|&(x, y)| Keypoint { x, y, scale: 1.0, score: 1.0 }).collect(),
        dim: 1,
        descriptors: vec![1.0; v.len()],
    };
    let a = pts(&[(0.0, 0.0), (10.0, 0.0)]);
    let b = pts(&[(2.5, 0.0), (10.0, 0.5)]);
    let m = MatchSet {
        matches: vec![
            sfeat_core::matching::Match { a: 0, b: 0, distance: 0.0 },
            sfeat_core::matching::Match { a: 1, b: 1, distance: 0.0 },
        ],
    };
    let r = mma(&m, &a, &b, &Homography::identity(), &MMA_THRESHOLDS);
    assert_eq!(r.fractions()[..3], [0.5, 0.5, 1.0]);
    let none = mma(&MatchSet::default(), &a, &b, &Homography::identity(), &MMA_THRESHOLDS);
    assert!(none.no_matches() && none.fractions().iter().all(|&f| f == 0.0));
    assert_eq!(mean_mma(&[r, none])[0], 0.25);
}

proptest! {
    #[test]
    fn mutual_matching_is_symmetric(seed in any::<u64>(), n in 1usize..40, m in 1usize..40, dim in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_set(&mut rng, n, dim);
        let b = random_set(&mut rng, m, dim);
        let mut ab: Vec<(usize, usize)> =
            match_descriptors(&a, &b, MatchPolicy::MutualNn).matches.iter().map(|x| (x.a, x.b)).collect();
        let mut ba: Vec<(usize, usize)> =
            match_descriptors(&b, &a, MatchPolicy::MutualNn).matches.iter().map(|x| (x.b, x.a)).collect();
        ab.sort();
        ba.sort();
        prop_assert_eq!(ab, ba);
    }
}

#[test]
fn pyramid_levels_for_64() {
    let s = pyramid_scales(64, 64);
    assert_eq!(s.len(), 9);
    assert_eq!(s[0], 1.0);
    assert!((s[4] - 0.5).abs() < 1e-12 && (s[8] - 0.25).abs() < 1e-12);
    assert!(pyramid_scales(15, 40).is_empty());
}

#[test]
fn single_scale_equals_plain_extraction() {
    let net = Network::new(BackboneConfig::desk(), 2).unwrap();
    let img = Image::from_fn(3, 32, 40, |c, y, x| ((x * 7 + y * 3 + c * 5) % 11) as f64 / 10.0);
    let cfg = ExtractConfig { rel_thresh: 0.0, rep_thresh: 0.0, topk: 50, nms_radius: 2 };
    let single = extract_multiscale(&net, &img, &[1.0], &cfg).unwrap();
    let plain = extract(&net.forward(&img.to_tensor()).unwrap(), &cfg).unwrap();
    assert_eq!(single, plain);

    let multi = extract_multiscale(&net, &img, &[1.0, 0.75, 0.5], &cfg).unwrap();
    multi.validate().unwrap();
    assert!(multi.len() <= cfg.topk);
    for k in &multi.keypoints {
        assert!(k.x >= 0.0 && k.x <= 39.0 && k.y >= 0.0 && k.y <= 31.0);
        assert!([1.0, 0.75, 0.5].contains(&k.scale));
    }
    assert!(extract_multiscale(&net, &img, &[0.5, 1.0], &cfg).is_err());
    assert!(extract_multiscale(&net, &img, &[1.0, 0.3], &cfg).is_err());
    assert!(extract_multiscale(&net, &img, &[], &cfg).is_err());
}
