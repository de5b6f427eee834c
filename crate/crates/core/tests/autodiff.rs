mod common;

use common::oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfeat_core::autodiff::{grad_check, ApBinning, ConvGeometry, PatchReduction, Reduction};
use sfeat_core::{Error, Graph, Tensor};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Values with magnitude in [0.5, 1.5], for ops with a kink or pole at the
/// origin. Keeps the finite-difference step far from the singular point.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(0.5..1.5);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

/// Distinct values separated by at least 0.01, so an argmax never flips
/// under the finite-difference step.
fn rand_distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.02 - n as f64 * 0.01).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        vals.swap(i, j);
    }
    let vals = vals.into_iter().map(|v| v + rng.random_range(-0.004..0.004)).collect();
    Tensor::new(shape.to_vec(), vals).unwrap()
}

/// Scalar projection of an op output onto fixed random weights.
fn project(g: &mut Graph, y: sfeat_core::Var, seed: u64) -> sfeat_core::Result<sfeat_core::Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let w = rand_tensor(&mut rng, g.shape(y));
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

const GC_STEP: f64 = 1e-3;
const GC_TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;
/// Step for ops whose curvature makes the O(h^2) truncation error of a
/// 1e-3 step exceed the tolerance on small gradient coordinates.
/// `truncation_error_is_quadratic` shows the residual is truncation.
const GC_FINE_STEP: f64 = 1e-4;

fn check_all<F>(name: &str, mut make: F)
where
    F: FnMut(u64) -> f64,
{
    let worst = (0..INSTANCES).map(&mut make).fold(0.0, f64::max);
    assert!(worst < GC_TOL, "{name}: max relative error {worst:e}");
}

// ---------------------------------------------------------------- conv2d

#[test]
fn conv2d_unit_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = rand_tensor(&mut rng, &[1, 6, 7]);
    let mut g = Graph::new();
    let x = g.constant(img.clone());
    let k = g.constant(Tensor::full([1, 1, 1, 1], 1.0));
    let y = g.conv2d(x, k, ConvGeometry::UNIT).unwrap();
    assert_eq!(g.value(y), &img);
}

#[test]
fn conv2d_box_filter_on_constant() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full([1, 6, 6], 0.37));
    let k = g.constant(Tensor::full([1, 1, 3, 3], 1.0 / 9.0));
    let y = g.conv2d(x, k, ConvGeometry::UNIT).unwrap();
    assert_eq!(g.shape(y), &[1, 4, 4]);
    for &v in g.value(y).data() {
        assert!((v - 0.37).abs() < 1e-15);
    }
}

#[test]
fn conv2d_batch_of_two_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kern = rand_tensor(&mut rng, &[4, 3, 3, 3]);
    for _ in 0..2 {
        let img = rand_tensor(&mut rng, &[3, 5, 5]);
        let mut g = Graph::new();
        let x = g.constant(img.clone());
        let k = g.constant(kern.clone());
        let y = g.conv2d(x, k, ConvGeometry::UNIT).unwrap();
        let (want, ho, wo) = oracle::conv2d(img.data(), 3, 5, 5, kern.data(), 4, 3, 1, 0, 1);
        assert_eq!(g.shape(y), &[4, ho, wo]);
        for (a, b) in g.value(y).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn conv2d_random_shapes_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let cin = rng.random_range(1..4);
        let cout = rng.random_range(1..4);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let dil = rng.random_range(1..3);
        let stride = rng.random_range(1..3);
        let pad = rng.random_range(0..3);
        let span = dil * (k - 1) + 1;
        // pick an extent that makes the output size exact
        let h = span + stride * rng.random_range(0..5) - 2 * pad.min(span / 2);
        let pad = pad.min(span / 2);
        let w = h;
        let img = rand_tensor(&mut rng, &[cin, h, w]);
        let kern = rand_tensor(&mut rng, &[cout, cin, k, k]);
        let mut g = Graph::new();
        let x = g.constant(img.clone());
        let kv = g.constant(kern.clone());
        let y = g
            .conv2d(x, kv, ConvGeometry { stride, padding: pad, dilation: dil })
            .unwrap();
        let (want, ho, wo) = oracle::conv2d(img.data(), cin, h, w, kern.data(), cout, k, stride, pad, dil);
        assert_eq!(g.shape(y), &[cout, ho, wo]);
        for (a, b) in g.value(y).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn conv2d_gradients() {
    check_all("conv2d", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let geom = ConvGeometry { stride: 1 + (seed as usize % 2), padding: 1, dilation: 1 };
        let size = if geom.stride == 2 { 7 } else { 6 };
        let pt = [rand_tensor(&mut rng, &[2, size, size]), rand_tensor(&mut rng, &[3, 2, 3, 3])];
        grad_check(
            |g, v| {
                let y = g.conv2d(v[0], v[1], geom)?;
                project(g, y, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
}

// ---------------------------------------------------------------- separable

#[test]
fn separable_identity_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = rand_tensor(&mut rng, &[3, 8, 8]);
    let mut dw = Tensor::zeros([3, 1, 3, 3]);
    for c in 0..3 {
        dw.data_mut()[c * 9 + 4] = 1.0;
    }
    let mut pw = Tensor::zeros([3, 3, 1, 1]);
    for c in 0..3 {
        pw.data_mut()[c * 3 + c] = 1.0;
    }
    let mut g = Graph::new();
    let x = g.constant(img.clone());
    let d = g.constant(dw);
    let p = g.constant(pw);
    let y = g.depthwise_separable_conv2d(x, d, p, ConvGeometry::same(3, 1)).unwrap();
    assert_eq!(g.value(y), &img);
}

#[test]
fn separable_matches_two_stage_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let (c, co, dil) = (1 + trial % 4, 1 + trial % 3, 1 + trial % 2);
        let img = rand_tensor(&mut rng, &[c, 9, 9]);
        let dw = rand_tensor(&mut rng, &[c, 1, 3, 3]);
        let pw = rand_tensor(&mut rng, &[co, c, 1, 1]);
        let mut g = Graph::new();
        let x = g.constant(img.clone());
        let d = g.constant(dw.clone());
        let p = g.constant(pw.clone());
        let y = g.depthwise_separable_conv2d(x, d, p, ConvGeometry::same(3, dil)).unwrap();
        let mid = oracle::depthwise(img.data(), c, 9, 9, dw.data(), 3, dil, dil);
        let (want, _, _) = oracle::conv2d(&mid, c, 9, 9, pw.data(), co, 1, 1, 0, 1);
        assert_eq!(g.shape(y), &[co, 9, 9]);
        for (a, b) in g.value(y).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn separable_parameter_count() {
    use sfeat_core::autodiff::ops::{conv_param_count, separable_param_count};
    assert_eq!(separable_param_count(64, 128, 3), 64 * 9 + 64 * 128);
    assert_eq!(separable_param_count(64, 128, 3), 8768);
    assert_eq!(conv_param_count(64, 128, 3), 73728);
}

#[test]
fn depthwise_gradients() {
    check_all("depthwise", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let pt = [
            rand_tensor(&mut rng, &[3, 7, 7]),
            rand_tensor(&mut rng, &[3, 1, 3, 3]),
            rand_tensor(&mut rng, &[2, 3, 1, 1]),
        ];
        let dil = 1 + seed as usize % 2;
        grad_check(
            |g, v| {
                let y = g.depthwise_separable_conv2d(v[0], v[1], v[2], ConvGeometry::same(3, dil))?;
                project(g, y, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
}

// ---------------------------------------------------------------- l2 normalize

#[test]
fn l2_normalize_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new([2, 1, 3], vec![3.0, 1.0, 0.0, 4.0, 0.0, 0.0]).unwrap());
    let y = g.l2_normalize(x).unwrap();
    let v = g.value(y).data();
    assert!((v[0] - 0.6).abs() < 1e-15 && (v[3] - 0.8).abs() < 1e-15);
    // already unit
    assert_eq!((v[1], v[4]), (1.0, 0.0));
    // zero vector stays zero
    assert_eq!((v[2], v[5]), (0.0, 0.0));
    assert!(v.iter().all(|x| x.is_finite()));
}

#[test]
fn l2_normalize_gradients() {
    check_all("l2_normalize", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let pt = [rand_away_from_zero(&mut rng, &[4, 3, 3])];
        grad_check(
            |g, v| {
                let y = g.l2_normalize(v[0])?;
                project(g, y, seed)
            },
            &pt,
            GC_FINE_STEP,
        )
        .unwrap()
        .max_relative_error
    });
}

// ---------------------------------------------------------------- elementwise

#[test]
fn elementwise_examples() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::new([2], vec![-2.0, 3.0]).unwrap());
    let s = g.square(a);
    assert_eq!(g.value(s).data(), &[4.0, 9.0]);
    let b = g.constant(Tensor::new([3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = g.relu(b);
    assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn abs_subgradient_at_zero() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new([3], vec![-2.0, 0.0, 5.0]).unwrap());
    let y = g.abs(x);
    let l = g.sum(y);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[-1.0, 0.0, 1.0]);
}

#[test]
fn binary_shape_mismatch() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros([2]));
    let b = g.constant(Tensor::zeros([3]));
    assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
    // scalar broadcast is allowed
    let s = g.constant(Tensor::scalar(2.0));
    assert!(g.mul(b, s).is_ok());
}

#[test]
fn elementwise_gradients() {
    use sfeat_core::autodiff::{Binary, Unary};
    let unary = [
        Unary::Square,
        Unary::Relu,
        Unary::Sigmoid,
        Unary::Abs,
        Unary::Sqrt,
        Unary::Scale(-1.7),
        Unary::AddScalar(0.3),
    ];
    for kind in unary {
        check_all("unary", |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let mut x = rand_away_from_zero(&mut rng, &[5, 2]);
            if kind == Unary::Sqrt {
                x.data_mut().iter_mut().for_each(|v| *v = v.abs());
            }
            grad_check(
                |g, v| {
                    let y = g.unary(v[0], kind);
                    project(g, y, seed)
                },
                &[x],
                GC_STEP,
            )
            .unwrap()
            .max_relative_error
        });
    }
    for kind in [Binary::Add, Binary::Sub, Binary::Mul, Binary::Div] {
        check_all("binary", |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let pt = [rand_tensor(&mut rng, &[3, 4]), rand_away_from_zero(&mut rng, &[3, 4])];
            grad_check(
                |g, v| {
                    let y = g.binary(v[0], v[1], kind)?;
                    project(g, y, seed)
                },
                &pt,
                GC_STEP,
            )
            .unwrap()
            .max_relative_error
        });
    }
}

// ---------------------------------------------------------------- reductions

#[test]
fn reduce_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap());
    let m = g.mean(x);
    assert_eq!(g.value(m).item(), 2.0);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new([3], vec![1.0, 5.0, 5.0]).unwrap());
    let m = g.reduce(x, Reduction::Max, &[]).unwrap();
    g.backward(m).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 0.0]);
}

#[test]
fn reduce_axis_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let t = rand_tensor(&mut rng, &[3, 4]);
        let mut g = Graph::new();
        let x = g.constant(t.clone());
        let s0 = g.reduce(x, Reduction::Sum, &[0]).unwrap();
        let s1 = g.reduce(x, Reduction::Sum, &[1]).unwrap();
        for j in 0..4 {
            let want: f64 = (0..3).map(|i| t.data()[i * 4 + j]).sum();
            assert!((g.value(s0).data()[j] - want).abs() < 1e-12);
        }
        for i in 0..3 {
            let want: f64 = (0..4).map(|j| t.data()[i * 4 + j]).sum();
            assert!((g.value(s1).data()[i] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn reduce_axis_out_of_range() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros([2, 2]));
    assert!(g.reduce(x, Reduction::Sum, &[2]).is_err());
}

#[test]
fn reduction_gradients() {
    for kind in [Reduction::Sum, Reduction::Mean, Reduction::Max] {
        for axes in [&[][..], &[0][..], &[1, 2][..]] {
            check_all("reduce", |seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
                let pt = [rand_distinct(&mut rng, &[2, 3, 4])];
                grad_check(
                    |g, v| {
                        let y = g.reduce(v[0], kind, axes)?;
                        project(g, y, seed)
                    },
                    &pt,
                    GC_STEP,
                )
                .unwrap()
                .max_relative_error
            });
        }
    }
    for kind in [PatchReduction::Sum, PatchReduction::Max] {
        check_all("patch_reduce", |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
            let pt = [rand_distinct(&mut rng, &[2, 9, 8])];
            grad_check(
                |g, v| {
                    let y = g.patch_reduce(v[0], 4, kind)?;
                    project(g, y, seed)
                },
                &pt,
                GC_STEP,
            )
            .unwrap()
            .max_relative_error
        });
    }
}

// ---------------------------------------------------------------- matmul

#[test]
fn matmul_examples() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = g.constant(Tensor::new([2, 1], vec![1.0, 1.0]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[3.0, 7.0]);
    let eye = g.constant(Tensor::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let d = g.matmul(eye, a).unwrap();
    assert_eq!(g.value(d), g.value(a));
    assert!(g.matmul(b, b).is_err());
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let a = rand_tensor(&mut rng, &[7, 5]);
        let b = rand_tensor(&mut rng, &[5, 3]);
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        let c = g.matmul(va, vb).unwrap();
        let want = oracle::matmul(a.data(), b.data(), 7, 5, 3);
        for (x, y) in g.value(c).data().iter().zip(&want) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn matmul_and_shape_gradients() {
    check_all("matmul", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let pt = [rand_tensor(&mut rng, &[4, 3]), rand_tensor(&mut rng, &[3, 5])];
        grad_check(
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                let t = g.transpose(y)?;
                project(g, t, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
    check_all("broadcast/slice/reshape", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(850 + seed);
        let pt = [rand_tensor(&mut rng, &[3, 1, 4])];
        grad_check(
            |g, v| {
                let b = g.broadcast_axis(v[0], 1, 5)?;
                let s = g.slice_channels(b, 1, 2)?;
                let r = g.reshape(s, &[10, 4])?;
                project(g, r, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
}

// ---------------------------------------------------------------- other ops

#[test]
fn normalization_and_sampling_gradients() {
    check_all("standardize_rows", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let pt = [rand_tensor(&mut rng, &[3, 10])];
        grad_check(
            |g, v| {
                let y = g.standardize_rows(v[0])?;
                project(g, y, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
    check_all("softmax_channels", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(950 + seed);
        let pt = [rand_tensor(&mut rng, &[3, 2, 4])];
        grad_check(
            |g, v| {
                let y = g.softmax_channels(v[0])?;
                project(g, y, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
    check_all("bias_add", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(970 + seed);
        let pt = [rand_tensor(&mut rng, &[3, 2, 4]), rand_tensor(&mut rng, &[3])];
        grad_check(
            |g, v| {
                let y = g.bias_add(v[0], v[1])?;
                project(g, y, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
    check_all("bilinear_gather", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(990 + seed);
        let pts: Vec<Option<(f64, f64)>> = (0..6)
            .map(|i| if i == 5 { None } else { Some((rng.random_range(0.0..5.0), rng.random_range(0.0..4.0))) })
            .collect();
        let pt = [rand_tensor(&mut rng, &[2, 5, 6])];
        grad_check(
            |g, v| {
                let y = g.bilinear_gather(v[0], &pts)?;
                project(g, y, seed)
            },
            &pt,
            GC_STEP,
        )
        .unwrap()
        .max_relative_error
    });
}

/// Distances clear of every bin centre, in units of the bin width.
fn binned_distances(rng: &mut ChaCha8Rng, binning: ApBinning, rows: usize, cols: usize) -> Tensor {
    let width = binning.max_distance / (binning.bins - 1) as f64;
    Tensor::from_fn([rows, cols], |_| {
        let bin = rng.random_range(0..binning.bins - 1) as f64;
        (bin + rng.random_range(0.2..0.8)) * width
    })
}

#[test]
fn soft_average_precision_gradients() {
    // One positive against 64 negatives, the shape used by the reliability loss.
    let binning = ApBinning::default();
    check_all("soft_ap", |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d = binned_distances(&mut rng, binning, 3, 65);
        grad_check(
            |g, v| {
                let ap = g.soft_average_precision(v[0], binning)?;
                project(g, ap, seed)
            },
            &[d],
            GC_FINE_STEP,
        )
        .unwrap()
        .max_relative_error
    });
}

#[test]
fn soft_average_precision_gradients_default_binning() {
    let binning = ApBinning::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + seed);
        let d = binned_distances(&mut rng, binning, 3, 8);
        let f = |g: &mut Graph, v: &[sfeat_core::Var]| {
            let ap = g.soft_average_precision(v[0], binning)?;
            project(g, ap, seed)
        };
        let r = grad_check(f, &[d], 1e-6).unwrap();
        // Coordinates with an exactly zero gradient only carry rounding noise.
        assert!(
            r.max_relative_error < GC_TOL || r.analytic == 0.0 && r.numeric.abs() < 1e-8,
            "{r:?}"
        );
    }
}

/// Halving the step quarters the mismatch, so the residual at the coarse
/// step is finite-difference truncation rather than a wrong derivative.
#[test]
fn truncation_error_is_quadratic() {
    let binning = ApBinning::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d = binned_distances(&mut rng, binning, 3, 65);
        let f = |g: &mut Graph, v: &[sfeat_core::Var]| {
            let ap = g.soft_average_precision(v[0], binning)?;
            project(g, ap, seed)
        };
        let coarse = grad_check(f, std::slice::from_ref(&d), GC_STEP).unwrap();
        if coarse.max_relative_error < GC_TOL {
            continue;
        }
        let fine = grad_check(f, &[d], GC_STEP / 2.0).unwrap();
        let ratio = coarse.max_relative_error / fine.max_relative_error;
        assert!((3.5..4.5).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}

// ---------------------------------------------------------------- backward

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new([3], vec![0.1, 0.2, 0.3]).unwrap());
    let l = g.sum(x);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new([2], vec![1.0, 2.0]).unwrap());
    let sq = g.square(x);
    let l = g.sum(sq);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn fan_out_accumulates() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = rand_tensor(&mut rng, &[4]);
    let mut g = Graph::new();
    let x = g.leaf(t);
    let y = g.add(x, x).unwrap();
    let l = project(&mut g, y, 3).unwrap();
    g.backward(l).unwrap();
    let dy = g.grad(y).unwrap().to_vec();
    let dx = g.grad(x).unwrap();
    for (a, b) in dx.iter().zip(&dy) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn backward_errors() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros([2]));
    let y = g.square(x);
    assert!(matches!(g.backward(y), Err(Error::NotScalar(_))));
    let l = g.sum(y);
    g.backward(l).unwrap();
    assert_eq!(g.backward(l), Err(Error::BackwardTwice));
    g.zero_grad();
    assert!(g.backward(l).is_ok());
}

#[test]
fn grad_check_square() {
    let r = grad_check(
        |g, v| {
            let s = g.square(v[0]);
            Ok(g.sum(s))
        },
        &[Tensor::new([1], vec![3.0]).unwrap()],
        1e-4,
    )
    .unwrap();
    assert!((r.analytic - 6.0).abs() < 1e-12);
    assert!((r.numeric - 6.0).abs() < 1e-6);
    assert!(r.max_relative_error < 1e-6);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn l2_normalized_norms(vals in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let mut g = Graph::new();
            let x = g.constant(Tensor::new([3, 2, 2], vals).unwrap());
            let y = g.l2_normalize(x).unwrap();
            let d = g.value(y).data();
            for p in 0..4 {
                let n = (0..3).map(|c| d[c * 4 + p] * d[c * 4 + p]).sum::<f64>().sqrt();
                prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-6);
            }
        }
    }
}
