mod common;

use common::*;
use lora_hull_core::adapter::{layer_delta, validate_mixspec, MixSpec};
use lora_hull_core::diagnostics::{mds_embed, pairwise_cosine, pairwise_sq_l2};
use lora_hull_core::interpolation::{compose_multi, compose_single, to_dense, to_lowrank_concat};
use lora_hull_core::sweep::{lambda_sum_f32, plan_lambda_line, plan_simplex, plan_spider};
use lora_hull_core::tensor::{frobenius_inner, frobenius_norm, matmul, matmul_f64, svd, sym_eig_top};
use lora_hull_core::{AdapterLayer, Matrix};
use proptest::prelude::*;
use rand::Rng;

const SHAPES: [(usize, usize); 2] = [(6, 5), (4, 7)];

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..7, 1usize..7, 1usize..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), (n, k, m) in dims(), p in 1usize..7) {
        let mut r = rng(seed);
        let (a, b, c) = (random_matrix(&mut r, n, k), random_matrix(&mut r, k, m), random_matrix(&mut r, m, p));
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(rel_diff(&left, &right) <= 1e-5);
    }

    #[test]
    fn matmul_matches_triple_loop(seed in any::<u64>(), (n, k, m) in dims()) {
        let mut r = rng(seed);
        let (a, b) = (random_matrix(&mut r, n, k), random_matrix(&mut r, k, m));
        prop_assert_eq!(matmul_f64(&a, &b).unwrap(), naive_product(&a, &b));
    }

    #[test]
    fn frobenius_inner_is_symmetric(seed in any::<u64>(), n in 1usize..9, m in 1usize..9) {
        let mut r = rng(seed);
        let (a, b) = (random_matrix(&mut r, n, m), random_matrix(&mut r, n, m));
        prop_assert_eq!(frobenius_inner(&a, &b).unwrap(), frobenius_inner(&b, &a).unwrap());
        let nn = frobenius_norm(&a);
        prop_assert!((nn * nn - frobenius_inner(&a, &a).unwrap()).abs() <= 1e-9 * nn.max(1.0).powi(2));
    }

    #[test]
    fn svd_reconstructs(seed in any::<u64>(), n in 1usize..10, m in 1usize..10, low in 0usize..3) {
        let mut r = rng(seed);
        // Optionally force low rank to exercise the completion path.
        let a = if low > 0 && n.min(m) > low {
            matmul(&random_matrix(&mut r, n, low), &random_matrix(&mut r, low, m)).unwrap()
        } else {
            random_matrix(&mut r, n, m)
        };
        let d = svd(&a).unwrap();
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(d.s.iter().all(|&x| x >= 0.0));
        let p = d.s.len();
        let mut us = d.u.to_f64();
        for i in 0..n {
            for j in 0..p {
                us[i * p + j] *= d.s[j];
            }
        }
        let v = d.v.to_f64();
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..m {
                let rec: f64 = (0..p).map(|t| us[i * p + t] * v[j * p + t]).sum();
                err += (rec - f64::from(a.get(i, j))).powi(2);
            }
        }
        prop_assert!(err.sqrt() / frobenius_norm(&a).max(1.0) <= 1e-5);
    }

    #[test]
    fn gram_eigenvalues_nonnegative(seed in any::<u64>(), n in 1usize..8, m in 1usize..8) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, m, n);
        let g = matmul(&x.transpose(), &x).unwrap();
        let top = sym_eig_top(&g, n).unwrap();
        prop_assert!(top.values.iter().all(|&v| v >= -1e-6));
    }

    #[test]
    fn layer_delta_is_linear(seed in any::<u64>(), c in -4.0f32..4.0) {
        let mut r = rng(seed);
        let (b, a) = (random_matrix(&mut r, 6, 3), random_matrix(&mut r, 3, 5));
        let base = layer_delta(&AdapterLayer::new("l", b.clone(), a.clone(), 0.5).unwrap());
        let scaled_b = Matrix::new(6, 3, b.data().iter().map(|x| x * c).collect()).unwrap();
        let scaled = layer_delta(&AdapterLayer::new("l", scaled_b, a, 0.5).unwrap());
        prop_assert!(rel_diff(&scaled, &base.scaled(f64::from(c))) <= 1e-6);
    }

    #[test]
    fn mixspec_validation_is_idempotent(seed in any::<u64>(), n in 1usize..7, normalize in any::<bool>()) {
        let mut r = rng(seed);
        let lambda = random_simplex(&mut r, n);
        let alpha = (0..n).map(|i| i as f32 * 0.3 - 0.5).collect();
        let once = validate_mixspec(MixSpec::new(alpha, lambda), n, normalize).unwrap();
        let twice = validate_mixspec(once.clone(), n, normalize).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn endpoints_are_recovered_exactly(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pair = random_pair(&mut r, "x", &SHAPES, 3);
        prop_assert_eq!(to_dense(&compose_single(&pair, 0.0).unwrap()), pair.minus.deltas());
        prop_assert_eq!(to_dense(&compose_single(&pair, 1.0).unwrap()), pair.plus.deltas());
    }

    #[test]
    fn midpoint_affinity(seed in any::<u64>(), a in -1.0f32..2.0, b in -1.0f32..2.0) {
        let mut r = rng(seed);
        let pair = random_pair(&mut r, "x", &SHAPES, 3);
        let mid = to_dense(&compose_single(&pair, (a + b) / 2.0).unwrap());
        let da = to_dense(&compose_single(&pair, a).unwrap());
        let db = to_dense(&compose_single(&pair, b).unwrap());
        for (name, m) in &mid {
            let avg = da[name].add(&db[name]).unwrap().scaled(0.5);
            prop_assert!(rel_diff(m, &avg) <= 1e-6);
        }
    }

    #[test]
    fn convex_combination_bounds(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let set = random_set(&mut r, n, &SHAPES, 2);
        let alpha: Vec<f32> = (0..n).map(|_| r.random_range(0.0f32..1.0)).collect();
        let lambda = random_simplex(&mut r, n);
        let mixed = to_dense(&compose_multi(&set, &MixSpec::new(alpha.clone(), lambda)).unwrap());
        let singles: Vec<_> = set
            .pairs()
            .iter()
            .zip(&alpha)
            .map(|(p, &a)| to_dense(&compose_single(p, a).unwrap()))
            .collect();
        for (name, m) in &mixed {
            for (idx, &x) in m.data().iter().enumerate() {
                let vals = singles.iter().map(|s| s[name].data()[idx]);
                let lo = vals.clone().fold(f32::INFINITY, f32::min);
                let hi = vals.fold(f32::NEG_INFINITY, f32::max);
                prop_assert!(x >= lo - 1e-6 && x <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn reduction_law(seed in any::<u64>(), n in 1usize..5, alpha in -1.0f32..2.0) {
        let mut r = rng(seed);
        let set = random_set(&mut r, n, &SHAPES, 2);
        let i = r.random_range(0..n);
        let mut lambda = vec![0.0; n];
        lambda[i] = 1.0;
        let alphas: Vec<f32> = (0..n).map(|j| if j == i { alpha } else { r.random_range(-1.0..2.0) }).collect();
        let multi = to_dense(&compose_multi(&set, &MixSpec::new(alphas, lambda)).unwrap());
        prop_assert_eq!(multi, to_dense(&compose_single(&set.pairs()[i], alpha).unwrap()));
    }

    #[test]
    fn export_equivalence(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let set = random_set(&mut r, n, &SHAPES, 3);
        let alpha: Vec<f32> = (0..n).map(|_| r.random_range(-3.0f32..4.0)).collect();
        let c = compose_multi(&set, &MixSpec::new(alpha, random_simplex(&mut r, n))).unwrap();
        let exported = to_lowrank_concat(&c, "merged");
        let dense = to_dense(&c);
        for (name, m) in exported.deltas() {
            prop_assert!(rel_diff(&m, &dense[&name]) <= 1e-5);
        }
    }

    #[test]
    fn norm_is_convex_in_alpha(seed in any::<u64>(), a in -3.0f32..4.0, b in -3.0f32..4.0) {
        let mut r = rng(seed);
        let pair = random_pair(&mut r, "x", &SHAPES, 3);
        let f = |x: f32| -> Vec<f64> {
            to_dense(&compose_single(&pair, x).unwrap()).values().map(frobenius_norm).collect()
        };
        let (fa, fb, fm) = (f(a), f(b), f((a + b) / 2.0));
        for l in 0..fm.len() {
            prop_assert!(fm[l] <= (fa[l] + fb[l]) / 2.0 + 1e-6 * fa[l].max(fb[l]).max(1.0));
        }
    }

    #[test]
    fn cosine_is_scale_invariant(seed in any::<u64>(), c in 0.01f32..50.0) {
        let mut r = rng(seed);
        let a = random_adapter(&mut r, "a", &SHAPES, 2);
        let b = random_adapter(&mut r, "b", &SHAPES, 2);
        let before = pairwise_cosine(&[&a, &b]).unwrap().matrix;
        let b2 = b.clone().with_scaling(c).unwrap();
        let after = pairwise_cosine(&[&a, &b2]).unwrap().matrix;
        for (x, y) in before.values().iter().zip(after.values()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn sq_l2_triangle_inequality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ads: Vec<_> = (0..4).map(|i| random_adapter(&mut r, &format!("a{i}"), &SHAPES, 2)).collect();
        let refs: Vec<_> = ads.iter().collect();
        let d = pairwise_sq_l2(&refs).unwrap().to_distances().unwrap();
        for p in 0..4 {
            for q in 0..4 {
                for s in 0..4 {
                    prop_assert!(d.get(p, q) <= d.get(p, s) + d.get(s, q) + 1e-6);
                }
            }
        }
    }

    #[test]
    fn mds_collapses_duplicates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_adapter(&mut r, "a", &SHAPES, 2);
        let b = random_adapter(&mut r, "b", &SHAPES, 2);
        let mut dup = a.clone();
        dup.set_id("a2");
        let d = pairwise_sq_l2(&[&a, &b, &dup]).unwrap().to_distances().unwrap();
        let e = mds_embed(&d, 2).unwrap();
        for (x, y) in e.coords[0].iter().zip(&e.coords[2]) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn simplex_rows_sum_to_one(m in 1usize..=30, alpha in -1.0f32..2.0) {
        let p = plan_simplex(5, [3, 0, 4], m, alpha).unwrap();
        prop_assert_eq!(p.rows.len(), (m + 1) * (m + 2) / 2);
        for row in &p.rows {
            prop_assert_eq!(lambda_sum_f32(&row.lambda), 1.0);
            prop_assert!(row.lambda.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn spider_and_lambda_rows_sum_to_one(n in 2usize..9, lambda in 0.0f32..=1.0) {
        let varied = n / 2;
        let p = plan_spider(n, varied, &[0.0, 0.5, 1.0], lambda, 1.0).unwrap();
        let q = plan_lambda_line(n, varied, 0.0, &[lambda, 0.0, 1.0], 0.0).unwrap();
        for row in p.rows.iter().chain(&q.rows) {
            prop_assert_eq!(lambda_sum_f32(&row.lambda), 1.0);
        }
    }

    #[test]
    fn plans_are_pure(m in 1usize..12, alpha in -1.0f32..2.0) {
        let a = plan_simplex(4, [0, 1, 2], m, alpha).unwrap();
        let b = plan_simplex(4, [0, 1, 2], m, alpha).unwrap();
        prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }
}
