#![allow(dead_code)]

use lora_hull_core::{Adapter, AdapterLayer, AnchorPair, AnchorSet, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn random_adapter(rng: &mut ChaCha8Rng, id: &str, shapes: &[(usize, usize)], rank: usize) -> Adapter {
    let layers = shapes
        .iter()
        .enumerate()
        .map(|(l, &(d1, d2))| {
            let scaling = rng.random_range(0.25f32..2.0);
            AdapterLayer::new(
                format!("layer{l}"),
                random_matrix(rng, d1, rank),
                random_matrix(rng, rank, d2),
                scaling,
            )
            .unwrap()
        })
        .collect();
    Adapter::new(id, layers).unwrap()
}

pub fn random_pair(rng: &mut ChaCha8Rng, name: &str, shapes: &[(usize, usize)], rank: usize) -> AnchorPair {
    AnchorPair {
        attribute: name.into(),
        minus: random_adapter(rng, &format!("{name}.minus"), shapes, rank),
        plus: random_adapter(rng, &format!("{name}.plus"), shapes, rank),
    }
}

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, shapes: &[(usize, usize)], rank: usize) -> AnchorSet {
    let pairs = (0..n).map(|i| random_pair(rng, &format!("attr{i}"), shapes, rank)).collect();
    AnchorSet::new(pairs).unwrap()
}

/// Random point on the simplex with `n` coordinates, summing to 1 in f64.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-9f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| (x / total) as f32).collect()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.data().iter().fold(0.0f64, |a, &x| a.max(f64::from(x).abs()))
}

/// Largest entrywise difference relative to the larger magnitude, floored at 1.
pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = max_abs(a).max(max_abs(b)).max(1.0);
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (&x, &y)| m.max((f64::from(x) - f64::from(y)).abs()))
        / scale
}

/// Textbook triple loop in f64.
pub fn naive_product(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i * m + j] += f64::from(a.get(i, t)) * f64::from(b.get(t, j));
            }
        }
    }
    out
}
