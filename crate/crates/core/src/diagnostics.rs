//! Weight-space geometry of adapters: pairwise cosine similarity and squared
//! distance of layer deltas, classical MDS, interpolation trajectories and
//! norm profiles along the interpolation line.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::adapter::{layer_delta_f64, Adapter, AdapterError, AnchorPair, AnchorSet, LayerSchema};
use crate::interpolation::{compose_single, CompositeAdapter};
use crate::math;
use crate::tensor::{sym_eig_f64, LinalgError, Matrix};

/// Layers whose delta norm is below this are excluded from cosine averages.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("need at least one input")]
    Empty,
    #[error("{label}: layer {layer} does not match the shared schema")]
    SchemaMismatch { label: String, layer: String },
    #[error("{p} vs {q}: every layer has a degenerate (near-zero) delta")]
    AllLayersDegenerate { p: String, q: String },
    #[error("{label}: layer {layer} factor ranks differ ({p_rank} vs {q_rank})")]
    FactorRankMismatch {
        label: String,
        layer: String,
        p_rank: usize,
        q_rank: usize,
    },
    #[error("distance matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("distance matrix entry ({row}, {col}) = {value} is invalid")]
    InvalidDistance { row: usize, col: usize, value: f64 },
    #[error("expected a {expected:?} matrix, got {got:?}")]
    WrongKind {
        expected: SimilarityKind,
        got: SimilarityKind,
    },
    #[error("embedding dimension {dim} not in 1..={n}")]
    BadDimension { dim: usize, n: usize },
    #[error("trajectory step must lie in (0, 1], got {0}")]
    BadStep(f64),
}

/// A dense snapshot of a model's update, one flattened `f64` buffer per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePoint {
    pub label: String,
    pub layers: BTreeMap<String, Vec<f64>>,
}

impl DensePoint {
    pub fn from_adapter(adapter: &Adapter) -> Self {
        Self {
            label: adapter.id().into(),
            layers: adapter
                .layers()
                .map(|l| (l.name().into(), layer_delta_f64(l)))
                .collect(),
        }
    }

    pub fn from_composite(label: impl Into<String>, c: &CompositeAdapter<'_>) -> Self {
        Self {
            label: label.into(),
            layers: c.layers.iter().map(|l| (l.name.clone(), l.dense_f64())).collect(),
        }
    }

    /// The base model: every delta identically zero.
    pub fn zeros(label: impl Into<String>, schema: &LayerSchema) -> Self {
        Self {
            label: label.into(),
            layers: schema
                .iter()
                .map(|(n, &(d1, d2))| (n.clone(), vec![0.0; d1 * d2]))
                .collect(),
        }
    }

    pub fn mean_norm(&self) -> f64 {
        if self.layers.is_empty() {
            return 0.0;
        }
        self.layers.values().map(|v| norm(v)).sum::<f64>() / self.layers.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// Mean over layers of the cosine between flattened deltas.
    Cosine,
    /// Mean over layers of the cosine between concatenated flattened factors.
    FactorCosine,
    /// Mean over layers of the squared Frobenius distance between deltas.
    SquaredL2,
    /// Plain (not squared) distances, the input to [`mds_embed`].
    Distance,
}

/// Square, labelled matrix of pairwise statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub kind: SimilarityKind,
    labels: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(kind: SimilarityKind, labels: Vec<String>, values: Vec<f64>) -> Result<Self, DiagnosticsError> {
        let n = labels.len();
        if n == 0 {
            return Err(DiagnosticsError::Empty);
        }
        if values.len() != n * n {
            return Err(LinalgError::DataLength { rows: n, cols: n, len: values.len() }.into());
        }
        Ok(Self { kind, labels, values })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.values[p * self.len() + q]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_f64(self.len(), self.len(), &self.values)
    }

    /// Element-wise square root of a [`SimilarityKind::SquaredL2`] matrix.
    pub fn to_distances(&self) -> Result<SimilarityMatrix, DiagnosticsError> {
        if self.kind != SimilarityKind::SquaredL2 {
            return Err(DiagnosticsError::WrongKind {
                expected: SimilarityKind::SquaredL2,
                got: self.kind,
            });
        }
        Ok(SimilarityMatrix {
            kind: SimilarityKind::Distance,
            labels: self.labels.clone(),
            values: self.values.iter().map(|&v| math::sqrt(v.max(0.0))).collect(),
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_shared_schema(points: &[DensePoint]) -> Result<(), DiagnosticsError> {
    let first = points.first().ok_or(DiagnosticsError::Empty)?;
    for p in points {
        let mismatch = |layer: &str| DiagnosticsError::SchemaMismatch {
            label: p.label.clone(),
            layer: layer.into(),
        };
        for (name, v) in &first.layers {
            match p.layers.get(name) {
                Some(w) if w.len() == v.len() => {}
                _ => return Err(mismatch(name)),
            }
        }
        if let Some(extra) = p.layers.keys().find(|k| !first.layers.contains_key(*k)) {
            return Err(mismatch(extra));
        }
    }
    Ok(())
}

/// A layer excluded from a cosine average because one side was near zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedLayer {
    pub p: String,
    pub q: String,
    pub layer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CosineReport {
    pub matrix: SimilarityMatrix,
    pub skipped: Vec<SkippedLayer>,
}

pub fn pairwise_cosine(adapters: &[&Adapter]) -> Result<CosineReport, DiagnosticsError> {
    let points: Vec<DensePoint> = adapters.iter().map(|a| DensePoint::from_adapter(a)).collect();
    pairwise_cosine_points(&points)
}

/// Entry `(p, q)` is the mean over layers of `⟨Δp, Δq⟩ / (‖Δp‖ ‖Δq‖)`.
pub fn pairwise_cosine_points(points: &[DensePoint]) -> Result<CosineReport, DiagnosticsError> {
    check_shared_schema(points)?;
    let vectors: Vec<Vec<&[f64]>> = points
        .iter()
        .map(|p| p.layers.values().map(|v| v.as_slice()).collect())
        .collect();
    let names: Vec<&String> = points[0].layers.keys().collect();
    cosine_core(points.iter().map(|p| p.label.clone()).collect(), &names, &vectors, SimilarityKind::Cosine)
}

/// Cosine over the raw factors: per layer, `vec(B) ⊕ vec(A)` of each adapter.
/// Requires equal ranks per layer across the adapters.
pub fn pairwise_factor_cosine(adapters: &[&Adapter]) -> Result<CosineReport, DiagnosticsError> {
    let first = adapters.first().ok_or(DiagnosticsError::Empty)?;
    let mut flat: Vec<Vec<Vec<f64>>> = Vec::with_capacity(adapters.len());
    for a in adapters {
        if a.schema() != first.schema() {
            let layer = a
                .schema()
                .keys()
                .chain(first.schema().keys())
                .find(|k| a.schema().get(*k) != first.schema().get(*k))
                .cloned()
                .unwrap_or_default();
            return Err(DiagnosticsError::SchemaMismatch {
                label: a.id().into(),
                layer,
            });
        }
        let mut per_layer = Vec::with_capacity(a.len());
        for l in a.layers() {
            let reference = first.layer(l.name()).expect("schemas equal");
            if reference.rank() != l.rank() {
                return Err(DiagnosticsError::FactorRankMismatch {
                    label: a.id().into(),
                    layer: l.name().into(),
                    p_rank: reference.rank(),
                    q_rank: l.rank(),
                });
            }
            per_layer.push(l.b().data().iter().chain(l.a().data()).map(|&x| f64::from(x)).collect());
        }
        flat.push(per_layer);
    }
    let vectors: Vec<Vec<&[f64]>> = flat
        .iter()
        .map(|layers| layers.iter().map(|v| v.as_slice()).collect())
        .collect();
    let names: Vec<String> = first.layers().map(|l| l.name().into()).collect();
    let name_refs: Vec<&String> = names.iter().collect();
    cosine_core(
        adapters.iter().map(|a| a.id().into()).collect(),
        &name_refs,
        &vectors,
        SimilarityKind::FactorCosine,
    )
}

fn cosine_core(
    labels: Vec<String>,
    layer_names: &[&String],
    vectors: &[Vec<&[f64]>],
    kind: SimilarityKind,
) -> Result<CosineReport, DiagnosticsError> {
    let n = labels.len();
    let norms: Vec<Vec<f64>> = vectors
        .iter()
        .map(|layers| layers.iter().map(|v| norm(v)).collect())
        .collect();
    let mut values = vec![0.0; n * n];
    let mut skipped = Vec::new();
    for p in 0..n {
        for q in p..n {
            let mut sum = 0.0;
            let mut used = 0usize;
            for (l, name) in layer_names.iter().enumerate() {
                let (np, nq) = (norms[p][l], norms[q][l]);
                if np < DEGENERATE_NORM || nq < DEGENERATE_NORM {
                    skipped.push(SkippedLayer {
                        p: labels[p].clone(),
                        q: labels[q].clone(),
                        layer: (*name).clone(),
                    });
                    continue;
                }
                let c = if p == q { 1.0 } else { dot(vectors[p][l], vectors[q][l]) / (np * nq) };
                sum += c;
                used += 1;
            }
            if used == 0 {
                return Err(DiagnosticsError::AllLayersDegenerate {
                    p: labels[p].clone(),
                    q: labels[q].clone(),
                });
            }
            let mean = sum / used as f64;
            values[p * n + q] = mean;
            values[q * n + p] = mean;
        }
    }
    Ok(CosineReport {
        matrix: SimilarityMatrix { kind, labels, values },
        skipped,
    })
}

pub fn pairwise_sq_l2(adapters: &[&Adapter]) -> Result<SimilarityMatrix, DiagnosticsError> {
    let points: Vec<DensePoint> = adapters.iter().map(|a| DensePoint::from_adapter(a)).collect();
    pairwise_sq_l2_points(&points)
}

/// Entry `(p, q)` is the mean over layers of `‖Δp − Δq‖²_F`.
pub fn pairwise_sq_l2_points(points: &[DensePoint]) -> Result<SimilarityMatrix, DiagnosticsError> {
    check_shared_schema(points)?;
    let n = points.len();
    let layers = points[0].layers.len().max(1) as f64;
    let mut values = vec![0.0; n * n];
    for p in 0..n {
        for q in p + 1..n {
            let total: f64 = points[p]
                .layers
                .iter()
                .map(|(name, v)| {
                    let w = &points[q].layers[name];
                    v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .sum();
            values[p * n + q] = total / layers;
            values[q * n + p] = total / layers;
        }
    }
    Ok(SimilarityMatrix {
        kind: SimilarityKind::SquaredL2,
        labels: points.iter().map(|p| p.label.clone()).collect(),
        values,
    })
}

/// Classical MDS output plus the bookkeeping needed to judge its fidelity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Embedding {
    pub labels: Vec<String>,
    pub dim: usize,
    /// One coordinate vector per label.
    pub coords: Vec<Vec<f64>>,
    /// Full spectrum of the double-centred Gram matrix, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Magnitudes of the significantly negative eigenvalues (non-Euclidean
    /// part of the input), which no embedding can represent.
    pub negative_eigenvalues: Vec<f64>,
    /// Leading eigenvalues that were negative and clipped to zero.
    pub clipped: Vec<f64>,
    /// max |d̂ − d| over pairs.
    pub max_distance_error: f64,
    /// mean (d̂ − d) over pairs: negative means distances are underestimated.
    pub mean_signed_distance_error: f64,
}

impl Embedding {
    pub fn distance(&self, p: usize, q: usize) -> f64 {
        let s: f64 = self.coords[p]
            .iter()
            .zip(&self.coords[q])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        math::sqrt(s)
    }
}

/// Torgerson MDS: `B = −½ J D² J`, coordinates from the top `dim`
/// eigenpairs scaled by `sqrt(max(λ, 0))`.
pub fn mds_embed(distances: &SimilarityMatrix, dim: usize) -> Result<Embedding, DiagnosticsError> {
    if distances.kind != SimilarityKind::Distance {
        return Err(DiagnosticsError::WrongKind {
            expected: SimilarityKind::Distance,
            got: distances.kind,
        });
    }
    let n = distances.len();
    if dim == 0 || dim > n {
        return Err(DiagnosticsError::BadDimension { dim, n });
    }
    let scale = distances.values.iter().fold(1.0f64, |m, v| m.max(math::abs(*v)));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let v = distances.get(i, j);
            if !v.is_finite() || v < 0.0 || (i == j && v != 0.0) {
                return Err(DiagnosticsError::InvalidDistance { row: i, col: j, value: v });
            }
            asym = asym.max(math::abs(v - distances.get(j, i)));
        }
    }
    if asym > 1e-6 * scale {
        return Err(DiagnosticsError::NotSymmetric(asym));
    }

    let sq: Vec<f64> = distances.values.iter().map(|d| d * d).collect();
    let row_mean: Vec<f64> = (0..n)
        .map(|i| sq[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = -0.5 * (sq[i * n + j] - row_mean[i] - row_mean[j] + grand);
        }
    }
    let eig = sym_eig_f64(n, &gram)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let noise = 1e-9 * top.max(1e-300);
    let negative_eigenvalues: Vec<f64> = eig
        .values
        .iter()
        .filter(|&&v| v < -noise)
        .map(|v| -v)
        .collect();
    let clipped: Vec<f64> = eig.values[..dim].iter().filter(|&&v| v < 0.0).copied().collect();

    let coords: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dim)
                .map(|t| eig.vectors[i * n + t] * math::sqrt(eig.values[t].max(0.0)))
                .collect()
        })
        .collect();
    let mut out = Embedding {
        labels: distances.labels.clone(),
        dim,
        coords,
        eigenvalues: eig.values,
        negative_eigenvalues,
        clipped,
        max_distance_error: 0.0,
        mean_signed_distance_error: 0.0,
    };
    let mut pairs = 0usize;
    let mut signed = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            let e = out.distance(p, q) - distances.get(p, q);
            out.max_distance_error = out.max_distance_error.max(math::abs(e));
            signed += e;
            pairs += 1;
        }
    }
    if pairs > 0 {
        out.mean_signed_distance_error = signed / pairs as f64;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub alpha: f32,
    pub point: DensePoint,
}

/// Interpolation weights `0, step, 2·step, …` below 1, then exactly 1.
pub fn trajectory_alphas(step: f64) -> Result<Vec<f32>, DiagnosticsError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(DiagnosticsError::BadStep(step));
    }
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let a = f64::from(i) * step;
        if a >= 1.0 - 1e-9 {
            break;
        }
        out.push(a as f32);
        i += 1;
    }
    out.push(1.0);
    Ok(out)
}

/// Dense deltas along the segment between a pair's anchors, labelled
/// `attribute@alpha`.
pub fn interpolation_trajectory(pair: &AnchorPair, step: f64) -> Result<Vec<Snapshot>, DiagnosticsError> {
    trajectory_alphas(step)?
        .into_iter()
        .map(|alpha| {
            let c = compose_single(pair, alpha)?;
            Ok(Snapshot {
                alpha,
                point: DensePoint::from_composite(format!("{}@{}", pair.attribute, alpha), &c),
            })
        })
        .collect()
}

/// The point cloud behind an MDS picture of an anchor set: a zero "base"
/// point, every anchor, and, with `step`, the interior trajectory points of
/// each attribute.
pub fn hull_points(set: &AnchorSet, step: Option<f64>) -> Result<Vec<DensePoint>, DiagnosticsError> {
    let mut points = vec![DensePoint::zeros("base", set.schema())];
    for pair in set.pairs() {
        points.push(DensePoint::from_adapter(&pair.minus));
        points.push(DensePoint::from_adapter(&pair.plus));
    }
    if let Some(step) = step {
        for pair in set.pairs() {
            for snap in interpolation_trajectory(pair, step)? {
                if snap.alpha != 0.0 && snap.alpha != 1.0 {
                    points.push(snap.point);
                }
            }
        }
    }
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormPoint {
    pub alpha: f32,
    pub norm: f64,
}

/// Mean-over-layers Frobenius norm of `compose_single(pair, α)` for each α,
/// in input order.
pub fn norm_profile(pair: &AnchorPair, alphas: &[f32]) -> Result<Vec<NormPoint>, DiagnosticsError> {
    alphas
        .iter()
        .map(|&alpha| {
            Ok(NormPoint {
                alpha,
                norm: compose_single(pair, alpha)?.mean_delta_norm(),
            })
        })
        .collect()
}
