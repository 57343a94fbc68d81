//! Synthetic anchor sets with controlled geometry and an analytic score oracle.
//!
//! Each attribute `i` gets a unit direction `wᵢ` in the concatenated,
//! flattened delta space, with `⟨wᵢ, wⱼ⟩` equal to a prescribed correlation
//! matrix. Anchors are built so that `Δ₊ᵢ − Δ₋ᵢ = 2t · wᵢ` and
//! `Δ₊ᵢ + Δ₋ᵢ ⟂ wⱼ` for every `j`, where `t = ln 19`. The oracle scores a
//! delta as `sigmoid(gain · ⟨wᵢ, vec Δ⟩ + bᵢ)`; at unit gain the minus
//! anchor scores 0.05 and the plus anchor 0.95.
//!
//! Per layer, every direction is rank one and shares a left vector `u`:
//! `wᵢ|layer = u rᵢᵀ / sqrt(L)`, where the `rᵢ` realize the correlations. The
//! remaining `k − 1` rank slots hold a per-attribute common component whose
//! left vectors are orthogonal to `u`, which is what makes it invisible to
//! every oracle direction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, AdapterError, AdapterLayer, AnchorPair, AnchorSet};
use crate::diagnostics::DensePoint;
use crate::interpolation::CompositeAdapter;
use crate::math;
use crate::sweep::{ScoreError, Scorer, SweepRow};
use crate::tensor::{sym_eig_f64, LinalgError, Matrix};

/// Attribute names used when a spec does not name its attributes and has
/// exactly five of them.
pub const DEFAULT_ATTRIBUTES: [&str; 5] = ["simplicity", "formality", "politeness", "sentiment", "humor"];

/// Scores of the calibrated anchors at unit gain.
pub const MINUS_SCORE: f64 = 0.05;
pub const PLUS_SCORE: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("need at least one attribute and one layer")]
    Empty,
    #[error("gain must be positive and finite, got {0}")]
    BadGain(f64),
    #[error("{0} attribute names given for {1} attributes")]
    NameCount(usize, usize),
    #[error("correlation matrix: {0}")]
    BadCorrelation(String),
    #[error("correlation matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("layer {layer} of shape ({d1}, {d2}) cannot host rank {rank} with {n} attributes")]
    RankInfeasible {
        layer: usize,
        d1: usize,
        d2: usize,
        rank: usize,
        n: usize,
    },
    #[error("oracle attribute {attribute}: layer {layer} missing or mis-shaped in the scored delta")]
    DimensionMismatch { attribute: String, layer: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_attributes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    /// `(d1, d2)` per layer.
    pub layer_shapes: Vec<(usize, usize)>,
    pub rank: usize,
    /// Multiplier on the oracle logit.
    pub gain: f64,
    /// Target `⟨wᵢ, wⱼ⟩`; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Five attributes, four 64 × 64 layers at rank 4, unit gain, no
    /// correlation.
    fn default() -> Self {
        Self {
            n_attributes: 5,
            names: None,
            layer_shapes: vec![(64, 64); 4],
            rank: 4,
            gain: 1.0,
            correlation: None,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn attribute_names(&self) -> Vec<String> {
        match &self.names {
            Some(n) => n.clone(),
            None if self.n_attributes == DEFAULT_ATTRIBUTES.len() => {
                DEFAULT_ATTRIBUTES.iter().map(|s| String::from(*s)).collect()
            }
            None => (0..self.n_attributes).map(|i| format!("attr{i}")).collect(),
        }
    }

    pub fn layer_name(index: usize) -> String {
        format!("layers.{index}.proj")
    }

    /// Sets the symmetric pair `(i, j)` of the correlation matrix.
    pub fn with_correlation(mut self, i: usize, j: usize, value: f64) -> Self {
        let n = self.n_attributes;
        let c = self.correlation.get_or_insert_with(|| {
            (0..n)
                .map(|r| (0..n).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                .collect()
        });
        c[i][j] = value;
        c[j][i] = value;
        self
    }

    fn correlation_flat(&self) -> Result<Vec<f64>, SynthError> {
        let n = self.n_attributes;
        let Some(rows) = &self.correlation else {
            let mut id = vec![0.0; n * n];
            for i in 0..n {
                id[i * n + i] = 1.0;
            }
            return Ok(id);
        };
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(SynthError::BadCorrelation(format!("expected {n} x {n}")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        for i in 0..n {
            if flat[i * n + i] != 1.0 {
                return Err(SynthError::BadCorrelation(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = flat[i * n + j];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(SynthError::BadCorrelation(format!("entry ({i}, {j}) = {v} outside [-1, 1]")));
                }
                if v != flat[j * n + i] {
                    return Err(SynthError::BadCorrelation(format!("entry ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(flat)
    }
}

/// Rank-one piece of an oracle direction on one layer: `left ⊗ right`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOneDirection {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl RankOneDirection {
    /// `leftᵀ · M · right` for a row-major `d1 × d2` buffer.
    fn contract(&self, m: &[f64]) -> f64 {
        let d2 = self.right.len();
        self.left
            .iter()
            .enumerate()
            .map(|(i, &l)| l * m[i * d2..(i + 1) * d2].iter().zip(&self.right).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// `leftᵀ · coefficient · B · A · right` without forming `B · A`.
    fn contract_factors(&self, coefficient: f64, b: &Matrix, a: &Matrix) -> f64 {
        let k = b.cols();
        let mut lb = vec![0.0f64; k];
        for (i, &l) in self.left.iter().enumerate() {
            for (t, v) in lb.iter_mut().enumerate() {
                *v += l * f64::from(b.get(i, t));
            }
        }
        let mut total = 0.0;
        for (t, &x) in lb.iter().enumerate() {
            let ar: f64 = (0..a.cols()).map(|c| f64::from(a.get(t, c)) * self.right[c]).sum();
            total += x * ar;
        }
        coefficient * total
    }

    fn norm_sq(&self) -> f64 {
        self.left.iter().map(|x| x * x).sum::<f64>() * self.right.iter().map(|x| x * x).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleAttribute {
    pub name: String,
    pub offset: f64,
    pub layers: BTreeMap<String, RankOneDirection>,
}

impl OracleAttribute {
    /// `‖wᵢ‖` over all layers.
    pub fn direction_norm(&self) -> f64 {
        math::sqrt(self.layers.values().map(RankOneDirection::norm_sq).sum())
    }
}

/// `scoreᵢ = sigmoid(gain · ⟨wᵢ, vec Δ⟩ + offsetᵢ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeOracle {
    pub gain: f64,
    pub attributes: Vec<OracleAttribute>,
}

impl AttributeOracle {
    /// Raw projections `⟨wᵢ, vec Δ⟩` of a composite, computed on the factors.
    pub fn projections(&self, c: &CompositeAdapter<'_>) -> Result<Vec<f64>, SynthError> {
        self.attributes
            .iter()
            .map(|attr| {
                let mut z = 0.0;
                for (name, dir) in &attr.layers {
                    let layer = c
                        .layer(name)
                        .filter(|l| l.shape == (dir.left.len(), dir.right.len()))
                        .ok_or_else(|| SynthError::DimensionMismatch {
                            attribute: attr.name.clone(),
                            layer: name.clone(),
                        })?;
                    for t in &layer.terms {
                        z += dir.contract_factors(t.coefficient, t.b, t.a);
                    }
                }
                Ok(z)
            })
            .collect()
    }

    pub fn score(&self, c: &CompositeAdapter<'_>) -> Result<Vec<f64>, SynthError> {
        Ok(self
            .projections(c)?
            .iter()
            .zip(&self.attributes)
            .map(|(z, a)| math::sigmoid(self.gain * z + a.offset))
            .collect())
    }

    /// Same oracle applied to an already densified delta.
    pub fn score_point(&self, p: &DensePoint) -> Result<Vec<f64>, SynthError> {
        self.attributes
            .iter()
            .map(|attr| {
                let mut z = 0.0;
                for (name, dir) in &attr.layers {
                    let m = p
                        .layers
                        .get(name)
                        .filter(|m| m.len() == dir.left.len() * dir.right.len())
                        .ok_or_else(|| SynthError::DimensionMismatch {
                            attribute: attr.name.clone(),
                            layer: name.clone(),
                        })?;
                    z += dir.contract(m);
                }
                Ok(math::sigmoid(self.gain * z + attr.offset))
            })
            .collect()
    }
}

/// Per-attribute scores of a composite.
pub fn oracle_score(oracle: &AttributeOracle, c: &CompositeAdapter<'_>) -> Result<Vec<f64>, SynthError> {
    oracle.score(c)
}

impl Scorer for AttributeOracle {
    fn score(&self, _row: &SweepRow, composite: &CompositeAdapter<'_>) -> Result<Vec<f64>, ScoreError> {
        AttributeOracle::score(self, composite).map_err(|e| ScoreError(format!("{e}")))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `count` orthonormal vectors in `dim` dimensions, drawn at random.
fn orthonormal_frame(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = gaussian(rng, dim);
        for _ in 0..2 {
            for q in &out {
                let p = dot(&v, q);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= p * y;
                }
            }
        }
        let n = math::sqrt(dot(&v, &v));
        if n > 1e-6 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Symmetric square root of a PSD matrix (row-major, `n × n`).
fn psd_sqrt(n: usize, c: &[f64]) -> Result<Vec<f64>, SynthError> {
    let eig = sym_eig_f64(n, c)?;
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -1e-9 {
        return Err(SynthError::NotPsd(min));
    }
    let mut out = vec![0.0; n * n];
    for t in 0..n {
        let s = math::sqrt(eig.values[t].max(0.0));
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += eig.vectors[i * n + t] * s * eig.vectors[j * n + t];
            }
        }
    }
    Ok(out)
}

/// Half the separation `‖Δ₊ᵢ − Δ₋ᵢ‖ / 2`; chosen so that unit gain maps
/// the anchors to [`MINUS_SCORE`] and [`PLUS_SCORE`].
pub fn half_separation() -> f64 {
    math::logit(PLUS_SCORE)
}

/// Builds the anchor set and its oracle. Deterministic in `spec`.
pub fn gen_anchor_set(spec: &SyntheticSpec) -> Result<(AnchorSet, AttributeOracle), SynthError> {
    let n = spec.n_attributes;
    if n == 0 || spec.layer_shapes.is_empty() || spec.rank == 0 {
        return Err(SynthError::Empty);
    }
    if !(spec.gain.is_finite() && spec.gain > 0.0) {
        return Err(SynthError::BadGain(spec.gain));
    }
    let names = spec.attribute_names();
    if names.len() != n {
        return Err(SynthError::NameCount(names.len(), n));
    }
    let k = spec.rank;
    for (layer, &(d1, d2)) in spec.layer_shapes.iter().enumerate() {
        if k > d1.min(d2) || d2 < n {
            return Err(SynthError::RankInfeasible { layer, d1, d2, rank: k, n });
        }
    }
    let corr = spec.correlation_flat()?;
    let root = psd_sqrt(n, &corr)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layers = spec.layer_shapes.len();
    let inv_sqrt_l = 1.0 / math::sqrt(layers as f64);
    let t = half_separation();

    let mut plus_layers: Vec<Vec<AdapterLayer>> = vec![Vec::new(); n];
    let mut minus_layers: Vec<Vec<AdapterLayer>> = vec![Vec::new(); n];
    let mut directions: Vec<BTreeMap<String, RankOneDirection>> = vec![BTreeMap::new(); n];

    for (l, &(d1, d2)) in spec.layer_shapes.iter().enumerate() {
        let name = SyntheticSpec::layer_name(l);
        // left[0] = u, left[1..] span the common component.
        let left = orthonormal_frame(&mut rng, d1, k);
        let frame = orthonormal_frame(&mut rng, d2, n);
        for i in 0..n {
            let mut r = vec![0.0; d2];
            for (j, v) in frame.iter().enumerate() {
                let coef = root[i * n + j];
                for (x, y) in r.iter_mut().zip(v) {
                    *x += coef * y;
                }
            }
            directions[i].insert(
                name.clone(),
                RankOneDirection {
                    left: left[0].clone(),
                    right: r.iter().map(|x| x * inv_sqrt_l).collect(),
                },
            );

            let mut a_rows: Vec<f64> = Vec::with_capacity(k * d2);
            a_rows.extend(&r);
            let mut mu = Vec::with_capacity(k - 1);
            for _ in 1..k {
                let mut c = gaussian(&mut rng, d2);
                let cn = math::sqrt(dot(&c, &c));
                for x in &mut c {
                    *x /= cn;
                }
                a_rows.extend(&c);
                mu.push(t * inv_sqrt_l * rng.random_range(0.5..1.5));
            }
            let a = Matrix::from_f64(k, d2, &a_rows);
            for (sign, out) in [(1.0, &mut plus_layers[i]), (-1.0, &mut minus_layers[i])] {
                let mut b = vec![0.0; d1 * k];
                for row in 0..d1 {
                    b[row * k] = sign * t * inv_sqrt_l * left[0][row];
                    for s in 1..k {
                        b[row * k + s] = mu[s - 1] * left[s][row];
                    }
                }
                out.push(AdapterLayer::new(name.clone(), Matrix::from_f64(d1, k, &b), a.clone(), 1.0)?);
            }
        }
    }

    let mut pairs = Vec::with_capacity(n);
    for (i, (plus, minus)) in plus_layers.into_iter().zip(minus_layers).enumerate() {
        let make = |extreme: &str, layers| -> Result<Adapter, SynthError> {
            let mut a = Adapter::new(format!("{}.{extreme}", names[i]), layers)?;
            a.meta.insert("attribute".into(), names[i].clone());
            a.meta.insert("extreme".into(), extreme.into());
            a.meta.insert("source".into(), "synthetic".into());
            a.meta.insert("seed".into(), format!("{}", spec.seed));
            Ok(a)
        };
        pairs.push(AnchorPair {
            attribute: names[i].clone(),
            minus: make("minus", minus)?,
            plus: make("plus", plus)?,
        });
    }
    let set = AnchorSet::new(pairs)?;

    // Offsets calibrated on the stored (rounded) anchors so that the two
    // anchors sit symmetrically around the sigmoid midpoint.
    let mut attributes = Vec::with_capacity(n);
    for (i, dirs) in directions.into_iter().enumerate() {
        let mut attr = OracleAttribute {
            name: names[i].clone(),
            offset: 0.0,
            layers: dirs,
        };
        let pair = &set.pairs()[i];
        let project = |adapter: &Adapter| -> f64 {
            adapter
                .layers()
                .map(|l| attr.layers[l.name()].contract_factors(f64::from(l.scaling()), l.b(), l.a()))
                .sum()
        };
        let (zp, zm) = (project(&pair.plus), project(&pair.minus));
        attr.offset = -spec.gain * 0.5 * (zp + zm);
        attributes.push(attr);
    }
    Ok((
        set,
        AttributeOracle {
            gain: spec.gain,
            attributes,
        },
    ))
}
