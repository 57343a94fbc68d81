//! Single- and multi-attribute composition of anchor adapters.
//!
//! For one attribute the composite delta is
//! `alpha · Δ₊ + (1 − alpha) · Δ₋`; several attributes are combined as
//! `Σᵢ λᵢ (αᵢ Δ₊ᵢ + (1 − αᵢ) Δ₋ᵢ)` with `λ` on the simplex. Composites keep
//! the scaled low-rank terms and only densify on request, so the rank
//! concatenation export is exact.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::adapter::{
    validate_mixspec, validate_pair_refs, Adapter, AdapterError, AdapterLayer, AnchorPair, AnchorSet,
    MixSpec,
};
use crate::math;
use crate::tensor::{matmul_f64, svd_f64, Matrix, SvdConfig};

/// `coefficient · B · A`, with the source layer's scaling already folded
/// into `coefficient`.
#[derive(Clone, Copy, Debug)]
pub struct Term<'a> {
    pub coefficient: f64,
    pub b: &'a Matrix,
    pub a: &'a Matrix,
}

#[derive(Clone, Debug)]
pub struct CompositeLayer<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub terms: Vec<Term<'a>>,
}

impl CompositeLayer<'_> {
    /// Σ coefficient · (B × A) in stored term order, kept in `f64`.
    pub fn dense_f64(&self) -> Vec<f64> {
        let (d1, d2) = self.shape;
        let mut acc = vec![0.0f64; d1 * d2];
        for t in &self.terms {
            let p = matmul_f64(t.b, t.a).expect("composite terms share the layer shape");
            for (o, v) in acc.iter_mut().zip(p) {
                *o += t.coefficient * v;
            }
        }
        acc
    }

    pub fn dense(&self) -> Matrix {
        Matrix::from_f64(self.shape.0, self.shape.1, &self.dense_f64())
    }
}

/// Where a composite came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub attributes: Vec<String>,
    /// `(minus id, plus id)` per attribute.
    pub anchors: Vec<(String, String)>,
    pub mix: MixSpec,
}

/// A merged update held as a sum of scaled low-rank products.
#[derive(Clone, Debug)]
pub struct CompositeAdapter<'a> {
    pub layers: Vec<CompositeLayer<'a>>,
    pub provenance: Provenance,
}

impl CompositeAdapter<'_> {
    pub fn layer(&self, name: &str) -> Option<&CompositeLayer<'_>> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Mean over layers of the Frobenius norm of the dense delta.
    pub fn mean_delta_norm(&self) -> f64 {
        if self.layers.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .layers
            .iter()
            .map(|l| math::sqrt(l.dense_f64().iter().map(|v| v * v).sum()))
            .sum();
        total / self.layers.len() as f64
    }
}

fn push_pair_terms<'a>(
    layers: &mut BTreeMap<&'a str, CompositeLayer<'a>>,
    pair: &'a AnchorPair,
    plus_weight: f64,
    minus_weight: f64,
) {
    for plus in pair.plus.layers() {
        let minus = pair
            .minus
            .layer(plus.name())
            .expect("validated pair has matching layers");
        let entry = layers.entry(plus.name()).or_insert_with(|| CompositeLayer {
            name: plus.name().into(),
            shape: plus.delta_shape(),
            terms: Vec::new(),
        });
        entry.terms.push(term(plus, plus_weight));
        entry.terms.push(term(minus, minus_weight));
    }
}

fn term(layer: &AdapterLayer, weight: f64) -> Term<'_> {
    Term {
        coefficient: weight * f64::from(layer.scaling()),
        b: layer.b(),
        a: layer.a(),
    }
}

/// Interpolates one attribute: terms `[(α s₊, B₊, A₊), ((1 − α) s₋, B₋, A₋)]`
/// per layer. `alpha` is not clamped.
pub fn compose_single(pair: &AnchorPair, alpha: f32) -> Result<CompositeAdapter<'_>, AdapterError> {
    let violations = validate_pair_refs(&[pair]);
    if !violations.is_empty() {
        return Err(AdapterError::InvalidAnchors { violations });
    }
    let a = f64::from(alpha);
    let mut layers = BTreeMap::new();
    push_pair_terms(&mut layers, pair, a, 1.0 - a);
    Ok(CompositeAdapter {
        layers: layers.into_values().collect(),
        provenance: Provenance {
            attributes: vec![pair.attribute.clone()],
            anchors: vec![(pair.minus.id().into(), pair.plus.id().into())],
            mix: MixSpec::new(vec![alpha], vec![1.0]),
        },
    })
}

/// Mixes all attributes of `set`: per layer, the concatenation over `i` of
/// `[(λᵢ αᵢ s₊ᵢ, B₊ᵢ, A₊ᵢ), (λᵢ (1 − αᵢ) s₋ᵢ, B₋ᵢ, A₋ᵢ)]`.
///
/// The spec is validated without normalization; zero-weight terms are kept.
pub fn compose_multi<'a>(set: &'a AnchorSet, spec: &MixSpec) -> Result<CompositeAdapter<'a>, AdapterError> {
    let spec = validate_mixspec(spec.clone(), set.len(), false)?;
    let mut layers = BTreeMap::new();
    for (i, pair) in set.pairs().iter().enumerate() {
        let l = f64::from(spec.lambda[i]);
        let a = f64::from(spec.alpha[i]);
        push_pair_terms(&mut layers, pair, l * a, l * (1.0 - a));
    }
    Ok(CompositeAdapter {
        layers: layers.into_values().collect(),
        provenance: Provenance {
            attributes: set.attributes().map(String::from).collect(),
            anchors: set
                .pairs()
                .iter()
                .map(|p| (p.minus.id().into(), p.plus.id().into()))
                .collect(),
            mix: spec,
        },
    })
}

/// Dense delta per layer.
pub fn to_dense(c: &CompositeAdapter<'_>) -> BTreeMap<String, Matrix> {
    c.layers.iter().map(|l| (l.name.clone(), l.dense())).collect()
}

/// Exports a composite as one adapter: per layer `B' = [c₁B₁ | c₂B₂ | …]`,
/// `A' = [A₁; A₂; …]`, scaling 1. Terms with a coefficient of exactly zero
/// are dropped; a layer left with no terms gets a rank-1 zero pair.
pub fn to_lowrank_concat(c: &CompositeAdapter<'_>, id: &str) -> Adapter {
    let layers = c
        .layers
        .iter()
        .map(|l| {
            let live: Vec<&Term<'_>> = l.terms.iter().filter(|t| t.coefficient != 0.0).collect();
            let (b, a) = if live.is_empty() {
                (Matrix::zeros(l.shape.0, 1), Matrix::zeros(1, l.shape.1))
            } else {
                let bs: Vec<Matrix> = live.iter().map(|t| t.b.scaled(t.coefficient)).collect();
                let as_: Vec<Matrix> = live.iter().map(|t| t.a.clone()).collect();
                (
                    Matrix::hcat(&bs).expect("terms share d1"),
                    Matrix::vcat(&as_).expect("terms share d2"),
                )
            };
            AdapterLayer::new(l.name.clone(), b, a, 1.0).expect("finite composite factors")
        })
        .collect();
    let mut out = Adapter::new(id, layers).expect("composite layer names are unique");
    out.meta.insert("source".into(), "rank_concat".into());
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerTruncation {
    pub layer: String,
    pub kept_rank: usize,
    /// Frobenius norm of what was discarded: sqrt(Σ_{j > r} S_j²).
    pub error: f64,
    pub singular_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Recompressed {
    pub adapter: Adapter,
    pub layers: Vec<LayerTruncation>,
}

/// Best rank-`target_rank` approximation of every layer's delta via
/// truncated SVD: `B' = U_r diag(S_r)`, `A' = V_rᵀ`, scaling 1.
pub fn recompress(adapter: &Adapter, target_rank: usize) -> Result<Recompressed, AdapterError> {
    recompress_with(adapter, target_rank, SvdConfig::default())
}

pub fn recompress_with(adapter: &Adapter, target_rank: usize, cfg: SvdConfig) -> Result<Recompressed, AdapterError> {
    if target_rank == 0 {
        return Err(AdapterError::LengthMismatch {
            what: "target rank",
            got: 0,
            expected: 1,
        });
    }
    let mut layers = Vec::with_capacity(adapter.len());
    let mut report = Vec::with_capacity(adapter.len());
    for layer in adapter.layers() {
        let (d1, d2) = layer.delta_shape();
        let delta = crate::adapter::layer_delta_f64(layer);
        let f = svd_f64(d1, d2, &delta, cfg)?;
        let p = f.s.len();
        let r = target_rank.min(p);
        let mut b = vec![0.0f64; d1 * r];
        for i in 0..d1 {
            for j in 0..r {
                b[i * r + j] = f.u[i * p + j] * f.s[j];
            }
        }
        let mut a = vec![0.0f64; r * d2];
        for j in 0..r {
            for c in 0..d2 {
                a[j * d2 + c] = f.v[c * p + j];
            }
        }
        let tail: f64 = f.s[r..].iter().map(|s| s * s).sum();
        report.push(LayerTruncation {
            layer: layer.name().into(),
            kept_rank: r,
            error: math::sqrt(tail),
            singular_values: f.s.clone(),
        });
        layers.push(AdapterLayer::new(
            layer.name(),
            Matrix::from_f64(d1, r, &b),
            Matrix::from_f64(r, d2, &a),
            1.0,
        )?);
    }
    let mut out = Adapter::new(adapter.id(), layers)?;
    out.meta = adapter.meta.clone();
    out.meta.insert("recompressed_rank".into(), alloc::format!("{target_rank}"));
    Ok(Recompressed {
        adapter: out,
        layers: report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::frobenius_norm;

    fn single(name: &str, b: &[&[f32]], a: &[&[f32]], scaling: f32) -> Adapter {
        Adapter::new(
            name,
            vec![AdapterLayer::new(
                "l0",
                Matrix::from_rows(b).unwrap(),
                Matrix::from_rows(a).unwrap(),
                scaling,
            )
            .unwrap()],
        )
        .unwrap()
    }

    fn toy_pair() -> AnchorPair {
        AnchorPair {
            attribute: "x".into(),
            plus: single("x+", &[&[1.0], &[0.0]], &[&[1.0, 0.0]], 1.0),
            minus: single("x-", &[&[0.0], &[1.0]], &[&[0.0, 1.0]], 1.0),
        }
    }

    #[test]
    fn endpoints_and_midpoint() {
        let p = toy_pair();
        let at = |alpha| to_dense(&compose_single(&p, alpha).unwrap())["l0"].clone();
        assert_eq!(at(1.0), p.plus.deltas()["l0"]);
        assert_eq!(at(0.0), p.minus.deltas()["l0"]);
        assert_eq!(at(0.5).data(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn zero_coefficient_term_dropped_on_export() {
        let p = toy_pair();
        let c = compose_single(&p, 0.0).unwrap();
        assert_eq!(c.layers[0].terms.len(), 2);
        let out = to_lowrank_concat(&c, "merged");
        assert_eq!(out.layer("l0").unwrap().rank(), 1);
        assert_eq!(out.deltas(), p.minus.deltas());
    }

    #[test]
    fn single_term_roundtrip_absorbs_scaling() {
        let a = single("a", &[&[1.0, 2.0], &[3.0, 4.0]], &[&[0.5, 0.0], &[0.0, 0.25]], 0.5);
        let pair = AnchorPair {
            attribute: "a".into(),
            plus: a.clone(),
            minus: a.clone(),
        };
        let c = compose_single(&pair, 1.0).unwrap();
        let out = to_lowrank_concat(&c, "o");
        let l = out.layer("l0").unwrap();
        assert_eq!(l.scaling(), 1.0);
        assert_eq!(l.a(), a.layer("l0").unwrap().a());
        assert_eq!(l.b(), &a.layer("l0").unwrap().b().scaled(0.5));
    }

    #[test]
    fn two_identical_half_terms_average_to_one() {
        let a = single("a", &[&[1.0], &[2.0]], &[&[3.0, -1.0]], 1.0);
        let pair = AnchorPair {
            attribute: "a".into(),
            plus: a.clone(),
            minus: a.clone(),
        };
        let c = compose_single(&pair, 0.5).unwrap();
        assert_eq!(to_dense(&c)["l0"], a.deltas()["l0"]);
    }

    #[test]
    fn multi_rejects_length_mismatch() {
        let set = AnchorSet::new(vec![toy_pair()]).unwrap();
        let err = compose_multi(&set, &MixSpec::new(vec![0.0, 0.0], vec![0.5, 0.5])).unwrap_err();
        assert!(matches!(err, AdapterError::LengthMismatch { .. }));
    }

    #[test]
    fn recompress_diag() {
        let a = single("d", &[&[3.0, 0.0], &[0.0, 1.0]], &[&[1.0, 0.0], &[0.0, 1.0]], 1.0);
        let r = recompress(&a, 1).unwrap();
        assert!((r.layers[0].error - 1.0).abs() < 1e-12);
        let d = r.adapter.deltas()["l0"].clone();
        assert_eq!(d.data(), &[3.0, 0.0, 0.0, 0.0]);
        let full = recompress(&a, 5).unwrap();
        assert_eq!(full.layers[0].kept_rank, 2);
        let diff = full.adapter.deltas()["l0"].sub(&a.deltas()["l0"]).unwrap();
        assert!(frobenius_norm(&diff) <= 1e-4);
        assert!(recompress(&a, 0).is_err());
    }
}
