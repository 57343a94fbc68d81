//! Adapters, anchor pairs and anchor sets.
//!
//! A layer stores its two low-rank factors and a scalar multiplier; the only
//! thing the rest of the crate ever consumes is the delta `scaling · B · A`.

mod mix;

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::tensor::{matmul_f64, LinalgError, Matrix};

pub use mix::{validate_mixspec, MixSpec, STABLE_ALPHA_RANGE};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AdapterError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("layer {layer}: B has {b_cols} columns but A has {a_rows} rows")]
    RankMismatch {
        layer: String,
        b_cols: usize,
        a_rows: usize,
    },
    #[error("layer {layer}: scaling must be positive and finite, got {scaling}")]
    BadScaling { layer: String, scaling: f32 },
    #[error("layer {layer}: non-finite factor entry")]
    NonFinite { layer: String },
    #[error("duplicate layer name {name}")]
    DuplicateLayer { name: String },
    #[error("{} anchor violation(s), first: {}", violations.len(), FirstViolation(violations))]
    InvalidAnchors { violations: Vec<Violation> },
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("mixing weight {index} is negative ({value})")]
    NegativeLambda { index: usize, value: f32 },
    #[error("all mixing weights are zero; cannot normalize")]
    ZeroLambda,
    #[error("mixing weights sum to {sum}, expected 1 within 1e-6")]
    LambdaSum { sum: f64 },
    #[error("{what} entry {index} is not finite")]
    NonFiniteWeight { what: &'static str, index: usize },
}

struct FirstViolation<'a>(&'a [Violation]);

impl fmt::Display for FirstViolation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.first() {
            Some(v) => v.fmt(f),
            None => f.write_str("none"),
        }
    }
}

/// One adapted weight matrix: `delta = scaling · B · A`, `B` is `d1 × k`,
/// `A` is `k × d2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterLayer {
    name: String,
    b: Matrix,
    a: Matrix,
    scaling: f32,
}

impl AdapterLayer {
    pub fn new(name: impl Into<String>, b: Matrix, a: Matrix, scaling: f32) -> Result<Self, AdapterError> {
        let name = name.into();
        if b.cols() != a.rows() {
            return Err(AdapterError::RankMismatch {
                layer: name,
                b_cols: b.cols(),
                a_rows: a.rows(),
            });
        }
        if !(scaling.is_finite() && scaling > 0.0) {
            return Err(AdapterError::BadScaling { layer: name, scaling });
        }
        if !b.is_finite() || !a.is_finite() {
            return Err(AdapterError::NonFinite { layer: name });
        }
        Ok(Self { name, b, a, scaling })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn scaling(&self) -> f32 {
        self.scaling
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    /// `(d1, d2)` of the delta.
    pub fn delta_shape(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }

    pub fn with_scaling(self, scaling: f32) -> Result<Self, AdapterError> {
        Self::new(self.name, self.b, self.a, scaling)
    }

    pub fn delta(&self) -> Matrix {
        layer_delta(self)
    }
}

/// `scaling · (B × A)`, product accumulated in `f64`.
pub fn layer_delta(layer: &AdapterLayer) -> Matrix {
    let (d1, d2) = layer.delta_shape();
    Matrix::from_f64(d1, d2, &layer_delta_f64(layer))
}

pub(crate) fn layer_delta_f64(layer: &AdapterLayer) -> Vec<f64> {
    let s = f64::from(layer.scaling);
    let mut p = matmul_f64(&layer.b, &layer.a).expect("layer factors validated at construction");
    for v in &mut p {
        *v *= s;
    }
    p
}

/// Layer name → `(d1, d2)`.
pub type LayerSchema = BTreeMap<String, (usize, usize)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Adapter {
    id: String,
    layers: BTreeMap<String, AdapterLayer>,
    /// Free-form provenance (dataset, attribute, extreme, ...).
    pub meta: BTreeMap<String, String>,
}

impl Adapter {
    pub fn new(id: impl Into<String>, layers: Vec<AdapterLayer>) -> Result<Self, AdapterError> {
        let mut map = BTreeMap::new();
        for layer in layers {
            let name = layer.name.clone();
            if map.insert(name.clone(), layer).is_some() {
                return Err(AdapterError::DuplicateLayer { name });
            }
        }
        Ok(Self {
            id: id.into(),
            layers: map,
            meta: BTreeMap::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn layers(&self) -> impl ExactSizeIterator<Item = &AdapterLayer> {
        self.layers.values()
    }

    pub fn layer(&self, name: &str) -> Option<&AdapterLayer> {
        self.layers.get(name)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn schema(&self) -> LayerSchema {
        self.layers
            .iter()
            .map(|(n, l)| (n.clone(), l.delta_shape()))
            .collect()
    }

    /// Dense delta of every layer, keyed by layer name.
    pub fn deltas(&self) -> BTreeMap<String, Matrix> {
        self.layers
            .iter()
            .map(|(n, l)| (n.clone(), layer_delta(l)))
            .collect()
    }

    /// Replaces every layer's scaling coefficient.
    pub fn with_scaling(self, scaling: f32) -> Result<Self, AdapterError> {
        let layers = self
            .layers
            .into_values()
            .map(|l| l.with_scaling(scaling))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Adapter::new(self.id, layers)?;
        out.meta = self.meta;
        Ok(out)
    }
}

/// The two extremes of one attribute: `minus` scores 0, `plus` scores 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorPair {
    pub attribute: String,
    pub minus: Adapter,
    pub plus: Adapter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Plus,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    NoAttributes,
    DuplicateAttribute,
    EmptyAdapter { side: Side },
    MissingLayer { side: Side },
    /// The two anchors of a pair disagree on a layer's delta shape.
    ShapeMismatch {
        minus: (usize, usize),
        plus: (usize, usize),
    },
    /// A layer is absent from, or shaped differently than, the set-wide schema.
    SchemaMismatch {
        expected: Option<(usize, usize)>,
        found: Option<(usize, usize)>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub attribute: String,
    pub layer: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "attribute {:?}", self.attribute)?;
        if let Some(layer) = &self.layer {
            write!(f, ", layer {layer:?}")?;
        }
        match &self.kind {
            ViolationKind::NoAttributes => write!(f, ": anchor set has no attributes"),
            ViolationKind::DuplicateAttribute => write!(f, ": duplicate attribute name"),
            ViolationKind::EmptyAdapter { side } => write!(f, ": {side} adapter has no layers"),
            ViolationKind::MissingLayer { side } => write!(f, ": missing from {side} adapter"),
            ViolationKind::ShapeMismatch { minus, plus } => {
                write!(f, ": minus delta shape {minus:?} vs plus {plus:?}")
            }
            ViolationKind::SchemaMismatch { expected, found } => {
                write!(f, ": expected shape {expected:?} from shared schema, found {found:?}")
            }
        }
    }
}

/// Checks every schema invariant of a prospective anchor set. The shared
/// schema is taken from the first pair's minus adapter. Empty report means
/// the pairs are valid.
pub fn validate_anchor_pairs(pairs: &[AnchorPair]) -> Vec<Violation> {
    let refs: Vec<&AnchorPair> = pairs.iter().collect();
    validate_pair_refs(&refs)
}

pub(crate) fn validate_pair_refs(pairs: &[&AnchorPair]) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(first) = pairs.first() else {
        out.push(Violation {
            attribute: String::new(),
            layer: None,
            kind: ViolationKind::NoAttributes,
        });
        return out;
    };
    let shared = first.minus.schema();
    let mut seen = BTreeSet::new();
    for pair in pairs {
        let violation = |layer: Option<&str>, kind| Violation {
            attribute: pair.attribute.clone(),
            layer: layer.map(String::from),
            kind,
        };
        if !seen.insert(pair.attribute.as_str()) {
            out.push(violation(None, ViolationKind::DuplicateAttribute));
        }
        for (side, adapter) in [(Side::Minus, &pair.minus), (Side::Plus, &pair.plus)] {
            if adapter.is_empty() {
                out.push(violation(None, ViolationKind::EmptyAdapter { side }));
            }
        }
        let minus = pair.minus.schema();
        let plus = pair.plus.schema();
        let names: BTreeSet<&String> = minus.keys().chain(plus.keys()).chain(shared.keys()).collect();
        for name in names {
            let (m, p, s) = (minus.get(name), plus.get(name), shared.get(name));
            if m.is_none() && s.is_some() {
                out.push(violation(Some(name), ViolationKind::MissingLayer { side: Side::Minus }));
            }
            if p.is_none() && (s.is_some() || m.is_some()) {
                out.push(violation(Some(name), ViolationKind::MissingLayer { side: Side::Plus }));
            }
            if let (Some(&m), Some(&p)) = (m, p) {
                if m != p {
                    out.push(violation(Some(name), ViolationKind::ShapeMismatch { minus: m, plus: p }));
                    continue;
                }
            }
            let found = m.or(p).copied();
            if s.copied() != found && found.is_some() {
                out.push(violation(
                    Some(name),
                    ViolationKind::SchemaMismatch {
                        expected: s.copied(),
                        found,
                    },
                ));
            }
        }
    }
    out
}

/// Ordered anchor pairs over one shared layer schema.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    pairs: Vec<AnchorPair>,
    schema: LayerSchema,
}

impl AnchorSet {
    pub fn new(pairs: Vec<AnchorPair>) -> Result<Self, AdapterError> {
        let violations = validate_anchor_pairs(&pairs);
        if !violations.is_empty() {
            return Err(AdapterError::InvalidAnchors { violations });
        }
        let schema = pairs[0].minus.schema();
        Ok(Self { pairs, schema })
    }

    /// Always empty for a constructed set; kept for symmetry with
    /// [`validate_anchor_pairs`].
    pub fn validate(&self) -> Vec<Violation> {
        validate_anchor_pairs(&self.pairs)
    }

    pub fn pairs(&self) -> &[AnchorPair] {
        &self.pairs
    }

    pub fn pair(&self, index: usize) -> Option<&AnchorPair> {
        self.pairs.get(index)
    }

    pub fn schema(&self) -> &LayerSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.attribute.as_str())
    }

    pub fn index_of(&self, attribute: &str) -> Option<usize> {
        self.pairs.iter().position(|p| p.attribute == attribute)
    }

    pub fn into_pairs(self) -> Vec<AnchorPair> {
        self.pairs
    }
}
