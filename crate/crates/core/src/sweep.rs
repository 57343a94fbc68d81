//! Experiment grids over `(alpha, lambda)` and their execution.
//!
//! Four plan shapes are supported: a line in `alpha` for one attribute, a
//! "spider" grid that varies one attribute's `alpha` at a fixed `lambda`
//! with the remaining mass spread uniformly, a line in one attribute's
//! `lambda`, and a barycentric grid over the simplex of three attributes.
//! Every `lambda` row sums to exactly `1.0` when added in index order in
//! `f32`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterError, AnchorSet, MixSpec};
use crate::interpolation::{compose_multi, CompositeAdapter};

/// 11 points on [0, 1].
pub const DEFAULT_ALPHA_LINE: (f32, f32, usize) = (0.0, 1.0, 11);
/// 29 points on [-3, 4], a step of 0.25 covering both extrapolation sides.
pub const EXTRAPOLATION_ALPHA_LINE: (f32, f32, usize) = (-3.0, 4.0, 29);
pub const DEFAULT_SPIDER_ALPHAS: [f32; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("alpha range [{min}, {max}] is empty or not finite")]
    BadRange { min: f32, max: f32 },
    #[error("need at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("attribute index {index} out of range for {n} attributes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("need at least {need} attributes, got {got}")]
    TooFewAttributes { need: usize, got: usize },
    #[error("mixing weight {0} outside [0, 1]")]
    LambdaOutOfRange(f32),
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("{what} grid value {value} is not finite")]
    NonFinite { what: &'static str, value: f32 },
    #[error("simplex attributes must be distinct, got {0:?}")]
    DuplicateIndices([usize; 3]),
    #[error("simplex resolution must be at least 1")]
    BadResolution,
    #[error("could not close mixing weights of row {0} onto the simplex")]
    CannotClose(usize),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("plan is for {plan} attributes but the anchor set has {set}")]
    AttributeCount { plan: usize, set: usize },
    #[error("row {row}: {source}")]
    Compose { row: String, source: AdapterError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    AlphaLine,
    Spider,
    LambdaLine,
    Simplex,
}

impl PlanKind {
    fn tag(self) -> &'static str {
        match self {
            PlanKind::AlphaLine => "alpha",
            PlanKind::Spider => "spider",
            PlanKind::LambdaLine => "lambda",
            PlanKind::Simplex => "simplex",
        }
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub id: String,
    pub alpha: Vec<f32>,
    pub lambda: Vec<f32>,
}

impl SweepRow {
    pub fn mix(&self) -> MixSpec {
        MixSpec::new(self.alpha.clone(), self.lambda.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub id: String,
    pub kind: PlanKind,
    pub n_attributes: usize,
    /// Attribute indices the plan varies.
    pub attributes: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

/// Sum in index order, in `f32`.
pub fn lambda_sum_f32(lambda: &[f32]) -> f32 {
    lambda.iter().fold(0.0f32, |s, &x| s + x)
}

/// Sets `row[slot]` so that the index-order `f32` sum is exactly 1. Uses
/// `1 − Σ others` when that closes the row, else the smallest closing value.
/// When rounding leaves no closing value, the largest other entry is moved
/// down one ulp at a time (at most a few ulps in practice).
fn close_simplex(row: &mut [f32], slot: usize) -> bool {
    for _ in 0..64 {
        if try_close(row, slot) {
            return true;
        }
        let Some(big) = (0..row.len())
            .filter(|&j| j != slot && row[j] > 0.0)
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
        else {
            return false;
        };
        row[big] = f32::from_bits(row[big].to_bits() - 1);
    }
    false
}

fn try_close(row: &mut [f32], slot: usize) -> bool {
    let rest: f64 = row.iter().enumerate().filter(|&(j, _)| j != slot).map(|(_, &x)| f64::from(x)).sum();
    let direct = (1.0 - rest) as f32;
    if direct >= 0.0 {
        row[slot] = direct;
        if lambda_sum_f32(row) == 1.0 {
            return true;
        }
    }
    // Nonnegative f32 bit patterns are ordered like their values and the
    // sum is monotone in row[slot], so bisect on the bits.
    let (mut lo, mut hi) = (0u32, 1.0f32.to_bits());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        row[slot] = f32::from_bits(mid);
        if lambda_sum_f32(row) < 1.0 {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    row[slot] = f32::from_bits(lo);
    lambda_sum_f32(row) == 1.0
}

fn row_id(kind: PlanKind, index: usize) -> String {
    format!("{}-{:05}", kind.tag(), index)
}

fn check_index(index: usize, n: usize) -> Result<(), PlanError> {
    if index >= n {
        return Err(PlanError::IndexOutOfRange { index, n });
    }
    Ok(())
}

fn check_grid(what: &'static str, grid: &[f32]) -> Result<(), PlanError> {
    if grid.is_empty() {
        return Err(PlanError::EmptyGrid(what));
    }
    if let Some(&value) = grid.iter().find(|v| !v.is_finite()) {
        return Err(PlanError::NonFinite { what, value });
    }
    Ok(())
}

/// Uniform grid on `[min, max]`, both endpoints included exactly.
pub fn uniform_grid(min: f32, max: f32, steps: usize) -> Result<Vec<f32>, PlanError> {
    if !(min.is_finite() && max.is_finite() && min < max) {
        return Err(PlanError::BadRange { min, max });
    }
    if steps < 2 {
        return Err(PlanError::TooFewSteps(steps));
    }
    let (lo, hi) = (f64::from(min), f64::from(max));
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if i == steps - 1 {
                max
            } else {
                (lo + (hi - lo) * i as f64 / last) as f32
            }
        })
        .collect())
}

/// `alpha` on a uniform grid for one attribute, `lambda` one-hot on it.
/// The other attributes' `alpha` is 0 and carries no weight.
pub fn plan_alpha_line(
    n_attributes: usize,
    attribute: usize,
    alpha_min: f32,
    alpha_max: f32,
    steps: usize,
) -> Result<SweepPlan, PlanError> {
    check_index(attribute, n_attributes)?;
    let grid = uniform_grid(alpha_min, alpha_max, steps)?;
    let kind = PlanKind::AlphaLine;
    let mut lambda = vec![0.0; n_attributes];
    lambda[attribute] = 1.0;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut alpha = vec![0.0; n_attributes];
            alpha[attribute] = a;
            SweepRow {
                id: row_id(kind, i),
                alpha,
                lambda: lambda.clone(),
            }
        })
        .collect();
    Ok(SweepPlan {
        id: format!("{kind}:attr={attribute}:alpha=[{alpha_min},{alpha_max}]:steps={steps}"),
        kind,
        n_attributes,
        attributes: vec![attribute],
        rows,
    })
}

/// `lambda_varied = lambda_i`, the rest `(1 − lambda_i)/(n − 1)` each, with
/// the last non-varied coordinate closing the simplex exactly.
fn spread_lambda(n: usize, varied: usize, lambda_i: f32, row_index: usize) -> Result<Vec<f32>, PlanError> {
    let fill = ((1.0 - f64::from(lambda_i)) / (n - 1) as f64) as f32;
    let mut lambda = vec![fill; n];
    lambda[varied] = lambda_i;
    let slot = if varied == n - 1 { n - 2 } else { n - 1 };
    if !close_simplex(&mut lambda, slot) {
        return Err(PlanError::CannotClose(row_index));
    }
    Ok(lambda)
}

fn check_lambda(l: f32) -> Result<(), PlanError> {
    if !(0.0..=1.0).contains(&l) {
        return Err(PlanError::LambdaOutOfRange(l));
    }
    Ok(())
}

/// Varies `alpha[varied]` over `alpha_grid` with `lambda[varied] = lambda_i`;
/// every other attribute gets `alpha = fixed_alpha_others` and an equal
/// share of the remaining mixing mass.
pub fn plan_spider(
    n_attributes: usize,
    varied: usize,
    alpha_grid: &[f32],
    lambda_i: f32,
    fixed_alpha_others: f32,
) -> Result<SweepPlan, PlanError> {
    if n_attributes < 2 {
        return Err(PlanError::TooFewAttributes { need: 2, got: n_attributes });
    }
    check_index(varied, n_attributes)?;
    check_grid("alpha", alpha_grid)?;
    check_lambda(lambda_i)?;
    if !fixed_alpha_others.is_finite() {
        return Err(PlanError::NonFinite {
            what: "fixed alpha",
            value: fixed_alpha_others,
        });
    }
    let kind = PlanKind::Spider;
    let rows = alpha_grid
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut alpha = vec![fixed_alpha_others; n_attributes];
            alpha[varied] = a;
            Ok(SweepRow {
                id: row_id(kind, i),
                alpha,
                lambda: spread_lambda(n_attributes, varied, lambda_i, i)?,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    Ok(SweepPlan {
        id: format!(
            "{kind}:attr={varied}:lambda={lambda_i}:others_alpha={fixed_alpha_others}:points={}",
            alpha_grid.len()
        ),
        kind,
        n_attributes,
        attributes: vec![varied],
        rows,
    })
}

/// Varies `lambda[attribute]` over `lambda_grid` at fixed
/// `alpha[attribute] = alpha_i`, spreading the remaining mass uniformly
/// over the other attributes (whose `alpha` is `alpha_others`).
pub fn plan_lambda_line(
    n_attributes: usize,
    attribute: usize,
    alpha_i: f32,
    lambda_grid: &[f32],
    alpha_others: f32,
) -> Result<SweepPlan, PlanError> {
    if n_attributes < 2 {
        return Err(PlanError::TooFewAttributes { need: 2, got: n_attributes });
    }
    check_index(attribute, n_attributes)?;
    check_grid("lambda", lambda_grid)?;
    for &l in lambda_grid {
        check_lambda(l)?;
    }
    for (what, value) in [("alpha", alpha_i), ("other alpha", alpha_others)] {
        if !value.is_finite() {
            return Err(PlanError::NonFinite { what, value });
        }
    }
    let kind = PlanKind::LambdaLine;
    let rows = lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut alpha = vec![alpha_others; n_attributes];
            alpha[attribute] = alpha_i;
            Ok(SweepRow {
                id: row_id(kind, i),
                alpha,
                lambda: spread_lambda(n_attributes, attribute, l, i)?,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    Ok(SweepPlan {
        id: format!(
            "{kind}:attr={attribute}:alpha={alpha_i}:others_alpha={alpha_others}:points={}",
            lambda_grid.len()
        ),
        kind,
        n_attributes,
        attributes: vec![attribute],
        rows,
    })
}

/// All `(a, b, c)/m` with `a + b + c = m` on three attributes, in order of
/// increasing `a`, then `b`. The third weight closes the simplex. All
/// `alpha` equal `alpha_common`.
pub fn plan_simplex(
    n_attributes: usize,
    attributes: [usize; 3],
    resolution: usize,
    alpha_common: f32,
) -> Result<SweepPlan, PlanError> {
    for &a in &attributes {
        check_index(a, n_attributes)?;
    }
    let [i, j, k] = attributes;
    if i == j || j == k || i == k {
        return Err(PlanError::DuplicateIndices(attributes));
    }
    if resolution == 0 {
        return Err(PlanError::BadResolution);
    }
    if !alpha_common.is_finite() {
        return Err(PlanError::NonFinite {
            what: "alpha",
            value: alpha_common,
        });
    }
    let kind = PlanKind::Simplex;
    let m = resolution as f64;
    let mut rows = Vec::with_capacity((resolution + 1) * (resolution + 2) / 2);
    for a in 0..=resolution {
        for b in 0..=resolution - a {
            let index = rows.len();
            let mut lambda = vec![0.0f32; n_attributes];
            lambda[i] = (a as f64 / m) as f32;
            lambda[j] = (b as f64 / m) as f32;
            if !close_simplex(&mut lambda, k) {
                return Err(PlanError::CannotClose(index));
            }
            rows.push(SweepRow {
                id: row_id(kind, index),
                alpha: vec![alpha_common; n_attributes],
                lambda,
            });
        }
    }
    Ok(SweepPlan {
        id: format!("{kind}:attrs={i},{j},{k}:m={resolution}:alpha={alpha_common}"),
        kind,
        n_attributes,
        attributes: attributes.to_vec(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreError(pub String);

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Attaches per-attribute scores to a composed model.
pub trait Scorer {
    fn score(&self, row: &SweepRow, composite: &CompositeAdapter<'_>) -> Result<Vec<f64>, ScoreError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub row_id: String,
    pub alpha: Vec<f32>,
    pub lambda: Vec<f32>,
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_error: Option<String>,
    /// Mean over layers of the composite delta's Frobenius norm.
    pub delta_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub plan_id: String,
    pub kind: PlanKind,
    pub attributes: Vec<String>,
    pub rows: Vec<SweepRecord>,
}

/// Composes every row of `plan` over `set`, in plan order. A failing scorer
/// only marks its row.
pub fn run_sweep(plan: &SweepPlan, set: &AnchorSet, scorer: Option<&dyn Scorer>) -> Result<SweepResult, SweepError> {
    if plan.n_attributes != set.len() {
        return Err(SweepError::AttributeCount {
            plan: plan.n_attributes,
            set: set.len(),
        });
    }
    let mut rows = Vec::with_capacity(plan.rows.len());
    for row in &plan.rows {
        let composite = compose_multi(set, &row.mix()).map_err(|source| SweepError::Compose {
            row: row.id.clone(),
            source,
        })?;
        let (scores, score_error) = match scorer.map(|s| s.score(row, &composite)) {
            None => (None, None),
            Some(Ok(s)) => (Some(s), None),
            Some(Err(e)) => (None, Some(e.0)),
        };
        rows.push(SweepRecord {
            row_id: row.id.clone(),
            alpha: row.alpha.clone(),
            lambda: row.lambda.clone(),
            scores,
            score_error,
            delta_norm: composite.mean_delta_norm(),
        });
    }
    Ok(SweepResult {
        plan_id: plan.id.clone(),
        kind: plan.kind,
        attributes: set.attributes().map(String::from).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_line_grids() {
        let p = plan_alpha_line(1, 0, 0.0, 1.0, 11).unwrap();
        let alphas: Vec<f32> = p.rows.iter().map(|r| r.alpha[0]).collect();
        assert_eq!(alphas.len(), 11);
        assert_eq!(alphas[0], 0.0);
        assert_eq!(alphas[1], 0.1);
        assert_eq!(alphas[10], 1.0);
        let p = plan_alpha_line(3, 1, -1.0, 2.0, 4).unwrap();
        let alphas: Vec<f32> = p.rows.iter().map(|r| r.alpha[1]).collect();
        assert_eq!(alphas, vec![-1.0, 0.0, 1.0, 2.0]);
        assert!(p.rows.iter().all(|r| r.lambda == vec![0.0, 1.0, 0.0]));
        let p = plan_alpha_line(1, 0, 0.0, 1.0, 2).unwrap();
        assert_eq!(p.rows.len(), 2);
        assert!(matches!(plan_alpha_line(1, 0, 1.0, 1.0, 3), Err(PlanError::BadRange { .. })));
        assert!(matches!(plan_alpha_line(1, 0, 0.0, 1.0, 1), Err(PlanError::TooFewSteps(1))));
        assert!(matches!(plan_alpha_line(1, 1, 0.0, 1.0, 3), Err(PlanError::IndexOutOfRange { .. })));
    }

    #[test]
    fn extrapolation_preset_step() {
        let (lo, hi, n) = EXTRAPOLATION_ALPHA_LINE;
        let g = uniform_grid(lo, hi, n).unwrap();
        assert!(g.windows(2).all(|w| w[1] - w[0] == 0.25));
    }

    #[test]
    fn spider_fills() {
        let p = plan_spider(5, 2, &DEFAULT_SPIDER_ALPHAS, 0.6, 0.0).unwrap();
        for r in &p.rows {
            assert_eq!(r.lambda[2], 0.6);
            for j in [0, 1, 3, 4] {
                assert!((r.lambda[j] - 0.1).abs() < 1e-7);
                assert_eq!(r.alpha[j], 0.0);
            }
            assert_eq!(lambda_sum_f32(&r.lambda), 1.0);
        }
        let p = plan_spider(5, 4, &[0.0], 1.0, 1.0).unwrap();
        assert_eq!(p.rows[0].lambda, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let p = plan_spider(2, 0, &[0.0], 0.5, 0.0).unwrap();
        assert_eq!(p.rows[0].lambda, vec![0.5, 0.5]);
        assert!(matches!(plan_spider(5, 5, &[0.0], 0.5, 0.0), Err(PlanError::IndexOutOfRange { .. })));
        assert!(matches!(plan_spider(1, 0, &[0.0], 0.5, 0.0), Err(PlanError::TooFewAttributes { .. })));
        assert!(matches!(plan_spider(3, 0, &[0.0], 1.5, 0.0), Err(PlanError::LambdaOutOfRange(_))));
    }

    #[test]
    fn lambda_line_fills() {
        let p = plan_lambda_line(5, 0, 1.0, &[0.0, 0.5, 1.0], 1.0).unwrap();
        let fills: Vec<f32> = p.rows.iter().map(|r| r.lambda[1]).collect();
        assert_eq!(fills, vec![0.25, 0.125, 0.0]);
        assert_eq!(p.rows[2].lambda, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.rows[0].lambda[0], 0.0);
        assert!(matches!(
            plan_lambda_line(5, 0, 1.0, &[1.2], 1.0),
            Err(PlanError::LambdaOutOfRange(_))
        ));
        assert!(matches!(plan_lambda_line(5, 0, 1.0, &[], 1.0), Err(PlanError::EmptyGrid(_))));
    }

    #[test]
    fn simplex_counts_and_vertices() {
        let p = plan_simplex(3, [0, 1, 2], 1, 1.0).unwrap();
        assert_eq!(p.rows.len(), 3);
        let mut verts: Vec<Vec<f32>> = p.rows.iter().map(|r| r.lambda.clone()).collect();
        verts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(verts, vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let p = plan_simplex(5, [4, 0, 2], 2, 0.5).unwrap();
        assert_eq!(p.rows.len(), 6);
        assert!(p.rows.iter().any(|r| r.lambda[4] == 0.5 && r.lambda[0] == 0.5 && r.lambda[2] == 0.0));
        assert!(matches!(plan_simplex(5, [1, 1, 2], 2, 0.5), Err(PlanError::DuplicateIndices(_))));
        assert!(matches!(plan_simplex(5, [0, 1, 2], 0, 0.5), Err(PlanError::BadResolution)));
    }

    #[test]
    fn plans_are_pure() {
        let a = plan_simplex(5, [0, 3, 1], 7, 1.0).unwrap();
        let b = plan_simplex(5, [0, 3, 1], 7, 1.0).unwrap();
        assert_eq!(a, b);
        for m in 1..=40 {
            let p = plan_simplex(4, [2, 0, 3], m, 1.0).unwrap();
            assert_eq!(p.rows.len(), (m + 1) * (m + 2) / 2);
            for r in &p.rows {
                assert_eq!(lambda_sum_f32(&r.lambda), 1.0);
                assert!(r.lambda.iter().all(|&x| x >= 0.0));
            }
        }
    }
}
