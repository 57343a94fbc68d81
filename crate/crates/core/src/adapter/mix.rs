use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AdapterError;
use crate::math;

/// Interpolation weights outside this range leave the regime where
/// extrapolated adapters were still observed to behave; advisory only.
pub const STABLE_ALPHA_RANGE: (f32, f32) = (-1.0, 2.0);

const SUM_TOL: f64 = 1e-6;

/// Per-attribute interpolation weights `alpha` and simplex mixing weights
/// `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub alpha: Vec<f32>,
    pub lambda: Vec<f32>,
}

impl MixSpec {
    pub fn new(alpha: Vec<f32>, lambda: Vec<f32>) -> Self {
        Self { alpha, lambda }
    }

    /// Indices whose `alpha` falls outside [`STABLE_ALPHA_RANGE`].
    pub fn out_of_stable_range(&self) -> Vec<usize> {
        let (lo, hi) = STABLE_ALPHA_RANGE;
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a < lo || a > hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices with `alpha` outside `[0, 1]`.
    pub fn extrapolated(&self) -> Vec<usize> {
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| !(0.0..=1.0).contains(&a))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn lambda_sum(&self) -> f64 {
        self.lambda.iter().map(|&l| f64::from(l)).sum()
    }
}

/// Checks lengths, finiteness, nonnegativity and `Σλ = 1` (within 1e-6).
///
/// With `normalize`, a `lambda` whose sum is off by more than the tolerance
/// is divided by its sum; one that already sums to 1 passes through
/// untouched, so validation is idempotent. Out-of-range `alpha` is not an
/// error, see [`MixSpec::out_of_stable_range`].
pub fn validate_mixspec(spec: MixSpec, n_attributes: usize, normalize: bool) -> Result<MixSpec, AdapterError> {
    for (what, v) in [("alpha", &spec.alpha), ("lambda", &spec.lambda)] {
        if v.len() != n_attributes {
            return Err(AdapterError::LengthMismatch {
                what,
                got: v.len(),
                expected: n_attributes,
            });
        }
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(AdapterError::NonFiniteWeight { what, index });
        }
    }
    if let Some((index, &value)) = spec.lambda.iter().enumerate().find(|(_, &l)| l < 0.0) {
        return Err(AdapterError::NegativeLambda { index, value });
    }
    let sum = spec.lambda_sum();
    if math::abs(sum - 1.0) <= SUM_TOL {
        return Ok(spec);
    }
    if !normalize {
        return Err(AdapterError::LambdaSum { sum });
    }
    if sum == 0.0 {
        return Err(AdapterError::ZeroLambda);
    }
    let lambda = spec
        .lambda
        .iter()
        .map(|&l| (f64::from(l) / sum) as f32)
        .collect();
    Ok(MixSpec {
        alpha: spec.alpha,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_attribute_unit_weight() {
        let s = validate_mixspec(MixSpec::new(vec![0.3], vec![1.0]), 1, false).unwrap();
        assert_eq!(s.lambda, vec![1.0]);
    }

    #[test]
    fn uniform_five() {
        let s = MixSpec::new(vec![0.0; 5], vec![0.2; 5]);
        assert_eq!(validate_mixspec(s.clone(), 5, false).unwrap(), s);
    }

    #[test]
    fn normalization() {
        let s = validate_mixspec(MixSpec::new(vec![0.0, 1.0], vec![2.0, 2.0]), 2, true).unwrap();
        assert_eq!(s.lambda, vec![0.5, 0.5]);
        // idempotent
        assert_eq!(validate_mixspec(s.clone(), 2, true).unwrap(), s);
        assert_eq!(validate_mixspec(s.clone(), 2, false).unwrap(), s);
    }

    #[test]
    fn errors() {
        let e = |a: Vec<f32>, l: Vec<f32>, n, norm| validate_mixspec(MixSpec::new(a, l), n, norm).unwrap_err();
        assert!(matches!(e(vec![0.0], vec![1.0], 2, false), AdapterError::LengthMismatch { .. }));
        assert!(matches!(
            e(vec![0.0, 0.0], vec![1.5, -0.5], 2, true),
            AdapterError::NegativeLambda { index: 1, .. }
        ));
        assert!(matches!(e(vec![0.0, 0.0], vec![0.0, 0.0], 2, true), AdapterError::ZeroLambda));
        assert!(matches!(e(vec![0.0, 0.0], vec![0.5, 0.6], 2, false), AdapterError::LambdaSum { .. }));
        assert!(matches!(
            e(vec![f32::NAN], vec![1.0], 1, false),
            AdapterError::NonFiniteWeight { what: "alpha", .. }
        ));
    }

    #[test]
    fn stable_range_flags() {
        let s = validate_mixspec(MixSpec::new(vec![-1.0, 2.0, 2.5, -3.0, 0.5], vec![0.2; 5]), 5, false).unwrap();
        assert_eq!(s.out_of_stable_range(), vec![2, 3]);
        assert_eq!(s.extrapolated(), vec![0, 1, 2, 3]);
    }
}
