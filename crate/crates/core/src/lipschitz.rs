//! Two-sided McShane envelopes over a finite support.
//!
//! For a function `h` known on a finite set `X'` with Lipschitz constant `L'`
//! and any `L >= L'`:
//!
//! ```text
//! upper(x) = min_{x' in X'} h(x') + L·ρ(x', x)
//! lower(x) = max_{x' in X'} h(x') − L·ρ(x', x)
//! ```
//!
//! Both agree with `h` on `X'`, both are `L`-Lipschitz, and their gap satisfies
//! `upper(x) − lower(x) >= 2(L − L')·ρ(x, X')`. Any value chosen between them
//! at a new point keeps the function `L`-Lipschitz.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{MetricError, MetricSpace, Point};
use crate::par::{self, Exec};

/// Absolute tolerance for comparisons between function values.
pub const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtensionError {
    #[error("support is empty")]
    EmptySupport,
    #[error("{support} support points but {values} values")]
    LengthMismatch { support: usize, values: usize },
    #[error("support points {0} and {1} coincide but carry different values")]
    ConflictingDuplicate(usize, usize),
    #[error("extension constant {requested} is below the base constant {base}")]
    ConstantTooSmall { requested: f64, base: f64 },
    #[error("value {value} is above the upper envelope {upper}")]
    AboveUpper { value: f64, upper: f64 },
    #[error("value {value} is below the lower envelope {lower}")]
    BelowLower { value: f64, lower: f64 },
    #[error("support pair ({i}, {j}) breaks the declared constant by {excess:e}")]
    NotLipschitz { i: usize, j: usize, excess: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A real function on a finite subset of the space, with a recorded constant.
///
/// Serialized as `{ "support": [...], "values": [...], "constant": L' }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialLipschitzFunction {
    pub support: Vec<Point>,
    pub values: Vec<f64>,
    pub constant: f64,
}

impl PartialLipschitzFunction {
    /// Builds a function with the smallest admissible constant.
    pub fn from_data(
        space: &MetricSpace,
        support: Vec<Point>,
        values: Vec<f64>,
    ) -> Result<Self, ExtensionError> {
        let constant = infer_constant(space, &support, &values)?;
        Ok(PartialLipschitzFunction { support, values, constant })
    }

    pub fn empty(constant: f64) -> Self {
        PartialLipschitzFunction { support: Vec::new(), values: Vec::new(), constant }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Index of a support entry at distance zero from `x`.
    pub fn find(&self, space: &MetricSpace, x: &[f64]) -> Option<usize> {
        self.support.iter().position(|s| space.dist(s, x) == 0.0)
    }

    pub fn value_at(&self, space: &MetricSpace, x: &[f64]) -> Option<f64> {
        self.find(space, x).map(|i| self.values[i])
    }

    /// Checks shape, point validity, duplicates and the recorded constant.
    pub fn validate(&self, space: &MetricSpace) -> Result<(), ExtensionError> {
        if self.support.len() != self.values.len() {
            return Err(ExtensionError::LengthMismatch {
                support: self.support.len(),
                values: self.values.len(),
            });
        }
        for p in &self.support {
            space.validate_point(p)?;
        }
        if let Some(v) =
            lipschitz_violation(space, &self.support, &self.values, self.constant, VALUE_TOL, Exec::default())
        {
            return Err(if space.dist(&self.support[v.i], &self.support[v.j]) == 0.0 {
                ExtensionError::ConflictingDuplicate(v.i, v.j)
            } else {
                ExtensionError::NotLipschitz { i: v.i, j: v.j, excess: v.excess }
            });
        }
        Ok(())
    }
}

/// Smallest `L'` with |h(x') − h(x'')| <= L'·ρ(x', x'') on the support.
///
/// Zero-distance pairs with equal values are skipped; with unequal values they
/// are an error.
pub fn infer_constant(
    space: &MetricSpace,
    support: &[Point],
    values: &[f64],
) -> Result<f64, ExtensionError> {
    if support.is_empty() {
        return Err(ExtensionError::EmptySupport);
    }
    if support.len() != values.len() {
        return Err(ExtensionError::LengthMismatch { support: support.len(), values: values.len() });
    }
    for p in support {
        space.validate_point(p)?;
    }
    let rows = par::map_range(Exec::default(), support.len(), |i| {
        let mut best = 0.0f64;
        for j in (i + 1)..support.len() {
            let d = space.dist(&support[i], &support[j]);
            let dv = (values[i] - values[j]).abs();
            if d == 0.0 {
                if dv != 0.0 {
                    return Err(ExtensionError::ConflictingDuplicate(i, j));
                }
                continue;
            }
            best = best.max(dv / d);
        }
        Ok(best)
    });
    rows.into_iter().try_fold(0.0f64, |acc, r| r.map(|v| acc.max(v)))
}

/// The worst pair breaking `|Δh| <= L·ρ + tol`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzViolation {
    pub i: usize,
    pub j: usize,
    /// |Δh| − L·ρ at the pair.
    pub excess: f64,
}

/// Exhaustive pairwise check. Returns the worst offending pair, if any.
pub fn lipschitz_violation(
    space: &MetricSpace,
    points: &[Point],
    values: &[f64],
    lipschitz: f64,
    tol: f64,
    exec: Exec,
) -> Option<LipschitzViolation> {
    let rows = par::map_range(exec, points.len(), |i| {
        let mut worst: Option<LipschitzViolation> = None;
        for j in (i + 1)..points.len() {
            let excess = (values[i] - values[j]).abs() - lipschitz * space.dist(&points[i], &points[j]);
            if excess > tol && worst.is_none_or(|w| excess > w.excess) {
                worst = Some(LipschitzViolation { i, j, excess });
            }
        }
        worst
    });
    rows.into_iter()
        .flatten()
        .fold(None, |acc: Option<LipschitzViolation>, v| match acc {
            Some(a) if a.excess >= v.excess => Some(a),
            _ => Some(v),
        })
}

/// The pair of envelopes of `base` at constant `lipschitz`.
#[derive(Clone, Debug)]
pub struct ExtensionField<'a> {
    space: &'a MetricSpace,
    base: &'a PartialLipschitzFunction,
    lipschitz: f64,
    base_constant: f64,
}

impl<'a> ExtensionField<'a> {
    /// `lipschitz` must be at least the smallest constant of `base`.
    pub fn new(
        space: &'a MetricSpace,
        base: &'a PartialLipschitzFunction,
        lipschitz: f64,
    ) -> Result<Self, ExtensionError> {
        if base.support.len() != base.values.len() {
            return Err(ExtensionError::LengthMismatch {
                support: base.support.len(),
                values: base.values.len(),
            });
        }
        let base_constant = infer_constant(space, &base.support, &base.values)?;
        if lipschitz < base_constant - VALUE_TOL || !lipschitz.is_finite() {
            return Err(ExtensionError::ConstantTooSmall { requested: lipschitz, base: base_constant });
        }
        Ok(ExtensionField { space, base, lipschitz, base_constant })
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Smallest constant of the base function.
    pub fn base_constant(&self) -> f64 {
        self.base_constant
    }

    pub fn base(&self) -> &PartialLipschitzFunction {
        self.base
    }

    pub fn space(&self) -> &MetricSpace {
        self.space
    }

    pub fn upper(&self, x: &[f64]) -> f64 {
        self.base
            .support
            .iter()
            .zip(&self.base.values)
            .map(|(s, h)| h + self.lipschitz * self.space.dist(s, x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lower(&self, x: &[f64]) -> f64 {
        self.base
            .support
            .iter()
            .zip(&self.base.values)
            .map(|(s, h)| h - self.lipschitz * self.space.dist(s, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// (lower, upper) in one pass over the support.
    pub fn envelopes(&self, x: &[f64]) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (s, h) in self.base.support.iter().zip(&self.base.values) {
            let r = self.lipschitz * self.space.dist(s, x);
            lo = lo.max(h - r);
            hi = hi.min(h + r);
        }
        (lo, hi)
    }

    pub fn envelopes_at(&self, points: &[Point], exec: Exec) -> Vec<(f64, f64)> {
        par::map_slice(exec, points, |p| self.envelopes(p))
    }

    /// [upper − lower] − 2(L − L')·ρ(x, X'). Never below −1e−9 for a valid field.
    pub fn gap_slack(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.envelopes(x);
        let to_support = self.space.dist_to_set(x, &self.base.support);
        (hi - lo) - 2.0 * (self.lipschitz - self.base_constant) * to_support
    }

    /// Adds `x` with `value`, which must lie between the envelopes.
    /// The result carries the field's constant.
    pub fn extend_at_point(
        &self,
        x: &[f64],
        value: f64,
    ) -> Result<PartialLipschitzFunction, ExtensionError> {
        self.space.validate_point(x)?;
        let (lo, hi) = self.envelopes(x);
        if value > hi + VALUE_TOL {
            return Err(ExtensionError::AboveUpper { value, upper: hi });
        }
        if value < lo - VALUE_TOL {
            return Err(ExtensionError::BelowLower { value, lower: lo });
        }
        let mut out = self.base.clone();
        out.constant = self.lipschitz;
        if self.base.find(self.space, x).is_none() {
            out.support.push(x.to_vec());
            out.values.push(value);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real() -> MetricSpace {
        MetricSpace::euclidean(1)
    }

    fn pf(support: &[f64], values: &[f64]) -> PartialLipschitzFunction {
        PartialLipschitzFunction::from_data(
            &real(),
            support.iter().map(|&x| vec![x]).collect(),
            values.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn infer_constant_examples() {
        assert_eq!(pf(&[0.0, 1.0], &[0.0, 3.0]).constant, 3.0);
        assert_eq!(pf(&[5.0], &[1.0]).constant, 0.0);
        assert_eq!(pf(&[0.0, 1.0, 3.0], &[0.0, 2.0, 3.0]).constant, 2.0);
    }

    #[test]
    fn infer_constant_duplicates() {
        let e = real();
        assert_eq!(pf(&[0.0, 0.0, 1.0], &[1.0, 1.0, 2.0]).constant, 1.0);
        assert_eq!(
            infer_constant(&e, &[vec![0.0], vec![0.0]], &[1.0, 2.0]).unwrap_err(),
            ExtensionError::ConflictingDuplicate(0, 1)
        );
        assert_eq!(infer_constant(&e, &[], &[]).unwrap_err(), ExtensionError::EmptySupport);
    }

    #[test]
    fn single_anchor_cones() {
        let e = real();
        let base = pf(&[2.0], &[0.0]);
        let field = ExtensionField::new(&e, &base, 1.0).unwrap();
        for x in [-3.0, 0.0, 2.0, 7.5] {
            assert_eq!(field.upper(&[x]), (x - 2.0f64).abs());
            assert_eq!(field.lower(&[x]), -(x - 2.0f64).abs());
        }
    }

    #[test]
    fn two_point_support_midpoint() {
        let e = real();
        let base = pf(&[0.0, 1.0], &[0.0, 1.0]);
        let field = ExtensionField::new(&e, &base, 2.0).unwrap();
        assert_eq!(field.upper(&[0.5]), 1.0);
        assert_eq!(field.lower(&[0.5]), 0.0);
        assert_eq!(field.gap_slack(&[0.5]), 0.0);
        assert_eq!(field.upper(&[1.0]), 1.0);
        assert_eq!(field.lower(&[1.0]), 1.0);
        assert_eq!(field.gap_slack(&[1.0]), 0.0);
    }

    #[test]
    fn gap_equality_case() {
        let e = real();
        let base = pf(&[0.0], &[0.0]);
        let field = ExtensionField::new(&e, &base, 1.0).unwrap();
        assert_eq!(field.upper(&[3.0]) - field.lower(&[3.0]), 6.0);
        assert_eq!(field.gap_slack(&[3.0]), 0.0);
    }

    #[test]
    fn constant_below_base_rejected() {
        let e = real();
        let base = pf(&[0.0, 1.0], &[0.0, 3.0]);
        assert!(matches!(
            ExtensionField::new(&e, &base, 2.0).unwrap_err(),
            ExtensionError::ConstantTooSmall { .. }
        ));
    }

    #[test]
    fn extend_at_point_sides() {
        let e = real();
        let base = pf(&[0.0, 1.0], &[0.0, 1.0]);
        let field = ExtensionField::new(&e, &base, 2.0).unwrap();
        let (lo, hi) = field.envelopes(&[0.5]);

        let top = field.extend_at_point(&[0.5], hi).unwrap();
        assert_eq!(top.constant, 2.0);
        assert!(infer_constant(&e, &top.support, &top.values).unwrap() <= 2.0 + VALUE_TOL);

        let mid = field.extend_at_point(&[0.5], 0.5 * (lo + hi)).unwrap();
        assert_eq!(mid.len(), 3);

        assert!(matches!(
            field.extend_at_point(&[0.5], hi + 1.0).unwrap_err(),
            ExtensionError::AboveUpper { .. }
        ));
        assert!(matches!(
            field.extend_at_point(&[0.5], lo - 1.0).unwrap_err(),
            ExtensionError::BelowLower { .. }
        ));
    }

    #[test]
    fn extending_at_support_point_does_not_duplicate() {
        let e = real();
        let base = pf(&[0.0, 1.0], &[0.0, 1.0]);
        let field = ExtensionField::new(&e, &base, 2.0).unwrap();
        let same = field.extend_at_point(&[1.0], 1.0).unwrap();
        assert_eq!(same.len(), 2);
    }

    #[test]
    fn violation_names_pair() {
        let e = real();
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let v = lipschitz_violation(&e, &pts, &[0.0, 2.0, 5.0], 1.0, VALUE_TOL, Exec::Sequential).unwrap();
        assert_eq!((v.i, v.j), (0, 2));
        assert!((v.excess - 3.0).abs() < 1e-12);
        assert!(lipschitz_violation(&e, &pts, &[0.0, 1.0, 2.0], 1.0, VALUE_TOL, Exec::Sequential).is_none());
    }

    #[test]
    fn json_layout() {
        let f = pf(&[0.0, 1.0], &[0.0, 3.0]);
        assert_eq!(
            serde_json::to_string(&f).unwrap(),
            r#"{"support":[[0.0],[1.0]],"values":[0.0,3.0],"constant":3.0}"#
        );
    }
}
