use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{MetricError, MetricSpace, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("a curve needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("{params} parameters but {points} points")]
    LengthMismatch { params: usize, points: usize },
    #[error("parameters must be finite and strictly increasing (violated at index {0})")]
    NotIncreasing(usize),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A curve γ:[a,b] → X known through its values on a parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveFile", into = "CurveFile")]
pub struct SampledCurve {
    space: MetricSpace,
    params: Vec<f64>,
    points: Vec<Point>,
    oscillation: f64,
}

/// On-disk layout: `{ "metric": {...}, "params": [...], "points": [[...], ...] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveFile {
    pub metric: MetricSpace,
    pub params: Vec<f64>,
    pub points: Vec<Point>,
}

impl TryFrom<CurveFile> for SampledCurve {
    type Error = CurveError;
    fn try_from(f: CurveFile) -> Result<Self, Self::Error> {
        SampledCurve::new(f.metric, f.params, f.points)
    }
}

impl From<SampledCurve> for CurveFile {
    fn from(c: SampledCurve) -> Self {
        CurveFile { metric: c.space, params: c.params, points: c.points }
    }
}

impl SampledCurve {
    pub fn new(space: MetricSpace, params: Vec<f64>, points: Vec<Point>) -> Result<Self, CurveError> {
        if params.len() != points.len() {
            return Err(CurveError::LengthMismatch { params: params.len(), points: points.len() });
        }
        if params.len() < 2 {
            return Err(CurveError::TooShort(params.len()));
        }
        if let Some(i) = params.iter().position(|t| !t.is_finite()) {
            return Err(CurveError::NotIncreasing(i));
        }
        if let Some(i) = (1..params.len()).find(|&i| params[i] <= params[i - 1]) {
            return Err(CurveError::NotIncreasing(i));
        }
        for p in &points {
            space.validate_point(p)?;
        }
        let oscillation = points
            .windows(2)
            .map(|w| space.dist(&w[0], &w[1]))
            .fold(0.0, f64::max);
        Ok(SampledCurve { space, params, points, oscillation })
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> usize {
        self.params.len() - 1
    }

    pub fn param(&self, i: usize) -> f64 {
        self.params[i]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// ρ(γ(t_i), γ(t_j)).
    #[inline]
    pub fn gap(&self, i: usize, j: usize) -> f64 {
        self.space.dist(&self.points[i], &self.points[j])
    }

    /// ω = max over adjacent samples of ρ(γ(t_{j−1}), γ(t_j)).
    pub fn oscillation(&self) -> f64 {
        self.oscillation
    }

    /// Parameter length of the grid step ending at `j`.
    pub fn step(&self, j: usize) -> f64 {
        self.params[j] - self.params[j - 1]
    }

    /// Largest observed ratio ρ/Δt over grid steps.
    pub fn grid_lipschitz(&self) -> f64 {
        (1..self.len())
            .map(|j| self.gap(j - 1, j) / self.step(j))
            .fold(0.0, f64::max)
    }

    /// First pair of grid indices with coinciding images, if any.
    pub fn first_repeat(&self, tol: f64) -> Option<(usize, usize)> {
        let n = self.len();
        (0..n).find_map(|i| ((i + 1)..n).find(|&j| self.gap(i, j) <= tol).map(|j| (i, j)))
    }

    /// Same grid, new metric. Points must be valid in the new space.
    pub fn with_space(&self, space: MetricSpace) -> Result<Self, CurveError> {
        SampledCurve::new(space, self.params.clone(), self.points.clone())
    }
}
