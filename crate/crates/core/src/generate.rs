//! Deterministic test curves.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, SampledCurve};
use crate::metric::{MetricError, MetricSpace, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("need at least 2 sample points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline needs at least 2 vertices of equal dimension")]
    BadPolyline,
    #[error("cantor level {level} needs 3^{level}·r + 1 points, got {points}")]
    CantorGrid { level: u32, points: usize },
    #[error("circle arc fraction must be positive, got {0}")]
    BadArc(f64),
    #[error("unknown curve kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveKind {
    /// t ↦ t on [0, 1].
    Identity,
    /// Piecewise-linear through the vertices, one unit of parameter per piece.
    Polyline { vertices: Vec<Point> },
    /// Level-k piecewise-linear devil's staircase on [0, 1].
    Cantor { level: u32 },
    /// t ↦ (cos 2π·arc·t, sin 2π·arc·t) on [0, 1]; arc = 1 closes the loop.
    Circle { arc: f64 },
    /// The base curve under the snowflaked metric ρ^α.
    Snowflaked { base: Box<CurveKind>, alpha: f64 },
    /// Planar walk with uniform steps in [−1, 1]²/√n.
    RandomWalk { seed: u64 },
    /// γ ≡ 0 on [0, 1].
    Constant,
}

pub fn generate_curve(kind: &CurveKind, points: usize) -> Result<SampledCurve, GenerateError> {
    if points < 2 {
        return Err(GenerateError::TooFewPoints(points));
    }
    let last = (points - 1) as f64;
    let unit: Vec<f64> = (0..points).map(|k| k as f64 / last).collect();
    match kind {
        CurveKind::Identity => {
            let pts = unit.iter().map(|&t| vec![t]).collect();
            Ok(SampledCurve::new(MetricSpace::euclidean(1), unit, pts)?)
        }
        CurveKind::Constant => {
            let pts = vec![vec![0.0]; points];
            Ok(SampledCurve::new(MetricSpace::euclidean(1), unit, pts)?)
        }
        CurveKind::Polyline { vertices } => polyline(vertices, points),
        CurveKind::Cantor { level } => cantor(*level, points),
        CurveKind::Circle { arc } => {
            if !(*arc > 0.0) {
                return Err(GenerateError::BadArc(*arc));
            }
            let pts = unit
                .iter()
                .map(|&t| {
                    let a = TAU * arc * t;
                    vec![a.cos(), a.sin()]
                })
                .collect();
            Ok(SampledCurve::new(MetricSpace::euclidean(2), unit, pts)?)
        }
        CurveKind::Snowflaked { base, alpha } => {
            let c = generate_curve(base, points)?;
            let space = MetricSpace::snowflake(c.space().clone(), *alpha)?;
            Ok(c.with_space(space)?)
        }
        CurveKind::RandomWalk { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let scale = 1.0 / (points as f64).sqrt();
            let mut at = [0.0f64, 0.0];
            let mut pts = Vec::with_capacity(points);
            pts.push(at.to_vec());
            for _ in 1..points {
                at[0] += scale * rng.random_range(-1.0..=1.0);
                at[1] += scale * rng.random_range(-1.0..=1.0);
                pts.push(at.to_vec());
            }
            Ok(SampledCurve::new(MetricSpace::euclidean(2), unit, pts)?)
        }
    }
}

fn polyline(vertices: &[Point], points: usize) -> Result<SampledCurve, GenerateError> {
    if vertices.len() < 2 || vertices.iter().any(|v| v.len() != vertices[0].len() || v.is_empty()) {
        return Err(GenerateError::BadPolyline);
    }
    let segs = vertices.len() - 1;
    let denom = points - 1;
    let mut params = Vec::with_capacity(points);
    let mut pts = Vec::with_capacity(points);
    for k in 0..points {
        // exact integer split so that aligned grids hit every vertex
        let num = k * segs;
        let (s, rem) = (num / denom, num % denom);
        params.push(num as f64 / denom as f64);
        if s == segs {
            pts.push(vertices[segs].clone());
            continue;
        }
        let f = rem as f64 / denom as f64;
        let p = vertices[s]
            .iter()
            .zip(&vertices[s + 1])
            .map(|(a, b)| a + f * (b - a))
            .collect();
        pts.push(p);
    }
    let space = MetricSpace::euclidean(vertices[0].len());
    Ok(SampledCurve::new(space, params, pts)?)
}

/// Value of the level-`level` staircase at `j / m`, computed on the integer grid.
fn staircase(j: u64, m: u64, level: u32) -> f64 {
    if level == 0 {
        return j as f64 / m as f64;
    }
    let third = m / 3;
    if j <= third {
        0.5 * staircase(j, third, level - 1)
    } else if j < 2 * third {
        0.5
    } else {
        0.5 + 0.5 * staircase(j - 2 * third, third, level - 1)
    }
}

fn cantor(level: u32, points: usize) -> Result<SampledCurve, GenerateError> {
    let cells = 3u64.pow(level);
    let m = (points - 1) as u64;
    if !m.is_multiple_of(cells) {
        return Err(GenerateError::CantorGrid { level, points });
    }
    let params: Vec<f64> = (0..points).map(|j| j as f64 / m as f64).collect();
    let pts = (0..=m).map(|j| vec![staircase(j, m, level)]).collect();
    Ok(SampledCurve::new(MetricSpace::euclidean(1), params, pts)?)
}

/// Grid-index intervals on which the level-k staircase rises, each of
/// parameter length 3^−k and rise 2^−k.
pub fn cantor_rise_intervals(level: u32, points: usize) -> Vec<(usize, usize)> {
    let cells = 3usize.pow(level);
    let per = (points - 1) / cells;
    (0..cells)
        .filter(|&c| {
            // a cell rises iff its base-3 digits avoid 1
            let mut x = c;
            (0..level).all(|_| {
                let d = x % 3;
                x /= 3;
                d != 1
            })
        })
        .map(|c| (c * per, (c + 1) * per))
        .collect()
}
