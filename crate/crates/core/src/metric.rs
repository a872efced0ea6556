//! Distance oracles for the ambient metric space.
//!
//! Points are plain coordinate vectors. Vector-valued spaces (euclidean and
//! its snowflakes) read every coordinate; finite spaces (graph, table) expect a
//! single coordinate holding the vertex index; the discrete metric compares
//! vectors for exact equality.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};

pub type Point = Vec<f64>;

pub const DEFAULT_SNOWFLAKE_ALPHA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("snowflake exponent {0} is outside (0, 1]")]
    BadAlpha(f64),
    #[error("euclidean dimension must be positive")]
    ZeroDimension,
    #[error("distance table is not square (row {row} has {len} entries, expected {expected})")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("distance table is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("distance table has a negative or non-finite entry at ({0}, {1})")]
    BadEntry(usize, usize),
    #[error("distance table has a nonzero diagonal entry at {0}")]
    NonzeroDiagonal(usize),
    #[error("graph edge ({0}, {1}) references a vertex outside 0..{2}")]
    BadVertex(usize, usize, usize),
    #[error("graph edge ({0}, {1}) has a negative or non-finite weight")]
    BadWeight(usize, usize),
    #[error("graph is disconnected: no path between {0} and {1}")]
    Disconnected(usize, usize),
    #[error("point {point:?} does not belong to this space ({expected})")]
    PointKind { point: Vec<f64>, expected: String },
    #[error("axiom check needs at least 3 sample points, got {0}")]
    TooFewSamples(usize),
}

/// Serialized description of a metric, as it appears under `"metric"` in curve files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Euclidean {
        dim: usize,
    },
    Snowflake {
        base: Box<MetricSpec>,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Shortest-path metric of a weighted undirected graph.
    Graph {
        vertices: usize,
        edges: Vec<(usize, usize, f64)>,
    },
    Discrete,
    Table {
        matrix: Vec<Vec<f64>>,
    },
}

fn default_alpha() -> f64 {
    DEFAULT_SNOWFLAKE_ALPHA
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PointKind {
    Vector(usize),
    Index(usize),
    Any,
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Euclidean(usize),
    Snowflake(Box<MetricSpace>, f64),
    Dense { n: usize, d: Vec<f64> },
    Discrete,
}

/// An immutable, validated metric. Cheap to share across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricSpec", into = "MetricSpec")]
pub struct MetricSpace {
    spec: MetricSpec,
    kind: Kind,
}

impl From<MetricSpace> for MetricSpec {
    fn from(m: MetricSpace) -> Self {
        m.spec
    }
}

impl TryFrom<MetricSpec> for MetricSpace {
    type Error = MetricError;
    fn try_from(spec: MetricSpec) -> Result<Self, Self::Error> {
        make_metric(spec)
    }
}

/// Builds a metric from its descriptor, validating parameters.
pub fn make_metric(spec: MetricSpec) -> Result<MetricSpace, MetricError> {
    let kind = match &spec {
        MetricSpec::Euclidean { dim } => {
            if *dim == 0 {
                return Err(MetricError::ZeroDimension);
            }
            Kind::Euclidean(*dim)
        }
        MetricSpec::Snowflake { base, alpha } => {
            if !(*alpha > 0.0 && *alpha <= 1.0) {
                return Err(MetricError::BadAlpha(*alpha));
            }
            Kind::Snowflake(Box::new(make_metric((**base).clone())?), *alpha)
        }
        MetricSpec::Graph { vertices, edges } => graph_kind(*vertices, edges)?,
        MetricSpec::Discrete => Kind::Discrete,
        MetricSpec::Table { matrix } => {
            validate_table(matrix)?;
            dense_kind(matrix)
        }
    };
    Ok(MetricSpace { spec, kind })
}

fn dense_kind(matrix: &[Vec<f64>]) -> Kind {
    let n = matrix.len();
    Kind::Dense {
        n,
        d: matrix.iter().flatten().copied().collect(),
    }
}

fn validate_table(matrix: &[Vec<f64>]) -> Result<(), MetricError> {
    let n = matrix.len();
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(MetricError::NotSquare { row: i, len: row.len(), expected: n });
        }
    }
    for i in 0..n {
        if matrix[i][i] != 0.0 {
            return Err(MetricError::NonzeroDiagonal(i));
        }
        for j in 0..n {
            let v = matrix[i][j];
            if !v.is_finite() || v < 0.0 {
                return Err(MetricError::BadEntry(i, j));
            }
            if j > i && v != matrix[j][i] {
                return Err(MetricError::NotSymmetric(i, j));
            }
        }
    }
    Ok(())
}

fn graph_kind(n: usize, edges: &[(usize, usize, f64)]) -> Result<Kind, MetricError> {
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    for &(u, v, w) in edges {
        if u >= n || v >= n {
            return Err(MetricError::BadVertex(u, v, n));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(MetricError::BadWeight(u, v));
        }
        if w < d[u * n + v] {
            d[u * n + v] = w;
            d[v * n + u] = w;
        }
    }
    // Floyd-Warshall
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let cand = dik + d[k * n + j];
                if cand < d[i * n + j] {
                    d[i * n + j] = cand;
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if d[i * n + j].is_infinite() {
                return Err(MetricError::Disconnected(i, j));
            }
        }
    }
    Ok(Kind::Dense { n, d })
}

impl MetricSpace {
    pub fn euclidean(dim: usize) -> Self {
        make_metric(MetricSpec::Euclidean { dim }).expect("positive dimension")
    }

    pub fn snowflake(base: MetricSpace, alpha: f64) -> Result<Self, MetricError> {
        make_metric(MetricSpec::Snowflake { base: Box::new(base.spec), alpha })
    }

    pub fn discrete() -> Self {
        make_metric(MetricSpec::Discrete).expect("discrete metric has no parameters")
    }

    pub fn table(matrix: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        make_metric(MetricSpec::Table { matrix })
    }

    pub fn graph(vertices: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self, MetricError> {
        make_metric(MetricSpec::Graph { vertices, edges })
    }

    /// A table metric that skips validation, for diagnosing broken tables
    /// with [`check_metric_axioms`]. Only the shape must be square.
    pub fn table_unchecked(matrix: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let n = matrix.len();
        if let Some((i, row)) = matrix.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(MetricError::NotSquare { row: i, len: row.len(), expected: n });
        }
        let kind = dense_kind(&matrix);
        Ok(MetricSpace { spec: MetricSpec::Table { matrix }, kind })
    }

    pub fn spec(&self) -> &MetricSpec {
        &self.spec
    }

    pub fn point_kind(&self) -> PointKind {
        match &self.kind {
            Kind::Euclidean(dim) => PointKind::Vector(*dim),
            Kind::Snowflake(base, _) => base.point_kind(),
            Kind::Dense { n, .. } => PointKind::Index(*n),
            Kind::Discrete => PointKind::Any,
        }
    }

    pub fn validate_point(&self, x: &[f64]) -> Result<(), MetricError> {
        let ok = match self.point_kind() {
            PointKind::Vector(dim) => x.len() == dim && x.iter().all(|c| c.is_finite()),
            PointKind::Index(n) => {
                x.len() == 1 && x[0] >= 0.0 && x[0].fract() == 0.0 && (x[0] as usize) < n
            }
            PointKind::Any => !x.is_empty() && x.iter().all(|c| c.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(MetricError::PointKind {
                point: x.to_vec(),
                expected: format!("{:?}", self.point_kind()),
            })
        }
    }

    /// Checked distance: validates both points first.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        Ok(self.dist(x, y))
    }

    /// Distance between points already known to belong to the space.
    #[inline]
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            Kind::Euclidean(_) => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Kind::Snowflake(base, alpha) => base.dist(x, y).powf(*alpha),
            Kind::Dense { n, d } => d[x[0] as usize * n + y[0] as usize],
            Kind::Discrete => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// ρ(x, S) = min over the set; +∞ for an empty set.
    pub fn dist_to_set(&self, x: &[f64], set: &[Point]) -> f64 {
        set.iter().map(|s| self.dist(x, s)).fold(f64::INFINITY, f64::min)
    }
}

/// Worst-case findings of a metric-axiom scan over a sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub samples: usize,
    /// max |ρ(x,y) − ρ(y,x)| and where it occurs.
    pub worst_asymmetry: f64,
    pub asymmetric_pair: Option<(usize, usize)>,
    /// Smallest ρ(x,y) observed (negative means a violation).
    pub min_distance: f64,
    /// max ρ(x,x).
    pub worst_self_distance: f64,
    /// min over ordered triples of ρ(x,y) + ρ(y,z) − ρ(x,z).
    pub worst_triangle_slack: f64,
    pub triangle_triple: Option<(usize, usize, usize)>,
    pub passed: bool,
}

pub fn check_metric_axioms(
    space: &MetricSpace,
    samples: &[Point],
    tol: f64,
) -> Result<AxiomReport, MetricError> {
    check_metric_axioms_with(space, samples, tol, Exec::default())
}

pub fn check_metric_axioms_with(
    space: &MetricSpace,
    samples: &[Point],
    tol: f64,
    exec: Exec,
) -> Result<AxiomReport, MetricError> {
    let n = samples.len();
    if n < 3 {
        return Err(MetricError::TooFewSamples(n));
    }
    for p in samples {
        space.validate_point(p)?;
    }
    let rows: Vec<Vec<f64>> = par::map_range(exec, n, |i| {
        (0..n).map(|j| space.dist(&samples[i], &samples[j])).collect()
    });

    let mut worst_asymmetry = 0.0;
    let mut asymmetric_pair = None;
    let mut min_distance = f64::INFINITY;
    let mut worst_self_distance = 0.0f64;
    for i in 0..n {
        worst_self_distance = worst_self_distance.max(rows[i][i]);
        for j in 0..n {
            min_distance = min_distance.min(rows[i][j]);
            let asym = (rows[i][j] - rows[j][i]).abs();
            if j > i && asym > worst_asymmetry {
                worst_asymmetry = asym;
                asymmetric_pair = Some((i, j));
            }
        }
    }

    let per_x: Vec<(f64, usize, usize)> = par::map_range(exec, n, |x| {
        let mut best = (f64::INFINITY, 0, 0);
        for y in 0..n {
            for z in 0..n {
                let slack = rows[x][y] + rows[y][z] - rows[x][z];
                if slack < best.0 {
                    best = (slack, y, z);
                }
            }
        }
        best
    });
    let (worst_triangle_slack, triangle_triple) = per_x
        .iter()
        .enumerate()
        .map(|(x, &(s, y, z))| (s, (x, y, z)))
        .fold((f64::INFINITY, None), |acc, (s, t)| {
            if s < acc.0 {
                (s, Some(t))
            } else {
                acc
            }
        });

    let passed = -worst_asymmetry >= -tol
        && worst_triangle_slack >= -tol
        && min_distance >= -tol
        && worst_self_distance <= tol;
    Ok(AxiomReport {
        samples: n,
        worst_asymmetry,
        asymmetric_pair,
        min_distance,
        worst_self_distance,
        worst_triangle_slack,
        triangle_triple: if worst_triangle_slack < -tol { triangle_triple } else { None },
        passed,
    })
}
