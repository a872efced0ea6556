//! Zig-zag partitions: Lipschitz extensions along a curve whose composed
//! variation is bounded below by the endpoint distance (or image diameter).
//!
//! Every construction funnels into [`walk`], which runs the alternating
//! selection rule over an ordered list of grid indices. Envelopes are those
//! of the function handed in, fixed for the duration of the walk.
//!
//! Sup rule on the grid: from `t_i` with assigned value `v_i`, a rising step
//! picks the last index `j` with `v_i + L·ρ(γ(t_i), γ(t_j)) <= upper(γ(t_j))`
//! and assigns exactly `v_i + L·ρ`; a falling step mirrors this against the
//! lower envelope. The rule value equals the envelope value in the continuum
//! and sits inside the envelope interval on the grid; its distance to the
//! envelope is logged. When no index beyond `t_i` qualifies (a stall) the walk
//! advances one grid point and assigns the opposite envelope there, logging
//! `L·ρ − |Δh|` as the step's slack.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::SampledCurve;
use crate::lipschitz::{infer_constant, ExtensionError, ExtensionField, PartialLipschitzFunction};
use crate::metric::Point;
use crate::modification::{piecewise_injective_modification_in, CarrierSet, DEFAULT_EQ_TOL};
use crate::par::{self, Exec};

/// Minimum distance between the walked image and the support.
pub const SUPPORT_SEPARATION: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZigzagError {
    #[error("constant {requested} must exceed the support constant {base}")]
    ConstantTooSmall { requested: f64, base: f64 },
    #[error("curve point {index} is within {distance:e} of the support")]
    SupportTooClose { index: usize, distance: f64 },
    #[error("curve repeats a point at grid indices {0} and {1}")]
    NotInjective(usize, usize),
    #[error("theta {0} is outside (0, 1)")]
    BadTheta(f64),
    #[error("ladder needs at least one rung")]
    EmptyLadder,
    #[error("ladder interval ({low}, {high}) is empty")]
    EmptyLadderInterval { low: f64, high: f64 },
    #[error("gap {gap} has no interior grid pair reaching the sqrt(theta) threshold (best ratio {best_ratio})")]
    GridTooCoarse { gap: usize, best_ratio: f64 },
    #[error("grid range {0}..={1} is outside the curve")]
    BadRange(usize, usize),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Rise,
    Fall,
}

impl StepKind {
    fn flip(self) -> Self {
        match self {
            StepKind::Rise => StepKind::Fall,
            StepKind::Fall => StepKind::Rise,
        }
    }
}

/// One partition step `t_{i−1} → t_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub from: usize,
    pub to: usize,
    pub kind: StepKind,
    pub value: f64,
    /// The envelope this step targets (upper for a rise), evaluated at `to`;
    /// `None` while the support is empty and the envelope is unbounded.
    pub envelope: Option<f64>,
    /// The constant the step was taken with.
    pub lipschitz: f64,
    /// No grid point beyond `from` met the rule.
    pub stalled: bool,
    pub is_final: bool,
    /// |L·ρ − |Δh||.
    pub slack: f64,
}

/// Grid indices of a partition, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZigzagResult {
    pub partition: Partition,
    /// γ(t) for each partition index.
    pub params: Vec<f64>,
    /// h(γ(t)) for each partition index.
    pub values: Vec<f64>,
    pub extended: PartialLipschitzFunction,
    pub achieved_variation: f64,
    pub target: f64,
    pub total_slack: f64,
    pub slack_log: Vec<StepRecord>,
}

impl ZigzagResult {
    /// Σ |h(γ(t_{i−1})) − h(γ(t_i))| from the stored values.
    pub fn recompute_variation(&self) -> f64 {
        variation(&self.values)
    }

    /// Does the variation bound hold after accounting for logged slack?
    pub fn meets_target(&self, tol: f64) -> bool {
        self.achieved_variation >= self.target - self.total_slack - tol
    }
}

pub fn variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

fn check_support_separation(
    curve: &SampledCurve,
    indices: &[usize],
    support: &[Point],
) -> Result<(), ZigzagError> {
    if support.is_empty() {
        return Ok(());
    }
    let space = curve.space();
    let dists = par::map_slice(Exec::default(), indices, |&j| space.dist_to_set(curve.point(j), support));
    if let Some((k, &d)) = dists
        .iter()
        .enumerate().find(|(_, &d)| d <= SUPPORT_SEPARATION)
    {
        return Err(ZigzagError::SupportTooClose { index: indices[k], distance: d });
    }
    Ok(())
}

fn base_constant(curve: &SampledCurve, pf: &PartialLipschitzFunction) -> Result<f64, ZigzagError> {
    if pf.is_empty() {
        Ok(0.0)
    } else {
        Ok(infer_constant(curve.space(), &pf.support, &pf.values)?)
    }
}

/// Partition indices, assigned values and the step log of one walk.
type Walk = (Vec<usize>, Vec<f64>, Vec<StepRecord>);

/// Runs the alternating rule along `path` (ordered grid indices) starting at
/// `path[0]` and ending at the last element.
fn walk(
    curve: &SampledCurve,
    path: &[usize],
    pf: &PartialLipschitzFunction,
    lipschitz: f64,
) -> Result<Walk, ZigzagError> {
    let space = curve.space();
    let envelopes: Vec<(f64, f64)> = if pf.is_empty() {
        // An empty support imposes no constraint.
        vec![(f64::NEG_INFINITY, f64::INFINITY); path.len()]
    } else {
        let field = ExtensionField::new(space, pf, lipschitz)?;
        par::map_slice(Exec::default(), path, |&j| field.envelopes(curve.point(j)))
    };

    let start_value = if pf.is_empty() { 0.0 } else { envelopes[0].0 };
    let mut indices = vec![path[0]];
    let mut values = vec![start_value];
    let mut log = Vec::new();
    if path.len() == 1 {
        return Ok((indices, values, log));
    }

    let last = path.len() - 1;
    let mut pos = 0usize;
    let mut kind = StepKind::Rise;
    while pos < last {
        let v = values[values.len() - 1];
        let here = curve.point(path[pos]);
        let admissible = |k: usize| {
            let r = lipschitz * space.dist(here, curve.point(path[k]));
            match kind {
                StepKind::Rise => v + r <= envelopes[k].1,
                StepKind::Fall => v - r >= envelopes[k].0,
            }
        };
        let next = ((pos + 1)..=last).rev().find(|&k| admissible(k));
        let (to, stalled) = match next {
            Some(k) => (k, false),
            None => (pos + 1, true),
        };
        let r = lipschitz * space.dist(here, curve.point(path[to]));
        let rule_value = match kind {
            StepKind::Rise => v + r,
            StepKind::Fall => v - r,
        };
        let (lo, hi) = envelopes[to];
        let is_final = to == last;
        let envelope = match kind {
            StepKind::Rise => hi,
            StepKind::Fall => lo,
        };
        let value = if is_final {
            rule_value.clamp(lo, hi)
        } else if stalled {
            envelope
        } else {
            rule_value
        };
        let slack = (r - (value - v).abs()).abs();
        log.push(StepRecord {
            from: path[pos],
            to: path[to],
            kind,
            value,
            envelope: envelope.is_finite().then_some(envelope),
            lipschitz,
            stalled,
            is_final,
            slack,
        });
        indices.push(path[to]);
        values.push(value);
        pos = to;
        kind = kind.flip();
    }
    Ok((indices, values, log))
}

fn assemble(
    curve: &SampledCurve,
    mut extended: PartialLipschitzFunction,
    indices: Vec<usize>,
    values: Vec<f64>,
    slack_log: Vec<StepRecord>,
    lipschitz: f64,
    target: f64,
) -> ZigzagResult {
    let space = curve.space();
    for (&j, &v) in indices.iter().zip(&values) {
        if extended.find(space, curve.point(j)).is_none() {
            extended.support.push(curve.point(j).to_vec());
            extended.values.push(v);
        }
    }
    extended.constant = lipschitz;
    let total_slack = slack_log.iter().map(|s| s.slack).sum();
    let params = indices.iter().map(|&j| curve.param(j)).collect();
    ZigzagResult {
        achieved_variation: variation(&values),
        partition: Partition { indices },
        params,
        values,
        extended,
        target,
        total_slack,
        slack_log,
    }
}

/// Zig-zag along the whole curve (injective on the grid, support away from it).
///
/// The result satisfies `achieved_variation >= L·ρ(γ(a), γ(b)) − total_slack`.
pub fn zigzag(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    lipschitz: f64,
) -> Result<ZigzagResult, ZigzagError> {
    zigzag_in(pf, curve, 0, curve.last(), lipschitz)
}

/// [`zigzag`] on the sub-curve `lo..=hi` of the grid.
pub fn zigzag_in(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    lo: usize,
    hi: usize,
    lipschitz: f64,
) -> Result<ZigzagResult, ZigzagError> {
    if lo > hi || hi > curve.last() {
        return Err(ZigzagError::BadRange(lo, hi));
    }
    let base = base_constant(curve, pf)?;
    if !(lipschitz > base) {
        return Err(ZigzagError::ConstantTooSmall { requested: lipschitz, base });
    }
    let path: Vec<usize> = (lo..=hi).collect();
    if let Some((i, j)) = first_repeat_in(curve, &path) {
        return Err(ZigzagError::NotInjective(i, j));
    }
    check_support_separation(curve, &path, &pf.support)?;
    let (indices, values, log) = walk(curve, &path, pf, lipschitz)?;
    let target = lipschitz * curve.gap(lo, hi);
    Ok(assemble(curve, pf.clone(), indices, values, log, lipschitz, target))
}

fn first_repeat_in(curve: &SampledCurve, path: &[usize]) -> Option<(usize, usize)> {
    let hits = par::map_range(Exec::default(), path.len(), |a| {
        ((a + 1)..path.len())
            .find(|&b| curve.gap(path[a], path[b]) == 0.0)
            .map(|b| (path[a], path[b]))
    });
    hits.into_iter().flatten().next()
}

/// Zig-zag over the carrier of a piecewise-injective restriction.
///
/// Walks from the first to the second point of a grid-diameter pair of
/// γ(A), so `achieved_variation >= L·diam γ(A) − total_slack`.
pub fn zigzag_on_carrier(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    carrier: &CarrierSet,
    lipschitz: f64,
) -> Result<ZigzagResult, ZigzagError> {
    let base = base_constant(curve, pf)?;
    if !(lipschitz > base) {
        return Err(ZigzagError::ConstantTooSmall { requested: lipschitz, base });
    }
    let kept = carrier.indices();
    check_support_separation(curve, &kept, &pf.support)?;
    let (a, b, diameter) = diameter_pair(curve, &kept);
    let path: Vec<usize> = kept.iter().copied().filter(|&j| j >= a && j <= b).collect();
    let (indices, values, log) = walk(curve, &path, pf, lipschitz)?;
    Ok(assemble(curve, pf.clone(), indices, values, log, lipschitz, lipschitz * diameter))
}

/// Lexicographically first pair `a <= b` of `kept` realizing the grid diameter.
fn diameter_pair(curve: &SampledCurve, kept: &[usize]) -> (usize, usize, f64) {
    let rows = par::map_range(Exec::default(), kept.len(), |x| {
        let mut best = (0.0f64, x);
        for y in (x + 1)..kept.len() {
            let d = curve.gap(kept[x], kept[y]);
            if d > best.0 {
                best = (d, y);
            }
        }
        best
    });
    let mut best = (kept[0], kept[0], 0.0);
    for (x, (d, y)) in rows.into_iter().enumerate() {
        if d > best.2 {
            best = (kept[x], kept[y], d);
        }
    }
    best
}

/// An inner segment chosen inside one gap of a partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerSegment {
    pub gap: usize,
    pub start: usize,
    pub end: usize,
    /// ρ(γ(start), γ(end)) / ρ(γ(s_{k−1}), γ(s_k)); +∞ for a zero-length gap.
    pub ratio: f64,
}

/// For each consecutive pair of `split`, the interior pair of `kept` indices
/// maximizing ρ(γ(a_k), γ(b_k)), required to reach √θ·ρ(γ(s_{k−1}), γ(s_k)).
///
/// Gaps with a zero target and no interior pair are skipped.
pub fn select_inner_segments(
    curve: &SampledCurve,
    split: &[usize],
    theta: f64,
) -> Result<Vec<InnerSegment>, ZigzagError> {
    let all: Vec<usize> = (0..curve.len()).collect();
    select_inner_segments_in(curve, &all, split, theta)
}

pub fn select_inner_segments_in(
    curve: &SampledCurve,
    kept: &[usize],
    split: &[usize],
    theta: f64,
) -> Result<Vec<InnerSegment>, ZigzagError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ZigzagError::BadTheta(theta));
    }
    let root = theta.sqrt();
    let mut out = Vec::new();
    let mut failure: Option<(usize, f64)> = None;
    for (gap, w) in split.windows(2).enumerate() {
        let (s0, s1) = (w[0], w[1]);
        let interior: Vec<usize> = kept.iter().copied().filter(|&j| j > s0 && j < s1).collect();
        let need = root * curve.gap(s0, s1);
        let (start, end, best) = best_pair(curve, &interior);
        let ratio = if curve.gap(s0, s1) > 0.0 {
            best / curve.gap(s0, s1)
        } else {
            f64::INFINITY
        };
        if interior.len() < 2 {
            // ends that coincide up to rounding need no inner segment
            if curve.gap(s0, s1) > SUPPORT_SEPARATION {
                let r = if ratio.is_finite() { ratio } else { 0.0 };
                failure = Some(failure.map_or((gap, r), |f: (usize, f64)| if r < f.1 { (gap, r) } else { f }));
            }
            continue;
        }
        if best < need {
            failure = Some(failure.map_or((gap, ratio), |f| if ratio < f.1 { (gap, ratio) } else { f }));
            continue;
        }
        out.push(InnerSegment { gap, start, end, ratio });
    }
    match failure {
        Some((gap, best_ratio)) => Err(ZigzagError::GridTooCoarse { gap, best_ratio }),
        None => Ok(out),
    }
}

/// Ordered pair maximizing the image distance; the first found on ties.
fn best_pair(curve: &SampledCurve, idx: &[usize]) -> (usize, usize, f64) {
    if idx.len() < 2 {
        return (0, 0, 0.0);
    }
    let rows = par::map_range(Exec::default(), idx.len(), |x| {
        let mut best = (-1.0f64, x + 1);
        for y in (x + 1)..idx.len() {
            let d = curve.gap(idx[x], idx[y]);
            if d > best.0 {
                best = (d, y);
            }
        }
        best
    });
    let mut best = (idx[0], idx[1], -1.0);
    for (x, (d, y)) in rows.into_iter().enumerate() {
        if y < idx.len() && d > best.2 {
            best = (idx[x], idx[y], d);
        }
    }
    best
}

/// `m` constants evenly spaced strictly inside (max{L', √θ·L}, L).
pub fn constant_ladder(base: f64, lipschitz: f64, m: usize, theta: f64) -> Result<Vec<f64>, ZigzagError> {
    if m < 1 {
        return Err(ZigzagError::EmptyLadder);
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ZigzagError::BadTheta(theta));
    }
    let low = base.max(theta.sqrt() * lipschitz);
    if !(lipschitz > low) {
        return Err(ZigzagError::EmptyLadderInterval { low, high: lipschitz });
    }
    let step = (lipschitz - low) / (m + 1) as f64;
    let ladder: Vec<f64> = (1..=m).map(|k| low + k as f64 * step).collect();
    if ladder.windows(2).any(|w| w[1] <= w[0]) || ladder[0] <= low || ladder[m - 1] >= lipschitz {
        return Err(ZigzagError::EmptyLadderInterval { low, high: lipschitz });
    }
    Ok(ladder)
}

/// Staged construction on a grid-injective curve with a finite support:
/// `achieved_variation >= θ·L·ρ(γ(a), γ(b)) − total_slack`.
pub fn staged_witness(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    lipschitz: f64,
    theta: f64,
) -> Result<ZigzagResult, ZigzagError> {
    let path: Vec<usize> = (0..curve.len()).collect();
    if let Some((i, j)) = first_repeat_in(curve, &path) {
        return Err(ZigzagError::NotInjective(i, j));
    }
    let base = base_constant(curve, pf)?;
    if !(lipschitz > base) {
        return Err(ZigzagError::ConstantTooSmall { requested: lipschitz, base });
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ZigzagError::BadTheta(theta));
    }
    let carrier = CarrierSet::full(0, curve.last());
    staged_on_carrier(pf, curve, &carrier, lipschitz, theta, base, false)
}

/// Staged construction for an arbitrary sampled curve, through its
/// piecewise-injective modification with the default equality tolerance.
pub fn staged_witness_general(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    lipschitz: f64,
    theta: f64,
) -> Result<ZigzagResult, ZigzagError> {
    staged_witness_general_in(pf, curve, 0, curve.last(), lipschitz, theta, DEFAULT_EQ_TOL)
}

/// [`staged_witness_general`] on the sub-curve `lo..=hi`.
pub fn staged_witness_general_in(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    lo: usize,
    hi: usize,
    lipschitz: f64,
    theta: f64,
    eq_tol: f64,
) -> Result<ZigzagResult, ZigzagError> {
    if lo > hi || hi > curve.last() {
        return Err(ZigzagError::BadRange(lo, hi));
    }
    let base = base_constant(curve, pf)?;
    if !(lipschitz > base) {
        return Err(ZigzagError::ConstantTooSmall { requested: lipschitz, base });
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ZigzagError::BadTheta(theta));
    }
    let carrier = piecewise_injective_modification_in(curve, lo, hi, eq_tol);
    staged_on_carrier(pf, curve, &carrier, lipschitz, theta, base, true)
}

fn staged_on_carrier(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    carrier: &CarrierSet,
    lipschitz: f64,
    theta: f64,
    base: f64,
    via_carrier: bool,
) -> Result<ZigzagResult, ZigzagError> {
    let space = curve.space();
    let kept = carrier.indices();
    let (a, b) = (kept[0], kept[kept.len() - 1]);
    let target = theta * lipschitz * curve.gap(a, b);

    // Split points: the ends plus every kept sample lying on the support.
    let mut split = vec![a];
    split.extend(
        kept.iter()
            .copied()
            .filter(|&j| j != a && j != b && pf.find(space, curve.point(j)).is_some()),
    );
    split.push(b);
    split.dedup();

    let segments = select_inner_segments_in(curve, &kept, &split, theta)?;
    let mut current = pf.clone();
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut log = Vec::new();
    if !segments.is_empty() {
        let ladder = constant_ladder(base, lipschitz, segments.len(), theta)?;
        for (seg, &rung) in segments.iter().zip(&ladder) {
            let sub = if via_carrier {
                let restricted = carrier.restrict(seg.start, seg.end);
                zigzag_on_carrier(&current, curve, &restricted, rung)?
            } else {
                zigzag_in_unchecked(&current, curve, seg.start, seg.end, rung)?
            };
            indices.extend_from_slice(&sub.partition.indices);
            values.extend_from_slice(&sub.values);
            log.extend(sub.slack_log);
            current = sub.extended;
        }
    }

    // Close the partition at both ends with values inside the final envelopes.
    if indices.first() != Some(&a) {
        let v = endpoint_value(curve, &current, a, values.first().copied(), lipschitz)?;
        current = extend_or_seed(curve, &current, a, v, lipschitz)?;
        indices.insert(0, a);
        values.insert(0, v);
    }
    if indices.last() != Some(&b) {
        let v = endpoint_value(curve, &current, b, values.last().copied(), lipschitz)?;
        current = extend_or_seed(curve, &current, b, v, lipschitz)?;
        indices.push(b);
        values.push(v);
    }
    current.constant = lipschitz;
    let total_slack = log.iter().map(|s: &StepRecord| s.slack).sum();
    let params = indices.iter().map(|&j| curve.param(j)).collect();
    Ok(ZigzagResult {
        achieved_variation: variation(&values),
        partition: Partition { indices },
        params,
        values,
        extended: current,
        target,
        total_slack,
        slack_log: log,
    })
}

fn zigzag_in_unchecked(
    pf: &PartialLipschitzFunction,
    curve: &SampledCurve,
    lo: usize,
    hi: usize,
    lipschitz: f64,
) -> Result<ZigzagResult, ZigzagError> {
    let path: Vec<usize> = (lo..=hi).collect();
    check_support_separation(curve, &path, &pf.support)?;
    let (indices, values, log) = walk(curve, &path, pf, lipschitz)?;
    Ok(assemble(curve, pf.clone(), indices, values, log, lipschitz, lipschitz * curve.gap(lo, hi)))
}

fn extend_or_seed(
    curve: &SampledCurve,
    pf: &PartialLipschitzFunction,
    j: usize,
    value: f64,
    lipschitz: f64,
) -> Result<PartialLipschitzFunction, ZigzagError> {
    if pf.is_empty() {
        return Ok(PartialLipschitzFunction {
            support: vec![curve.point(j).to_vec()],
            values: vec![value],
            constant: lipschitz,
        });
    }
    Ok(ExtensionField::new(curve.space(), pf, lipschitz)?.extend_at_point(curve.point(j), value)?)
}

/// Value for a partition end: the stored value if γ(j) is on the support,
/// otherwise the neighbour's value clamped into the envelopes.
fn endpoint_value(
    curve: &SampledCurve,
    pf: &PartialLipschitzFunction,
    j: usize,
    neighbour: Option<f64>,
    lipschitz: f64,
) -> Result<f64, ZigzagError> {
    let space = curve.space();
    if let Some(v) = pf.value_at(space, curve.point(j)) {
        return Ok(v);
    }
    if pf.is_empty() {
        return Ok(neighbour.unwrap_or(0.0));
    }
    let field = ExtensionField::new(space, pf, lipschitz)?;
    let (lo, hi) = field.envelopes(curve.point(j));
    Ok(neighbour.unwrap_or(lo).clamp(lo, hi))
}
