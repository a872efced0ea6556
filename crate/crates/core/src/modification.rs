//! Piecewise-injective modification by repeated longest-loop removal.
//!
//! A carrier is a finite union of closed grid-index ranges. Removing a loop
//! `[c, d]` (both ends in one range, ρ(γ(c), γ(d)) <= eq_tol) deletes the open
//! interval `(c, d)`: the range splits into `[.., c]` and `[d, ..]`, even when
//! `d = c + 1`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::curve::SampledCurve;
use crate::par::{self, Exec};

pub const DEFAULT_EQ_TOL: f64 = 1e-9;

/// Closed range of grid indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierSet {
    pub ranges: Vec<IndexRange>,
    /// Removed open intervals, in removal order.
    pub holes: Vec<IndexRange>,
}

impl CarrierSet {
    pub fn full(lo: usize, hi: usize) -> Self {
        CarrierSet { ranges: vec![IndexRange { start: lo, end: hi }], holes: Vec::new() }
    }

    /// Every kept grid index, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.ranges.iter().flat_map(|r| r.start..=r.end).collect()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.ranges.iter().any(|r| r.start <= j && j <= r.end)
    }

    pub fn first(&self) -> usize {
        self.ranges[0].start
    }

    pub fn last(&self) -> usize {
        self.ranges[self.ranges.len() - 1].end
    }

    /// The carrier intersected with `[lo, hi]`, keeping holes fully inside.
    pub fn restrict(&self, lo: usize, hi: usize) -> CarrierSet {
        let ranges = self
            .ranges
            .iter()
            .filter(|r| r.end >= lo && r.start <= hi)
            .map(|r| IndexRange { start: r.start.max(lo), end: r.end.min(hi) })
            .collect();
        let holes = self.holes.iter().copied().filter(|h| h.start >= lo && h.end <= hi).collect();
        CarrierSet { ranges, holes }
    }

    /// Whether `(c, d)` separates two consecutive ranges.
    pub fn is_hole_pair(&self, c: usize, d: usize) -> bool {
        self.ranges.windows(2).any(|w| w[0].end == c && w[1].start == d)
    }

    fn from_mask(lo: usize, kept: &[bool], hole_starts: &BTreeSet<usize>, holes: Vec<IndexRange>) -> Self {
        let idx: Vec<usize> = (0..kept.len()).filter(|&k| kept[k]).map(|k| k + lo).collect();
        let mut ranges: Vec<IndexRange> = Vec::new();
        for &j in &idx {
            match ranges.last_mut() {
                Some(r) if r.end + 1 == j && !hole_starts.contains(&r.end) => r.end = j,
                _ => ranges.push(IndexRange { start: j, end: j }),
            }
        }
        CarrierSet { ranges, holes }
    }
}

/// Piecewise-injective modification of the whole curve.
pub fn piecewise_injective_modification(curve: &SampledCurve, eq_tol: f64) -> CarrierSet {
    piecewise_injective_modification_in(curve, 0, curve.last(), eq_tol)
}

/// Modification of the sub-curve on grid indices `lo..=hi`.
pub fn piecewise_injective_modification_in(curve: &SampledCurve, lo: usize, hi: usize, eq_tol: f64) -> CarrierSet {
    modify_carrier(curve, &CarrierSet::full(lo, hi), eq_tol)
}

/// Continues loop removal from an existing carrier. A carrier that is
/// already piecewise injective comes back unchanged.
pub fn modify_carrier(curve: &SampledCurve, start: &CarrierSet, eq_tol: f64) -> CarrierSet {
    let lo = start.first();
    let hi = start.last();
    let mut kept: Vec<bool> = (lo..=hi).map(|j| start.contains(j)).collect();
    let mut hole_starts: BTreeSet<usize> = start.holes.iter().map(|h| h.start).collect();
    // Range boundaries without a recorded hole still block loops.
    for w in start.ranges.windows(2) {
        hole_starts.insert(w[0].end);
    }
    let mut holes = start.holes.clone();

    let span = (curve.param(hi) - curve.param(lo)).max(f64::MIN_POSITIVE);
    let idx = start.indices();
    let per_c = par::map_range(Exec::default(), idx.len(), |x| {
        let c = idx[x];
        idx[x + 1..]
            .iter()
            .filter(|&&d| curve.gap(c, d) <= eq_tol)
            .map(|&d| {
                // Lengths are compared on a 1e-12 relative lattice so that
                // rounding noise does not break leftmost-on-ties.
                let key = ((curve.param(d) - curve.param(c)) / span * 1e12).round() as i64;
                (key, c, d)
            })
            .collect::<Vec<_>>()
    });
    let mut loops: Vec<(i64, usize, usize)> = per_c.into_iter().flatten().collect();
    loops.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // Validity of a pair only ever goes from true to false as holes are cut,
    // so one pass in (longest, leftmost) order reproduces the greedy choice.
    for (_, c, d) in loops {
        if !kept[c - lo] || !kept[d - lo] {
            continue;
        }
        if hole_starts.range(c..d).next().is_some() {
            continue;
        }
        for k in (c + 1)..d {
            kept[k - lo] = false;
        }
        hole_starts.insert(c);
        holes.push(IndexRange { start: c, end: d });
    }
    CarrierSet::from_mask(lo, &kept, &hole_starts, holes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum PiecewiseViolation {
    /// (a) ranges unsorted, overlapping, empty or outside the grid.
    Structure { detail: String },
    /// A recorded hole whose endpoint images differ by more than eq_tol.
    HoleEndpoints { start: usize, end: usize, distance: f64 },
    /// (b) two kept points with equal images that are not the ends of a hole.
    RepeatedValue { first: usize, second: usize, distance: f64 },
    /// (c) consecutive kept points too far apart for a connected image.
    ImageGap { from: usize, to: usize, distance: f64, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseReport {
    pub connectivity_bound: f64,
    pub violations: Vec<PiecewiseViolation>,
}

impl PiecewiseReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the three piecewise-injective properties on the sampled restriction.
///
/// Connectedness of γ([c,d] ∩ A) is checked at sample resolution: consecutive
/// kept points must have image gaps of at most 2ω. Consecutive kept points in
/// any window are consecutive in the whole carrier, so checking the whole
/// carrier once covers every window.
pub fn verify_piecewise_injective(curve: &SampledCurve, carrier: &CarrierSet, eq_tol: f64) -> PiecewiseReport {
    let bound = 2.0 * curve.oscillation() + eq_tol;
    let mut violations = Vec::new();

    if carrier.ranges.is_empty() {
        violations.push(PiecewiseViolation::Structure { detail: "carrier is empty".into() });
        return PiecewiseReport { connectivity_bound: bound, violations };
    }
    for r in &carrier.ranges {
        if r.start > r.end || r.end > curve.last() {
            violations.push(PiecewiseViolation::Structure { detail: format!("bad range {}..={}", r.start, r.end) });
        }
    }
    for w in carrier.ranges.windows(2) {
        if w[1].start <= w[0].end {
            violations.push(PiecewiseViolation::Structure {
                detail: format!("ranges {}..={} and {}..={} overlap or are unsorted", w[0].start, w[0].end, w[1].start, w[1].end),
            });
        }
    }
    if !violations.is_empty() {
        return PiecewiseReport { connectivity_bound: bound, violations };
    }
    for h in &carrier.holes {
        let distance = curve.gap(h.start, h.end);
        if distance > eq_tol {
            violations.push(PiecewiseViolation::HoleEndpoints { start: h.start, end: h.end, distance });
        }
    }

    let idx = carrier.indices();
    let repeats = par::map_range(Exec::default(), idx.len(), |x| {
        idx[x + 1..]
            .iter()
            .filter_map(|&d| {
                let distance = curve.gap(idx[x], d);
                (distance <= eq_tol && !carrier.is_hole_pair(idx[x], d))
                    .then_some(PiecewiseViolation::RepeatedValue { first: idx[x], second: d, distance })
            })
            .collect::<Vec<_>>()
    });
    violations.extend(repeats.into_iter().flatten());

    for w in idx.windows(2) {
        let distance = curve.gap(w[0], w[1]);
        if distance > bound {
            violations.push(PiecewiseViolation::ImageGap { from: w[0], to: w[1], distance, bound });
        }
    }
    PiecewiseReport { connectivity_bound: bound, violations }
}

/// Largest number of kept points sharing one image (within eq_tol).
pub fn max_multiplicity(curve: &SampledCurve, carrier: &CarrierSet, eq_tol: f64) -> usize {
    let idx = carrier.indices();
    par::map_range(Exec::default(), idx.len(), |x| {
        idx.iter().filter(|&&d| curve.gap(idx[x], d) <= eq_tol).count()
    })
    .into_iter()
    .max()
    .unwrap_or(0)
}

/// Carrier with parameter values, as written by `accrit modify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierDocument {
    pub ranges: Vec<ParamRange>,
    pub holes: Vec<ParamRange>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub start: usize,
    pub end: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl CarrierDocument {
    pub fn new(curve: &SampledCurve, carrier: &CarrierSet) -> Self {
        let conv = |r: &IndexRange| ParamRange {
            start: r.start,
            end: r.end,
            t_start: curve.param(r.start),
            t_end: curve.param(r.end),
        };
        CarrierDocument {
            ranges: carrier.ranges.iter().map(conv).collect(),
            holes: carrier.holes.iter().map(conv).collect(),
        }
    }

    pub fn carrier(&self) -> CarrierSet {
        let conv = |r: &ParamRange| IndexRange { start: r.start, end: r.end };
        CarrierSet {
            ranges: self.ranges.iter().map(conv).collect(),
            holes: self.holes.iter().map(conv).collect(),
        }
    }
}
