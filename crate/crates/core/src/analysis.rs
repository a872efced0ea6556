//! Absolute-continuity modulus of a sampled curve and searches for
//! interval families that violate it.
//!
//! For a length budget δ the modulus is the largest Σ ρ(γ(a_i), γ(b_i)) over
//! disjoint grid intervals with Σ (b_i − a_i) < δ. Splitting an interval at a
//! grid point keeps its length and, by the triangle inequality, never lowers
//! its gap, so an optimal family can always be taken to consist of single grid
//! steps. Both modes therefore select grid steps: exactly by a Pareto
//! knapsack over the grid, or greedily by gap per unit length.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, SampledCurve};
use crate::lipschitz::{ExtensionField, PartialLipschitzFunction};
use crate::metric::{MetricSpace, PointKind};
use crate::par::{self, Exec};

/// Refuse exact mode when grid steps × frontier entries would exceed this.
pub const EXACT_CELL_LIMIT: usize = 20_000_000;

/// Relative tolerance (to the parameter span) for the strict length budget.
const LENGTH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("length budget {0} must be positive and at most the parameter span")]
    BadDelta(f64),
    #[error("exact mode needs about {cells} cells, above the limit {limit}; use greedy mode")]
    ExactTooLarge { cells: usize, limit: usize },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusMode {
    Exact,
    Greedy,
}

impl FromStr for ModulusMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(ModulusMode::Exact),
            "greedy" => Ok(ModulusMode::Greedy),
            other => Err(format!("unknown mode {other:?} (expected exact or greedy)")),
        }
    }
}

/// A closed grid interval `[start, end]`, used as the open interval between.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FamilyInterval {
    pub start: usize,
    pub end: usize,
}

/// Disjoint parameter intervals with their total length and total image gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalFamily {
    /// Budget index: the family was sought with total length below 1/n.
    pub n: usize,
    pub intervals: Vec<FamilyInterval>,
    pub total_length: f64,
    pub total_gap: f64,
}

impl IntervalFamily {
    pub fn new(curve: &SampledCurve, n: usize, intervals: Vec<FamilyInterval>) -> Self {
        let total_length = intervals.iter().map(|iv| curve.param(iv.end) - curve.param(iv.start)).sum();
        let total_gap = intervals.iter().map(|iv| curve.gap(iv.start, iv.end)).sum();
        IntervalFamily { n, intervals, total_length, total_gap }
    }

    /// Sorted, nonempty, pairwise disjoint (shared endpoints allowed).
    pub fn is_disjoint(&self) -> bool {
        self.intervals.iter().all(|iv| iv.start < iv.end)
            && self.intervals.windows(2).all(|w| w[0].end <= w[1].start)
    }
}

/// A chosen set of grid steps; step `j` is the interval `[j − 1, j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub steps: Vec<usize>,
    pub gap: f64,
    pub length: f64,
}

impl Selection {
    /// Merges runs of adjacent steps whose gaps add up along the run.
    pub fn into_family(self, curve: &SampledCurve, n: usize) -> IntervalFamily {
        let mut intervals: Vec<FamilyInterval> = Vec::new();
        let mut run_sum = 0.0;
        for &j in &self.steps {
            let g = curve.gap(j - 1, j);
            if let Some(last) = intervals.last_mut() {
                if last.end == j - 1 {
                    let merged = curve.gap(last.start, j);
                    let sum = run_sum + g;
                    if merged >= sum - 1e-12 * sum.max(1.0) {
                        last.end = j;
                        run_sum = sum;
                        continue;
                    }
                }
            }
            intervals.push(FamilyInterval { start: j - 1, end: j });
            run_sum = g;
        }
        IntervalFamily::new(curve, n, intervals)
    }
}

#[derive(Clone, Copy, Debug)]
struct FrontEntry {
    length: f64,
    gap: f64,
    parent: u32,
    took: bool,
}

/// Answers "best selection with total length below δ" for many δ at once.
pub struct Selector<'a> {
    curve: &'a SampledCurve,
    mode: ModulusMode,
    tol: f64,
    fronts: Vec<Vec<FrontEntry>>,
    order: Vec<usize>,
    cells: usize,
}

impl<'a> Selector<'a> {
    pub fn new(curve: &'a SampledCurve, mode: ModulusMode, max_delta: f64) -> Result<Self, AnalysisError> {
        let span = curve.param(curve.last()) - curve.param(0);
        let tol = LENGTH_TOL * span;
        let n = curve.len() - 1;
        let mut sel = Selector { curve, mode, tol, fronts: Vec::new(), order: Vec::new(), cells: 0 };
        match mode {
            ModulusMode::Greedy => {
                let mut order: Vec<usize> = (1..=n).filter(|&j| curve.gap(j - 1, j) > 0.0).collect();
                let density = |j: usize| curve.gap(j - 1, j) / curve.step(j);
                order.sort_by(|&a, &b| density(b).total_cmp(&density(a)).then(a.cmp(&b)));
                sel.cells = order.len();
                sel.order = order;
            }
            ModulusMode::Exact => {
                let min_step = (1..=n).map(|j| curve.step(j)).fold(f64::INFINITY, f64::min);
                let max_count = ((max_delta / min_step).ceil() as usize).min(n) + 1;
                let cells = n.saturating_mul(max_count);
                if cells > EXACT_CELL_LIMIT {
                    return Err(AnalysisError::ExactTooLarge { cells, limit: EXACT_CELL_LIMIT });
                }
                sel.build_fronts(max_delta)?;
            }
        }
        Ok(sel)
    }

    fn build_fronts(&mut self, max_delta: f64) -> Result<(), AnalysisError> {
        let curve = self.curve;
        let n = curve.len() - 1;
        let limit = max_delta - self.tol;
        let merge_tol = self.tol.max(1e-15);
        let mut fronts: Vec<Vec<FrontEntry>> = Vec::with_capacity(n + 1);
        fronts.push(vec![FrontEntry { length: 0.0, gap: 0.0, parent: 0, took: false }]);
        let mut cells = 0usize;
        for j in 1..=n {
            let prev = &fronts[j - 1];
            let (w, g) = (curve.step(j), curve.gap(j - 1, j));
            let skip = prev.iter().enumerate().map(|(k, e)| FrontEntry {
                length: e.length,
                gap: e.gap,
                parent: k as u32,
                took: false,
            });
            let mut cand: Vec<FrontEntry> = skip.collect();
            if g > 0.0 {
                cand.extend(prev.iter().enumerate().filter(|(_, e)| e.length + w < limit).map(|(k, e)| FrontEntry {
                    length: e.length + w,
                    gap: e.gap + g,
                    parent: k as u32,
                    took: true,
                }));
            }
            cand.sort_by(|a, b| a.length.total_cmp(&b.length).then(b.gap.total_cmp(&a.gap)));
            // keep the Pareto frontier: gap strictly increasing with length
            let mut front: Vec<FrontEntry> = Vec::with_capacity(cand.len());
            for e in cand {
                match front.last() {
                    Some(l) if e.gap <= l.gap => continue,
                    Some(l) if e.length - l.length <= merge_tol => {
                        *front.last_mut().unwrap() = FrontEntry { length: l.length, ..e };
                    }
                    _ => front.push(e),
                }
            }
            cells += front.len();
            if cells > EXACT_CELL_LIMIT {
                return Err(AnalysisError::ExactTooLarge { cells, limit: EXACT_CELL_LIMIT });
            }
            fronts.push(front);
        }
        self.cells = cells;
        self.fronts = fronts;
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Best selection with total length strictly below `delta`.
    pub fn best(&self, delta: f64) -> Selection {
        let limit = delta - self.tol;
        match self.mode {
            ModulusMode::Greedy => {
                let mut steps = Vec::new();
                let (mut length, mut gap) = (0.0, 0.0);
                for &j in &self.order {
                    let w = self.curve.step(j);
                    if length + w < limit {
                        length += w;
                        gap += self.curve.gap(j - 1, j);
                        steps.push(j);
                    }
                }
                steps.sort_unstable();
                Selection { steps, gap, length }
            }
            ModulusMode::Exact => {
                let n = self.fronts.len() - 1;
                let front = &self.fronts[n];
                let k = front.iter().rposition(|e| e.length < limit).unwrap_or(0);
                let (length, gap) = (front[k].length, front[k].gap);
                let mut steps = Vec::new();
                let mut at = k;
                for j in (1..=n).rev() {
                    let e = self.fronts[j][at];
                    if e.took {
                        steps.push(j);
                    }
                    at = e.parent as usize;
                }
                steps.reverse();
                Selection { steps, gap, length }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusEntry {
    pub delta: f64,
    pub best_gap: f64,
    pub best_length: f64,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AcConsistent,
    ViolationFound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcReport {
    pub mode: ModulusMode,
    pub entries: Vec<ModulusEntry>,
    pub verdict: Verdict,
    /// Frontier cells (exact) or candidate steps (greedy) examined.
    pub budget_used: usize,
}

/// Ratio of the smallest-δ gap to the largest-δ gap at or above which the
/// modulus is read as not vanishing.
pub const VIOLATION_RATIO: f64 = 0.5;

pub fn ac_modulus(curve: &SampledCurve, deltas: &[f64], mode: ModulusMode) -> Result<AcReport, AnalysisError> {
    let span = curve.param(curve.last()) - curve.param(0);
    for &d in deltas {
        if !(d > 0.0 && d <= span * (1.0 + 1e-12)) {
            return Err(AnalysisError::BadDelta(d));
        }
    }
    let max_delta = deltas.iter().copied().fold(0.0, f64::max);
    let selector = Selector::new(curve, mode, max_delta)?;
    let entries: Vec<ModulusEntry> = deltas
        .iter()
        .map(|&delta| {
            let s = selector.best(delta);
            let fam = s.clone().into_family(curve, 0);
            ModulusEntry { delta, best_gap: s.gap, best_length: s.length, intervals: fam.intervals.len() }
        })
        .collect();
    let verdict = modulus_verdict(&entries);
    Ok(AcReport { mode, entries, verdict, budget_used: selector.cells() })
}

/// A violation is read off when the best gap at the smallest budget keeps at
/// least [`VIOLATION_RATIO`] of the gap at the largest budget.
fn modulus_verdict(entries: &[ModulusEntry]) -> Verdict {
    let smallest = entries.iter().min_by(|a, b| a.delta.total_cmp(&b.delta));
    let largest = entries.iter().max_by(|a, b| a.delta.total_cmp(&b.delta));
    match (smallest, largest) {
        (Some(s), Some(l)) if s.delta < l.delta && l.best_gap > 0.0 && s.best_gap >= VIOLATION_RATIO * l.best_gap => {
            Verdict::ViolationFound
        }
        _ => Verdict::AcConsistent,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FamilyOutcome {
    Found { family: IntervalFamily },
    /// No family beat ε at this budget. `capped` marks budgets below three
    /// grid steps, where the grid cannot resolve the question.
    Refused { best_gap: f64, capped: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySearch {
    pub n: usize,
    pub budget: f64,
    #[serde(flatten)]
    pub outcome: FamilyOutcome,
}

impl FamilySearch {
    pub fn family(&self) -> Option<&IntervalFamily> {
        match &self.outcome {
            FamilyOutcome::Found { family } => Some(family),
            FamilyOutcome::Refused { .. } => None,
        }
    }
}

/// Largest n whose budget 1/n still spans three grid steps.
pub fn family_cap(curve: &SampledCurve) -> usize {
    let min_step = (1..curve.len()).map(|j| curve.step(j)).fold(f64::INFINITY, f64::min);
    (1.0 / (3.0 * min_step)).floor() as usize
}

/// For each n, a family with total length < 1/n and total gap > ε, or a refusal.
pub fn find_violating_families(
    curve: &SampledCurve,
    epsilon: f64,
    n_values: &[usize],
    mode: ModulusMode,
) -> Result<Vec<FamilySearch>, AnalysisError> {
    if !(epsilon > 0.0) {
        return Err(AnalysisError::BadEpsilon(epsilon));
    }
    let span = curve.param(curve.last()) - curve.param(0);
    let cap = family_cap(curve);
    let max_budget = n_values
        .iter()
        .filter(|&&n| n >= 1)
        .map(|&n| (1.0 / n as f64).min(span))
        .fold(0.0, f64::max);
    if max_budget == 0.0 {
        return Ok(Vec::new());
    }
    let selector = Selector::new(curve, mode, max_budget)?;
    Ok(n_values
        .iter()
        .filter(|&&n| n >= 1)
        .map(|&n| {
            let budget = 1.0 / n as f64;
            let s = selector.best(budget.min(span));
            let outcome = if n > cap {
                FamilyOutcome::Refused { best_gap: s.gap, capped: true }
            } else if s.gap > epsilon {
                FamilyOutcome::Found { family: s.into_family(curve, n) }
            } else {
                FamilyOutcome::Refused { best_gap: s.gap, capped: false }
            };
            FamilySearch { n, budget, outcome }
        })
        .collect())
}

/// A Lipschitz function on the space given by its support; composed with
/// the curve through its upper envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeFunction {
    pub function: PartialLipschitzFunction,
    pub lipschitz: f64,
}

#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub trials: usize,
    pub seed: u64,
    pub deltas: Vec<f64>,
    pub mode: ModulusMode,
    /// Functions evaluated first, as trials 0, 1, ...
    pub injected: Vec<ProbeFunction>,
    /// Flag any trial whose best gap at some δ exceeds this.
    pub flag_above: Option<f64>,
    pub exec: Exec,
}

impl ProbeConfig {
    pub fn new(trials: usize, seed: u64, deltas: Vec<f64>) -> Self {
        ProbeConfig {
            trials,
            seed,
            deltas,
            mode: ModulusMode::Greedy,
            injected: Vec::new(),
            flag_above: None,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrial {
    pub trial: usize,
    pub injected: bool,
    pub lipschitz: f64,
    /// Best composed gap per δ, in the order of the configured deltas.
    pub gaps: Vec<f64>,
    /// max over δ of gap / (L_h · K_γ · δ), with K_γ the curve's grid constant.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub deltas: Vec<f64>,
    pub curve_lipschitz: f64,
    pub trials: Vec<ProbeTrial>,
    pub max_gap: Vec<f64>,
    /// (trial, delta, gap) triples above the flag threshold.
    pub flagged: Vec<(usize, f64, f64)>,
}

pub fn composition_probe(
    curve: &SampledCurve,
    trials: usize,
    seed: u64,
    deltas: &[f64],
) -> Result<ProbeReport, AnalysisError> {
    composition_probe_with(curve, &ProbeConfig::new(trials, seed, deltas.to_vec()))
}

/// Composes random Lipschitz functions with the curve and measures the
/// modulus of each real-valued composition.
pub fn composition_probe_with(curve: &SampledCurve, config: &ProbeConfig) -> Result<ProbeReport, AnalysisError> {
    let space = curve.space();
    let mut functions: Vec<(bool, ProbeFunction)> = config.injected.iter().cloned().map(|f| (true, f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.trials {
        functions.push((false, random_lipschitz(curve, &mut rng)));
    }
    let curve_lipschitz = curve.grid_lipschitz();

    let results = par::map_slice(config.exec, &functions, |(injected, f)| -> Result<(bool, f64, Vec<f64>), AnalysisError> {
        let field = ExtensionField::new(space, &f.function, f.lipschitz).map_err(|_| AnalysisError::BadEpsilon(f.lipschitz))?;
        let composed: Vec<Vec<f64>> = curve.points().iter().map(|p| vec![field.upper(p)]).collect();
        let real = SampledCurve::new(MetricSpace::euclidean(1), curve.params().to_vec(), composed)?;
        let report = ac_modulus(&real, &config.deltas, config.mode)?;
        Ok((*injected, f.lipschitz, report.entries.iter().map(|e| e.best_gap).collect()))
    });

    let mut trials = Vec::with_capacity(results.len());
    let mut max_gap = vec![0.0f64; config.deltas.len()];
    let mut flagged = Vec::new();
    for (trial, r) in results.into_iter().enumerate() {
        let (injected, lipschitz, gaps) = r?;
        let mut worst_ratio = 0.0f64;
        for (k, (&g, &d)) in gaps.iter().zip(&config.deltas).enumerate() {
            max_gap[k] = max_gap[k].max(g);
            let bound = lipschitz * curve_lipschitz * d;
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(g / bound);
            } else if g > 0.0 {
                worst_ratio = f64::INFINITY;
            }
            if config.flag_above.is_some_and(|t| g > t) {
                flagged.push((trial, d, g));
            }
        }
        trials.push(ProbeTrial { trial, injected, lipschitz, gaps, worst_ratio });
    }
    Ok(ProbeReport { deltas: config.deltas.clone(), curve_lipschitz, trials, max_gap, flagged })
}

/// Random finite support with values chosen inside the running envelopes,
/// so the function is L-Lipschitz by construction.
fn random_lipschitz(curve: &SampledCurve, rng: &mut ChaCha8Rng) -> ProbeFunction {
    let space = curve.space();
    let lipschitz = rng.random_range(0.5..=2.0);
    let size = rng.random_range(1..=8usize);
    let bbox = bounding_box(curve);
    let mut f = PartialLipschitzFunction::empty(lipschitz);
    for _ in 0..size {
        let p = match (&bbox, space.point_kind()) {
            (Some((lo, hi)), PointKind::Vector(_)) if rng.random_bool(0.5) => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| if b > a { rng.random_range(*a..=*b) } else { *a })
                .collect(),
            _ => curve.point(rng.random_range(0..curve.len())).to_vec(),
        };
        if f.find(space, &p).is_some() {
            continue;
        }
        let v = if f.is_empty() {
            rng.random_range(-1.0..=1.0)
        } else {
            let field = ExtensionField::new(space, &f, lipschitz).expect("support built within envelopes");
            let (lo, hi) = field.envelopes(&p);
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        };
        f.support.push(p);
        f.values.push(v);
    }
    ProbeFunction { function: f, lipschitz }
}

/// Coordinate box of the curve, widened by one unit on each side.
fn bounding_box(curve: &SampledCurve) -> Option<(Vec<f64>, Vec<f64>)> {
    let dim = curve.point(0).len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in curve.points() {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k] - 1.0);
            hi[k] = hi[k].max(p[k] + 1.0);
        }
    }
    Some((lo, hi))
}
