//! One global 2-Lipschitz function whose composition with the curve keeps
//! variation above θ·ε on interval families of vanishing total length.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{FamilyInterval, IntervalFamily};
use crate::curve::SampledCurve;
use crate::lipschitz::{lipschitz_violation, PartialLipschitzFunction, VALUE_TOL};
use crate::modification::DEFAULT_EQ_TOL;
use crate::par::Exec;
use crate::zigzag::{staged_witness_general_in, variation, ZigzagError};

pub const CERTIFICATE_VERSION: u32 = 1;

/// Constant of the global witness; every ladder rung stays below it.
pub const WITNESS_CONSTANT: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("no interval families given")]
    NoFamilies,
    #[error("theta {0} is outside (0, 1)")]
    BadTheta(f64),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("family {n} has interval {start}..{end} outside the curve or empty")]
    BadInterval { n: usize, start: usize, end: usize },
    #[error("every interval has zero image distance")]
    AllDegenerate,
    #[error("interval {start}..{end}: {source}")]
    Staged { start: usize, end: usize, source: ZigzagError },
    #[error("family {n} reaches variation {variation_sum}, not above {threshold}")]
    Insufficient { n: usize, variation_sum: f64, threshold: f64 },
}

/// `L_i = 2 − 1/i` for `i = 1..=count`.
pub fn harmonic_ladder(count: usize) -> Vec<f64> {
    (1..=count).map(|i| WITNESS_CONSTANT - 1.0 / i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateInterval {
    pub start: usize,
    pub end: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// 1-based position in the global numbering, indexing `ladder`.
    pub rung: usize,
    /// Grid indices of the partition; values are read from the witness.
    pub partition: Vec<usize>,
    pub variation: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFamily {
    pub n: usize,
    pub intervals: Vec<CertificateInterval>,
    pub total_length: f64,
    pub total_gap: f64,
    pub variation_sum: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedInterval {
    pub n: usize,
    pub start: usize,
    pub end: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessCertificate {
    pub version: u32,
    pub epsilon: f64,
    pub theta: f64,
    pub ladder: Vec<f64>,
    pub witness: PartialLipschitzFunction,
    pub families: Vec<CertificateFamily>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedInterval>,
}

struct Built {
    rung: usize,
    partition: Vec<usize>,
    variation: f64,
    slack: f64,
}

/// Numbers the distinct intervals of all families in order of appearance
/// and witnesses each in turn against the support accumulated so far.
pub fn build_global_witness(
    curve: &SampledCurve,
    families: &[IntervalFamily],
    theta: f64,
    epsilon: f64,
) -> Result<WitnessCertificate, CertificateError> {
    if families.is_empty() {
        return Err(CertificateError::NoFamilies);
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(CertificateError::BadTheta(theta));
    }
    if !(epsilon > 0.0) {
        return Err(CertificateError::BadEpsilon(epsilon));
    }
    let mut order: Vec<FamilyInterval> = Vec::new();
    let mut skipped = Vec::new();
    let mut seen: HashMap<FamilyInterval, bool> = HashMap::new();
    for fam in families {
        for iv in &fam.intervals {
            if iv.start >= iv.end || iv.end > curve.last() {
                return Err(CertificateError::BadInterval { n: fam.n, start: iv.start, end: iv.end });
            }
            if seen.contains_key(iv) {
                continue;
            }
            let degenerate = curve.gap(iv.start, iv.end) == 0.0;
            seen.insert(*iv, degenerate);
            if degenerate {
                skipped.push(SkippedInterval {
                    n: fam.n,
                    start: iv.start,
                    end: iv.end,
                    reason: "zero image distance".into(),
                });
            } else {
                order.push(*iv);
            }
        }
    }
    if order.is_empty() {
        return Err(CertificateError::AllDegenerate);
    }
    let ladder = harmonic_ladder(order.len());

    let mut witness = PartialLipschitzFunction::empty(ladder[0]);
    let mut built: HashMap<FamilyInterval, Built> = HashMap::new();
    for (k, iv) in order.iter().enumerate() {
        let rung = k + 1;
        if k == 0 {
            let rho = curve.gap(iv.start, iv.end);
            witness.support = vec![curve.point(iv.start).to_vec(), curve.point(iv.end).to_vec()];
            witness.values = vec![0.0, rho];
            built.insert(*iv, Built { rung, partition: vec![iv.start, iv.end], variation: rho, slack: 0.0 });
            continue;
        }
        let res = match staged_witness_general_in(&witness, curve, iv.start, iv.end, ladder[k], theta, DEFAULT_EQ_TOL) {
            Ok(res) => res,
            Err(ZigzagError::GridTooCoarse { best_ratio, .. }) => {
                skipped.push(SkippedInterval {
                    n: first_family(families, iv),
                    start: iv.start,
                    end: iv.end,
                    reason: format!("grid too coarse for the inner segment (best ratio {best_ratio})"),
                });
                continue;
            }
            Err(source) => return Err(CertificateError::Staged { start: iv.start, end: iv.end, source }),
        };
        witness = res.extended;
        built.insert(
            *iv,
            Built {
                rung,
                variation: variation(&res.values),
                partition: res.partition.indices,
                slack: res.total_slack,
            },
        );
    }
    witness.constant = WITNESS_CONSTANT;

    let families: Vec<CertificateFamily> = families
        .iter()
        .map(|fam| {
            let intervals: Vec<CertificateInterval> = fam
                .intervals
                .iter()
                .filter_map(|iv| {
                    built.get(iv).map(|b| CertificateInterval {
                        start: iv.start,
                        end: iv.end,
                        t_start: curve.param(iv.start),
                        t_end: curve.param(iv.end),
                        rung: b.rung,
                        partition: b.partition.clone(),
                        variation: b.variation,
                        slack: b.slack,
                    })
                })
                .collect();
            CertificateFamily {
                n: fam.n,
                total_length: fam.total_length,
                total_gap: fam.total_gap,
                variation_sum: intervals.iter().map(|i| i.variation).sum(),
                slack: intervals.iter().map(|i| i.slack).sum(),
                intervals,
            }
        })
        .collect();
    for fam in &families {
        let threshold = theta * epsilon - fam.slack;
        if !(fam.variation_sum > threshold) {
            return Err(CertificateError::Insufficient { n: fam.n, variation_sum: fam.variation_sum, threshold });
        }
    }
    Ok(WitnessCertificate { version: CERTIFICATE_VERSION, epsilon, theta, ladder, witness, families, skipped })
}

fn first_family(families: &[IntervalFamily], iv: &FamilyInterval) -> usize {
    families.iter().find(|f| f.intervals.contains(iv)).map_or(0, |f| f.n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum CertificateFailure {
    UnsupportedVersion { found: u32 },
    BadParameters { epsilon: f64, theta: f64 },
    BadLadder,
    BadWitness { reason: String },
    /// Support entries `i` and `j` break the 2-Lipschitz bound by `excess`.
    NotLipschitz { i: usize, j: usize, excess: f64 },
    IntervalOutOfRange { n: usize, interval: usize },
    IntervalsOverlap { n: usize, interval: usize },
    ParamMismatch { n: usize, interval: usize },
    LengthBudget { n: usize, total_length: f64, budget: f64 },
    BadPartition { n: usize, interval: usize },
    MissingValue { n: usize, interval: usize, index: usize },
    VariationMismatch { n: usize, interval: usize, declared: f64, recomputed: f64 },
    SlackMismatch { n: usize, declared: f64, recomputed: f64 },
    InsufficientVariation { n: usize, variation_sum: f64, threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    pub passed: bool,
    pub failures: Vec<CertificateFailure>,
}

/// Tolerance for recomputed sums against declared ones.
const SUM_TOL: f64 = 1e-9;

/// Rechecks a certificate from the stored witness values alone.
pub fn verify_certificate(curve: &SampledCurve, cert: &WitnessCertificate) -> CertificateVerdict {
    verify_certificate_with(curve, cert, Exec::default())
}

pub fn verify_certificate_with(curve: &SampledCurve, cert: &WitnessCertificate, exec: Exec) -> CertificateVerdict {
    use CertificateFailure as F;
    let mut failures = Vec::new();
    if cert.version != CERTIFICATE_VERSION {
        failures.push(F::UnsupportedVersion { found: cert.version });
    }
    if !(cert.epsilon > 0.0 && cert.theta > 0.0 && cert.theta < 1.0) {
        failures.push(F::BadParameters { epsilon: cert.epsilon, theta: cert.theta });
    }
    let ladder_ok = cert.ladder.first().is_some_and(|&l| l > 0.0)
        && cert.ladder.windows(2).all(|w| w[0] < w[1])
        && cert.ladder.iter().all(|&l| l <= WITNESS_CONSTANT);
    if !ladder_ok {
        failures.push(F::BadLadder);
    }

    let space = curve.space();
    let w = &cert.witness;
    let witness_ok = if w.support.len() != w.values.len() {
        failures.push(F::BadWitness { reason: "support and values differ in length".into() });
        false
    } else if let Some(p) = w.support.iter().find(|p| space.validate_point(p).is_err()) {
        failures.push(F::BadWitness { reason: format!("invalid support point {p:?}") });
        false
    } else {
        true
    };
    if witness_ok {
        if let Some(v) = lipschitz_violation(space, &w.support, &w.values, WITNESS_CONSTANT, VALUE_TOL, exec) {
            failures.push(F::NotLipschitz { i: v.i, j: v.j, excess: v.excess });
        }
    }

    let value_of = |j: usize| -> Option<f64> {
        if !witness_ok {
            return None;
        }
        w.value_at(space, curve.point(j))
    };
    for fam in &cert.families {
        let n = fam.n;
        let mut structure_ok = true;
        for (k, iv) in fam.intervals.iter().enumerate() {
            if iv.start >= iv.end || iv.end > curve.last() {
                failures.push(F::IntervalOutOfRange { n, interval: k });
                structure_ok = false;
                continue;
            }
            if curve.param(iv.start) != iv.t_start || curve.param(iv.end) != iv.t_end {
                failures.push(F::ParamMismatch { n, interval: k });
            }
            if k > 0 && fam.intervals[k - 1].end > iv.start {
                failures.push(F::IntervalsOverlap { n, interval: k });
            }
        }
        if !structure_ok {
            continue;
        }
        let total_length: f64 = fam.intervals.iter().map(|iv| curve.param(iv.end) - curve.param(iv.start)).sum();
        let budget = if n == 0 { f64::INFINITY } else { 1.0 / n as f64 };
        if !(total_length < budget) {
            failures.push(F::LengthBudget { n, total_length, budget });
        }

        let mut sum = 0.0;
        for (k, iv) in fam.intervals.iter().enumerate() {
            let p = &iv.partition;
            let inside = p.first() == Some(&iv.start)
                && p.last() == Some(&iv.end)
                && p.windows(2).all(|w| w[0] < w[1]);
            if !inside {
                failures.push(F::BadPartition { n, interval: k });
                continue;
            }
            let mut values = Vec::with_capacity(p.len());
            for &j in p {
                match value_of(j) {
                    Some(v) => values.push(v),
                    None => failures.push(F::MissingValue { n, interval: k, index: j }),
                }
            }
            if values.len() != p.len() {
                continue;
            }
            let recomputed = variation(&values);
            if (recomputed - iv.variation).abs() > SUM_TOL * recomputed.max(1.0) {
                failures.push(F::VariationMismatch { n, interval: k, declared: iv.variation, recomputed });
            }
            sum += recomputed;
        }
        let slack: f64 = fam.intervals.iter().map(|iv| iv.slack).sum();
        if (slack - fam.slack).abs() > SUM_TOL || fam.slack < 0.0 || fam.intervals.iter().any(|iv| iv.slack < 0.0) {
            failures.push(F::SlackMismatch { n, declared: fam.slack, recomputed: slack });
        }
        let threshold = cert.theta * cert.epsilon - fam.slack;
        if !(sum > threshold) {
            failures.push(F::InsufficientVariation { n, variation_sum: sum, threshold });
        }
    }
    CertificateVerdict { passed: failures.is_empty(), failures }
}
