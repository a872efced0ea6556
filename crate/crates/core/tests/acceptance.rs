//! Acceptance criteria. Each test prints one line:
//! `criterion N: PASS|FAIL  <name>  <measured values>`.

mod common;

use std::time::{Duration, Instant};

use accrit::analysis::{
    composition_probe_with, find_violating_families, FamilyOutcome, IntervalFamily, ModulusMode, ProbeConfig,
};
use accrit::certificate::{build_global_witness, verify_certificate, CertificateFailure, WitnessCertificate};
use accrit::curve::SampledCurve;
use accrit::generate::{generate_curve, CurveKind};
use accrit::lipschitz::{infer_constant, lipschitz_violation, ExtensionField, PartialLipschitzFunction};
use accrit::metric::{MetricSpace, Point};
use accrit::modification::{
    max_multiplicity, modify_carrier, piecewise_injective_modification, verify_piecewise_injective, IndexRange,
};
use accrit::par::Exec;
use accrit::zigzag::{staged_witness_general, zigzag};
use common::{max_feasible, random_table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SLACK_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-9;
const EQ_TOL: f64 = 1e-9;
const THETA: f64 = 0.9;

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    println!("criterion {id}: {}  {name}  {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {id} failed: {detail}");
}

fn random_point(space_id: usize, rng: &mut ChaCha8Rng) -> Point {
    match space_id {
        0 => vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        1 => vec![rng.random_range(-3.0..3.0)],
        2 => vec![rng.random_range(0..6) as f64],
        3 => vec![rng.random_range(0..12) as f64],
        _ => vec![rng.random_range(0..8) as f64],
    }
}

fn built_in_spaces(rng: &mut ChaCha8Rng) -> Vec<(&'static str, MetricSpace)> {
    let edges = vec![(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (3, 4, 1.5), (4, 5, 1.0), (0, 5, 4.0), (1, 4, 2.5)];
    vec![
        ("euclidean(2)", MetricSpace::euclidean(2)),
        ("snowflake(euclidean(1), 0.5)", MetricSpace::snowflake(MetricSpace::euclidean(1), 0.5).unwrap()),
        ("graph(6)", MetricSpace::graph(6, edges).unwrap()),
        ("discrete", MetricSpace::discrete()),
        ("table(8)", MetricSpace::table(random_table(rng, 8)).unwrap()),
    ]
}

/// Distinct support points with values of a known Lipschitz constant.
fn random_support(space: &MetricSpace, id: usize, rng: &mut ChaCha8Rng) -> PartialLipschitzFunction {
    let cardinality = match id {
        2 => 6,
        4 => 8,
        _ => usize::MAX,
    };
    let k = rng.random_range(1..=10).min(cardinality);
    let mut support: Vec<Point> = Vec::new();
    while support.len() < k {
        let p = random_point(id, rng);
        if support.iter().all(|s| space.dist(s, &p) > 0.0) {
            support.push(p);
        }
    }
    let values: Vec<f64> = support.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
    PartialLipschitzFunction::from_data(space, support, values).unwrap()
}

#[test]
fn criterion_1_envelope_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spaces = built_in_spaces(&mut rng);
    let (mut restriction, mut lipschitz, mut gap, mut monotone) = (0usize, 0usize, 0usize, 0usize);
    let mut worst_gap_slack = f64::INFINITY;
    for (id, (_, space)) in spaces.iter().enumerate() {
        for _ in 0..100 {
            let f = random_support(space, id, &mut rng);
            let base = f.constant;
            let ls = [base + 0.5, base * 1.5 + 1.0, base * 3.0 + 2.0];
            let fields: Vec<ExtensionField> = ls.iter().map(|&l| ExtensionField::new(space, &f, l).unwrap()).collect();
            for (s, &h) in f.support.iter().zip(&f.values) {
                if fields.iter().any(|fl| fl.upper(s) != h || fl.lower(s) != h) {
                    restriction += 1;
                }
            }
            let queries: Vec<Point> = (0..100).map(|_| random_point(id, &mut rng)).collect();
            let env: Vec<Vec<(f64, f64)>> =
                fields.iter().map(|fl| fl.envelopes_at(&queries, Exec::default())).collect();
            for (q, x) in queries.iter().enumerate() {
                let s = fields[0].gap_slack(x);
                worst_gap_slack = worst_gap_slack.min(s);
                if s < -SLACK_TOL {
                    gap += 1;
                }
                let ok = (1..3).all(|k| {
                    env[k][q].1 >= env[k - 1][q].1 - SLACK_TOL && env[k][q].0 <= env[k - 1][q].0 + SLACK_TOL
                });
                if !ok {
                    monotone += 1;
                }
            }
            for (fl, e) in fields.iter().zip(&env) {
                let mut pts = f.support.clone();
                let mut vals = f.values.clone();
                for (x, &(lo, hi)) in queries.iter().zip(e) {
                    pts.push(x.clone());
                    vals.push(hi);
                    pts.push(x.clone());
                    vals.push(lo);
                }
                // upper and lower each L-Lipschitz; mixing them is not claimed
                let up: Vec<usize> = (0..pts.len()).filter(|&i| i < f.len() || (i - f.len()).is_multiple_of(2)).collect();
                let down: Vec<usize> = (0..pts.len()).filter(|&i| i < f.len() || (i - f.len()) % 2 == 1).collect();
                for sel in [up, down] {
                    let p: Vec<Point> = sel.iter().map(|&i| pts[i].clone()).collect();
                    let v: Vec<f64> = sel.iter().map(|&i| vals[i]).collect();
                    if lipschitz_violation(space, &p, &v, fl.lipschitz(), SLACK_TOL, Exec::default()).is_some() {
                        lipschitz += 1;
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let passed = restriction + lipschitz + gap + monotone == 0 && elapsed < Duration::from_secs(5);
    report(
        1,
        "envelope suite",
        passed,
        &format!(
            "5 spaces x 100 supports x 100 queries; restriction failures {restriction}, lipschitz failures {lipschitz}, \
             gap-bound failures {gap} (min slack {worst_gap_slack:.3e}), monotonicity failures {monotone}, {:.2}s < 5s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut evaluated = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let m = random_table(&mut rng, n);
        let space = MetricSpace::table(m.clone()).unwrap();
        let k = rng.random_range(1..=n);
        let mut support: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            support.swap(i, rng.random_range(0..=i));
        }
        support.truncate(k);
        let values: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pts: Vec<Point> = support.iter().map(|&s| vec![s as f64]).collect();
        let f = PartialLipschitzFunction::from_data(&space, pts, values.clone()).unwrap();
        let l = f.constant * rng.random_range(1.0..2.0) + 1e-3;
        let field = ExtensionField::new(&space, &f, l).unwrap();
        for x in 0..n {
            let d = (field.upper(&[x as f64]) - max_feasible(&m, &support, &values, x, l)).abs();
            worst = worst.max(d);
            evaluated += 1;
        }
    }
    let elapsed = started.elapsed();
    let passed = worst <= ORACLE_TOL && elapsed < Duration::from_secs(10);
    report(
        2,
        "oracle equivalence",
        passed,
        &format!("50 tables, {evaluated} points, max |upper - oracle| = {worst:.3e} <= {ORACLE_TOL:e}, {:.2}s < 10s", elapsed.as_secs_f64()),
    );
}

struct Case {
    name: String,
    curve: SampledCurve,
    far: Point,
}

fn injective_corpus() -> Vec<Case> {
    let v = vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 0.0]];
    let kinds: Vec<(&str, CurveKind, Point)> = vec![
        ("identity", CurveKind::Identity, vec![-10.0]),
        ("v-polyline", CurveKind::Polyline { vertices: v }, vec![-10.0, 0.0]),
        ("circle-arc", CurveKind::Circle { arc: 0.5 }, vec![10.0, 10.0]),
        ("snowflake-identity", CurveKind::Snowflaked { base: Box::new(CurveKind::Identity), alpha: 0.5 }, vec![-10.0]),
        (
            "snowflake-arc",
            CurveKind::Snowflaked { base: Box::new(CurveKind::Circle { arc: 0.5 }), alpha: 0.7 },
            vec![10.0, 10.0],
        ),
    ];
    let mut out = Vec::new();
    for (name, kind, far) in kinds {
        for points in [101, 301, 601, 1001] {
            out.push(Case { name: format!("{name}/{points}"), curve: generate_curve(&kind, points).unwrap(), far: far.clone() });
        }
    }
    out
}

fn non_injective_corpus() -> Vec<Case> {
    let poly = |v: &[&[f64]], points: usize| {
        CurveKind::Polyline { vertices: v.iter().map(|p| p.to_vec()).collect() }.clone_curve(points)
    };
    vec![
        Case { name: "0-1-0-2".into(), curve: poly(&[&[0.0], &[1.0], &[0.0], &[2.0]], 301), far: vec![-10.0] },
        Case { name: "0-2-1-2-0-3".into(), curve: poly(&[&[0.0], &[2.0], &[1.0], &[2.0], &[0.0], &[3.0]], 501), far: vec![-10.0] },
        Case {
            name: "square-loop-exit".into(),
            curve: poly(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[0.0, 0.0], &[2.0, 2.0]], 501),
            far: vec![-10.0, -10.0],
        },
        Case { name: "closed-circle".into(), curve: generate_curve(&CurveKind::Circle { arc: 1.0 }, 301).unwrap(), far: vec![10.0, 10.0] },
        Case { name: "circle-1.5-turns".into(), curve: generate_curve(&CurveKind::Circle { arc: 1.5 }, 301).unwrap(), far: vec![10.0, 10.0] },
    ]
}

trait CloneCurve {
    fn clone_curve(&self, points: usize) -> SampledCurve;
}

impl CloneCurve for CurveKind {
    fn clone_curve(&self, points: usize) -> SampledCurve {
        generate_curve(self, points).unwrap()
    }
}

fn far_function(p: &Point) -> PartialLipschitzFunction {
    PartialLipschitzFunction { support: vec![p.clone()], values: vec![0.0], constant: 0.0 }
}

#[test]
fn criterion_3_zigzag_bound() {
    let l = 1.0;
    let mut failures = Vec::new();
    let mut worst_ratio = 0.0f64;
    for case in injective_corpus() {
        let c = &case.curve;
        let r = zigzag(&far_function(&case.far), c, l).unwrap();
        let rho = c.gap(0, c.last());
        if r.achieved_variation < l * rho - r.total_slack - SLACK_TOL {
            failures.push(format!("{}: variation", case.name));
        }
        if case.name.ends_with("/1001") {
            let ratio = r.total_slack / (l * rho);
            worst_ratio = worst_ratio.max(ratio);
            if ratio > 0.05 {
                failures.push(format!("{}: slack ratio {ratio:.4}", case.name));
            }
        }
        let f = &r.extended;
        if lipschitz_violation(c.space(), &f.support, &f.values, l, SLACK_TOL, Exec::default()).is_some() {
            failures.push(format!("{}: lipschitz", case.name));
        }
    }
    report(
        3,
        "zig-zag bound",
        failures.is_empty(),
        &format!("20 curves; max slack/(L rho) at 1001 points {worst_ratio:.4} <= 0.05; failures {failures:?}"),
    );
}

#[test]
fn criterion_4_staged_bounds() {
    let l = 1.0;
    let mut failures = Vec::new();
    let mut count = 0;
    let mut worst_margin = f64::INFINITY;
    for case in injective_corpus().into_iter().chain(non_injective_corpus()) {
        count += 1;
        let c = &case.curve;
        match staged_witness_general(&far_function(&case.far), c, l, THETA) {
            Ok(r) => {
                let margin = r.achieved_variation - (THETA * l * c.gap(0, c.last()) - r.total_slack);
                worst_margin = worst_margin.min(margin);
                if margin < -SLACK_TOL {
                    failures.push(format!("{}: margin {margin:.3e}", case.name));
                }
                let f = &r.extended;
                if lipschitz_violation(c.space(), &f.support, &f.values, l, SLACK_TOL, Exec::default()).is_some() {
                    failures.push(format!("{}: lipschitz", case.name));
                }
            }
            Err(e) => failures.push(format!("{}: {e}", case.name)),
        }
    }
    report(
        4,
        "staged bounds",
        failures.is_empty(),
        &format!("{count} curves, theta {THETA}; min variation - (theta L rho - slack) = {worst_margin:.4}; failures {failures:?}"),
    );
}

#[test]
fn criterion_5_modification_suite() {
    let mut failures = Vec::new();
    let c = CurveKind::Polyline { vertices: vec![vec![0.0], vec![1.0], vec![0.0], vec![2.0]] }.clone_curve(301);
    let carrier = piecewise_injective_modification(&c, EQ_TOL);
    let expected = vec![IndexRange { start: 0, end: 0 }, IndexRange { start: 200, end: 300 }];
    let exact = carrier.ranges == expected
        && carrier.holes == vec![IndexRange { start: 0, end: 200 }]
        && c.param(200) == 2.0
        && c.param(300) == 3.0;
    if !exact {
        failures.push(format!("0-1-0-2 carrier {:?} holes {:?}", carrier.ranges, carrier.holes));
    }
    let mut count = 0;
    for case in injective_corpus().into_iter().chain(non_injective_corpus()) {
        count += 1;
        let c = &case.curve;
        let carrier = piecewise_injective_modification(c, EQ_TOL);
        let rep = verify_piecewise_injective(c, &carrier, EQ_TOL);
        if !rep.passed() {
            failures.push(format!("{}: {:?}", case.name, rep.violations));
        }
        if max_multiplicity(c, &carrier, EQ_TOL) > 2 {
            failures.push(format!("{}: multiplicity", case.name));
        }
        if modify_carrier(c, &carrier, EQ_TOL) != carrier {
            failures.push(format!("{}: not idempotent", case.name));
        }
    }
    report(
        5,
        "modification suite",
        failures.is_empty(),
        &format!("0-1-0-2 carrier = {{0}} u [2,3] exactly: {exact}; {count} corpus curves checked; failures {failures:?}"),
    );
}

const CANTOR_LEVEL: u32 = 6;
const CANTOR_STEPS_PER_CELL: usize = 40;
const CANTOR_EPSILON: f64 = 0.9;

fn cantor_curve() -> SampledCurve {
    let points = 3usize.pow(CANTOR_LEVEL) * CANTOR_STEPS_PER_CELL + 1;
    generate_curve(&CurveKind::Cantor { level: CANTOR_LEVEL }, points).unwrap()
}

fn cantor_certificate(c: &SampledCurve) -> (Vec<IntervalFamily>, WitnessCertificate) {
    let n: Vec<usize> = (1..=5).collect();
    let found = find_violating_families(c, CANTOR_EPSILON, &n, ModulusMode::Greedy).unwrap();
    let fams: Vec<IntervalFamily> = found.iter().filter_map(|f| f.family().cloned()).collect();
    assert_eq!(fams.len(), 5, "families missing: {found:?}");
    let cert = build_global_witness(c, &fams, THETA, CANTOR_EPSILON).unwrap();
    (fams, cert)
}

#[test]
fn criterion_6_cantor_end_to_end() {
    let started = Instant::now();
    let c = cantor_curve();
    let (fams, cert) = cantor_certificate(&c);
    let verdict = verify_certificate(&c, &cert);
    let constant = infer_constant(c.space(), &cert.witness.support, &cert.witness.values).unwrap();
    let threshold = THETA * CANTOR_EPSILON;
    let mut rows = Vec::new();
    let mut ok = fams.len() == 5;
    for f in &cert.families {
        let good = f.total_length < 1.0 / f.n as f64 && f.variation_sum > threshold - f.slack && f.slack < 0.05;
        ok &= good;
        rows.push(format!("n={} len {:.4} var {:.4} slack {:.1e}", f.n, f.total_length, f.variation_sum, f.slack));
    }
    let elapsed = started.elapsed();
    let passed = ok && verdict.passed && constant <= 2.0 + SLACK_TOL && elapsed < Duration::from_secs(60);
    report(
        6,
        "cantor end-to-end",
        passed,
        &format!(
            "level {CANTOR_LEVEL}, eps {CANTOR_EPSILON}, theta {THETA}: [{}]; verify {}; witness constant {constant:.6} <= 2; {:.2}s < 60s",
            rows.join("; "),
            if verdict.passed { "pass" } else { "fail" },
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_7_negative_control() {
    let identity = generate_curve(&CurveKind::Identity, 1001).unwrap();
    // |γ'| = 3 on each piece
    let poly = CurveKind::Polyline { vertices: vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![3.0, 3.0]] }.clone_curve(1001);
    let n: Vec<usize> = (1..=20).collect();
    let mut found = Vec::new();
    let mut probe_breaches = Vec::new();
    let mut scaled_breaches = 0;
    let mut first_refusal = Vec::new();
    for (name, c) in [("identity", &identity), ("3-lipschitz polyline", &poly)] {
        let span = c.param(c.last()) - c.param(0);
        let k = c.grid_lipschitz();
        let searches = find_violating_families(c, 0.5, &n, ModulusMode::Exact).unwrap();
        for s in &searches {
            if let FamilyOutcome::Found { family } = &s.outcome {
                found.push(format!("{name} n={} gap {:.3}", s.n, family.total_gap));
            }
        }
        let refused_from = searches.iter().rposition(|s| s.family().is_some()).map_or(1, |k| searches[k].n + 1);
        first_refusal.push(format!("{name}: refuses for all n >= {refused_from}"));
        let deltas: Vec<f64> = [1.0, 0.5, 0.2, 0.1, 0.05, 0.01].iter().map(|d| d * span).collect();
        let mut cfg = ProbeConfig::new(50, 7, deltas.clone());
        cfg.mode = ModulusMode::Exact;
        let probe = composition_probe_with(c, &cfg).unwrap();
        for t in &probe.trials {
            for (&g, &d) in t.gaps.iter().zip(&deltas) {
                if g > t.lipschitz * k * d * (1.0 + 1e-6) {
                    scaled_breaches += 1;
                }
                if g > t.lipschitz * d * (1.0 + 1e-6) {
                    probe_breaches.push(format!(
                        "{name} trial {} delta {d:.3}: gap {g:.4} > L_h delta {:.4} (L_h K delta = {:.4})",
                        t.trial,
                        t.lipschitz * d,
                        t.lipschitz * k * d
                    ));
                }
            }
        }
    }
    let passed = found.is_empty() && probe_breaches.is_empty();
    report(
        7,
        "negative control",
        passed,
        &format!(
            "families found where refusal expected: {} {:?} ({}); probe gaps above L_h delta (1+1e-6): {} (first: {:?}); \
             above L_h K delta (1+1e-6), K the curve's grid constant: {scaled_breaches}",
            found.len(),
            found,
            first_refusal.join(", "),
            probe_breaches.len(),
            probe_breaches.first()
        ),
    );
}

#[test]
fn criterion_8_tamper_detection() {
    let c = cantor_curve();
    let (_, cert) = cantor_certificate(&c);
    let base = verify_certificate(&c, &cert);

    let mut perturbed = cert.clone();
    perturbed.witness.values[5] += 0.1;
    let a = verify_certificate(&c, &perturbed);
    let named_pair = a.failures.iter().find_map(|f| match f {
        CertificateFailure::NotLipschitz { i, j, .. } if *i == 5 || *j == 5 => Some((*i, *j)),
        _ => None,
    });

    let mut lengthened = cert.clone();
    let fam = lengthened.families.iter_mut().find(|f| f.n == 5).unwrap();
    let first = &mut fam.intervals[0];
    let end = c.params().iter().position(|&t| t >= 0.25).unwrap();
    first.end = end;
    first.t_end = c.param(end);
    let next_start = end;
    fam.intervals.retain(|iv| iv.start == 0 || iv.start >= next_start);
    let b = verify_certificate(&c, &lengthened);
    let length_named = b.failures.iter().any(|f| matches!(f, CertificateFailure::LengthBudget { n: 5, .. }));

    let mut dropped = cert.clone();
    let (fi, ii) = dropped
        .families
        .iter()
        .enumerate()
        .find_map(|(fi, f)| f.intervals.iter().position(|iv| iv.partition.len() > 2).map(|ii| (fi, ii)))
        .unwrap();
    dropped.families[fi].intervals[ii].partition.remove(1);
    let n_dropped = dropped.families[fi].n;
    let d = verify_certificate(&c, &dropped);
    let drop_named = d.failures.iter().any(|f| {
        matches!(f, CertificateFailure::VariationMismatch { n, interval, .. } if *n == n_dropped && *interval == ii)
    });

    let passed = base.passed && named_pair.is_some() && length_named && drop_named;
    report(
        8,
        "tamper detection",
        passed,
        &format!(
            "untampered passes: {}; perturbed value -> not_lipschitz pair {:?}; lengthened interval -> length_budget: {length_named}; \
             dropped partition point -> variation_mismatch: {drop_named}",
            base.passed, named_pair
        ),
    );
}
