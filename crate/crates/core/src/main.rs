#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use accrit::analysis::{
    ac_modulus, composition_probe_with, find_violating_families, AcReport, FamilySearch, ModulusMode, ProbeConfig,
    ProbeReport, Verdict,
};
use accrit::certificate::{build_global_witness, verify_certificate, WitnessCertificate};
use accrit::curve::{CurveFile, SampledCurve};
use accrit::generate::{generate_curve, CurveKind};
use accrit::lipschitz::{ExtensionField, PartialLipschitzFunction};
use accrit::metric::{check_metric_axioms, MetricSpace, Point, PointKind};
use accrit::modification::{piecewise_injective_modification, CarrierDocument, DEFAULT_EQ_TOL};
use accrit::zigzag::{staged_witness, staged_witness_general_in, zigzag};

/// Lipschitz witnesses for absolute continuity of sampled curves.
#[derive(Parser, Debug)]
#[command(name = "accrit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate both envelopes of a partial function at query points (CSV).
    Extend(ExtendArgs),
    /// Zig-zag or staged witness on a curve (JSON).
    Witness(WitnessArgs),
    /// Piecewise-injective modification of a curve (JSON).
    Modify(ModifyArgs),
    /// Modulus report, violating families and an optional certificate.
    Analyze(AnalyzeArgs),
    /// Recheck a certificate; exit 0 iff it passes.
    Verify(VerifyArgs),
    /// Write a generated curve (JSON).
    Gen(GenArgs),
    /// Scan metric axioms on sample points.
    MetricCheck(MetricCheckArgs),
}

#[derive(Args, Debug)]
struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtendArgs {
    /// Metric spec JSON.
    #[arg(long)]
    metric: PathBuf,
    /// Partial function JSON: {support, values, constant}.
    #[arg(long)]
    function: PathBuf,
    /// Query points JSON: [[x...], ...].
    #[arg(long)]
    queries: PathBuf,
    #[arg(long = "L")]
    lipschitz: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Stage {
    /// Single zig-zag pass on an injective curve.
    Zigzag,
    /// Staged construction on an injective curve.
    Staged,
    /// Staged construction through the piecewise-injective modification.
    General,
}

#[derive(Args, Debug)]
struct WitnessArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Starting partial function; empty when absent.
    #[arg(long)]
    function: Option<PathBuf>,
    #[arg(long = "L")]
    lipschitz: f64,
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = Stage::General)]
    stage: Stage,
    #[arg(long, default_value_t = DEFAULT_EQ_TOL)]
    eq_tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ModifyArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EQ_TOL)]
    eq_tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Length budgets for the modulus report.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.2,0.1,0.05")]
    deltas: Vec<f64>,
    #[arg(long, default_value = "greedy")]
    mode: ModulusMode,
    /// Search for families with total gap above this value.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Budgets 1/n searched with --epsilon.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    /// Write a witness certificate here when every family is found.
    #[arg(long)]
    certificate: Option<PathBuf>,
    /// Random Lipschitz functions composed with the curve.
    #[arg(long, default_value_t = 0)]
    probe_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    certificate: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// identity, constant, circle[:arc], cantor:LEVEL, random-walk,
    /// snowflake:ALPHA:BASE, or a JSON curve kind.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Seed for random-walk.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct MetricCheckArgs {
    #[arg(long)]
    metric: PathBuf,
    /// Sample points JSON; random samples when absent.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

/// A run that completed but whose answer is negative (refusal, failed check).
struct Negative;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Negative)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Result<(), Negative>> {
    match cli.command {
        Command::Extend(a) => cmd_extend(a),
        Command::Witness(a) => cmd_witness(a),
        Command::Modify(a) => cmd_modify(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Gen(a) => cmd_gen(a),
        Command::MetricCheck(a) => cmd_metric_check(a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_curve(path: &Path) -> Result<SampledCurve> {
    let file: CurveFile = read_json(path)?;
    SampledCurve::try_from(file).with_context(|| format!("invalid curve in {}", path.display()))
}

fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(output: &Output, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(output, &text)
}

/// One-line summary on stderr when data goes to stdout, otherwise on stdout.
fn summary(output: &Output, line: &str) {
    if output.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn check_lipschitz(l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        bail!("--L must be positive and finite, got {l}");
    }
    Ok(())
}

fn cmd_extend(a: ExtendArgs) -> Result<Result<(), Negative>> {
    check_lipschitz(a.lipschitz)?;
    let space: MetricSpace = read_json(&a.metric)?;
    let f: PartialLipschitzFunction = read_json(&a.function)?;
    let queries: Vec<Point> = read_json(&a.queries)?;
    f.validate(&space)?;
    let field = ExtensionField::new(&space, &f, a.lipschitz)?;
    let mut csv = String::from("x,lower,upper,gap_slack\n");
    for q in &queries {
        space.validate_point(q)?;
        let (lo, hi) = field.envelopes(q);
        let x: Vec<String> = q.iter().map(|c| c.to_string()).collect();
        csv.push_str(&format!("{},{},{},{}\n", x.join(" "), lo, hi, field.gap_slack(q)));
    }
    emit(&a.output, &csv)?;
    summary(&a.output, &format!("extend: {} queries at L = {}", queries.len(), a.lipschitz));
    Ok(Ok(()))
}

fn cmd_witness(a: WitnessArgs) -> Result<Result<(), Negative>> {
    check_lipschitz(a.lipschitz)?;
    let curve = read_curve(&a.curve)?;
    let f = match &a.function {
        Some(p) => {
            let f: PartialLipschitzFunction = read_json(p)?;
            f.validate(curve.space())?;
            f
        }
        None => PartialLipschitzFunction::empty(0.0),
    };
    let result = match a.stage {
        Stage::Zigzag => zigzag(&f, &curve, a.lipschitz)?,
        Stage::Staged => staged_witness(&f, &curve, a.lipschitz, a.theta)?,
        Stage::General => staged_witness_general_in(&f, &curve, 0, curve.last(), a.lipschitz, a.theta, a.eq_tol)?,
    };
    emit_json(&a.output, &result)?;
    summary(
        &a.output,
        &format!(
            "witness: variation {:.6} target {:.6} slack {:.3e} over {} partition points",
            result.achieved_variation,
            result.target,
            result.total_slack,
            result.partition.indices.len()
        ),
    );
    Ok(if result.meets_target(1e-9) { Ok(()) } else { Err(Negative) })
}

fn cmd_modify(a: ModifyArgs) -> Result<Result<(), Negative>> {
    if !(a.eq_tol >= 0.0) {
        bail!("--eq-tol must be nonnegative");
    }
    let curve = read_curve(&a.curve)?;
    let carrier = piecewise_injective_modification(&curve, a.eq_tol);
    emit_json(&a.output, &CarrierDocument::new(&curve, &carrier))?;
    summary(&a.output, &format!("modify: {} ranges, {} holes", carrier.ranges.len(), carrier.holes.len()));
    Ok(Ok(()))
}

#[derive(Serialize)]
struct AnalysisDocument {
    modulus: AcReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    families: Option<Vec<FamilySearch>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe: Option<ProbeReport>,
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<Result<(), Negative>> {
    if !(a.theta > 0.0 && a.theta < 1.0) {
        bail!("--theta must lie in (0, 1)");
    }
    let curve = read_curve(&a.curve)?;
    let modulus = ac_modulus(&curve, &a.deltas, a.mode)?;
    let mut negative = modulus.verdict == Verdict::AcConsistent;
    let mut line = format!("analyze: {:?}", modulus.verdict);

    let families = match a.epsilon {
        Some(eps) => {
            let found = find_violating_families(&curve, eps, &a.n, a.mode)?;
            let hits: Vec<_> = found.iter().filter_map(|f| f.family().cloned()).collect();
            line.push_str(&format!(", {}/{} families above {eps}", hits.len(), found.len()));
            negative = hits.len() < found.len() || found.is_empty();
            if let Some(path) = &a.certificate {
                if negative {
                    line.push_str(", no certificate");
                } else {
                    let cert = build_global_witness(&curve, &hits, a.theta, eps)?;
                    let text = serde_json::to_string_pretty(&cert)?;
                    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
                    line.push_str(&format!(", certificate {}", path.display()));
                }
            }
            Some(found)
        }
        None => None,
    };

    let probe = if a.probe_trials > 0 {
        let mut cfg = ProbeConfig::new(a.probe_trials, a.seed, a.deltas.clone());
        cfg.mode = a.mode;
        let report = composition_probe_with(&curve, &cfg)?;
        line.push_str(&format!(", probe max gap {:?}", report.max_gap));
        Some(report)
    } else {
        None
    };

    emit_json(&a.output, &AnalysisDocument { modulus, families, probe })?;
    summary(&a.output, &line);
    Ok(if negative { Err(Negative) } else { Ok(()) })
}

fn cmd_verify(a: VerifyArgs) -> Result<Result<(), Negative>> {
    let curve = read_curve(&a.curve)?;
    let cert: WitnessCertificate = read_json(&a.certificate)?;
    let verdict = verify_certificate(&curve, &cert);
    emit_json(&a.output, &verdict)?;
    summary(
        &a.output,
        &format!("verify: {} ({} failures)", if verdict.passed { "pass" } else { "fail" }, verdict.failures.len()),
    );
    Ok(if verdict.passed { Ok(()) } else { Err(Negative) })
}

fn parse_kind(spec: &str, seed: u64) -> Result<CurveKind> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        return Ok(serde_json::from_str(spec)?);
    }
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match name {
        "identity" => CurveKind::Identity,
        "constant" => CurveKind::Constant,
        "circle" => CurveKind::Circle { arc: if rest.is_empty() { 1.0 } else { rest.parse()? } },
        "cantor" => CurveKind::Cantor { level: rest.parse().context("cantor:LEVEL")? },
        "random-walk" => CurveKind::RandomWalk { seed },
        "snowflake" => {
            let (alpha, base) = rest.split_once(':').context("snowflake:ALPHA:BASE")?;
            CurveKind::Snowflaked { base: Box::new(parse_kind(base, seed)?), alpha: alpha.parse()? }
        }
        other => bail!("unknown curve kind {other:?}"),
    })
}

fn cmd_gen(a: GenArgs) -> Result<Result<(), Negative>> {
    let kind = parse_kind(&a.kind, a.seed)?;
    let curve = generate_curve(&kind, a.points)?;
    let n = curve.len();
    emit_json(&a.output, &CurveFile::from(curve))?;
    summary(&a.output, &format!("gen: {n} points"));
    Ok(Ok(()))
}

fn random_samples(space: &MetricSpace, count: usize, seed: u64) -> Result<Vec<Point>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match space.point_kind() {
        PointKind::Vector(d) => (0..count).map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect(),
        PointKind::Index(n) => (0..count).map(|_| vec![rng.random_range(0..n) as f64]).collect(),
        PointKind::Any => (0..count).map(|_| vec![rng.random_range(0..4) as f64]).collect(),
    })
}

fn cmd_metric_check(a: MetricCheckArgs) -> Result<Result<(), Negative>> {
    let space: MetricSpace = read_json(&a.metric)?;
    let samples = match &a.points {
        Some(p) => read_json(p)?,
        None => random_samples(&space, a.samples, a.seed)?,
    };
    let report = check_metric_axioms(&space, &samples, a.tol)?;
    emit_json(&a.output, &report)?;
    summary(&a.output, &format!("metric-check: {}", if report.passed { "pass" } else { "fail" }));
    Ok(if report.passed { Ok(()) } else { Err(Negative) })
}
