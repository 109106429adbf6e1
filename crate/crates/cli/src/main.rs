//! `qdoe`: batch front end for optimal quantum measurement designs.
//!
//! Exit codes: 0 success, 2 invalid input or domain error, 3 solver did not
//! converge, 4 optimality certificate failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qdoe_core::analytic::{self, DesignTag, OptimalDesignResult};
use qdoe_core::criteria::{self, criterion_value, Criterion};
use qdoe_core::fisher::{DesignMeasure, ModelPoint};
use qdoe_core::format::{json_real, round_json};
use qdoe_core::quantum::ParametricModel;
use qdoe_core::solver::{self, CandidateSet, SolveOptions, StepRule};
use qdoe_core::{par, Error};
use serde_json::{json, Value};

const EXIT_DOMAIN: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;

#[derive(Parser)]
#[command(name = "qdoe", version, about = "Optimal measurement designs for quantum-state estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SLD Fisher information and SLD operators at a parameter point.
    Sld(PointArgs),
    /// Closed-form optimal design for a qubit model.
    Optimal(OptimalArgs),
    /// Numerical optimal design over a candidate set.
    Optimize(OptimizeArgs),
    /// Values and efficiencies of designs under several criteria.
    Efficiency(EfficiencyArgs),
    /// Efficiency curves of the built-in designs along a Bloch direction.
    Curves(CurvesArgs),
    /// Equivalence-theorem gap of a design against all measurements.
    Certify(CertifyArgs),
}

#[derive(Args)]
struct PointArgs {
    /// bloch3, bloch_sub:AXES, phase_amplitude, or a model JSON file.
    #[arg(long, default_value = "bloch3")]
    model: String,
    /// Comma-separated parameter values.
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OptimalArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, default_value = "A")]
    criterion: String,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, default_value = "D")]
    criterion: String,
    /// sld-grid:N, pauli, random:COUNT:SEED, or a JSON list of POVMs.
    #[arg(long)]
    candidates: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Relative certificate gap at which to stop.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Use the harmonic step rule instead of exact line search.
    #[arg(long)]
    harmonic: bool,
    /// Weight step of the simplex grid used for criteria without a
    /// vertex-direction solver.
    #[arg(long, default_value_t = 0.01)]
    resolution: f64,
}

#[derive(Args)]
struct EfficiencyArgs {
    #[command(flatten)]
    point: PointArgs,
    /// Comma-separated designs: built-in tags (e_A, e_D, e_E, e_ST), NAME=FILE or FILE.
    #[arg(long, default_value = "e_A,e_D,e_E,e_ST")]
    designs: String,
    /// Comma-separated criteria, e.g. "A,D,E" or "c:1,0,0,gamma:0.5".
    #[arg(long, default_value = "A,D,E")]
    criteria: String,
    #[arg(long)]
    candidates: Option<String>,
}

#[derive(Args)]
struct CurvesArgs {
    /// Polar and azimuthal angle of the direction, in radians.
    #[arg(long, default_value = "0.19634954084936207,0.7853981633974483")]
    direction: String,
    #[arg(long, default_value = "D")]
    criterion: String,
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    point: PointArgs,
    /// Built-in tag or design JSON file.
    #[arg(long)]
    design: String,
    #[arg(long, default_value = "D")]
    criterion: String,
    /// Largest relative gap accepted as optimal.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("QDOE_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                par::configure_threads(n);
            }
            _ => eprintln!("ignoring QDOE_THREADS={v}"),
        }
    }
    let outcome = match &cli.command {
        Command::Sld(a) => cmd_sld(a),
        Command::Optimal(a) => cmd_optimal(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Efficiency(a) => cmd_efficiency(a),
        Command::Curves(a) => cmd_curves(a),
        Command::Certify(a) => cmd_certify(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (kind, message) = match f {
                Failure::Core(e) => (e.kind().to_string(), e.to_string()),
                Failure::Usage(m) => ("InvalidInput".to_string(), m),
            };
            println!("{}", json!({ "error": kind, "message": message }));
            eprintln!("error: {message}");
            ExitCode::from(EXIT_DOMAIN)
        }
    }
}

fn parse_model(spec: &str) -> Result<ParametricModel, Failure> {
    let s = spec.trim();
    match s.to_ascii_lowercase().as_str() {
        "bloch3" => return Ok(ParametricModel::Bloch3),
        "phase_amplitude" => return Ok(ParametricModel::PhaseAmplitude),
        _ => {}
    }
    if let Some(axes) = s.strip_prefix("bloch_sub:") {
        let axes = axes
            .split(',')
            .map(|a| a.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure::Usage(format!("bad axis list '{axes}'")))?;
        return Ok(ParametricModel::bloch_sub(&axes)?);
    }
    if Path::new(s).is_file() {
        return Ok(serde_json::from_str(&fs::read_to_string(s)?).map_err(Error::from)?);
    }
    Err(Failure::Usage(format!("unknown model '{s}'")))
}

fn parse_reals(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad number '{x}' in '{s}'"))))
        .collect()
}

fn parse_point(a: &PointArgs) -> Result<(ParametricModel, Vec<f64>), Failure> {
    let m = parse_model(&a.model)?;
    let theta = parse_reals(&a.theta)?;
    if theta.len() != m.n_params() {
        return Err(Error::WrongDimension { expected: m.n_params(), found: theta.len() }.into());
    }
    m.check_domain(&theta)?;
    Ok((m, theta))
}

/// Splits a comma-separated criterion list, keeping the commas that belong to
/// `c:…` vectors and `compound:…` arguments.
fn parse_criteria(s: &str) -> Result<Vec<Criterion>, Failure> {
    let mut groups: Vec<String> = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let attach = match groups.last() {
            Some(cur) => tok.parse::<f64>().is_ok() || Criterion::parse(cur).is_err(),
            None => false,
        };
        if attach {
            let cur = groups.last_mut().expect("non-empty");
            cur.push(',');
            cur.push_str(tok);
        } else {
            groups.push(tok.to_string());
        }
    }
    if groups.is_empty() {
        return Err(Failure::Usage("no criteria given".into()));
    }
    Ok(groups.iter().map(|g| Criterion::parse(g)).collect::<Result<Vec<_>, _>>()?)
}

fn load_design(spec: &str, m: &ParametricModel, theta: &[f64]) -> Result<(String, DesignMeasure), Failure> {
    let (name, source) = match spec.split_once('=') {
        Some((n, p)) => (Some(n.trim().to_string()), p.trim()),
        None => (None, spec.trim()),
    };
    if !Path::new(source).is_file() {
        if let Ok(tag) = source.parse::<DesignTag>() {
            let xi = analytic::named_design(tag, m, theta)?;
            return Ok((name.unwrap_or_else(|| tag.to_string()), xi));
        }
    }
    let xi: DesignMeasure = serde_json::from_str(&fs::read_to_string(source)?).map_err(Error::from)?;
    let name = name.unwrap_or_else(|| {
        Path::new(source).file_stem().map_or_else(|| source.to_string(), |s| s.to_string_lossy().into_owned())
    });
    Ok((name, xi))
}

fn default_candidates(m: &ParametricModel) -> CandidateSet {
    if m.is_qubit() {
        CandidateSet::SldSphereGrid(2000)
    } else {
        CandidateSet::RandomProjective { count: 500, seed: 0 }
    }
}

fn candidates(spec: &Option<String>, m: &ParametricModel) -> Result<CandidateSet, Failure> {
    match spec {
        Some(s) => Ok(CandidateSet::parse(s)?),
        None => Ok(default_candidates(m)),
    }
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), Failure> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &out.output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json(out: &OutputArgs, v: &Value) -> Result<(), Failure> {
    if out.format == Some(Format::Csv) {
        return Err(Failure::Usage("this command only writes JSON".into()));
    }
    emit(out, &serde_json::to_string_pretty(v).expect("JSON serializes"))
}

fn rounded<T: serde::Serialize>(x: &T) -> Value {
    let mut v = serde_json::to_value(x).expect("serializable");
    round_json(&mut v);
    v
}

fn cmd_sld(a: &PointArgs) -> CmdResult {
    let (m, theta) = parse_point(a)?;
    let point = ModelPoint::new(&m, &theta)?;
    let j = point.sld_fisher()?;
    let inverse = j.inverse().ok_or(Error::SingularInformation)?;
    let inverse: Vec<Vec<Value>> =
        (0..j.n()).map(|i| (0..j.n()).map(|k| json_real(inverse[(i, k)])).collect()).collect();
    let v = json!({
        "model": rounded(&m),
        "theta": theta.iter().map(|x| json_real(*x)).collect::<Vec<_>>(),
        "sld_fisher": rounded(&j),
        "sld_fisher_inverse": inverse,
        "sld_operators": rounded(&point.sld_operators()?),
    });
    emit_json(&a.out, &v)?;
    Ok(0)
}

fn optimal_result(m: &ParametricModel, theta: &[f64], crit: &Criterion) -> Result<OptimalDesignResult, Failure> {
    if m.n_params() == 1 {
        let (pvm, _) = analytic::scalar_optimal(m, theta[0])?;
        let design = DesignMeasure::single(pvm);
        let fisher = ModelPoint::new(m, theta)?.design_fisher(&design)?;
        let value = criterion_value(crit, &fisher)?;
        return Ok(OptimalDesignResult { design, fisher, value, criterion: crit.clone() });
    }
    let res = match crit {
        Criterion::A(None) => analytic::a_optimal(m, theta)?,
        Criterion::A(Some(w)) => analytic::a_optimal_weighted(m, theta, w)?,
        Criterion::D => analytic::d_optimal(m, theta)?,
        Criterion::LogD => {
            let mut r = analytic::d_optimal(m, theta)?;
            r.value = criterion_value(crit, &r.fisher)?;
            r.criterion = Criterion::LogD;
            r
        }
        Criterion::E => analytic::e_optimal(m, theta)?,
        Criterion::Gamma(g) => analytic::gamma_optimal(m, theta, *g)?,
        Criterion::C(_) | Criterion::Compound(..) => {
            return Err(Error::UnsupportedCriterion(format!("no closed-form design for {crit}")).into())
        }
    };
    Ok(res)
}

fn cmd_optimal(a: &OptimalArgs) -> CmdResult {
    let (m, theta) = parse_point(&a.point)?;
    let crit = Criterion::parse(&a.criterion)?;
    let v = if let Criterion::C(c) = &crit {
        let (pvm, value) = analytic::c_optimal(&m, &theta, c)?;
        let j = ModelPoint::new(&m, &theta)?.fisher(&pvm)?;
        json!({
            "criterion": crit.to_string(),
            "value": json_real(value),
            "feasible": criteria::feasibility_contains(&j, c, criteria::FEASIBILITY_TOL),
            "fisher": rounded(&j),
            "pvm": rounded(&pvm),
        })
    } else {
        optimal_result(&m, &theta, &crit)?.to_json()
    };
    emit_json(&a.point.out, &v)?;
    Ok(0)
}

fn cmd_optimize(a: &OptimizeArgs) -> CmdResult {
    let (m, theta) = parse_point(&a.point)?;
    let crit = Criterion::parse(&a.criterion)?;
    let set = candidates(&a.candidates, &m)?;
    let opts = SolveOptions {
        max_iters: a.max_iters,
        tol: a.tol,
        step_rule: if a.harmonic { StepRule::Harmonic } else { StepRule::LineSearch },
        ..SolveOptions::default()
    };
    match crit {
        Criterion::A(_) | Criterion::D | Criterion::LogD => {
            let report = solver::fedorov_wynn(&m, &theta, &crit, &set, &opts)?;
            let mut v = report.to_json();
            v["candidates"] = json!(set.to_string());
            emit_json(&a.point.out, &v)?;
            Ok(if report.converged { 0 } else { EXIT_NO_CONVERGENCE })
        }
        _ => {
            let res = solver::simplex_grid_search(&m, &theta, &crit, &set, a.resolution, opts.parallel)?;
            let mut v = res.to_json();
            v["candidates"] = json!(set.to_string());
            v["method"] = json!("simplex-grid");
            v["resolution"] = json_real(a.resolution);
            emit_json(&a.point.out, &v)?;
            Ok(0)
        }
    }
}

fn cmd_efficiency(a: &EfficiencyArgs) -> CmdResult {
    let (m, theta) = parse_point(&a.point)?;
    let crits = parse_criteria(&a.criteria)?;
    let designs = a
        .designs
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| load_design(s, &m, &theta))
        .collect::<Result<Vec<_>, _>>()?;
    if designs.is_empty() {
        return Err(Failure::Usage("no designs given".into()));
    }
    let set = candidates(&a.candidates, &m)?;
    let report = solver::compare_designs(&m, &theta, &designs, &crits, &set, &SolveOptions::default())?;
    match a.point.out.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(&a.point.out, &report.to_csv())?,
        Format::Json => {
            let rows: Vec<Value> = report
                .rows
                .iter()
                .map(|r| {
                    json!({
                        "design": r.design,
                        "criterion": r.criterion.to_string(),
                        "value": json_real(r.value),
                        "efficiency": json_real(r.efficiency),
                    })
                })
                .collect();
            emit_json(&a.point.out, &Value::Array(rows))?;
        }
    }
    Ok(0)
}

fn cmd_curves(a: &CurvesArgs) -> CmdResult {
    let angles = parse_reals(&a.direction)?;
    let [polar, azimuth] = angles[..] else {
        return Err(Failure::Usage(format!("direction needs two angles, got '{}'", a.direction)));
    };
    let crit = Criterion::parse(&a.criterion)?;
    let rows = analytic::efficiency_curves((polar, azimuth), &crit, a.grid)?;
    match a.out.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(&a.out, &analytic::curves_csv(&rows))?,
        Format::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "r2": json_real(r.r2),
                        "eta_A": json_real(r.eta[0]),
                        "eta_D": json_real(r.eta[1]),
                        "eta_E": json_real(r.eta[2]),
                        "eta_ST": json_real(r.eta[3]),
                    })
                })
                .collect();
            emit_json(&a.out, &Value::Array(rows))?;
        }
    }
    Ok(0)
}

fn cmd_certify(a: &CertifyArgs) -> CmdResult {
    let (m, theta) = parse_point(&a.point)?;
    let crit = Criterion::parse(&a.criterion)?;
    let (name, xi) = load_design(&a.design, &m, &theta)?;
    let gap = analytic::equivalence_certificate(&m, &theta, &xi, &crit)?;
    let threshold = match &crit {
        Criterion::D | Criterion::LogD => m.n_params() as f64,
        _ => criterion_value(&crit, &ModelPoint::new(&m, &theta)?.design_fisher(&xi)?)?,
    };
    let relative = gap / threshold;
    let certified = relative <= a.tol;
    let v = json!({
        "design": name,
        "criterion": crit.to_string(),
        "gap": json_real(gap),
        "relative_gap": json_real(relative),
        "tol": json_real(a.tol),
        "certified": certified,
    });
    emit_json(&a.point.out, &v)?;
    Ok(if certified { 0 } else { EXIT_CERTIFICATE })
}
