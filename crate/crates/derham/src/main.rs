//! Command-line surface: parameter validation, point evaluation, plot-data
//! emission and experiment execution from JSON configs.
//!
//! Exit codes: 0 success/valid/pass; 1 invalid parameters or failed verdict;
//! 2 parse error or unknown experiment; 3 precision exhausted.

use clap::{Args, Parser, Subcommand};
use derham::analysis::{self, ExperimentReport, Sampler};
use derham::dyadic::{parse_point, BinaryPoint, DyadicRational};
use derham::error::Error;
use derham::eval::CurveEvaluator;
use derham::params::{CurvePoint, ParamCurve};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "derham", version, about = "De Rham curve family evaluator")]
struct Cli {
    /// RNG seed for sampling experiments.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Evaluation tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol: f64,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Accept parameters outside the validated region.
    #[arg(long, global = true)]
    force: bool,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a parameter triple or curve against the admissible region.
    Validate(CurveArgs),
    /// Evaluate F and its parameter derivatives at one point.
    Eval {
        #[command(flatten)]
        curve: CurveArgs,
        /// Point in [0,1]: decimal "0.5", rational "1/3", or binary "0.01(01)".
        #[arg(long)]
        x: String,
        /// Highest derivative order to print.
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Emit "x,f_k" CSV over the dyadic grid at the given level.
    Plot {
        #[command(flatten)]
        curve: CurveArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Grid level (at most 16); 2^level + 1 rows.
        #[arg(long)]
        level: u32,
    },
    /// Run a named experiment from a JSON config and write its report.
    Experiment {
        /// One of: dyadic-limit, d2-holder, box-dimension, decay-exponent,
        /// variation, mtni, modulus, lil, holder.
        name: String,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct CurveArgs {
    /// Curve JSON file.
    #[arg(long, conflicts_with = "point")]
    curve: Option<PathBuf>,
    /// Constant curve from a triple "b1,c0,c1".
    #[arg(long)]
    point: Option<String>,
}

/// Experiment configuration; must round-trip through JSON unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    curve: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_lo: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_hi: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interval: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m_lo: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m_hi: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<String>,
}

/// Round-trip safe formatting: 17 significant digits.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

enum CliError {
    /// Invalid parameters or failed verdict.
    Invalid(String),
    /// Parse failure or unknown experiment.
    Parse(String),
    /// Requested tolerance not achievable.
    Precision(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::PrecisionExhausted { .. } => CliError::Precision(e.to_string()),
            Error::InvalidPoint(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.jobs;
    match run(&cli) {
        Ok(code) => code,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Parse(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Precision(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn parse_triple(s: &str) -> Result<CurvePoint, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Parse(format!(
            "expected b1,c0,c1 triple, got {s:?}"
        )));
    }
    let mut v = [0.0f64; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| CliError::Parse(format!("bad number {part:?}: {e}")))?;
    }
    // Deliberately unchecked: validate must be able to report on any triple.
    Ok(CurvePoint {
        b1: v[0],
        c0: v[1],
        c1: v[2],
    })
}

/// Load the curve and make sure it carries jets up to order `k`; constant
/// curves are widened on demand, genuine curves of lower order are refused.
fn load_curve(args: &CurveArgs, force: bool, k: usize) -> Result<ParamCurve, CliError> {
    let curve = match (&args.curve, &args.point) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
            ParamCurve::from_json(&v, force)?
        }
        (None, Some(triple)) => {
            let p = parse_triple(triple)?;
            if !force && !p.validate().valid() {
                return Err(CliError::Invalid(format!(
                    "parameters ({}, {}, {}) outside the admissible region (use --force)",
                    p.b1, p.c0, p.c1
                )));
            }
            let coeffs = |v: f64| {
                let mut c = vec![0.0; k + 1];
                c[0] = v;
                c
            };
            ParamCurve::new(&coeffs(p.b1), &coeffs(p.c0), &coeffs(p.c1), 1e-3, force)?
        }
        _ => {
            return Err(CliError::Parse(
                "exactly one of --curve or --point is required".into(),
            ))
        }
    };
    if curve.order() < k {
        let constant = curve.b1_jet().coeffs()[1..].iter().all(|&c| c == 0.0)
            && curve.c0_jet().coeffs()[1..].iter().all(|&c| c == 0.0)
            && curve.c1_jet().coeffs()[1..].iter().all(|&c| c == 0.0);
        if constant {
            let p = curve.point();
            let coeffs = |v: f64| {
                let mut c = vec![0.0; k + 1];
                c[0] = v;
                c
            };
            return Ok(ParamCurve::new(
                &coeffs(p.b1),
                &coeffs(p.c0),
                &coeffs(p.c1),
                curve.half_width(),
                force,
            )?);
        }
        return Err(CliError::Parse(format!(
            "curve carries derivatives up to order {}, requested k = {k}",
            curve.order()
        )));
    }
    Ok(curve)
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Validate(args) => cmd_validate(cli, args),
        Command::Eval { curve, x, k } => cmd_eval(cli, curve, x, *k),
        Command::Plot { curve, k, level } => cmd_plot(cli, curve, *k, *level),
        Command::Experiment { name, config } => cmd_experiment(cli, name, config),
    }
}

fn cmd_validate(cli: &Cli, args: &CurveArgs) -> Result<ExitCode, CliError> {
    let point = match (&args.curve, &args.point) {
        (None, Some(triple)) => parse_triple(triple)?,
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
            ParamCurve::from_json(&v, true)?.point()
        }
        _ => {
            return Err(CliError::Parse(
                "exactly one of --curve or --point is required".into(),
            ))
        }
    };
    let rep = point.validate();
    let mut s = String::new();
    s.push_str(&format!(
        "point: b1 = {}, c0 = {}, c1 = {}\n",
        point.b1, point.c0, point.c1
    ));
    let check = |b: bool| if b { "ok" } else { "FAIL" };
    s.push_str(&format!("finite:                {}\n", check(rep.finite)));
    s.push_str(&format!(
        "b1 in (0, 1):          {}\n",
        check(rep.b1_in_range)
    ));
    s.push_str(&format!(
        "c0 in (b1-1, 1/b1-1):  {}\n",
        check(rep.c0_in_range)
    ));
    s.push_str(&format!(
        "c1 in (-b1, b1/(1-b1)): {}\n",
        check(rep.c1_in_range)
    ));
    s.push_str(&format!(
        "contraction (first):   {}\n",
        check(rep.contraction_first)
    ));
    s.push_str(&format!(
        "contraction (second):  {}\n",
        check(rep.contraction_second)
    ));
    s.push_str(&format!(
        "verdict: {}\n",
        if rep.valid() { "valid" } else { "invalid" }
    ));
    if !rep.valid() && cli.force {
        s.push_str("warning: accepted by --force despite failed conditions\n");
    }
    write_output(&cli.output, &s)?;
    if rep.valid() || cli.force {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_eval(cli: &Cli, curve_args: &CurveArgs, x: &str, k: usize) -> Result<ExitCode, CliError> {
    let curve = load_curve(curve_args, cli.force, k)?;
    let pt = parse_point(x)?;
    let ev = CurveEvaluator::new(&curve)?;
    let res = ev.eval_f_jet(&pt, cli.tol)?;
    let mut s = String::new();
    s.push_str(&format!("x = {pt}\n"));
    s.push_str(&format!("F = {}\n", fmt(res.value)));
    for i in 1..=k {
        s.push_str(&format!("f{i} = {}\n", fmt(res.f_k(i))));
    }
    s.push_str(&format!(
        "digits = {}, tail_bound = {}\n",
        res.terms,
        fmt(res.tail_bound)
    ));
    write_output(&cli.output, &s)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(cli: &Cli, curve_args: &CurveArgs, k: usize, level: u32) -> Result<ExitCode, CliError> {
    if level > 16 {
        return Err(CliError::Parse(format!("level {level} exceeds 16")));
    }
    let curve = load_curve(curve_args, cli.force, k)?;
    let ev = CurveEvaluator::new(&curve)?;
    let values = ev.grid_values(level, k)?;
    let n = 1u64 << level;
    let mut s = String::with_capacity(values.len() * 40);
    s.push_str(&format!("x,f{k}\n"));
    for (j, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{}\n", fmt(j as f64 / n as f64), fmt(*v)));
    }
    write_output(&cli.output, &s)?;
    Ok(ExitCode::SUCCESS)
}

fn require_point(cfg: &RunConfig) -> Result<BinaryPoint, CliError> {
    let x = cfg
        .x
        .as_deref()
        .ok_or_else(|| CliError::Parse("config field \"x\" is required".into()))?;
    Ok(parse_point(x)?)
}

fn require_dyadic(cfg: &RunConfig) -> Result<DyadicRational, CliError> {
    let p = require_point(cfg)?;
    if !p.is_dyadic() {
        return Err(CliError::Parse(format!("{p} is not dyadic")));
    }
    Ok(p.truncate(p.prefix_len() as u32))
}

fn parse_dyadic(s: &str) -> Result<DyadicRational, CliError> {
    let p = parse_point(s)?;
    if !p.is_dyadic() {
        return Err(CliError::Parse(format!("{p} is not dyadic")));
    }
    Ok(p.truncate(p.prefix_len() as u32))
}

fn interval(cfg: &RunConfig) -> Result<(DyadicRational, DyadicRational), CliError> {
    match &cfg.interval {
        Some([a, b]) => Ok((parse_dyadic(a)?, parse_dyadic(b)?)),
        None => Ok((DyadicRational::zero(), DyadicRational::new(1u32, 0))),
    }
}

fn cmd_experiment(cli: &Cli, name: &str, config: &PathBuf) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::Parse(format!("{}: {e}", config.display())))?;
    let v0: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    let cfg: RunConfig =
        serde_json::from_value(v0.clone()).map_err(|e| CliError::Parse(e.to_string()))?;
    // The config must survive parse -> serialize -> parse unchanged.
    let v1 = serde_json::to_value(&cfg).map_err(|e| CliError::Parse(e.to_string()))?;
    if v1 != v0 {
        return Err(CliError::Parse(
            "config does not round-trip through the canonical schema".into(),
        ));
    }

    let curve = ParamCurve::from_json(&cfg.curve, cli.force)?;
    let seed = cfg.seed.unwrap_or(cli.seed);
    let tol = cfg.tolerance.unwrap_or(0.05);
    let k = cfg.k.unwrap_or(1);

    let report: ExperimentReport = match name {
        "dyadic-limit" => {
            let x = require_dyadic(&cfg)?;
            analysis::dyadic_limit_check(
                &curve,
                &x,
                k,
                cfg.n_lo.unwrap_or(50),
                cfg.n_hi.unwrap_or(200),
                tol,
            )?
        }
        "d2-holder" => {
            let x = require_dyadic(&cfg)?;
            analysis::d2_holder_check(&curve, &x, k, cfg.n_hi.unwrap_or(120), {
                cfg.tolerance.unwrap_or(1e-3)
            })?
        }
        "box-dimension" => {
            let s_grid: Vec<f64> = (0..=50).map(|i| 1.0 + 0.01 * i as f64).collect();
            analysis::box_dimension_estimate(
                &curve,
                k,
                cfg.max_level.unwrap_or(12),
                &s_grid,
                cfg.tolerance.unwrap_or(1.5),
            )?
        }
        "decay-exponent" => {
            let sampler = Sampler::parse(cfg.sampler.as_deref().unwrap_or("lebesgue"))?;
            analysis::decay_exponent(
                &curve,
                sampler,
                cfg.depth.unwrap_or(4096),
                cfg.n_samples.unwrap_or(200),
                seed,
                cfg.tolerance.unwrap_or(0.01),
            )?
        }
        "variation" => {
            let (a, b) = interval(&cfg)?;
            analysis::variation_profile(
                &curve,
                k,
                &a,
                &b,
                cfg.m_lo.unwrap_or(8),
                cfg.m_hi.unwrap_or(20),
                cfg.tolerance.unwrap_or(1e-9),
            )?
        }
        "mtni" => {
            let (a, b) = interval(&cfg)?;
            let levels = cfg.levels.clone().unwrap_or_else(|| vec![16, 20, 24]);
            analysis::mtni_probe(&curve, k, &a, &b, &levels, seed)?
        }
        "modulus" => {
            let x = require_point(&cfg)?;
            analysis::modulus_profile(&curve, &x, cfg.n_max.unwrap_or(200), tol)?
        }
        "lil" => analysis::lil_profile(
            &curve,
            k,
            cfg.n_samples.unwrap_or(200),
            cfg.depth.unwrap_or(4096),
            seed,
        )?,
        "holder" => analysis::holder_probe(&curve, k, cfg.n_samples.unwrap_or(100), seed)?,
        other => {
            return Err(CliError::Parse(format!("unknown experiment {other:?}")));
        }
    };

    let json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Parse(e.to_string()))?;
    let target = cfg
        .output
        .as_ref()
        .map(PathBuf::from)
        .or_else(|| cli.output.clone());
    write_output(&target, &(json + "\n"))?;
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
