use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hyloc::crlb::hybrid_crlb;
use hyloc::harness::{
    emit, run_experiment, trial_instance, ExperimentConfig, Format, SweepVar, WeightMode,
};
use hyloc::mm::solver::{solve, Init, SolverConfig, Termination};
use hyloc::objective::{compute_weights, estimated_ranges, Problem};
use hyloc::{Dim, Error, Mask, MeasurementSet, Point, RssParams};

#[derive(Parser)]
#[command(name = "hyloc", version, about = "Hybrid TOA/TDOA/RSS/AOA localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep over one parameter.
    Sweep(SweepArgs),
    /// Cramér–Rao bound per method, averaged over random geometries.
    Crlb(CrlbArgs),
    /// Solve a single instance read from a JSON file.
    Solve(SolveArgs),
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args, Default)]
struct CommonArgs {
    /// JSON experiment config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated masks, e.g. TDRA,TA,DA; ALL expands to every combination.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_anchors: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    /// Common noise level: m for TOA/TDOA, dB for RSS, degrees for AOA.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    l0: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Planar (2-D) deployments.
    #[arg(long)]
    planar: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "var")]
    var: Option<String>,
    /// Comma-separated grid values.
    #[arg(long)]
    grid: Option<String>,
    /// Include the weighted linear least-squares baseline.
    #[arg(long, conflicts_with = "no_baseline")]
    baseline: bool,
    #[arg(long)]
    no_baseline: bool,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    eps_c: Option<f64>,
    #[arg(long)]
    nlos_beta: Option<f64>,
    #[arg(long)]
    nlos_paths: Option<usize>,
    /// estimated | oracle
    #[arg(long)]
    weights: Option<String>,
    /// Estimate sigmas from this many calibration samples per anchor.
    #[arg(long)]
    calibration_k: Option<usize>,
    /// Record wall-clock time per solve (output is no longer reproducible).
    #[arg(long)]
    timing: bool,
    /// 100 trials per grid point.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct CrlbArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file.
    input: PathBuf,
    /// Restrict to these measurement types.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    eps_c: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Input of the `solve` subcommand.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveInput {
    anchors: Vec<Point>,
    measurements: MeasurementSet,
    #[serde(default)]
    dim: Dim,
    #[serde(default)]
    rss: Option<RssParams>,
    /// Starting point; defaults to `Uniform(0, max anchor norm / 4)`.
    #[serde(default)]
    init: Option<Point>,
}

#[derive(Debug, Serialize)]
struct SolveOutput {
    estimate: Point,
    objective: f64,
    iterations: usize,
    termination: Termination,
    reinitialized: bool,
    objective_trace: Vec<f64>,
}

fn parse_methods(s: &str) -> hyloc::Result<Vec<Mask>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        if item.eq_ignore_ascii_case("all") {
            out.extend(Mask::all_methods());
        } else {
            out.push(item.parse()?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("empty method list".into()));
    }
    Ok(out)
}

fn parse_grid(s: &str) -> hyloc::Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad grid value {x:?}"))))
        .collect()
}

fn load_config(path: Option<&Path>) -> hyloc::Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_common(cfg: &mut ExperimentConfig, a: &CommonArgs) -> hyloc::Result<()> {
    if let Some(m) = &a.methods {
        cfg.methods = parse_methods(m)?;
    }
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.n_anchors {
        cfg.n_anchors = v;
    }
    if let Some(v) = a.radius {
        cfg.radius = v;
    }
    if let Some(v) = a.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = a.l0 {
        cfg.l0 = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if a.planar {
        cfg.dim = Dim::Two;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> hyloc::Result<()> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    if let Some(v) = &a.var {
        let var: SweepVar = v.parse()?;
        if var != cfg.sweep && a.grid.is_none() {
            cfg.grid = None;
        }
        cfg.sweep = var;
    }
    apply_common(&mut cfg, &a.common)?;
    if let Some(g) = &a.grid {
        cfg.grid = Some(parse_grid(g)?);
    }
    if a.baseline {
        cfg.baseline = true;
    }
    if a.no_baseline {
        cfg.baseline = false;
    }
    if let Some(v) = a.t_max {
        cfg.t_max = v;
    }
    if let Some(v) = a.eps_c {
        cfg.eps_c = v;
    }
    if let Some(v) = a.nlos_beta {
        cfg.nlos_beta = v;
    }
    if let Some(v) = a.nlos_paths {
        cfg.nlos_paths = v;
    }
    if let Some(w) = &a.weights {
        cfg.weights = match w.as_str() {
            "estimated" => WeightMode::Estimated,
            "oracle" => WeightMode::Oracle,
            other => return Err(Error::InvalidConfig(format!("unknown weight mode {other:?}"))),
        };
    }
    if let Some(k) = a.calibration_k {
        cfg.calibration_k = Some(k);
    }
    if a.timing {
        cfg.timing = true;
    }
    if a.quick {
        cfg.trials = 100;
    }
    let format: Format = a.format.parse()?;
    let report = run_experiment(&cfg)?;
    match &a.out {
        Some(path) => emit(&report, format, path)?,
        None => match format {
            Format::Csv => print!("{}", report.to_csv()),
            Format::Json => println!("{}", report.to_json()?),
        },
    }
    Ok(())
}

fn crlb(a: CrlbArgs) -> hyloc::Result<()> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    if a.common.config.is_none() {
        cfg.trials = 100;
    }
    apply_common(&mut cfg, &a.common)?;
    cfg.baseline = false;
    cfg.grid = Some(vec![cfg.sigma]);
    cfg.sweep = SweepVar::Sigma;
    cfg.validate()?;
    if cfg.sigma <= 0.0 {
        return Err(Error::InvalidConfig("the CRLB needs sigma > 0".into()));
    }
    let params = cfg.rss_params()?;
    println!("method,crlb_rmse_m,unidentifiable,geometries");
    for mask in &cfg.methods {
        let mut sum = 0.0;
        let mut bad = 0;
        for j in 0..cfg.trials as u64 {
            let t = trial_instance(&cfg, cfg.sigma, j)?;
            match hybrid_crlb(*mask, &t.geometry, &t.true_sigmas, &params)?.trace_crlb {
                Some(tr) => sum += tr,
                None => bad += 1,
            }
        }
        let ok = cfg.trials - bad;
        let bound = if ok > 0 { (sum / ok as f64).sqrt().to_string() } else { "NaN".into() };
        println!("{mask},{bound},{bad},{}", cfg.trials);
    }
    Ok(())
}

fn solve_cmd(a: SolveArgs) -> hyloc::Result<()> {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", a.input.display())))?;
    let input: SolveInput = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", a.input.display())))?;
    let n = input.anchors.len();
    let params = input.rss.unwrap_or_default();
    let mask = match &a.mask {
        Some(m) => m.parse()?,
        None => input.measurements.mask,
    };
    let ranges = estimated_ranges(&input.measurements, &params, mask);
    let w = compute_weights(ranges.as_deref(), &input.measurements.sigma, mask, n)?;
    let problem = Problem::new(&input.anchors, &input.measurements, &w, params, input.dim)?;
    let spread = input.anchors.iter().map(|m| m.norm()).fold(0.0, f64::max).max(1.0);
    let mut cfg = SolverConfig {
        init: match input.init {
            Some(p) => Init::Point(p),
            None => Init::Uniform { upper: spread / 4.0 },
        },
        ..SolverConfig::default()
    };
    if let Some(v) = a.t_max {
        cfg.t_max = v;
    }
    if let Some(v) = a.eps_c {
        cfg.eps_c = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let sol = solve(&problem, &cfg)?;
    let out = SolveOutput {
        estimate: sol.estimate,
        objective: sol.objective(),
        iterations: sol.iterations,
        termination: sol.termination,
        reinitialized: sol.reinitialized,
        objective_trace: sol.objective_trace,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn selftest(quick: bool) -> bool {
    let results = hyloc::selftest::run_all(quick);
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    results.iter().all(|r| r.passed)
}

fn exit_for(e: &Error) -> ExitCode {
    if e.is_config() || matches!(e, Error::Io(_)) {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Crlb(a) => crlb(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Selftest { quick } => {
            return if selftest(quick) { ExitCode::SUCCESS } else { ExitCode::from(3) };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
