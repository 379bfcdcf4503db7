//! Monte-Carlo experiment driver.
//!
//! Every trial is a pure function of `(config, grid index, trial index)`,
//! so the worker pool may run trials in any order without changing the
//! report.

mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit, rmse, Format, ReportRow, RmseReport, TrialRecord, SCHEMA};

use crate::crlb::hybrid_crlb;
use crate::error::{Error, Result};
use crate::mm::solver::{solve, Init, SolverConfig};
use crate::objective::{compute_weights, estimated_ranges, Problem, WeightSet};
use crate::seed::derive_seed;
use crate::sim::{calibrate_sigmas, inject_nlos, simulate_all, NlosConfig};
use crate::types::{
    generate_network, generate_planar_network, pairwise_distances, Dim, Mask, MeasurementSet,
    NetworkGeometry, NoiseSigmas, RssParams,
};
use crate::wls::wls_solve;

/// Label used for the weighted linear least-squares baseline.
pub const BASELINE_NAME: &str = "TDRA^W";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVar {
    Sigma,
    Radius,
    Anchors,
    NlosBeta,
    NlosPaths,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Sigma => "sigma",
            SweepVar::Radius => "radius",
            SweepVar::Anchors => "anchors",
            SweepVar::NlosBeta => "nlos-beta",
            SweepVar::NlosPaths => "nlos-paths",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepVar::Sigma => vec![0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            SweepVar::Radius => vec![10.0, 25.0, 50.0, 75.0, 100.0],
            SweepVar::Anchors => vec![4.0, 5.0, 6.0, 8.0, 10.0, 12.0],
            SweepVar::NlosBeta => vec![0.0, 1.0, 2.0, 4.0, 6.0],
            SweepVar::NlosPaths => vec![0.0, 1.0, 2.0, 3.0],
        }
    }
}

impl std::str::FromStr for SweepVar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SweepVar::Sigma),
            "radius" => Ok(SweepVar::Radius),
            "anchors" | "n-anchors" => Ok(SweepVar::Anchors),
            "nlos-beta" => Ok(SweepVar::NlosBeta),
            "nlos-paths" => Ok(SweepVar::NlosPaths),
            other => Err(Error::InvalidConfig(format!("unknown sweep variable {other:?}"))),
        }
    }
}

/// Which distances enter the range-normalised weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Ranges recovered from the measurements themselves.
    #[default]
    Estimated,
    /// True source–anchor distances.
    Oracle,
}

/// Parameters of one sweep. `sigma` is shared by all types: meters for
/// TOA/TDOA, dB for RSS and degrees for AOA. NLOS angle biases use the
/// same `beta` read as degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sweep: SweepVar,
    /// `None` uses the default grid of `sweep`.
    pub grid: Option<Vec<f64>>,
    pub n_anchors: usize,
    pub radius: f64,
    pub sigma: f64,
    pub l0: f64,
    pub gamma: f64,
    pub t_max: usize,
    pub eps_c: f64,
    pub methods: Vec<Mask>,
    pub baseline: bool,
    pub trials: usize,
    pub master_seed: u64,
    pub nlos_beta: f64,
    pub nlos_paths: usize,
    pub weights: WeightMode,
    /// Estimate σ from this many calibration samples per anchor instead of
    /// passing the true values.
    pub calibration_k: Option<usize>,
    /// Record wall-clock time per solve. Makes the report nondeterministic.
    pub timing: bool,
    pub dim: Dim,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep: SweepVar::Sigma,
            grid: None,
            n_anchors: 8,
            radius: 50.0,
            sigma: 1.0,
            l0: 20.0,
            gamma: 2.5,
            t_max: 1000,
            eps_c: 1e-3,
            methods: Mask::all_methods(),
            baseline: true,
            trials: 1000,
            master_seed: 0,
            nlos_beta: 0.0,
            nlos_paths: 0,
            weights: WeightMode::Estimated,
            calibration_k: None,
            timing: false,
            dim: Dim::Three,
        }
    }
}

/// Fixed parameters of one grid point after applying the sweep value.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    n_anchors: usize,
    radius: f64,
    sigma: f64,
    nlos_beta: f64,
    nlos_paths: usize,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| self.sweep.default_grid())
    }

    pub fn rss_params(&self) -> Result<RssParams> {
        RssParams::new(self.l0, self.gamma)
    }

    fn at(&self, value: f64) -> GridPoint {
        let mut p = GridPoint {
            n_anchors: self.n_anchors,
            radius: self.radius,
            sigma: self.sigma,
            nlos_beta: self.nlos_beta,
            nlos_paths: self.nlos_paths,
        };
        match self.sweep {
            SweepVar::Sigma => p.sigma = value,
            SweepVar::Radius => p.radius = value,
            SweepVar::Anchors => p.n_anchors = value as usize,
            SweepVar::NlosBeta => p.nlos_beta = value,
            SweepVar::NlosPaths => p.nlos_paths = value as usize,
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.trials < 1 {
            return bad("trials must be >= 1".into());
        }
        let grid = self.grid();
        if grid.is_empty() {
            return bad("grid is empty".into());
        }
        if self.methods.is_empty() && !self.baseline {
            return bad("no methods selected".into());
        }
        self.rss_params()?;
        if !(self.eps_c > 0.0) || self.t_max < 1 {
            return bad("need t_max >= 1 and eps_c > 0".into());
        }
        if let Some(k) = self.calibration_k {
            if k < 30 {
                return bad(format!("calibration needs at least 30 samples, got {k}"));
            }
        }
        for &v in &grid {
            if !v.is_finite() {
                return bad(format!("grid value {v} is not finite"));
            }
            let integral = matches!(self.sweep, SweepVar::Anchors | SweepVar::NlosPaths);
            if integral && (v < 0.0 || v.fract() != 0.0) {
                return bad(format!("{} grid values must be non-negative integers, got {v}", self.sweep.name()));
            }
            let p = self.at(v);
            if !(p.radius > 0.0 && p.radius.is_finite()) {
                return bad(format!("radius must be > 0, got {}", p.radius));
            }
            if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
                return bad(format!("sigma must be >= 0, got {}", p.sigma));
            }
            if !(p.nlos_beta >= 0.0) {
                return bad(format!("NLOS beta must be >= 0, got {}", p.nlos_beta));
            }
            if p.nlos_paths > p.n_anchors {
                return bad(format!("{} NLOS paths exceed {} anchors", p.nlos_paths, p.n_anchors));
            }
            if p.n_anchors < 2 {
                return bad(format!("need at least 2 anchors, got {}", p.n_anchors));
            }
            for m in &self.methods {
                m.validate_for(p.n_anchors)?;
            }
            if self.baseline {
                Mask::ALL.validate_for(p.n_anchors)?;
            }
        }
        Ok(())
    }

    fn method_list(&self) -> Vec<(String, Mask, bool)> {
        let mut out: Vec<_> = self.methods.iter().map(|m| (m.to_string(), *m, false)).collect();
        if self.baseline {
            out.push((BASELINE_NAME.to_string(), Mask::ALL, true));
        }
        out
    }
}

/// Sigmas for every type at common level `sigma` (AOA given in degrees).
pub fn common_sigmas(n_anchors: usize, sigma: f64) -> NoiseSigmas {
    NoiseSigmas::uniform(n_anchors, sigma, sigma, sigma, sigma.to_radians())
}

/// One simulated trial, shared by every method.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub geometry: NetworkGeometry,
    pub measurements: MeasurementSet,
    /// Sigmas handed to the weights (true or calibrated, zeros replaced
    /// by one).
    pub weight_sigmas: NoiseSigmas,
    pub true_sigmas: NoiseSigmas,
    pub solver_seed: u64,
}

fn make_trial(cfg: &ExperimentConfig, p: &GridPoint, params: &RssParams, trial: u64) -> Result<TrialInstance> {
    let base = derive_seed(cfg.master_seed, &[trial]);
    let geometry = match cfg.dim {
        Dim::Three => generate_network(p.n_anchors, p.radius, derive_seed(base, &[0]))?,
        Dim::Two => generate_planar_network(p.n_anchors, p.radius, derive_seed(base, &[0]))?,
    };
    let true_sigmas = common_sigmas(p.n_anchors, p.sigma);
    let mut measurements = simulate_all(&geometry, params, &true_sigmas, derive_seed(base, &[1]))?;
    if p.nlos_paths > 0 && p.nlos_beta > 0.0 {
        let nlos = NlosConfig::new(p.nlos_beta, p.nlos_paths, derive_seed(base, &[2]))
            .with_angle_beta(p.nlos_beta.to_radians());
        measurements = inject_nlos(&measurements, p.n_anchors, &nlos)?;
    }
    let mut weight_sigmas = match cfg.calibration_k {
        Some(k) => calibrate_sigmas(&true_sigmas, k, derive_seed(base, &[4]))?,
        None => true_sigmas.clone(),
    };
    for list in [
        &mut weight_sigmas.rss,
        &mut weight_sigmas.toa,
        &mut weight_sigmas.tdoa,
        &mut weight_sigmas.aoa,
    ] {
        for s in list.iter_mut().filter(|s| **s <= 0.0) {
            *s = 1.0;
        }
    }
    Ok(TrialInstance {
        geometry,
        measurements,
        weight_sigmas,
        true_sigmas,
        solver_seed: derive_seed(base, &[3]),
    })
}

struct Outcome {
    error_m: Option<f64>,
    iterations: usize,
    ms: f64,
    failure: Option<String>,
}

impl TrialInstance {
    /// Weights a method with `mask` uses on this trial.
    pub fn weights(&self, mode: WeightMode, params: &RssParams, mask: Mask) -> Result<WeightSet> {
        let ranges = match mode {
            WeightMode::Oracle => Some(pairwise_distances(&self.geometry)),
            WeightMode::Estimated => estimated_ranges(&self.measurements, params, mask),
        };
        compute_weights(ranges.as_deref(), &self.weight_sigmas, mask, self.geometry.len())
    }

    /// Solver settings the harness uses on this trial.
    pub fn solver_config(&self, cfg: &ExperimentConfig, radius: f64) -> SolverConfig {
        SolverConfig {
            t_max: cfg.t_max,
            eps_c: cfg.eps_c,
            init: Init::Uniform { upper: radius / 4.0 },
            seed: self.solver_seed,
            ..SolverConfig::default()
        }
    }
}

fn run_method(
    cfg: &ExperimentConfig,
    t: &TrialInstance,
    params: &RssParams,
    radius: f64,
    mask: Mask,
    baseline: bool,
) -> Result<Outcome> {
    let g = &t.geometry;
    let w = t.weights(cfg.weights, params, mask)?;
    let start = cfg.timing.then(Instant::now);
    let result = if baseline {
        wls_solve(&t.measurements, g.anchors(), &w, params, g.dim()).map(|s| (s, 0))
    } else {
        let problem = Problem::new(g.anchors(), &t.measurements, &w, *params, g.dim())?;
        solve(&problem, &t.solver_config(cfg, radius)).map(|sol| (sol.estimate, sol.iterations))
    };
    let ms = start.map(|s| s.elapsed().as_secs_f64() * 1e3).unwrap_or(0.0);
    Ok(match result {
        Ok((s, iterations)) => Outcome {
            error_m: Some((s - g.source()).norm()),
            iterations,
            ms,
            failure: None,
        },
        Err(e) if e.is_config() => return Err(e),
        Err(e) => Outcome { error_m: None, iterations: 0, ms, failure: Some(e.to_string()) },
    })
}

/// Runs the full sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RmseReport> {
    cfg.validate()?;
    let params = cfg.rss_params()?;
    let grid = cfg.grid();
    let methods = cfg.method_list();
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|gi| (0..cfg.trials as u64).map(move |j| (gi, j)))
        .collect();

    // per job: one outcome per method plus one CRLB trace per method
    type JobResult = (Vec<Outcome>, Vec<Option<f64>>);
    let results: Vec<JobResult> = jobs
        .par_iter()
        .map(|&(gi, j)| -> Result<JobResult> {
            let p = cfg.at(grid[gi]);
            let t = make_trial(cfg, &p, &params, j)?;
            let outcomes = methods
                .iter()
                .map(|(_, mask, baseline)| run_method(cfg, &t, &params, p.radius, *mask, *baseline))
                .collect::<Result<Vec<_>>>()?;
            let traces = methods
                .iter()
                .map(|(_, mask, _)| {
                    if p.sigma <= 0.0 {
                        return Ok(None);
                    }
                    Ok(hybrid_crlb(*mask, &t.geometry, &t.true_sigmas, &params)?.trace_crlb)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((outcomes, traces))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for (gi, &value) in grid.iter().enumerate() {
        let chunk = &results[gi * cfg.trials..(gi + 1) * cfg.trials];
        for (mi, (name, _, _)) in methods.iter().enumerate() {
            let mut errors = Vec::new();
            let mut iters = 0usize;
            let mut ms = 0.0;
            let mut failures = 0usize;
            let mut trace_sum = 0.0;
            let mut trace_ok = true;
            for (j, (outcomes, traces)) in chunk.iter().enumerate() {
                let o = &outcomes[mi];
                match o.error_m {
                    Some(e) => {
                        errors.push(e);
                        iters += o.iterations;
                        ms += o.ms;
                    }
                    None => failures += 1,
                }
                match traces[mi] {
                    Some(tr) => trace_sum += tr,
                    None => trace_ok = false,
                }
                trials.push(TrialRecord {
                    method: name.clone(),
                    grid_index: gi,
                    trial: j,
                    error_m: o.error_m,
                    iterations: o.iterations,
                    ms: o.ms,
                    failure: o.failure.clone(),
                });
            }
            let ok = errors.len();
            rows.push(ReportRow {
                method: name.clone(),
                grid_var: cfg.sweep.name().to_string(),
                grid_value: value,
                rmse_m: rmse(&errors).ok(),
                crlb_rmse_m: trace_ok.then(|| (trace_sum / cfg.trials as f64).sqrt()),
                mean_iters: if ok > 0 { iters as f64 / ok as f64 } else { 0.0 },
                mean_ms: if ok > 0 { ms / ok as f64 } else { 0.0 },
                failures,
            });
        }
    }
    Ok(RmseReport {
        schema: SCHEMA.to_string(),
        config: cfg.clone(),
        rows,
        trials,
    })
}

/// Same trial the harness would generate for `(grid value, trial index)`.
pub fn trial_instance(cfg: &ExperimentConfig, grid_value: f64, trial: u64) -> Result<TrialInstance> {
    make_trial(cfg, &cfg.at(grid_value), &cfg.rss_params()?, trial)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sweep: SweepVar, grid: Vec<f64>, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            sweep,
            grid: Some(grid),
            methods: vec!["TDRA".parse().unwrap(), "T".parse().unwrap()],
            trials,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_noise_sweep_is_exact() {
        let mut cfg = small(SweepVar::Sigma, vec![0.0], 10);
        cfg.eps_c = 1e-10;
        let r = run_experiment(&cfg).unwrap();
        let row = r.rows.iter().find(|r| r.method == "TDRA").unwrap();
        assert!(row.rmse_m.unwrap() < 1e-4, "{row:?}");
        assert_eq!(row.crlb_rmse_m, None);
        assert_eq!(r.rows.len(), 3);
    }

    #[test]
    fn deterministic_and_parallel_invariant() {
        let cfg = small(SweepVar::Sigma, vec![0.5, 1.0], 8);
        let a = run_experiment(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_experiment(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(SweepVar::Sigma, vec![], 1);
        assert!(run_experiment(&cfg).is_err());
        cfg.grid = Some(vec![1.0]);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small(SweepVar::Anchors, vec![1.0], 1);
        assert!(cfg.validate().is_err());
        cfg.grid = Some(vec![4.5]);
        assert!(cfg.validate().is_err());
        let cfg = small(SweepVar::NlosPaths, vec![9.0], 1);
        assert!(cfg.validate().is_err());
        let mut cfg = small(SweepVar::Sigma, vec![1.0], 1);
        cfg.calibration_k = Some(10);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn recorded_errors_reproduce_rmse() {
        let cfg = small(SweepVar::Radius, vec![10.0, 50.0], 5);
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.trials.len(), 2 * 3 * 5);
        r.check_consistency().unwrap();
    }

    #[test]
    fn calibration_and_oracle_modes_run() {
        let mut cfg = small(SweepVar::NlosBeta, vec![0.0, 2.0], 3);
        cfg.nlos_paths = 2;
        cfg.calibration_k = Some(30);
        cfg.weights = WeightMode::Oracle;
        let r = run_experiment(&cfg).unwrap();
        assert!(r.rows.iter().all(|r| r.failures == 0 && r.rmse_m.is_some()));
    }

    #[test]
    fn config_defaults_from_partial_json() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"sweep": "anchors", "trials": 3}"#).unwrap();
        assert_eq!(cfg.grid(), SweepVar::Anchors.default_grid());
        assert_eq!(cfg.n_anchors, 8);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
