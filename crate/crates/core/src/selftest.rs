//! Quick invariant checks runnable from the command line. These are
//! smaller versions of the property tests and exist so an installed binary
//! can sanity-check itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::crlb::hybrid_crlb;
use crate::error::Result;
use crate::harness::{common_sigmas, run_experiment, trial_instance, ExperimentConfig, SweepVar, WeightMode};
use crate::mm::solver::solve;
use crate::mm::surrogate::{surrogate_aoa, surrogate_rss, surrogate_tdoa, surrogate_toa};
use crate::objective::{azimuth_normal, residual_aoa, residual_rss, residual_tdoa, residual_toa, Problem};
use crate::sim::bearing_of;
use crate::types::{generate_network, Bearing, Dim, Mask, Point, RssParams};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
    }
}

fn rand_point(rng: &mut ChaCha8Rng, scale: f64) -> Point {
    Point::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn majorization(samples: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = RssParams::default();
    let eta = p.eta();
    let mut worst_gap = f64::INFINITY;
    let mut worst_tangent: f64 = 0.0;
    for _ in 0..samples {
        let m = rand_point(&mut rng, 50.0);
        let m1 = rand_point(&mut rng, 50.0);
        let s = rand_point(&mut rng, 60.0);
        let s_t = rand_point(&mut rng, 60.0);
        let tau: f64 = rng.random_range(-20.0..80.0);
        let lambda: f64 = rng.random_range(0.005..0.5);
        let b = Bearing {
            azimuth: rng.random_range(-3.1..3.1),
            elevation: rng.random_range(0.0..std::f64::consts::PI),
            pole: false,
        };
        let anchors = [m1, m];
        let eval = |x: Point| -> Result<[f64; 4]> {
            Ok([
                residual_rss(x, &[m], &[lambda], &p)?[0],
                residual_toa(x, &[m], &[tau])?[0],
                residual_tdoa(x, &anchors, &[tau])?[0],
                residual_aoa(x, &[m], &[b], Dim::Three)?[0],
            ])
        };
        let g = [
            surrogate_rss(lambda, eta, m, s_t, 1e-9),
            surrogate_toa(tau, m, s_t, 1e-9),
            surrogate_tdoa(tau, m1, m, s_t, 1e-9).map(|x| x.0),
            surrogate_aoa(azimuth_normal(b.azimuth), b.elevation.cos(), m, s_t, 1e-9, Dim::Three).map(|x| x.0),
        ];
        let (fs, ft) = (eval(s)?, eval(s_t)?);
        for k in 0..4 {
            let Some(q) = g[k] else { continue };
            worst_gap = worst_gap.min(q.eval(s) - fs[k]);
            worst_tangent = worst_tangent.max((q.eval(s_t) - ft[k]).abs() / (1.0 + ft[k].abs()));
        }
    }
    Ok((
        worst_gap >= -1e-9 && worst_tangent <= 1e-9,
        format!("min g - f = {worst_gap:.3e}, max relative tangency error = {worst_tangent:.3e}"),
    ))
}

fn descent(per_mask: u64) -> Result<(bool, String)> {
    let cfg = ExperimentConfig { n_anchors: 5, radius: 50.0, ..Default::default() };
    let params = cfg.rss_params()?;
    let mut violations = 0;
    let mut solves = 0;
    for mask in Mask::all_methods() {
        for j in 0..per_mask {
            let t = trial_instance(&cfg, cfg.sigma, j)?;
            let w = t.weights(WeightMode::Estimated, &params, mask)?;
            let g = &t.geometry;
            let problem = Problem::new(g.anchors(), &t.measurements, &w, params, g.dim())?;
            let sol = solve(&problem, &t.solver_config(&cfg, cfg.radius))?;
            solves += 1;
            violations += sol.objective_trace.windows(2).filter(|f| f[1] > f[0] * (1.0 + 1e-9) + 1e-12).count();
        }
    }
    Ok((violations == 0, format!("{solves} solves, {violations} increasing steps")))
}

fn zero_noise(trials: u64) -> Result<(bool, String)> {
    let cfg = ExperimentConfig { n_anchors: 5, radius: 50.0, sigma: 0.0, eps_c: 1e-9, ..Default::default() };
    let params = cfg.rss_params()?;
    let mut hits = 0;
    for j in 0..trials {
        let t = trial_instance(&cfg, 0.0, j)?;
        let w = t.weights(WeightMode::Estimated, &params, Mask::ALL)?;
        let g = &t.geometry;
        let problem = Problem::new(g.anchors(), &t.measurements, &w, params, g.dim())?;
        let sol = solve(&problem, &t.solver_config(&cfg, cfg.radius))?;
        if (sol.estimate - g.source()).norm() < 1e-4 {
            hits += 1;
        }
    }
    Ok((hits as f64 >= 0.95 * trials as f64, format!("{hits}/{trials} within 1e-4 m")))
}

fn crlb_ordering(geometries: u64) -> Result<(bool, String)> {
    let p = RssParams::default();
    let mut bad = 0;
    for seed in 0..geometries {
        let g = generate_network(5, 50.0, seed)?;
        let sigma = common_sigmas(5, 1.0);
        let Some(full) = hybrid_crlb(Mask::ALL, &g, &sigma, &p)?.trace_crlb else {
            bad += 1;
            continue;
        };
        for mask in Mask::all_methods() {
            if let Some(tr) = hybrid_crlb(mask, &g, &sigma, &p)?.trace_crlb {
                if full > tr + 1e-12 {
                    bad += 1;
                }
            }
        }
    }
    Ok((bad == 0, format!("{geometries} geometries, {bad} ordering violations")))
}

fn determinism() -> Result<(bool, String)> {
    let cfg = ExperimentConfig {
        sweep: SweepVar::Sigma,
        grid: Some(vec![0.5, 2.0]),
        methods: vec![Mask::ALL, "TA".parse()?],
        trials: 4,
        ..Default::default()
    };
    let a = run_experiment(&cfg)?;
    let b = run_experiment(&cfg)?;
    let same_csv = a.to_csv() == b.to_csv();
    let round_trip = crate::harness::RmseReport::from_json(&a.to_json()?)? == a;
    Ok((same_csv && round_trip, format!("identical CSV: {same_csv}, JSON round trip: {round_trip}")))
}

fn bearing_round_trip() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rand_point(&mut rng, 50.0);
        let s = rand_point(&mut rng, 50.0);
        let b = bearing_of(s, m).expect("distinct points");
        let r = residual_aoa(s, &[m], &[b], Dim::Three)?[0];
        worst = worst.max(r);
    }
    Ok((worst < 1e-12, format!("max noiseless AOA residual {worst:.3e}")))
}

/// Runs every suite. `quick` shrinks the sample counts.
pub fn run_all(quick: bool) -> Vec<CheckResult> {
    let scale = if quick { 1 } else { 5 };
    vec![
        check("majorization", || majorization(2000 * scale)),
        check("monotone-descent", || descent(4 * scale as u64)),
        check("zero-noise", || zero_noise(20 * scale as u64)),
        check("crlb-ordering", || crlb_ordering(20 * scale as u64)),
        check("aoa-noiseless", bearing_round_trip),
        check("determinism", determinism),
    ]
}
