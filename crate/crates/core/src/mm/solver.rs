use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mm::surrogate::{
    surrogate_aoa, surrogate_rss, surrogate_tdoa, surrogate_toa, AoaAux, DiagQuadratic, TdoaAux,
};
use crate::objective::Problem;
use crate::seed::derive_seed;
use crate::types::{uniform_box, MeasurementKind, Point, COINCIDENCE_TOL};

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Each coordinate drawn from `Uniform(0, upper)`.
    Uniform { upper: f64 },
    Point(Point),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub t_max: usize,
    /// Stop once `‖s_{t+1} − s_t‖ / ‖s_t‖ < eps_c`.
    pub eps_c: f64,
    /// Minimum allowed distance between an iterate and any anchor, meters.
    pub guard_eps: f64,
    pub init: Init,
    pub seed: u64,
}

impl SolverConfig {
    /// Defaults for a deployment of radius `radius`: `Uniform(0, R/4)` start.
    pub fn for_radius(radius: f64, seed: u64) -> Self {
        Self {
            init: Init::Uniform { upper: radius / 4.0 },
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max < 1 {
            return Err(Error::InvalidConfig("t_max must be >= 1".into()));
        }
        if !(self.eps_c > 0.0) {
            return Err(Error::InvalidConfig("eps_c must be > 0".into()));
        }
        if !(self.guard_eps > 0.0) {
            return Err(Error::InvalidConfig("guard_eps must be > 0".into()));
        }
        match self.init {
            Init::Uniform { upper } if !(upper > 0.0 && upper.is_finite()) => {
                Err(Error::InvalidConfig("uniform init bound must be > 0".into()))
            }
            Init::Point(p) if !p.iter().all(|v| v.is_finite()) => {
                Err(Error::InvalidConfig("initial point is not finite".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_max: 1000,
            eps_c: 1e-3,
            guard_eps: 1e-6,
            init: Init::Uniform { upper: 12.5 },
            seed: 0,
        }
    }
}

/// Auxiliary quantities of one MM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MmState {
    pub s_t: Point,
    pub iter: usize,
    /// Unit directions `(s_t − m_i)/‖s_t − m_i‖`.
    pub directions: Vec<Point>,
    /// Per TDOA entry (`i = 2..N`); empty when TDOA is inactive.
    pub tdoa: Vec<TdoaAux>,
    /// Per anchor; empty when AOA is inactive.
    pub aoa: Vec<AoaAux>,
    pub z: f64,
    pub z_tilde: f64,
    pub y: Point,
}

fn degenerate(problem: &Problem<'_>, s_t: Point, guard: f64) -> Error {
    let (anchor, distance) = problem
        .anchors
        .iter()
        .map(|m| (s_t - m).norm())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    Error::Degenerate { anchor, distance, guard }
}

/// Weighted surrogate contribution of a single measurement type at `s_t`.
pub fn assemble_kind(
    problem: &Problem<'_>,
    kind: MeasurementKind,
    s_t: Point,
    guard: f64,
) -> Result<(DiagQuadratic, Vec<TdoaAux>, Vec<AoaAux>)> {
    let mut total = DiagQuadratic::default();
    let mut tdoa_aux = Vec::new();
    let mut aoa_aux = Vec::new();
    if !problem.mask().contains(kind) {
        return Ok((total, tdoa_aux, aoa_aux));
    }
    let anchors = problem.anchors;
    let w = problem.weights.for_kind(kind);
    let fail = || degenerate(problem, s_t, guard);
    match kind {
        MeasurementKind::Rss => {
            let eta = problem.rss.eta();
            for ((m, lam), wi) in anchors.iter().zip(problem.lambdas()).zip(w) {
                total += surrogate_rss(*lam, eta, *m, s_t, guard).ok_or_else(fail)?.scaled(*wi);
            }
        }
        MeasurementKind::Toa => {
            let toa = problem.data.toa.as_deref().unwrap_or_default();
            for ((m, tau), wi) in anchors.iter().zip(toa).zip(w) {
                total += surrogate_toa(*tau, *m, s_t, guard).ok_or_else(fail)?.scaled(*wi);
            }
        }
        MeasurementKind::Tdoa => {
            let tdoa = problem.data.tdoa.as_deref().unwrap_or_default();
            for ((mi, tau), wi) in anchors[1..].iter().zip(tdoa).zip(w) {
                let (g, aux) = surrogate_tdoa(*tau, anchors[0], *mi, s_t, guard).ok_or_else(fail)?;
                total += g.scaled(*wi);
                tdoa_aux.push(aux);
            }
        }
        MeasurementKind::Aoa => {
            for (((m, c), cos_el), wi) in anchors
                .iter()
                .zip(&problem.normals)
                .zip(&problem.cos_elev)
                .zip(w)
            {
                let (g, aux) =
                    surrogate_aoa(*c, *cos_el, *m, s_t, guard, problem.dim).ok_or_else(fail)?;
                total += g.scaled(*wi);
                aoa_aux.push(aux);
            }
        }
    }
    Ok((total, tdoa_aux, aoa_aux))
}

/// Builds the full surrogate `g(·|s_t)` over the active mask.
pub fn assemble(problem: &Problem<'_>, s_t: Point, guard: f64) -> Result<(DiagQuadratic, MmState)> {
    let mut total = DiagQuadratic::default();
    let mut tdoa = Vec::new();
    let mut aoa = Vec::new();
    for kind in problem.mask().kinds() {
        let (g, t, a) = assemble_kind(problem, kind, s_t, guard)?;
        total += g;
        tdoa.extend(t);
        aoa.extend(a);
    }
    let directions = problem
        .anchors
        .iter()
        .map(|m| {
            let e = s_t - m;
            e / e.norm()
        })
        .collect();
    let state = MmState {
        s_t,
        iter: 0,
        directions,
        tdoa,
        aoa,
        z: total.curvature,
        z_tilde: total.vertical,
        y: total.linear,
    };
    Ok((total, state))
}

/// One MM update: minimise the surrogate built at `s_t`.
pub fn mm_step(problem: &Problem<'_>, s_t: Point, guard: f64) -> Result<(Point, MmState)> {
    let (g, state) = assemble(problem, s_t, guard)?;
    let next = g.minimizer(problem.dim).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "surrogate is not strictly convex (z = {}, z + z~ = {}); are all weights zero?",
            g.curvature,
            g.curvature + g.vertical
        ))
    })?;
    Ok((next, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub estimate: Point,
    pub initial: Point,
    /// Objective at `s_0, s_1, …`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Whether the first start hit the anchor guard and was redrawn.
    pub reinitialized: bool,
}

impl Solution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

fn initial_point(cfg: &SolverConfig, problem: &Problem<'_>, attempt: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[attempt]));
    match (cfg.init, attempt) {
        (Init::Point(p), 0) => p,
        (Init::Point(p), _) => p + uniform_box(&mut rng, 2.0, problem.dim) - Point::new(1.0, 1.0, 1.0),
        (Init::Uniform { upper }, _) => uniform_box(&mut rng, upper, problem.dim),
    }
}

fn run_from(problem: &Problem<'_>, cfg: &SolverConfig, start: Point) -> Result<Solution> {
    let guard = cfg.guard_eps;
    let mut s = start;
    if let Some(i) = problem.anchors.iter().position(|m| (s - m).norm() <= guard) {
        return Err(Error::Degenerate { anchor: i, distance: (s - problem.anchors[i]).norm(), guard });
    }
    let mut trace = vec![problem.objective(s)?];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    while iterations < cfg.t_max {
        let (next, _) = mm_step(problem, s, guard)?;
        let f_next = problem.objective(next).map_err(|_| degenerate(problem, next, COINCIDENCE_TOL))?;
        let step = (next - s).norm() / s.norm().max(guard);
        s = next;
        iterations += 1;
        trace.push(f_next);
        if step < cfg.eps_c {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(Solution {
        estimate: s,
        initial: start,
        objective_trace: trace,
        iterations,
        termination,
        reinitialized: false,
    })
}

/// Runs the MM iteration to convergence or `t_max`.
///
/// If an iterate falls within `guard_eps` of an anchor the solve restarts
/// once from a fresh seeded start; a second failure is returned as an
/// error.
pub fn solve(problem: &Problem<'_>, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let first = initial_point(cfg, problem, 0);
    match run_from(problem, cfg, first) {
        Err(Error::Degenerate { anchor, distance, .. }) => {
            log::debug!("iterate hit anchor {anchor} ({distance:e} m); restarting");
            let retry = initial_point(cfg, problem, 1);
            match run_from(problem, cfg, retry) {
                Ok(mut sol) => {
                    sol.reinitialized = true;
                    Ok(sol)
                }
                Err(Error::Degenerate { anchor, distance, guard }) => Err(Error::SolverFailure(format!(
                    "iterate came within {distance:e} m of anchor {anchor} (guard {guard:e} m) after restart"
                ))),
                Err(e) => Err(e),
            }
        }
        other => other,
    }
}
