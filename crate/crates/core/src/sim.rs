//! Synthetic measurement generation, plus NLOS contamination.
//!
//! Every generator is a pure function of its inputs and seed. Noise is drawn
//! as `σ·z` with `z` standard normal, so runs that differ only in `σ` share
//! the same underlying draws.

use std::f64::consts::PI;

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::types::{
    pairwise_distances, wrap_angle, Bearing, Mask, MeasurementKind, MeasurementSet,
    NetworkGeometry, NoiseSigmas, Point, RssParams,
};

fn check_sigma_len(name: &str, sigma: &[f64], want: usize) -> Result<()> {
    if sigma.len() != want {
        return Err(Error::InvalidMeasurements(format!(
            "{name} sigma list has {} entries, expected {want}",
            sigma.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidMeasurements(format!("{name} sigma {s} must be >= 0")));
    }
    Ok(())
}

/// `L_i = L0 + 10 γ log10(d_i) + n_i`.
pub fn simulate_rss(
    g: &NetworkGeometry,
    p: &RssParams,
    sigma_rss: &[f64],
    rng_seed: u64,
) -> Result<Vec<f64>> {
    check_sigma_len("RSS", sigma_rss, g.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let d = pairwise_distances(g);
    if let Some((i, di)) = d.iter().enumerate().find(|(_, di)| **di < 1.0) {
        warn!("anchor {i} is {di:.3} m from the source, inside the 1 m reference distance");
    }
    Ok(d.iter()
        .zip(sigma_rss)
        .map(|(di, s)| {
            let z: f64 = rng.sample(StandardNormal);
            p.l0() + 10.0 * p.gamma() * di.log10() + s * z
        })
        .collect())
}

/// `τ_i = d_i + n_i` (range-scaled time of arrival).
pub fn simulate_toa(g: &NetworkGeometry, sigma_toa: &[f64], rng_seed: u64) -> Result<Vec<f64>> {
    check_sigma_len("TOA", sigma_toa, g.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(pairwise_distances(g)
        .iter()
        .zip(sigma_toa)
        .map(|(di, s)| {
            let z: f64 = rng.sample(StandardNormal);
            di + s * z
        })
        .collect())
}

/// `τ_1i = d_i − d_1 + n_i` for `i = 2..N`, noise independent of TOA.
pub fn simulate_tdoa(g: &NetworkGeometry, sigma_tdoa: &[f64], rng_seed: u64) -> Result<Vec<f64>> {
    if g.len() < 2 {
        return Err(Error::InvalidGeometry("TDOA needs at least 2 anchors".into()));
    }
    check_sigma_len("TDOA", sigma_tdoa, g.len() - 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let d = pairwise_distances(g);
    Ok(d[1..]
        .iter()
        .zip(sigma_tdoa)
        .map(|(di, s)| {
            let z: f64 = rng.sample(StandardNormal);
            di - d[0] + s * z
        })
        .collect())
}

/// Noiseless azimuth/elevation of `s` seen from `m`. Returns `None` when
/// the points coincide.
pub fn bearing_of(s: Point, m: Point) -> Option<Bearing> {
    let v = s - m;
    let d = v.norm();
    if d == 0.0 {
        return None;
    }
    let horiz = v.x.hypot(v.y);
    let pole = horiz <= 1e-12 * d;
    let azimuth = if pole { 0.0 } else { wrap_angle(v.y.atan2(v.x)) };
    let elevation = (v.z / d).clamp(-1.0, 1.0).acos();
    Some(Bearing { azimuth, elevation, pole })
}

/// Full-quadrant azimuth and polar elevation with one σ per anchor shared
/// by both angles. Azimuth is wrapped to `(−π, π]`, elevation clamped to
/// `[0, π]`.
pub fn simulate_aoa(g: &NetworkGeometry, sigma_aoa: &[f64], rng_seed: u64) -> Result<Vec<Bearing>> {
    check_sigma_len("AOA", sigma_aoa, g.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let s = g.source();
    g.anchors()
        .iter()
        .zip(sigma_aoa)
        .enumerate()
        .map(|(i, (m, sig))| {
            let b = bearing_of(s, *m).ok_or_else(|| {
                Error::InvalidGeometry(format!("source coincides with anchor {i}"))
            })?;
            let za: f64 = rng.sample(StandardNormal);
            let ze: f64 = rng.sample(StandardNormal);
            Ok(Bearing {
                azimuth: wrap_angle(b.azimuth + sig * za),
                elevation: (b.elevation + sig * ze).clamp(0.0, PI),
                pole: b.pole,
            })
        })
        .collect()
}

/// Simulates every measurement type at once. Each type draws from its own
/// seed stream derived from `rng_seed`.
pub fn simulate_all(
    g: &NetworkGeometry,
    p: &RssParams,
    sigma: &NoiseSigmas,
    rng_seed: u64,
) -> Result<MeasurementSet> {
    let m = MeasurementSet {
        rss: Some(simulate_rss(g, p, &sigma.rss, derive_seed(rng_seed, &[0]))?),
        toa: Some(simulate_toa(g, &sigma.toa, derive_seed(rng_seed, &[1]))?),
        tdoa: Some(simulate_tdoa(g, &sigma.tdoa, derive_seed(rng_seed, &[2]))?),
        aoa: Some(simulate_aoa(g, &sigma.aoa, derive_seed(rng_seed, &[3]))?),
        sigma: sigma.clone(),
        mask: Mask::ALL,
    };
    m.validate(g.len())?;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlosConfig {
    /// Upper bound of the positive bias on range-type data (m for TOA/TDOA,
    /// dB for RSS).
    pub beta: f64,
    /// Upper bound of the positive bias on angles, radians.
    pub beta_angle: f64,
    /// Number of NLOS anchors.
    pub n_paths: usize,
    pub rng_seed: u64,
}

impl NlosConfig {
    /// Same bound for every measurement type.
    pub fn new(beta: f64, n_paths: usize, rng_seed: u64) -> Self {
        Self { beta, beta_angle: beta, n_paths, rng_seed }
    }

    pub fn with_angle_beta(mut self, beta_angle: f64) -> Self {
        self.beta_angle = beta_angle;
        self
    }
}

/// Adds `Uniform(0, β)` bias to every active measurement of `n_paths`
/// randomly chosen anchors. TDOA entry `i` belongs to anchor `i`; the
/// reference anchor has no TDOA entry of its own.
pub fn inject_nlos(m: &MeasurementSet, n_anchors: usize, cfg: &NlosConfig) -> Result<MeasurementSet> {
    if cfg.n_paths > n_anchors {
        return Err(Error::InvalidConfig(format!(
            "{} NLOS paths requested for {n_anchors} anchors",
            cfg.n_paths
        )));
    }
    if !(cfg.beta >= 0.0 && cfg.beta_angle >= 0.0) {
        return Err(Error::InvalidConfig("NLOS bias bound must be >= 0".into()));
    }
    let mut out = m.clone();
    if cfg.n_paths == 0 || (cfg.beta == 0.0 && cfg.beta_angle == 0.0) {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut chosen = index::sample(&mut rng, n_anchors, cfg.n_paths).into_vec();
    chosen.sort_unstable();

    for i in chosen {
        let bias = |rng: &mut ChaCha8Rng, bound: f64| rng.random::<f64>() * bound;
        let b_toa = bias(&mut rng, cfg.beta);
        let b_tdoa = bias(&mut rng, cfg.beta);
        let b_rss = bias(&mut rng, cfg.beta);
        let b_az = bias(&mut rng, cfg.beta_angle);
        let b_el = bias(&mut rng, cfg.beta_angle);

        if m.mask.contains(MeasurementKind::Toa) {
            if let Some(v) = out.toa.as_mut() {
                v[i] += b_toa;
            }
        }
        if m.mask.contains(MeasurementKind::Tdoa) && i > 0 {
            if let Some(v) = out.tdoa.as_mut() {
                v[i - 1] += b_tdoa;
            }
        }
        if m.mask.contains(MeasurementKind::Rss) {
            if let Some(v) = out.rss.as_mut() {
                v[i] += b_rss;
            }
        }
        if m.mask.contains(MeasurementKind::Aoa) {
            if let Some(v) = out.aoa.as_mut() {
                v[i].azimuth = wrap_angle(v[i].azimuth + b_az);
                v[i].elevation = (v[i].elevation + b_el).clamp(0.0, PI);
            }
        }
    }
    Ok(out)
}

/// Unbiased sample standard deviation (`n − 1` denominator).
pub fn sample_std(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples for a variance".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Estimates every per-anchor σ from `k` repeated calibration draws with
/// the true σ.
pub fn calibrate_sigmas(truth: &NoiseSigmas, k: usize, rng_seed: u64) -> Result<NoiseSigmas> {
    if k < 30 {
        return Err(Error::InvalidConfig(format!(
            "calibration needs at least 30 repeats, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut est = |sig: &[f64]| -> Result<Vec<f64>> {
        sig.iter()
            .map(|s| {
                let draws: Vec<f64> = (0..k)
                    .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                sample_std(&draws)
            })
            .collect()
    };
    Ok(NoiseSigmas {
        rss: est(&truth.rss)?,
        toa: est(&truth.toa)?,
        tdoa: est(&truth.tdoa)?,
        aoa: est(&truth.aoa)?,
    })
}
