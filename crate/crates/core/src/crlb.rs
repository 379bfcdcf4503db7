//! Fisher information and Cramér–Rao bounds for the exact (non-linearised)
//! measurement models.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::bearing_of;
use crate::types::{Mask, MeasurementKind, NetworkGeometry, NoiseSigmas, Point, RssParams, COINCIDENCE_TOL};

/// Hybrid FIMs with a condition number above this are reported as
/// unidentifiable.
pub const MAX_CONDITION: f64 = 1e12;

/// Minimum horizontal distance for a usable azimuth row.
pub const AZIMUTH_GUARD: f64 = 1e-9;

/// Scalar observation families. AOA contributes two: azimuth and elevation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrlbKind {
    Toa,
    Tdoa,
    Rss,
    AoaAzimuth,
    AoaElevation,
}

impl CrlbKind {
    /// Observation families a measurement mask expands to.
    pub fn expand(mask: Mask, planar: bool) -> Vec<CrlbKind> {
        let mut out = Vec::new();
        for kind in mask.kinds() {
            match kind {
                MeasurementKind::Toa => out.push(CrlbKind::Toa),
                MeasurementKind::Tdoa => out.push(CrlbKind::Tdoa),
                MeasurementKind::Rss => out.push(CrlbKind::Rss),
                MeasurementKind::Aoa => {
                    out.push(CrlbKind::AoaAzimuth);
                    if !planar {
                        out.push(CrlbKind::AoaElevation);
                    }
                }
            }
        }
        out
    }

    pub fn measurement(self) -> MeasurementKind {
        match self {
            CrlbKind::Toa => MeasurementKind::Toa,
            CrlbKind::Tdoa => MeasurementKind::Tdoa,
            CrlbKind::Rss => MeasurementKind::Rss,
            CrlbKind::AoaAzimuth | CrlbKind::AoaElevation => MeasurementKind::Aoa,
        }
    }
}

fn cols(g: &NetworkGeometry) -> usize {
    if g.dim().is_planar() {
        2
    } else {
        3
    }
}

fn offset(g: &NetworkGeometry, i: usize) -> Result<(Point, f64)> {
    let v = g.source() - g.anchors()[i];
    let d = v.norm();
    if d <= COINCIDENCE_TOL {
        return Err(Error::Degenerate { anchor: i, distance: d, guard: COINCIDENCE_TOL });
    }
    Ok((v, d))
}

/// Jacobian of the noiseless measurement function of `kind` at the true
/// source, one row per scalar observation (`N − 1` rows for TDOA).
/// Columns are `x, y[, z]`.
pub fn jacobian(kind: CrlbKind, g: &NetworkGeometry, p: &RssParams) -> Result<DMatrix<f64>> {
    let n = g.len();
    let c = cols(g);
    let mut rows: Vec<Point> = Vec::with_capacity(n);
    match kind {
        CrlbKind::Toa => {
            for i in 0..n {
                let (v, d) = offset(g, i)?;
                rows.push(v / d);
            }
        }
        CrlbKind::Tdoa => {
            let (v1, d1) = offset(g, 0)?;
            for i in 1..n {
                let (v, d) = offset(g, i)?;
                rows.push(v / d - v1 / d1);
            }
        }
        CrlbKind::Rss => {
            let eta = p.eta();
            for i in 0..n {
                let (v, d) = offset(g, i)?;
                rows.push(v * (eta / (d * d)));
            }
        }
        CrlbKind::AoaAzimuth => {
            for i in 0..n {
                let (v, _) = offset(g, i)?;
                let dxy = v.x.hypot(v.y);
                if dxy <= AZIMUTH_GUARD {
                    return Err(Error::Degenerate { anchor: i, distance: dxy, guard: AZIMUTH_GUARD });
                }
                rows.push(Point::new(-v.y, v.x, 0.0) / (dxy * dxy));
            }
        }
        CrlbKind::AoaElevation => {
            if g.dim().is_planar() {
                return Err(Error::InvalidConfig("elevation is undefined for planar geometry".into()));
            }
            for i in 0..n {
                let (_, d) = offset(g, i)?;
                let b = bearing_of(g.source(), g.anchors()[i]).expect("non-coincident");
                let (st, ct) = b.elevation.sin_cos();
                let (sp, cp) = b.azimuth.sin_cos();
                rows.push(Point::new(cp * ct, sp * ct, -st) / d);
            }
        }
    }
    Ok(DMatrix::from_fn(rows.len(), c, |r, k| rows[r][k]))
}

/// `Jᵀ Σ⁻¹ J` with diagonal `Σ`.
pub fn fim(kind: CrlbKind, g: &NetworkGeometry, sigma: &NoiseSigmas, p: &RssParams) -> Result<DMatrix<f64>> {
    let j = jacobian(kind, g, p)?;
    let sig = sigma.for_kind(kind.measurement());
    if sig.len() != j.nrows() {
        return Err(Error::InvalidMeasurements(format!(
            "{} sigma list has {} entries, expected {}",
            kind.measurement(),
            sig.len(),
            j.nrows()
        )));
    }
    if let Some(anchor) = sig.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::ZeroSigma { kind: kind.measurement(), anchor });
    }
    let mut scaled = j.clone();
    for (mut row, s) in scaled.row_iter_mut().zip(sig) {
        row /= s * s;
    }
    let f = j.transpose() * scaled;
    // remove round-off asymmetry
    Ok((&f + f.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbReport {
    pub mask: Mask,
    pub fim_by_type: BTreeMap<CrlbKind, DMatrix<f64>>,
    pub fim_hybrid: DMatrix<f64>,
    pub condition_number: f64,
    /// `None` when the hybrid FIM is unidentifiable.
    pub crlb: Option<DMatrix<f64>>,
    /// m².
    pub trace_crlb: Option<f64>,
    /// `sqrt(trace)`, meters.
    pub rmse_bound: Option<f64>,
}

impl CrlbReport {
    pub fn identifiable(&self) -> bool {
        self.crlb.is_some()
    }
}

/// Condition number of a symmetric matrix; infinite when it is not
/// positive definite.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Hybrid FIM over `mask` and its inverse. A near-singular FIM is an
/// ordinary result with the bound fields left empty.
pub fn hybrid_crlb(mask: Mask, g: &NetworkGeometry, sigma: &NoiseSigmas, p: &RssParams) -> Result<CrlbReport> {
    mask.validate_for(g.len())?;
    crlb_for_kinds(mask, &CrlbKind::expand(mask, g.dim().is_planar()), g, sigma, p)
}

/// Same as [`hybrid_crlb`] over an explicit list of observation families,
/// e.g. azimuth without elevation.
pub fn crlb_for_kinds(
    mask: Mask,
    kinds: &[CrlbKind],
    g: &NetworkGeometry,
    sigma: &NoiseSigmas,
    p: &RssParams,
) -> Result<CrlbReport> {
    let c = cols(g);
    let mut fim_by_type = BTreeMap::new();
    let mut total = DMatrix::zeros(c, c);
    for &kind in kinds {
        let f = fim(kind, g, sigma, p)?;
        total += &f;
        fim_by_type.insert(kind, f);
    }
    let condition_number = condition_number(&total);
    let crlb = if condition_number <= MAX_CONDITION {
        total.clone().cholesky().map(|ch| ch.inverse())
    } else {
        None
    };
    let trace_crlb = crlb.as_ref().map(|m| m.trace());
    Ok(CrlbReport {
        mask,
        fim_by_type,
        fim_hybrid: total,
        condition_number,
        crlb,
        trace_crlb,
        rmse_bound: trace_crlb.map(f64::sqrt),
    })
}
