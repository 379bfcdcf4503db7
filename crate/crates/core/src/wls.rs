//! One-shot weighted linear least squares over the pseudo-linear forms of
//! each measurement type. Used as the comparison baseline.
//!
//! Unknowns are `[s, ‖s‖², r_1]` where `r_1 = ‖s − m_1‖`. Columns that no
//! active row touches are dropped before solving.
//!
//! * TOA / RSS: `‖s‖² − 2 m_iᵀ s = d̂_i² − ‖m_i‖²` with `d̂_i = τ_i` or `1/λ_i`.
//! * TDOA: `−2 (m_i − m_1)ᵀ s − 2 τ_1i r_1 = τ_1i² − ‖m_i‖² + ‖m_1‖²`, plus
//!   `r_1 = d̂_1` when a range to the reference anchor is available.
//! * Azimuth: `c_iᵀ s = c_iᵀ m_i`.
//! * Elevation: `s_z = m_z + d̂_i cos θ_i` when a range estimate exists,
//!   otherwise the range-free form
//!   `cos θ [cos φ, sin φ, 0]ᵀ (s − m) − sin θ (s_z − m_z) = 0`.
//!
//! Each row carries the weight of the measurement it came from.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objective::{azimuth_normal, lambda_of, WeightSet};
use crate::types::{validate_anchors, Dim, MeasurementKind, MeasurementSet, Point, RssParams};

const COL_SQNORM: usize = 3;
const COL_R1: usize = 4;

/// Relative singular-value threshold below which the system is rank
/// deficient.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub weights: DVector<f64>,
    /// Which of `[x, y, z, ‖s‖², r_1]` each column of `a` holds.
    pub columns: Vec<usize>,
}

impl LinearSystem {
    /// Weighted normal-equations minimiser of `‖W^{1/2}(A x − b)‖²`.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let (rows, cols) = self.a.shape();
        if rows < cols {
            return Err(Error::RankDeficient { rows, cols });
        }
        let mut wa = self.a.clone();
        let mut wb = self.b.clone();
        for r in 0..rows {
            let sw = self.weights[r].sqrt();
            wa.row_mut(r).scale_mut(sw);
            wb[r] *= sw;
        }
        let svd = wa.svd(true, true);
        let max = svd.singular_values.max();
        if !(max > 0.0) || svd.singular_values.min() <= RANK_TOL * max {
            return Err(Error::RankDeficient { rows, cols });
        }
        svd.solve(&wb, 0.0).map_err(|e| Error::SolverFailure(e.to_string()))
    }
}

struct Row {
    coef: [f64; 5],
    rhs: f64,
    weight: f64,
}

fn range_estimates(m: &MeasurementSet, mask_has: impl Fn(MeasurementKind) -> bool, p: &RssParams) -> Option<Vec<f64>> {
    if mask_has(MeasurementKind::Toa) {
        return m.toa.clone();
    }
    if mask_has(MeasurementKind::Rss) {
        return m.rss.as_ref().map(|l| l.iter().map(|li| 1.0 / lambda_of(*li, p)).collect());
    }
    None
}

/// Builds the stacked pseudo-linear system for the active mask of `w`.
pub fn build_system(
    m: &MeasurementSet,
    anchors: &[Point],
    w: &WeightSet,
    p: &RssParams,
    dim: Dim,
) -> Result<LinearSystem> {
    validate_anchors(anchors, dim)?;
    let n = anchors.len();
    let mask = w.mask;
    mask.validate_for(n)?;
    m.with_mask(mask)?.validate(n)?;
    let has = |k: MeasurementKind| mask.contains(k);
    let mut rows: Vec<Row> = Vec::new();

    let range_rows = |ranges: &[f64], weights: &[f64], rows: &mut Vec<Row>| {
        for ((mi, d), wi) in anchors.iter().zip(ranges).zip(weights) {
            rows.push(Row {
                coef: [-2.0 * mi.x, -2.0 * mi.y, -2.0 * mi.z, 1.0, 0.0],
                rhs: d * d - mi.norm_squared(),
                weight: *wi,
            });
        }
    };
    if has(MeasurementKind::Toa) {
        range_rows(m.toa.as_deref().unwrap_or_default(), &w.toa, &mut rows);
    }
    if has(MeasurementKind::Rss) {
        let ranges: Vec<f64> = m
            .rss
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|l| 1.0 / lambda_of(*l, p))
            .collect();
        range_rows(&ranges, &w.rss, &mut rows);
    }
    let ranges = range_estimates(m, has, p);

    if has(MeasurementKind::Tdoa) {
        let m1 = anchors[0];
        for ((mi, tau), wi) in anchors[1..].iter().zip(m.tdoa.as_deref().unwrap_or_default()).zip(&w.tdoa) {
            let dm = mi - m1;
            rows.push(Row {
                coef: [-2.0 * dm.x, -2.0 * dm.y, -2.0 * dm.z, 0.0, -2.0 * tau],
                rhs: tau * tau - mi.norm_squared() + m1.norm_squared(),
                weight: *wi,
            });
        }
        if let Some(r) = &ranges {
            let weight = if has(MeasurementKind::Toa) { w.toa[0] } else { w.rss[0] };
            rows.push(Row { coef: [0.0, 0.0, 0.0, 0.0, 1.0], rhs: r[0], weight });
        }
    }

    if has(MeasurementKind::Aoa) {
        let aoa = m.aoa.as_deref().unwrap_or_default();
        for (i, ((mi, b), wi)) in anchors.iter().zip(aoa).zip(&w.aoa).enumerate() {
            let c = azimuth_normal(b.azimuth);
            rows.push(Row { coef: [c.x, c.y, c.z, 0.0, 0.0], rhs: c.dot(mi), weight: *wi });
            if dim.is_planar() {
                continue;
            }
            let (st, ct) = b.elevation.sin_cos();
            match &ranges {
                Some(r) => rows.push(Row {
                    coef: [0.0, 0.0, 1.0, 0.0, 0.0],
                    rhs: mi.z + r[i] * ct,
                    weight: *wi,
                }),
                None => {
                    let (sp, cp) = b.azimuth.sin_cos();
                    let h = Point::new(ct * cp, ct * sp, -st);
                    rows.push(Row { coef: [h.x, h.y, h.z, 0.0, 0.0], rhs: h.dot(mi), weight: *wi });
                }
            }
        }
    }

    let spatial = if dim.is_planar() { 2 } else { 3 };
    let columns: Vec<usize> = (0..spatial)
        .chain([COL_SQNORM, COL_R1])
        .filter(|&c| c < spatial || rows.iter().any(|r| r.coef[c] != 0.0))
        .collect();
    let a = DMatrix::from_fn(rows.len(), columns.len(), |r, k| rows[r].coef[columns[k]]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.rhs));
    let weights = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.weight));
    Ok(LinearSystem { a, b, weights, columns })
}

/// Position estimate from the one-shot weighted linear system.
pub fn wls_solve(
    m: &MeasurementSet,
    anchors: &[Point],
    w: &WeightSet,
    p: &RssParams,
    dim: Dim,
) -> Result<Point> {
    let sys = build_system(m, anchors, w, p, dim)?;
    let x = sys.solve()?;
    let mut s = Point::zeros();
    for (k, &c) in sys.columns.iter().enumerate() {
        if c < 3 {
            s[c] = x[k];
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::compute_weights;
    use crate::sim::simulate_all;
    use crate::types::{generate_network, generate_planar_network, pairwise_distances, Mask, NoiseSigmas};

    fn zero_noise(n: usize, seed: u64, planar: bool) -> (crate::types::NetworkGeometry, MeasurementSet) {
        let g = if planar {
            generate_planar_network(n, 50.0, seed).unwrap()
        } else {
            generate_network(n, 50.0, seed).unwrap()
        };
        let m = simulate_all(&g, &RssParams::default(), &NoiseSigmas::uniform(n, 0.0, 0.0, 0.0, 0.0), seed).unwrap();
        (g, m)
    }

    fn unit_weights(g: &crate::types::NetworkGeometry, mask: Mask) -> WeightSet {
        let n = g.len();
        compute_weights(Some(&pairwise_distances(g)), &NoiseSigmas::uniform(n, 1.0, 1.0, 1.0, 1.0), mask, n).unwrap()
    }

    #[test]
    fn zero_noise_recovers_source() {
        let p = RssParams::default();
        for seed in 0..50 {
            let (g, m) = zero_noise(8, seed, false);
            for mask in [Mask::ALL, "T".parse().unwrap(), "DA".parse().unwrap(), "RA".parse().unwrap(), "A".parse().unwrap()] {
                let w = unit_weights(&g, mask);
                let s = wls_solve(&m, g.anchors(), &w, &p, g.dim()).unwrap();
                assert!((s - g.source()).norm() < 1e-6, "{mask} seed {seed}: {}", (s - g.source()).norm());
            }
        }
    }

    #[test]
    fn planar_recovery() {
        let p = RssParams::default();
        let (g, m) = zero_noise(6, 11, true);
        let w = unit_weights(&g, Mask::ALL);
        let s = wls_solve(&m, g.anchors(), &w, &p, g.dim()).unwrap();
        assert!((s - g.source()).norm() < 1e-6);
        assert_eq!(s.z, 0.0);
    }

    #[test]
    fn unused_columns_dropped() {
        let p = RssParams::default();
        let (g, m) = zero_noise(6, 2, false);
        let sys = build_system(&m, g.anchors(), &unit_weights(&g, "A".parse().unwrap()), &p, g.dim()).unwrap();
        assert_eq!(sys.columns, vec![0, 1, 2]);
        let sys = build_system(&m, g.anchors(), &unit_weights(&g, "TD".parse().unwrap()), &p, g.dim()).unwrap();
        assert_eq!(sys.columns, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rank_deficient_reported() {
        let p = RssParams::default();
        let (g, m) = zero_noise(3, 5, false);
        let w = unit_weights(&g, "T".parse().unwrap());
        assert!(matches!(
            wls_solve(&m, g.anchors(), &w, &p, g.dim()),
            Err(Error::RankDeficient { rows: 3, cols: 4 })
        ));
    }
}
