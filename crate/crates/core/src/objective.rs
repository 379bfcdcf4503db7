//! Per-type residuals, the range-dependent weighting scheme and the
//! weighted least-squares objective minimised by the MM solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    validate_anchors, Bearing, Dim, Mask, MeasurementKind, MeasurementSet, NoiseSigmas, Point,
    RssParams, COINCIDENCE_TOL,
};

/// Vertical unit vector `k`.
pub const VERTICAL: Point = Point::new(0.0, 0.0, 1.0);

/// `λ_i = 10^((L0 − L_i)/(10γ))`, the inverse range implied by an RSS reading.
pub fn lambda_of(l_i: f64, p: &RssParams) -> f64 {
    10f64.powf((p.l0() - l_i) / (10.0 * p.gamma()))
}

/// Horizontal unit vector `c_i = [−sin φ, cos φ, 0]`, orthogonal to the
/// measured azimuth direction.
pub fn azimuth_normal(azimuth: f64) -> Point {
    Point::new(-azimuth.sin(), azimuth.cos(), 0.0)
}

fn offset(s: Point, m: Point, anchor: usize) -> Result<(Point, f64)> {
    let v = s - m;
    let d = v.norm();
    if d <= COINCIDENCE_TOL {
        return Err(Error::Degenerate { anchor, distance: d, guard: COINCIDENCE_TOL });
    }
    Ok((v, d))
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidMeasurements(format!(
            "{name}: {got} values for {want} anchors"
        )));
    }
    Ok(())
}

/// `(η − η λ_i ‖s − m_i‖)²`.
pub fn residual_rss(s: Point, anchors: &[Point], lambdas: &[f64], p: &RssParams) -> Result<Vec<f64>> {
    check_len("RSS", lambdas.len(), anchors.len())?;
    let eta = p.eta();
    anchors
        .iter()
        .zip(lambdas)
        .enumerate()
        .map(|(i, (m, lam))| {
            let (_, d) = offset(s, *m, i)?;
            let r = eta - eta * lam * d;
            Ok(r * r)
        })
        .collect()
}

/// `(τ_i − ‖s − m_i‖)²`.
pub fn residual_toa(s: Point, anchors: &[Point], toa: &[f64]) -> Result<Vec<f64>> {
    check_len("TOA", toa.len(), anchors.len())?;
    anchors
        .iter()
        .zip(toa)
        .enumerate()
        .map(|(i, (m, tau))| {
            let (_, d) = offset(s, *m, i)?;
            Ok((tau - d) * (tau - d))
        })
        .collect()
}

/// `(τ_1i − ‖s − m_i‖ + ‖s − m_1‖)²` for `i = 2..N`.
pub fn residual_tdoa(s: Point, anchors: &[Point], tdoa: &[f64]) -> Result<Vec<f64>> {
    check_len("TDOA", tdoa.len() + 1, anchors.len())?;
    let (_, d1) = offset(s, anchors[0], 0)?;
    anchors[1..]
        .iter()
        .zip(tdoa)
        .enumerate()
        .map(|(j, (m, tau))| {
            let (_, di) = offset(s, *m, j + 1)?;
            let r = tau - di + d1;
            Ok(r * r)
        })
        .collect()
}

/// Pseudo-linear AOA residual
/// `(c_iᵀ(s − m_i))² + (kᵀ(s − m_i) − ‖s − m_i‖ cos θ_i)²`.
/// The elevation term is dropped for planar problems.
pub fn residual_aoa(s: Point, anchors: &[Point], aoa: &[Bearing], dim: Dim) -> Result<Vec<f64>> {
    check_len("AOA", aoa.len(), anchors.len())?;
    anchors
        .iter()
        .zip(aoa)
        .enumerate()
        .map(|(i, (m, b))| {
            let (v, d) = offset(s, *m, i)?;
            let az = azimuth_normal(b.azimuth).dot(&v);
            let mut r = az * az;
            if !dim.is_planar() {
                let el = VERTICAL.dot(&v) - d * b.elevation.cos();
                r += el * el;
            }
            Ok(r)
        })
        .collect()
}

/// Per-anchor, per-type weights. Types outside `mask` are all zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub rss: Vec<f64>,
    pub toa: Vec<f64>,
    /// `N − 1` entries.
    pub tdoa: Vec<f64>,
    pub aoa: Vec<f64>,
    pub mask: Mask,
}

impl WeightSet {
    pub fn for_kind(&self, kind: MeasurementKind) -> &[f64] {
        match kind {
            MeasurementKind::Toa => &self.toa,
            MeasurementKind::Tdoa => &self.tdoa,
            MeasurementKind::Rss => &self.rss,
            MeasurementKind::Aoa => &self.aoa,
        }
    }

    /// Plain inverse-variance weights `1/σ²` (no range normalisation).
    pub fn inverse_variance(sigma: &NoiseSigmas, mask: Mask, n_anchors: usize) -> Result<WeightSet> {
        let mut w = WeightSet::zeros(n_anchors, mask);
        for kind in mask.kinds() {
            let inv: Vec<f64> = sigma
                .for_kind(kind)
                .iter()
                .enumerate()
                .map(|(i, s)| nonzero_sigma(*s, kind, i).map(|s| 1.0 / (s * s)))
                .collect::<Result<_>>()?;
            *w.slot(kind) = inv;
        }
        Ok(w)
    }

    fn zeros(n: usize, mask: Mask) -> WeightSet {
        WeightSet {
            rss: vec![0.0; n],
            toa: vec![0.0; n],
            tdoa: vec![0.0; n.saturating_sub(1)],
            aoa: vec![0.0; n],
            mask,
        }
    }

    fn slot(&mut self, kind: MeasurementKind) -> &mut Vec<f64> {
        match kind {
            MeasurementKind::Toa => &mut self.toa,
            MeasurementKind::Tdoa => &mut self.tdoa,
            MeasurementKind::Rss => &mut self.rss,
            MeasurementKind::Aoa => &mut self.aoa,
        }
    }
}

fn nonzero_sigma(s: f64, kind: MeasurementKind, anchor: usize) -> Result<f64> {
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::ZeroSigma { kind, anchor })
    }
}

/// Range-normalised weights
/// `w_i = (1/σ_i²)(1 − e_i² / Σ_j e_j²)` with `e = σ d` for RSS and AOA
/// and `e = σ` for TOA and TDOA.
///
/// `ranges` supplies the `d_i` used by RSS/AOA; `None` treats all anchors
/// as equidistant. A lone TDOA pair (N = 2) would get weight zero, so it
/// falls back to `1/σ²`.
pub fn compute_weights(
    ranges: Option<&[f64]>,
    sigma: &NoiseSigmas,
    mask: Mask,
    n_anchors: usize,
) -> Result<WeightSet> {
    mask.validate_for(n_anchors)?;
    if let Some(r) = ranges {
        check_len("weighting ranges", r.len(), n_anchors)?;
    }
    let mut w = WeightSet::zeros(n_anchors, mask);
    for kind in mask.kinds() {
        let sig = sigma.for_kind(kind);
        let want = if kind == MeasurementKind::Tdoa { n_anchors - 1 } else { n_anchors };
        check_len(&format!("{kind} sigma"), sig.len(), want)?;
        let sig: Vec<f64> = sig
            .iter()
            .enumerate()
            .map(|(i, s)| nonzero_sigma(*s, kind, i))
            .collect::<Result<_>>()?;

        let e: Vec<f64> = match (kind, ranges) {
            (MeasurementKind::Rss | MeasurementKind::Aoa, Some(r)) => {
                sig.iter().zip(r).map(|(s, d)| s * d.abs()).collect()
            }
            _ => sig.clone(),
        };
        let total: f64 = e.iter().map(|x| x * x).sum();
        let weights = if kind == MeasurementKind::Tdoa && sig.len() == 1 {
            vec![1.0 / (sig[0] * sig[0])]
        } else {
            sig.iter()
                .zip(&e)
                .map(|(s, ei)| (1.0 - ei * ei / total) / (s * s))
                .collect()
        };
        *w.slot(kind) = weights;
    }
    Ok(w)
}

/// Ranges an estimator can use in [`compute_weights`] for `mask`: TOA
/// ranges if TOA is in the mask, otherwise RSS-inverted ranges `1/λ_i`,
/// otherwise none.
pub fn estimated_ranges(m: &MeasurementSet, p: &RssParams, mask: Mask) -> Option<Vec<f64>> {
    if mask.contains(MeasurementKind::Toa) {
        if let Some(toa) = &m.toa {
            return Some(toa.iter().map(|t| t.abs().max(COINCIDENCE_TOL)).collect());
        }
    }
    if mask.contains(MeasurementKind::Rss) {
        if let Some(rss) = &m.rss {
            return Some(rss.iter().map(|l| 1.0 / lambda_of(*l, p)).collect());
        }
    }
    None
}

/// Everything needed to evaluate the weighted objective at a candidate
/// point. Derived per-anchor quantities (`λ_i`, `c_i`, `cos θ_i`) are
/// computed once here.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub anchors: &'a [Point],
    pub data: &'a MeasurementSet,
    pub weights: &'a WeightSet,
    pub rss: RssParams,
    pub dim: Dim,
    pub(crate) lambdas: Vec<f64>,
    pub(crate) normals: Vec<Point>,
    pub(crate) cos_elev: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        anchors: &'a [Point],
        data: &'a MeasurementSet,
        weights: &'a WeightSet,
        rss: RssParams,
        dim: Dim,
    ) -> Result<Self> {
        validate_anchors(anchors, dim)?;
        let n = anchors.len();
        if weights.mask.is_empty() {
            return Err(Error::InvalidConfig("weight mask is empty".into()));
        }
        for kind in weights.mask.kinds() {
            if !data.has(kind) {
                return Err(Error::InvalidMeasurements(format!("{kind} weighted but not measured")));
            }
            let want = if kind == MeasurementKind::Tdoa { n - 1 } else { n };
            check_len(&format!("{kind} weights"), weights.for_kind(kind).len(), want)?;
            if weights.for_kind(kind).iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::InvalidConfig(format!("{kind} weights must be finite and >= 0")));
            }
        }
        let masked = data.with_mask(weights.mask)?;
        masked.validate(n)?;

        let lambdas = data
            .rss
            .as_ref()
            .map(|l| l.iter().map(|li| lambda_of(*li, &rss)).collect())
            .unwrap_or_default();
        let (normals, cos_elev) = data
            .aoa
            .as_ref()
            .map(|a| {
                a.iter()
                    .map(|b| (azimuth_normal(b.azimuth), b.elevation.cos()))
                    .unzip()
            })
            .unwrap_or_default();
        Ok(Self {
            anchors,
            data,
            weights,
            rss,
            dim,
            lambdas,
            normals,
            cos_elev,
        })
    }

    pub fn mask(&self) -> Mask {
        self.weights.mask
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Weighted residual sum of one measurement type.
    pub fn objective_of(&self, kind: MeasurementKind, s: Point) -> Result<f64> {
        if !self.mask().contains(kind) {
            return Ok(0.0);
        }
        let f = match kind {
            MeasurementKind::Rss => residual_rss(s, self.anchors, &self.lambdas, &self.rss)?,
            MeasurementKind::Toa => residual_toa(s, self.anchors, self.data.toa.as_deref().unwrap_or(&[]))?,
            MeasurementKind::Tdoa => {
                residual_tdoa(s, self.anchors, self.data.tdoa.as_deref().unwrap_or(&[]))?
            }
            MeasurementKind::Aoa => {
                residual_aoa(s, self.anchors, self.data.aoa.as_deref().unwrap_or(&[]), self.dim)?
            }
        };
        Ok(f.iter().zip(self.weights.for_kind(kind)).map(|(f, w)| w * f).sum())
    }

    /// The weighted objective summed over the active mask.
    pub fn objective(&self, s: Point) -> Result<f64> {
        self.mask().kinds().map(|k| self.objective_of(k, s)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{bearing_of, simulate_all};
    use crate::types::{generate_network, pairwise_distances, NetworkGeometry};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn lambda_reference_and_decade() {
        let p = RssParams::new(20.0, 2.5).unwrap();
        assert_eq!(lambda_of(20.0, &p), 1.0);
        assert!((lambda_of(45.0, &p) - 0.1).abs() < 1e-15);
        for l in [3.0, 27.5, 71.2] {
            assert!((lambda_of(l, &p) * lambda_of(2.0 * 20.0 - l, &p) - 1.0).abs() < 1e-12);
        }
    }

    fn simple_anchors() -> (Vec<Point>, Point) {
        (
            vec![Point::new(3.0, 4.0, 0.0), Point::new(-6.0, 0.0, 8.0), Point::new(0.0, 0.0, -2.0)],
            Point::zeros(),
        )
    }

    #[test]
    fn rss_residual_values() {
        let (anchors, s) = simple_anchors();
        let p = RssParams::new(20.0, 2.5).unwrap();
        let d: Vec<f64> = anchors.iter().map(|m| (s - m).norm()).collect();
        let exact: Vec<f64> = d.iter().map(|d| 1.0 / d).collect();
        assert!(residual_rss(s, &anchors, &exact, &p).unwrap().iter().all(|r| r.abs() < 1e-24));

        let doubled: Vec<f64> = d.iter().map(|d| 2.0 / d).collect();
        let eta = 25.0 / std::f64::consts::LN_10;
        for r in residual_rss(s, &anchors, &doubled, &p).unwrap() {
            assert!((r - eta * eta).abs() < 1e-9);
            assert!((r - 117.89).abs() < 0.01);
        }

        let p2 = RssParams::new(20.0, 5.0).unwrap();
        let r1 = residual_rss(s, &anchors, &doubled, &p).unwrap();
        let r2 = residual_rss(s, &anchors, &doubled, &p2).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            assert!((b / a - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn toa_residual_values() {
        let (anchors, s) = simple_anchors();
        let d: Vec<f64> = anchors.iter().map(|m| (s - m).norm()).collect();
        let r = residual_toa(s, &anchors, &d).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
        let plus: Vec<f64> = d.iter().map(|d| d + 1.0).collect();
        for v in residual_toa(s, &anchors, &plus).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tdoa_residual_values() {
        let (anchors, s) = simple_anchors();
        let d: Vec<f64> = anchors.iter().map(|m| (s - m).norm()).collect();
        let tau: Vec<f64> = d[1..].iter().map(|di| di - d[0]).collect();
        assert!(residual_tdoa(s, &anchors, &tau).unwrap().iter().all(|v| v.abs() < 1e-28));

        let eq = vec![Point::new(5.0, 0.0, 0.0), Point::new(0.0, 5.0, 0.0), Point::new(0.0, 0.0, 5.0)];
        assert!(residual_tdoa(s, &eq, &[0.0, 0.0]).unwrap().iter().all(|v| *v == 0.0));

        let probe = Point::new(0.7, -1.1, 2.3);
        let got = residual_tdoa(probe, &anchors, &tau).unwrap();
        for i in 1..3 {
            let di = ((probe.x - anchors[i].x).powi(2)
                + (probe.y - anchors[i].y).powi(2)
                + (probe.z - anchors[i].z).powi(2))
            .sqrt();
            let d1 = ((probe.x - anchors[0].x).powi(2)
                + (probe.y - anchors[0].y).powi(2)
                + (probe.z - anchors[0].z).powi(2))
            .sqrt();
            let want = (tau[i - 1] - di + d1).powi(2);
            assert!((got[i - 1] - want).abs() < 1e-12 * (1.0 + want));
        }
    }

    #[test]
    fn aoa_residual_values() {
        let g = generate_network(6, 50.0, 4).unwrap();
        let s = g.source();
        let exact: Vec<Bearing> = g.anchors().iter().map(|m| bearing_of(s, *m).unwrap()).collect();
        for r in residual_aoa(s, g.anchors(), &exact, Dim::Three).unwrap() {
            assert!(r < 1e-18, "{r}");
        }

        let rotated: Vec<Bearing> = exact
            .iter()
            .map(|b| Bearing { azimuth: crate::types::wrap_angle(b.azimuth + FRAC_PI_2), ..*b })
            .collect();
        let r = residual_aoa(s, g.anchors(), &rotated, Dim::Three).unwrap();
        for (m, ri) in g.anchors().iter().zip(&r) {
            let v = s - m;
            let horiz2 = v.x * v.x + v.y * v.y;
            assert!((ri - horiz2).abs() < 1e-9 * (1.0 + horiz2));
        }

        let flat = vec![Point::new(1.0, 2.0, 0.0), Point::new(-4.0, 1.0, 0.0)];
        let b = vec![
            Bearing { azimuth: 0.3, elevation: FRAC_PI_2, pole: false },
            Bearing { azimuth: -2.0, elevation: FRAC_PI_2, pole: false },
        ];
        let s = Point::new(2.0, -1.0, 0.0);
        let r = residual_aoa(s, &flat, &b, Dim::Three).unwrap();
        for (m, (ri, bi)) in flat.iter().zip(r.iter().zip(&b)) {
            let az = azimuth_normal(bi.azimuth).dot(&(s - m));
            assert!((ri - az * az).abs() < 1e-12);
        }
        let _ = PI;
    }

    #[test]
    fn residuals_reject_coincident_points() {
        let (anchors, _) = simple_anchors();
        let s = anchors[1];
        assert!(matches!(
            residual_toa(s, &anchors, &[1.0, 1.0, 1.0]),
            Err(Error::Degenerate { anchor: 1, .. })
        ));
    }

    #[test]
    fn equal_sigma_weights() {
        let sig = NoiseSigmas::uniform(5, 1.0, 1.0, 1.0, 1.0);
        let w = compute_weights(Some(&[7.0; 5]), &sig, Mask::ALL, 5).unwrap();
        for v in w.toa.iter().chain(&w.rss).chain(&w.aoa) {
            assert!((v - 0.8).abs() < 1e-15);
        }
        for v in &w.tdoa {
            assert!((v - 0.75).abs() < 1e-15);
        }

        let sig = NoiseSigmas::uniform(5, 2.0, 0.5, 1.0, 1.0);
        let w = compute_weights(None, &sig, "TR".parse().unwrap(), 5).unwrap();
        assert!(w.toa.iter().all(|v| (v - 4.0 * 0.8).abs() < 1e-12));
        assert!(w.rss.iter().all(|v| (v - 0.25 * 0.8).abs() < 1e-12));
        assert!(w.aoa.iter().all(|v| *v == 0.0));
        assert!(w.tdoa.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn range_dependence_of_weights() {
        let sig = NoiseSigmas::uniform(4, 1.0, 1.0, 1.0, 1.0);
        let ranges = [1.0, 2.0, 3.0, 4.0];
        let w = compute_weights(Some(&ranges), &sig, Mask::ALL, 4).unwrap();
        let total: f64 = ranges.iter().map(|r| r * r).sum();
        for (wi, r) in w.rss.iter().zip(&ranges) {
            assert!((wi - (1.0 - r * r / total)).abs() < 1e-15);
        }
        // farther anchors get smaller weight
        assert!(w.aoa.windows(2).all(|p| p[0] > p[1]));
        assert!(w.aoa.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn zero_sigma_rejected_and_tdoa_pair_fallback() {
        let mut sig = NoiseSigmas::uniform(3, 1.0, 1.0, 1.0, 1.0);
        sig.toa[2] = 0.0;
        assert!(matches!(
            compute_weights(None, &sig, Mask::ALL, 3),
            Err(Error::ZeroSigma { kind: MeasurementKind::Toa, anchor: 2 })
        ));
        // masked-out zero sigma is fine
        assert!(compute_weights(None, &sig, "DRA".parse().unwrap(), 3).is_ok());

        let sig = NoiseSigmas::uniform(2, 1.0, 1.0, 0.5, 1.0);
        let w = compute_weights(None, &sig, Mask::single(MeasurementKind::Tdoa), 2).unwrap();
        assert_eq!(w.tdoa, vec![4.0]);
    }

    fn zero_noise_problem(seed: u64) -> (NetworkGeometry, MeasurementSet, WeightSet) {
        let g = generate_network(6, 50.0, seed).unwrap();
        let m = simulate_all(&g, &RssParams::default(), &NoiseSigmas::uniform(6, 0.0, 0.0, 0.0, 0.0), seed)
            .unwrap();
        let w = compute_weights(
            Some(&pairwise_distances(&g)),
            &NoiseSigmas::uniform(6, 1.0, 1.0, 1.0, 0.1),
            Mask::ALL,
            6,
        )
        .unwrap();
        (g, m, w)
    }

    #[test]
    fn objective_zero_at_truth_and_additive() {
        let (g, m, w) = zero_noise_problem(12);
        let prob = Problem::new(g.anchors(), &m, &w, RssParams::default(), Dim::Three).unwrap();
        assert!(prob.objective(g.source()).unwrap() < 1e-15);

        let s = g.source() + Point::new(3.0, -2.0, 1.0);
        let total = prob.objective(s).unwrap();
        let parts: f64 = MeasurementKind::ALL.iter().map(|k| prob.objective_of(*k, s).unwrap()).sum();
        assert!((total - parts).abs() < 1e-12 * total);

        let w_t = compute_weights(None, &NoiseSigmas::uniform(6, 1.0, 1.0, 1.0, 1.0), Mask::single(MeasurementKind::Toa), 6)
            .unwrap();
        let prob_t = Problem::new(g.anchors(), &m, &w_t, RssParams::default(), Dim::Three).unwrap();
        let naive: f64 = g
            .anchors()
            .iter()
            .zip(m.toa.as_ref().unwrap())
            .zip(&w_t.toa)
            .map(|((a, t), w)| w * (t - (s - a).norm()).powi(2))
            .sum();
        assert!((prob_t.objective(s).unwrap() - naive).abs() < 1e-12 * naive);
    }

    #[test]
    fn estimated_ranges_precedence() {
        let (g, m, _) = zero_noise_problem(3);
        let p = RssParams::default();
        let d = pairwise_distances(&g);
        let from_toa = estimated_ranges(&m, &p, Mask::ALL).unwrap();
        assert_eq!(from_toa, d);
        let from_rss = estimated_ranges(&m, &p, "DRA".parse().unwrap()).unwrap();
        for (a, b) in from_rss.iter().zip(&d) {
            assert!((a - b).abs() < 1e-9 * b);
        }
        assert!(estimated_ranges(&m, &p, "DA".parse().unwrap()).is_none());
    }
}
