//! Per-anchor quadratic majorizers of the four residual types.
//!
//! Every surrogate is a [`DiagQuadratic`] with its constant term kept, so
//! `g(s_t | s_t) = f(s_t)` can be checked directly. Terms of the form
//! `a·‖s − m‖` are bounded with the linear (Cauchy–Schwarz) bound when
//! `a < 0` and with the tangent-of-square-root bound when `a > 0`.

use std::ops::{Add, AddAssign};

use crate::mm::bounds::bound_square_diff;
use crate::objective::VERTICAL;
use crate::types::{Dim, Point};

/// `g(s) = curvature·‖s‖² + vertical·s_z² − 2 linearᵀs + constant`.
///
/// The Hessian is `2·diag(z, z, z + z̃)` with `z = curvature`,
/// `z̃ = vertical`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagQuadratic {
    pub curvature: f64,
    pub vertical: f64,
    pub linear: Point,
    pub constant: f64,
}

impl DiagQuadratic {
    pub fn eval(&self, s: Point) -> f64 {
        self.curvature * s.norm_squared() + self.vertical * s.z * s.z - 2.0 * self.linear.dot(&s)
            + self.constant
    }

    pub fn scaled(&self, w: f64) -> DiagQuadratic {
        DiagQuadratic {
            curvature: w * self.curvature,
            vertical: w * self.vertical,
            linear: self.linear * w,
            constant: w * self.constant,
        }
    }

    /// Closed-form minimizer `y ⊙ [1/z, 1/z, 1/(z + z̃)]`. `None` when the
    /// quadratic is not strictly convex.
    pub fn minimizer(&self, dim: Dim) -> Option<Point> {
        let z = self.curvature;
        let zz = self.curvature + self.vertical;
        if !(z > 0.0) || (!dim.is_planar() && !(zz > 0.0)) {
            return None;
        }
        let mut s = Point::new(self.linear.x / z, self.linear.y / z, 0.0);
        if !dim.is_planar() {
            s.z = self.linear.z / zz;
        }
        Some(s)
    }

    /// Adds `a‖s − m‖²`.
    pub fn add_sq_dist(&mut self, a: f64, m: Point) {
        self.curvature += a;
        self.linear += m * a;
        self.constant += a * m.norm_squared();
    }

    /// Adds `c·vᵀ(s − m)`.
    pub fn add_linear(&mut self, c: f64, v: Point, m: Point) {
        self.linear -= v * (0.5 * c);
        self.constant -= c * v.dot(&m);
    }

    /// Adds `b·(s_z − m_z)²`.
    pub fn add_vertical_sq(&mut self, b: f64, m: Point) {
        self.vertical += b;
        self.linear.z += b * m.z;
        self.constant += b * m.z * m.z;
    }

    /// Adds a majorizer of `coef·‖s − m‖` tight at `s_t`. Returns `false`
    /// when `‖s_t − m‖ ≤ guard`.
    pub fn add_scaled_norm(&mut self, coef: f64, m: Point, s_t: Point, guard: f64) -> bool {
        let x_t = s_t - m;
        let d_t = x_t.norm();
        if d_t <= guard {
            return false;
        }
        if coef < 0.0 {
            self.add_linear(coef, x_t / d_t, m);
        } else if coef > 0.0 {
            self.constant += 0.5 * coef * d_t;
            self.add_sq_dist(0.5 * coef / d_t, m);
        }
        true
    }
}

impl AddAssign for DiagQuadratic {
    fn add_assign(&mut self, o: DiagQuadratic) {
        self.curvature += o.curvature;
        self.vertical += o.vertical;
        self.linear += o.linear;
        self.constant += o.constant;
    }
}

impl Add for DiagQuadratic {
    type Output = DiagQuadratic;
    fn add(mut self, o: DiagQuadratic) -> DiagQuadratic {
        self += o;
        self
    }
}

/// Majorizer of `(η − λ̃‖s − m‖)²`, `λ̃ = ηλ`.
pub fn surrogate_rss(lambda: f64, eta: f64, m: Point, s_t: Point, guard: f64) -> Option<DiagQuadratic> {
    let lt = eta * lambda;
    let mut q = DiagQuadratic { constant: eta * eta, ..Default::default() };
    q.add_sq_dist(lt * lt, m);
    q.add_scaled_norm(-2.0 * eta * lt, m, s_t, guard).then_some(q)
}

/// Majorizer of `(τ − ‖s − m‖)²`.
pub fn surrogate_toa(tau: f64, m: Point, s_t: Point, guard: f64) -> Option<DiagQuadratic> {
    let mut q = DiagQuadratic { constant: tau * tau, ..Default::default() };
    q.add_sq_dist(1.0, m);
    q.add_scaled_norm(-2.0 * tau, m, s_t, guard).then_some(q)
}

/// Iteration-dependent scalars of one TDOA surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdoaAux {
    /// Midpoint `(τ_1i + ‖s_t − m_1‖ + ‖s_t − m_i‖)/2`.
    pub q: f64,
    /// `τ_1i / ‖s_t − m_1‖`; adds curvature only when positive.
    pub h: f64,
}

/// Split-square bound of `(τ + ‖s − m_1‖ − ‖s − m_i‖)²` before the
/// distance terms are linearised.
pub fn tdoa_split_value(s: Point, s_t: Point, tau: f64, m1: Point, mi: Point) -> f64 {
    bound_square_diff(
        tau + (s - m1).norm(),
        (s - mi).norm(),
        tau + (s_t - m1).norm(),
        (s_t - mi).norm(),
    )
}

/// Majorizer of `(τ_1i − ‖s − m_i‖ + ‖s − m_1‖)²`:
/// `2(τ + d_1 − q)² + 2(d_i − q)²` expanded, with `4τ d_1`, `−4q d_1` and
/// `−4q d_i` each bounded according to the sign of its coefficient.
pub fn surrogate_tdoa(
    tau: f64,
    m1: Point,
    mi: Point,
    s_t: Point,
    guard: f64,
) -> Option<(DiagQuadratic, TdoaAux)> {
    let d1t = (s_t - m1).norm();
    let dit = (s_t - mi).norm();
    if d1t <= guard || dit <= guard {
        return None;
    }
    let q = 0.5 * (tau + d1t + dit);
    let mut g = DiagQuadratic {
        constant: 2.0 * (tau - q) * (tau - q) + 2.0 * q * q,
        ..Default::default()
    };
    g.add_sq_dist(2.0, m1);
    g.add_sq_dist(2.0, mi);
    g.add_scaled_norm(4.0 * tau, m1, s_t, guard);
    g.add_scaled_norm(-4.0 * q, m1, s_t, guard);
    g.add_scaled_norm(-4.0 * q, mi, s_t, guard);
    Some((g, TdoaAux { q, h: tau / d1t }))
}

/// Iteration-dependent quantities of one AOA surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaAux {
    /// Midpoint `(kᵀ(s_t − m) + ‖s_t − m‖ cos θ)/2`.
    pub u: f64,
    /// Linear coefficient of the linearised concave part,
    /// `(c cᵀ − I)s_t − c cᵀ m`.
    pub omega: Point,
    /// `−2u cos θ` when `u cos θ > 0`, else 0.
    pub big_omega: f64,
    /// `−u cos θ / ‖s_t − m‖` when `u cos θ < 0`, else 0.
    pub rho: f64,
}

/// Split-square bound of the elevation residual, before linearisation.
pub fn aoa_split_value(s: Point, s_t: Point, normal: Point, cos_el: f64, m: Point) -> f64 {
    let x = s - m;
    let x_t = s_t - m;
    let az = normal.dot(&x);
    az * az
        + bound_square_diff(
            VERTICAL.dot(&x),
            x.norm() * cos_el,
            VERTICAL.dot(&x_t),
            x_t.norm() * cos_el,
        )
}

/// Majorizer of `(cᵀ(s − m))² + (kᵀ(s − m) − ‖s − m‖ cos θ)²`.
///
/// `(cᵀx)² = xᵀ(ccᵀ − I)x + ‖x‖²` has its concave part linearised at
/// `s_t`. The elevation term goes through the split-square bound and the
/// sign of `u cos θ` picks the bound on `−4u cos θ ‖s − m‖`. Planar
/// problems keep only the azimuth part.
pub fn surrogate_aoa(
    normal: Point,
    cos_el: f64,
    m: Point,
    s_t: Point,
    guard: f64,
    dim: Dim,
) -> Option<(DiagQuadratic, AoaAux)> {
    let x_t = s_t - m;
    let d_t = x_t.norm();
    if d_t <= guard {
        return None;
    }
    let mut g = DiagQuadratic::default();

    // (ccᵀ − I)x_t
    let v = normal * normal.dot(&x_t) - x_t;
    g.add_sq_dist(1.0, m);
    g.add_linear(2.0, v, m);
    g.constant -= v.dot(&x_t);
    let omega = v - m;

    if dim.is_planar() {
        return Some((g, AoaAux { u: 0.0, omega, big_omega: 0.0, rho: 0.0 }));
    }

    let u = 0.5 * (VERTICAL.dot(&x_t) + d_t * cos_el);
    g.add_vertical_sq(2.0, m);
    g.add_linear(-4.0 * u, VERTICAL, m);
    g.constant += 2.0 * u * u;

    g.add_sq_dist(2.0 * cos_el * cos_el, m);
    g.constant += 2.0 * u * u;
    let uc = u * cos_el;
    g.add_scaled_norm(-4.0 * uc, m, s_t, guard);

    let (big_omega, rho) = if uc > 0.0 {
        (-2.0 * uc, 0.0)
    } else if uc < 0.0 {
        (0.0, -uc / d_t)
    } else {
        (0.0, 0.0)
    };
    Some((g, AoaAux { u, omega, big_omega, rho }))
}
