//! Elementary upper bounds used to build the surrogates. Each one is tight
//! at the expansion point.

use crate::types::Point;

/// Cauchy–Schwarz bound on the negated distance:
/// `−‖s − m‖ ≤ −(s − m)ᵀ(s_t − m)/‖s_t − m‖`.
///
/// Returns `None` when `‖s_t − m‖ ≤ guard`.
pub fn bound_neg_norm(s: Point, m: Point, s_t: Point, guard: f64) -> Option<f64> {
    let e = s_t - m;
    let d_t = e.norm();
    (d_t > guard).then(|| -(s - m).dot(&e) / d_t)
}

/// Tangent-line bound on the (concave) square root:
/// `‖s‖ ≤ ‖s_t‖ + (‖s‖² − ‖s_t‖²)/(2‖s_t‖)`.
pub fn bound_norm_quadratic(s: Point, s_t: Point, guard: f64) -> Option<f64> {
    let n_t = s_t.norm();
    (n_t > guard).then(|| n_t + (s.norm_squared() - n_t * n_t) / (2.0 * n_t))
}

/// `(u − v)² ≤ 2(u − c)² + 2(v − c)²` with `c = (u_t + v_t)/2`.
pub fn bound_square_diff(u: f64, v: f64, u_t: f64, v_t: f64) -> f64 {
    let c = 0.5 * (u_t + v_t);
    2.0 * (u - c) * (u - c) + 2.0 * (v - c) * (v - c)
}
