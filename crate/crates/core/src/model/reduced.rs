//! Velocity-ball geometry and reduced directional integrals.
//!
//! For a response psi and gradient magnitude g, the directional tumbling
//! integral over the ball B(0, V0) collapses to a 1-d integral against the
//! cross-section weight (V0² - v²)^{(d-1)/2}. The substitution v = V0 sin θ
//! removes the endpoint singularity of that weight for every d.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{CoreError, Result};
use crate::model::Response;
use crate::quad::{integrate, mesh_min};

/// Γ(n/2) for integer n >= 1, by the recursion Γ(z+1) = zΓ(z).
pub fn gamma_half_int(n: u32) -> f64 {
    match n {
        0 => f64::INFINITY,
        1 => PI.sqrt(),
        2 => 1.0,
        _ => (n as f64 / 2.0 - 1.0) * gamma_half_int(n - 2),
    }
}

/// Volume of the unit ball in R^d; d = 0 gives 1 (a point has counting mass 1).
pub fn unit_ball_volume(d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / gamma_half_int(d as u32 + 2)
}

/// Radius V0 with |B(0, V0)| = 1 in R^d.
pub fn velocity_ball_radius(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(CoreError::InvalidDimension(d, "velocity ball needs d >= 1"));
    }
    Ok(unit_ball_volume(d).powf(-1.0 / d as f64))
}

const QUAD_TOL: f64 = 1e-13;

/// Reduced integral Φ(g) = C_{d-1} ∫_{-V0}^{V0} ψ(vg) vg (V0² - v²)^{(d-1)/2} dv.
///
/// The integrand is even (odd ψ times odd v), so we fold onto [0, V0] and
/// substitute v = V0 sin θ.
pub fn phi_reduced(psi: &Response, d: usize, v0: f64, g: f64) -> Result<f64> {
    let c = unit_ball_volume(d.saturating_sub(1));
    let scale = v0.powi(d as i32);
    let val = integrate(
        |th| {
            let v = v0 * th.sin();
            psi.eval(v * g) * (v * g) * th.cos().powi(d as i32)
        },
        0.0,
        FRAC_PI_2,
        QUAD_TOL,
    )?;
    Ok(2.0 * c * scale * val)
}

/// Per-axis second moment of the uniform density on B(0, V0):
/// ∫_{B(0,V0)} v_1² dv / |B(0,V0)|. With |B| = 1 this is just the integral.
pub fn axis_second_moment(d: usize, v0: f64) -> Result<f64> {
    let c = unit_ball_volume(d.saturating_sub(1));
    let scale = v0.powi(d as i32 + 2);
    let val = integrate(
        |th: f64| th.sin().powi(2) * th.cos().powi(d as i32),
        0.0,
        FRAC_PI_2,
        QUAD_TOL,
    )?;
    Ok(2.0 * c * scale * val)
}

/// Sublinearity constant for the reduced integral and its exponent:
/// λ̃ > 0 and k with Φ(g) >= λ̃ g^k for all g in (0, gradient sup].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedLowerBound {
    pub lambda_tilde: f64,
    pub k: f64,
}

/// Compute the sharpest mesh-certified lower bound for the given response.
///
/// Sign responses give Φ(g) = λ̃ g exactly with the closed form
/// λ̃ = 2 C_{d-1} V0^{d+1} / (d+1). Smooth odd responses are minorised
/// quadratically: k = 2 and λ̃ = min of Φ(g)/g² over a 10^4-point mesh on
/// [min(m*, gsup), gsup]; Φ(g)/g² is decreasing there (ψ concave on g >= 0),
/// so the mesh minimum sits at the right endpoint up to mesh error.
pub fn reduced_lower_bound(
    psi: &Response,
    d: usize,
    v0: f64,
    m_star: f64,
    grad_sup: f64,
) -> Result<ReducedLowerBound> {
    match psi {
        Response::Sign => {
            let c = unit_ball_volume(d.saturating_sub(1));
            let lt = 2.0 * c * v0.powi(d as i32 + 1) / (d as f64 + 1.0);
            Ok(ReducedLowerBound {
                lambda_tilde: lt,
                k: 1.0,
            })
        }
        Response::Tanh { .. } => {
            if !(grad_sup.is_finite() && grad_sup > 0.0) {
                return Err(CoreError::InvalidParameter {
                    name: "grad_sup",
                    detail: format!(
                        "quadratic lower bound needs a finite positive gradient sup, got {grad_sup}"
                    ),
                });
            }
            let lo = m_star.min(grad_sup).max(grad_sup * 1e-9);
            let (_, lt) = mesh_min(
                |g| match phi_reduced(psi, d, v0, g) {
                    Ok(v) => v / (g * g),
                    Err(_) => f64::INFINITY,
                },
                lo,
                grad_sup,
                10_000,
            );
            if !(lt.is_finite() && lt > 0.0) {
                return Err(CoreError::HypothesisViolation(format!(
                    "reduced integral lower bound degenerate: λ̃ = {lt} on [{lo}, {grad_sup}]"
                )));
            }
            Ok(ReducedLowerBound {
                lambda_tilde: lt,
                k: 2.0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_recursion_hits_known_values() {
        assert!((gamma_half_int(1) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half_int(2) - 1.0).abs() < 1e-15);
        assert!((gamma_half_int(3) - 0.5 * PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half_int(4) - 1.0).abs() < 1e-15);
        assert!((gamma_half_int(6) - 2.0).abs() < 1e-15);
        assert!((gamma_half_int(7) - 15.0 / 8.0 * PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(0) - 1.0).abs() < 1e-15);
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ball_radii_normalise_volume_to_one() {
        assert!((velocity_ball_radius(1).unwrap() - 0.5).abs() < 1e-12);
        assert!((velocity_ball_radius(2).unwrap() - 0.564_189_583_547_756_3).abs() < 1e-12);
        assert!((velocity_ball_radius(3).unwrap() - 0.620_350_490_899_4).abs() < 1e-12);
        for d in 1..=3 {
            let v0 = velocity_ball_radius(d).unwrap();
            assert!((unit_ball_volume(d) * v0.powi(d as i32) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_lower_bound_closed_form() {
        // d=1: λ̃ = 2 * 1 * V0² / 2 = 0.25 at V0 = 1/2
        let b = reduced_lower_bound(&Response::Sign, 1, 0.5, 0.5, 1.0).unwrap();
        assert_eq!(b.k, 1.0);
        assert!((b.lambda_tilde - 0.25).abs() < 1e-15);
        // d=2: λ̃ = 2 * 2 * V0³ / 3 = (4/3) π^{-3/2}
        let v0 = velocity_ball_radius(2).unwrap();
        let b = reduced_lower_bound(&Response::Sign, 2, v0, 0.5, 1.0).unwrap();
        assert!((b.lambda_tilde - 4.0 / 3.0 * PI.powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn sign_reduced_integral_is_exactly_linear() {
        for g in [0.2, 0.7, 1.0] {
            let phi = phi_reduced(&Response::Sign, 1, 0.5, g).unwrap();
            assert!((phi - 0.25 * g).abs() < 1e-12);
        }
    }

    #[test]
    fn tanh_lower_bound_matches_frozen_reference() {
        // tanh(2m), d=1, V0=1/2, window [1/sqrt(2), 1]: minimum of Φ(g)/g²
        // sits at g = 1 (the map is decreasing on the window).
        let psi = Response::Tanh { kappa: 2.0 };
        let b = reduced_lower_bound(&psi, 1, 0.5, std::f64::consts::FRAC_1_SQRT_2, 1.0).unwrap();
        assert_eq!(b.k, 2.0);
        assert!(
            (b.lambda_tilde - 0.140_600_368_344_063_9).abs() < 1e-9,
            "λ̃ = {}",
            b.lambda_tilde
        );
    }

    #[test]
    fn tanh_bound_minorises_reduced_integral_on_window() {
        let psi = Response::Tanh { kappa: 2.0 };
        let (m_star, gsup) = (std::f64::consts::FRAC_1_SQRT_2, 1.0);
        let b = reduced_lower_bound(&psi, 1, 0.5, m_star, gsup).unwrap();
        for i in 0..50 {
            let g = m_star + (gsup - m_star) * i as f64 / 49.0;
            let phi = phi_reduced(&psi, 1, 0.5, g).unwrap();
            assert!(phi >= b.lambda_tilde * g * g - 1e-12);
        }
    }

    #[test]
    fn axis_second_moment_closed_forms() {
        // d=1: ∫_{-1/2}^{1/2} v² dv = 1/12
        assert!((axis_second_moment(1, 0.5).unwrap() - 1.0 / 12.0).abs() < 1e-12);
        // d=2: V0²/4 at |B| = 1
        let v0 = velocity_ball_radius(2).unwrap();
        assert!((axis_second_moment(2, v0).unwrap() - v0 * v0 / 4.0).abs() < 1e-12);
    }
}
