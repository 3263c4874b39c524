//! Chemoattractant log-profiles M and their differential oracles.
//!
//! Everything downstream (tumbling rates, Lyapunov weights, drift
//! certificates) consumes M only through the methods here, so custom
//! profiles are validated against finite differences at construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// ⟨x⟩ = sqrt(1 + |x|²).
pub fn jbracket(x: &[f64]) -> f64 {
    (1.0 + x.iter().map(|c| c * c).sum::<f64>()).sqrt()
}

/// Two-sided linear tail sandwich: `lower_offset - slope*⟨x⟩ <= M <= upper_offset - slope*⟨x⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBounds {
    pub lower_offset: f64,
    pub upper_offset: f64,
    pub slope: f64,
}

/// Confinement data: `|∇M(x)| >= m_star` whenever `|x| > radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confinement {
    pub radius: f64,
    pub m_star: f64,
}

type FieldFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type QuadFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

enum ProfileKind {
    /// M = offset - slope*⟨x⟩.
    SmoothedCone { offset: f64, slope: f64 },
    /// Smoothed log of the Yukawa kernel: M = -sqrt(a)*⟨x⟩ - ln(a)/2.
    LogYukawaLike { a: f64 },
    Custom {
        m: FieldFn,
        grad: GradFn,
        hess_quad: QuadFn,
        hess_norm: FieldFn,
    },
}

pub struct ChemoProfile {
    d: usize,
    kind: ProfileKind,
    grad_sup: f64,
    tail: Option<TailBounds>,
    confinement: Confinement,
}

impl ChemoProfile {
    pub fn smoothed_cone(d: usize, offset: f64, slope: f64) -> Result<Self> {
        if d == 0 {
            return Err(CoreError::InvalidDimension(d, "profile needs d >= 1"));
        }
        if !(slope > 0.0) || !slope.is_finite() || !offset.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "slope",
                detail: format!("smoothed cone needs finite offset and slope > 0, got {slope}"),
            });
        }
        Ok(Self {
            d,
            kind: ProfileKind::SmoothedCone { offset, slope },
            grad_sup: slope,
            tail: Some(TailBounds {
                lower_offset: offset,
                upper_offset: offset,
                slope,
            }),
            // |x|/⟨x⟩ >= 1/sqrt(2) once |x| >= 1.
            confinement: Confinement {
                radius: 1.0,
                m_star: slope / std::f64::consts::SQRT_2,
            },
        })
    }

    pub fn log_yukawa_like(d: usize, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "a",
                detail: format!("log-Yukawa screening needs a > 0, got {a}"),
            });
        }
        let slope = a.sqrt();
        let offset = -0.5 * a.ln();
        let mut p = Self::smoothed_cone(d, offset, slope)?;
        p.kind = ProfileKind::LogYukawaLike { a };
        Ok(p)
    }

    /// Custom profile from caller-supplied oracles. The gradient oracle is
    /// checked against central finite differences of `m` at construction.
    pub fn custom(
        d: usize,
        m: FieldFn,
        grad: GradFn,
        hess_quad: QuadFn,
        hess_norm: FieldFn,
        grad_sup: f64,
        confinement: Confinement,
        tail: Option<TailBounds>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(CoreError::InvalidDimension(d, "profile needs d >= 1"));
        }
        let p = Self {
            d,
            kind: ProfileKind::Custom {
                m,
                grad,
                hess_quad,
                hess_norm,
            },
            grad_sup,
            tail,
            confinement,
        };
        p.check_gradient_oracle()?;
        Ok(p)
    }

    fn check_gradient_oracle(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
        let h = 1e-4;
        let mut x = vec![0.0; self.d];
        let mut g = vec![0.0; self.d];
        for _ in 0..20 {
            for c in x.iter_mut() {
                *c = rng.gen_range(-5.0..5.0);
            }
            self.grad(&x, &mut g);
            for i in 0..self.d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (self.m(&xp) - self.m(&xm)) / (2.0 * h);
                if (fd - g[i]).abs() > 1e-5 * (1.0 + g[i].abs()) {
                    return Err(CoreError::OracleInconsistent(format!(
                        "gradient component {i} at x = {x:?}: oracle {} vs finite difference {fd}",
                        g[i]
                    )));
                }
            }
        }
        Ok(())
    }

    fn cone_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            ProfileKind::SmoothedCone { offset, slope } => Some((offset, slope)),
            ProfileKind::LogYukawaLike { a } => Some((-0.5 * a.ln(), a.sqrt())),
            ProfileKind::Custom { .. } => None,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        match (&self.kind, self.cone_params()) {
            (_, Some((offset, slope))) => offset - slope * jbracket(x),
            (ProfileKind::Custom { m, .. }, None) => m(x),
            _ => unreachable!(),
        }
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(out.len(), self.d);
        match (&self.kind, self.cone_params()) {
            (_, Some((_, slope))) => {
                let j = jbracket(x);
                for (o, c) in out.iter_mut().zip(x) {
                    *o = -slope * c / j;
                }
            }
            (ProfileKind::Custom { grad, .. }, None) => grad(x, out),
            _ => unreachable!(),
        }
    }

    pub fn grad_norm(&self, x: &[f64]) -> f64 {
        match self.cone_params() {
            Some((_, slope)) => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                slope * r2.sqrt() / (1.0 + r2).sqrt()
            }
            None => {
                let mut g = vec![0.0; self.d];
                self.grad(x, &mut g);
                g.iter().map(|c| c * c).sum::<f64>().sqrt()
            }
        }
    }

    /// Quadratic form v·(Hess M)v.
    pub fn hess_quad(&self, x: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.d);
        match (&self.kind, self.cone_params()) {
            (_, Some((_, slope))) => {
                let j = jbracket(x);
                let v2: f64 = v.iter().map(|c| c * c).sum();
                let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
                -slope * (v2 / j - xv * xv / (j * j * j))
            }
            (ProfileKind::Custom { hess_quad, .. }, None) => hess_quad(x, v),
            _ => unreachable!(),
        }
    }

    /// Operator norm |Hess M(x)|.
    pub fn hess_norm(&self, x: &[f64]) -> f64 {
        match (&self.kind, self.cone_params()) {
            (_, Some((_, slope))) => {
                let j = jbracket(x);
                // eigenvalues -slope/⟨x⟩³ (radial) and -slope/⟨x⟩ (tangential, d >= 2 only)
                if self.d == 1 {
                    slope / (j * j * j)
                } else {
                    slope / j
                }
            }
            (ProfileKind::Custom { hess_norm, .. }, None) => hess_norm(x),
            _ => unreachable!(),
        }
    }

    /// Largest Hessian norm over the sphere |x| = r (sampled for custom oracles).
    pub fn hess_norm_radial_max(&self, r: f64) -> f64 {
        match self.cone_params() {
            Some(_) => {
                let x0 = [r];
                // rotationally symmetric: any direction represents the sphere
                if self.d == 1 {
                    self.hess_norm(&x0)
                } else {
                    let mut x = vec![0.0; self.d];
                    x[0] = r;
                    self.hess_norm(&x)
                }
            }
            None => {
                let mut worst = 0.0f64;
                if self.d == 1 {
                    for s in [-1.0, 1.0] {
                        worst = worst.max(self.hess_norm(&[s * r]));
                    }
                } else if self.d == 2 {
                    for k in 0..128 {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / 128.0;
                        worst = worst.max(self.hess_norm(&[r * th.cos(), r * th.sin()]));
                    }
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(0x5851f42d4c957f2d);
                    let mut x = vec![0.0; self.d];
                    for _ in 0..256 {
                        let mut n2 = 0.0;
                        for c in x.iter_mut() {
                            // Box-Muller is overkill; rejection-free gaussian via sum trick
                            let u: f64 = rng.gen_range(-1.0..1.0);
                            *c = u;
                            n2 += u * u;
                        }
                        if n2 == 0.0 {
                            continue;
                        }
                        let s = r / n2.sqrt();
                        for c in x.iter_mut() {
                            *c *= s;
                        }
                        worst = worst.max(self.hess_norm(&x));
                    }
                }
                worst
            }
        }
    }

    pub fn grad_sup(&self) -> f64 {
        self.grad_sup
    }

    pub fn tail(&self) -> Option<TailBounds> {
        self.tail
    }

    pub fn confinement(&self) -> Confinement {
        self.confinement
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_values_match_closed_forms() {
        let p = ChemoProfile::smoothed_cone(1, 0.0, 1.0).unwrap();
        assert!((p.m(&[0.0]) + 1.0).abs() < 1e-15);
        assert!((p.m(&[1.0]) + std::f64::consts::SQRT_2).abs() < 1e-15);
        let mut g = [0.0];
        p.grad(&[0.0], &mut g);
        assert_eq!(g[0], 0.0);
        p.grad(&[1.0], &mut g);
        assert!((g[0] + 1.0 / std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((p.hess_norm(&[0.0]) - 1.0).abs() < 1e-15);
        // d=1 Hessian decays like ⟨x⟩^-3
        assert!((p.hess_norm(&[2.0]) - 1.0 / 5.0f64.powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn cone_gradient_saturates_at_slope() {
        let p = ChemoProfile::smoothed_cone(2, 1.0, 0.7).unwrap();
        assert!(p.grad_norm(&[100.0, 0.0]) < 0.7);
        assert!(p.grad_norm(&[100.0, 0.0]) > 0.7 * 0.9999);
        assert_eq!(p.grad_sup(), 0.7);
    }

    #[test]
    fn cone_confinement_holds_outside_radius() {
        let p = ChemoProfile::smoothed_cone(2, 0.0, 1.0).unwrap();
        let c = p.confinement();
        for r in [1.0, 1.5, 4.0, 50.0] {
            assert!(p.grad_norm(&[r, 0.0]) >= c.m_star - 1e-15);
        }
    }

    #[test]
    fn log_yukawa_matches_kernel_log_in_1d() {
        // d=1 Yukawa kernel e^{-sqrt(a)|x|}/sqrt(a): log = -sqrt(a)|x| - ln(a)/2,
        // smoothed by |x| -> ⟨x⟩.
        let a = 4.0;
        let p = ChemoProfile::log_yukawa_like(1, a).unwrap();
        let x = [3.0];
        let expect = -a.sqrt() * jbracket(&x) - 0.5 * a.ln();
        assert!((p.m(&x) - expect).abs() < 1e-14);
        let t = p.tail().unwrap();
        assert!((t.slope - 2.0).abs() < 1e-15);
    }

    #[test]
    fn custom_profile_with_consistent_oracles_passes() {
        // quadratic bowl M = -|x|^2/2 (not confined; fine for oracle checks)
        let p = ChemoProfile::custom(
            2,
            Box::new(|x: &[f64]| -0.5 * (x[0] * x[0] + x[1] * x[1])),
            Box::new(|x: &[f64], out: &mut [f64]| {
                out[0] = -x[0];
                out[1] = -x[1];
            }),
            Box::new(|_x: &[f64], v: &[f64]| -(v[0] * v[0] + v[1] * v[1])),
            Box::new(|_x: &[f64]| 1.0),
            f64::INFINITY,
            Confinement {
                radius: 1.0,
                m_star: 1.0,
            },
            None,
        );
        assert!(p.is_ok());
    }

    #[test]
    fn custom_profile_with_wrong_gradient_is_rejected() {
        let p = ChemoProfile::custom(
            1,
            Box::new(|x: &[f64]| -x[0] * x[0]),
            Box::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]), // wrong: missing factor 2
            Box::new(|_, _v: &[f64]| -2.0),
            Box::new(|_| 2.0),
            f64::INFINITY,
            Confinement {
                radius: 1.0,
                m_star: 1.0,
            },
            None,
        );
        assert!(matches!(p, Err(CoreError::OracleInconsistent(_))));
    }

    #[test]
    fn hessian_quad_agrees_with_norm_bound() {
        let p = ChemoProfile::smoothed_cone(2, 0.0, 1.3).unwrap();
        let x = [0.8, -0.4];
        for v in [[1.0, 0.0], [0.3, 0.9], [-0.5, 0.5]] {
            let v2: f64 = v.iter().map(|c| c * c).sum();
            assert!(p.hess_quad(&x, &v).abs() <= p.hess_norm(&x) * v2 + 1e-14);
        }
    }
}
