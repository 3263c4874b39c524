//! Model data for the run-and-tumble equation: velocity space, tumbling
//! response, chemoattractant profile, and the derived constants that the
//! certification stack consumes.

pub mod profile;
pub mod reduced;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use profile::{jbracket, ChemoProfile, Confinement, TailBounds};
pub use reduced::{
    axis_second_moment, gamma_half_int, phi_reduced, reduced_lower_bound, unit_ball_volume,
    velocity_ball_radius, ReducedLowerBound,
};

use crate::error::{CoreError, Result};

/// Velocity domain B(0, V0) ⊂ R^d normalised to unit volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySpace {
    pub d: usize,
    pub v0: f64,
}

impl VelocitySpace {
    pub fn new(d: usize) -> Result<Self> {
        Ok(Self {
            d,
            v0: velocity_ball_radius(d)?,
        })
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().map(|c| c * c).sum::<f64>() <= self.v0 * self.v0 * (1.0 + 1e-12)
    }
}

/// Odd, bounded response shaping the tumbling modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Response {
    Sign,
    Tanh { kappa: f64 },
}

impl Response {
    pub fn eval(&self, m: f64) -> f64 {
        match self {
            Response::Sign => {
                if m > 0.0 {
                    1.0
                } else if m < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Response::Tanh { kappa } => (kappa * m).tanh(),
        }
    }

    /// Pointwise derivative; for Sign this is the a.e. value 0.
    pub fn deriv(&self, m: f64) -> f64 {
        match self {
            Response::Sign => 0.0,
            Response::Tanh { kappa } => {
                let t = (kappa * m).tanh();
                kappa * (1.0 - t * t)
            }
        }
    }

    /// Lipschitz constant: sup |ψ'|. Sign has a distributional atom at 0.
    pub fn deriv_sup(&self) -> f64 {
        match self {
            Response::Sign => f64::INFINITY,
            Response::Tanh { kappa } => *kappa,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Response::Sign)
    }
}

/// Tumbling rate λ(m) = 1 - χ ψ(m), bounded in [1-χ, 1+χ].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumblingRate {
    pub chi: f64,
    pub psi: Response,
}

impl TumblingRate {
    pub fn new(chi: f64, psi: Response) -> Result<Self> {
        if !(0.0..1.0).contains(&chi) {
            return Err(CoreError::InvalidParameter {
                name: "chi",
                detail: format!("tumbling bias must satisfy 0 <= chi < 1, got {chi}"),
            });
        }
        if let Response::Tanh { kappa } = psi {
            if !(kappa > 0.0) || !kappa.is_finite() {
                return Err(CoreError::InvalidParameter {
                    name: "kappa",
                    detail: format!("tanh response needs finite kappa > 0, got {kappa}"),
                });
            }
        }
        Ok(Self { chi, psi })
    }

    pub fn eval(&self, m: f64) -> f64 {
        1.0 - self.chi * self.psi.eval(m)
    }

    pub fn min_rate(&self) -> f64 {
        1.0 - self.chi
    }

    pub fn max_rate(&self) -> f64 {
        1.0 + self.chi
    }
}

/// Validated model bundle with the derived sublinearity constants attached.
pub struct ModelParams {
    pub vspace: VelocitySpace,
    pub rate: TumblingRate,
    pub chemo: ChemoProfile,
    pub reduced: ReducedLowerBound,
}

impl ModelParams {
    /// Build and validate: dimensions must agree, and the certified bound
    /// Φ(|∇M(x)|) >= λ̃ |∇M(x)|^k is spot-checked at 100 seeded points in the
    /// confinement region (tolerance -1e-10, quadrature noise only).
    pub fn new(vspace: VelocitySpace, rate: TumblingRate, chemo: ChemoProfile) -> Result<Self> {
        if vspace.d != chemo.d() {
            return Err(CoreError::InvalidDimension(
                chemo.d(),
                "profile dimension must match velocity space",
            ));
        }
        let conf = chemo.confinement();
        let reduced = reduced_lower_bound(
            &rate.psi,
            vspace.d,
            vspace.v0,
            conf.m_star,
            chemo.grad_sup(),
        )?;

        let mut rng = ChaCha8Rng::seed_from_u64(0x853c49e6748fea9b);
        let lo = conf.radius;
        let hi = 5.0 * conf.radius + 10.0;
        let mut x = vec![0.0; vspace.d];
        let mut checked = 0;
        while checked < 100 {
            for c in x.iter_mut() {
                *c = rng.gen_range(-hi..hi);
            }
            let r: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            if r < lo {
                continue;
            }
            let g = chemo.grad_norm(&x);
            let phi = phi_reduced(&rate.psi, vspace.d, vspace.v0, g)?;
            let slack = phi - reduced.lambda_tilde * g.powf(reduced.k);
            if slack < -1e-10 {
                return Err(CoreError::HypothesisViolation(format!(
                    "sublinearity bound fails at |x| = {r}: Φ(g) - λ̃ g^k = {slack} with g = {g}"
                )));
            }
            checked += 1;
        }

        Ok(Self {
            vspace,
            rate,
            chemo,
            reduced,
        })
    }

    /// Skip the spot-check; for profiles whose bound is known analytically.
    pub fn new_unchecked(
        vspace: VelocitySpace,
        rate: TumblingRate,
        chemo: ChemoProfile,
    ) -> Result<Self> {
        if vspace.d != chemo.d() {
            return Err(CoreError::InvalidDimension(
                chemo.d(),
                "profile dimension must match velocity space",
            ));
        }
        let conf = chemo.confinement();
        let reduced = reduced_lower_bound(
            &rate.psi,
            vspace.d,
            vspace.v0,
            conf.m_star,
            chemo.grad_sup(),
        )?;
        Ok(Self {
            vspace,
            rate,
            chemo,
            reduced,
        })
    }

    pub fn lambda_tilde(&self) -> f64 {
        self.reduced.lambda_tilde
    }

    pub fn moment_exponent(&self) -> f64 {
        self.reduced.k
    }

    /// Reference configuration: d = 1, χ = 1/2, Sign response, centred cone.
    pub fn reference() -> Result<Self> {
        let vspace = VelocitySpace::new(1)?;
        let rate = TumblingRate::new(0.5, Response::Sign)?;
        let chemo = ChemoProfile::smoothed_cone(1, 0.0, 1.0)?;
        Self::new(vspace, rate, chemo)
    }
}
