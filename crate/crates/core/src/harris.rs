//! Quantitative ergodicity certificates.
//!
//! The chain has three independently checkable links:
//!
//! 1. a Foster-Lyapunov weight φ with L*φ <= -c φ outside a finite radius
//!    and L*φ <= A inside it, verified node by node on a grid;
//! 2. a small-set minorisation f(T, ·, ·) >= α on {|x| <= V0} × 𝒱 for
//!    every start in B(0, R*), with an explicit α, stress-tested from
//!    adversarial Dirac starts and witnessed by a particle ensemble;
//! 3. the Harris recursion turning (c, A, T, α) into a total-variation
//!    contraction factor ᾱ per cycle, i.e. a rate σ = -ln(ᾱ)/T.
//!
//! Every constant is computable from the model; nothing is fitted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::grid::{GridSolver, KineticState, PhaseGrid, WeightTable};
use crate::model::ModelParams;
use crate::particle::ParticleEnsemble;
use crate::quad::mesh_max;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Constants of the Lyapunov weight
/// φ(x, v) = (1 - γ v·∇M - βγ ψ(v·∇M) v·∇M) e^{-γM(x)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovWeights {
    pub gamma: f64,
    pub beta: f64,
    /// Exterior decay: L*φ <= -c φ for |x| >= radius.
    pub c: f64,
    /// Bound on the velocity prefactor: 1 <= φ e^{γM} <= ... <= c1.
    pub c1: f64,
    /// Drift radius: smallest radius past which the Hessian of M is small
    /// enough for the exterior inequality.
    pub radius: f64,
    /// The Hessian smallness threshold that fixed `radius`.
    pub hess_cap: f64,
    /// Interior bound: L*φ <= a_const for |x| <= radius (sup over the
    /// interior nodes of the verification grid).
    pub a_const: f64,
}

impl LyapunovWeights {
    /// Derive all constants from the model. The interior bound takes its
    /// sup over the x-nodes of `grid`, which is also where the drift is
    /// verified.
    pub fn from_model(model: &ModelParams, grid: &PhaseGrid) -> Result<Self> {
        let chi = model.rate.chi;
        if !(chi > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "chi",
                detail: "drift certificates need chi > 0 (no bias, no confinement)".into(),
            });
        }
        let chemo = &model.chemo;
        let conf = chemo.confinement();
        let gsup = chemo.grad_sup();
        if !gsup.is_finite() || !(gsup > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "grad_sup",
                detail: format!("certificates need a finite positive gradient sup, got {gsup}"),
            });
        }
        let v0 = model.vspace.v0;
        let lt = model.lambda_tilde();
        let k = model.moment_exponent();
        let m_star = conf.m_star;

        let beta = chi / (1.0 + chi);
        let xi = if k < 2.0 {
            m_star.powf(k - 2.0)
        } else if k == 2.0 {
            1.0
        } else {
            gsup.powf(k - 2.0)
        };
        let b1 = lt * chi * (1.0 - chi) * xi / (8.0 * (1.0 + chi));
        let b2 = (1.0 + chi) / (2.0 * (2.0 + chi) * v0 * gsup);
        let gamma = b1.min(b2);

        // c1 bounds |ψ'(m)m + ψ(m)| over the reachable m-range; sign
        // responses have a.e. derivative zero and |ψ| = 1
        let zmax = v0 * gsup;
        let slope_sup = match model.rate.psi {
            crate::model::Response::Sign => 1.0,
            _ => mesh_max(
                |z| model.rate.psi.deriv(z) * z + model.rate.psi.eval(z),
                0.0,
                zmax,
                10_000,
            ),
        };
        let c1 = 1.0 + beta * slope_sup;

        let hess_cap =
            lt * chi * (1.0 - chi) * m_star.powf(k) / (4.0 * c1 * (1.0 + chi) * v0 * v0);
        let radius = drift_radius(chemo, hess_cap)?;
        let c = gamma * lt * chi * (1.0 - chi) * m_star.powf(k) / (6.0 * (1.0 + chi));

        // interior bound A = γ c1 V0² sup |Hess M| e^{-γM} over covered nodes
        let mut x = vec![0.0; grid.d];
        let mut sup = 0.0f64;
        for i in 0..grid.n_x() {
            grid.x_node(i, &mut x);
            if norm(&x) <= radius {
                sup = sup.max(chemo.hess_norm(&x) * (-gamma * chemo.m(&x)).exp());
            }
        }
        let a_const = gamma * c1 * v0 * v0 * sup;

        Ok(Self {
            gamma,
            beta,
            c,
            c1,
            radius,
            hess_cap,
            a_const,
        })
    }

    pub fn phi(&self, model: &ModelParams, x: &[f64], v: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        model.chemo.grad(x, &mut g);
        let m = dot(v, &g);
        let pm = model.rate.psi.eval(m);
        (1.0 - self.gamma * m - self.beta * self.gamma * pm * m)
            * (-self.gamma * model.chemo.m(x)).exp()
    }

    /// Node table of φ, the weight of the Lyapunov norm.
    pub fn phi_table(&self, model: &ModelParams, grid: &PhaseGrid) -> WeightTable {
        WeightTable::from_fn(grid, |x, v| self.phi(model, x, v))
    }

    /// Exponent of the equivalent confinement norm e^{δ⟨x⟩}: δ = βγ.
    pub fn delta(&self) -> f64 {
        self.beta * self.gamma
    }
}

/// Smallest radius past which |Hess M| stays below `cap`. Assumes the
/// radial Hessian profile is eventually decreasing; a trailing mesh sweep
/// guards against non-monotone profiles.
pub(crate) fn drift_radius(chemo: &crate::model::ChemoProfile, cap: f64) -> Result<f64> {
    let r0 = chemo.confinement().radius;
    let radius = if chemo.hess_norm_radial_max(r0) <= cap {
        r0
    } else {
        let mut lo = r0;
        let mut hi = r0.max(1e-3);
        while chemo.hess_norm_radial_max(hi) > cap {
            lo = hi;
            hi *= 2.0;
            if hi > 1e9 {
                return Err(CoreError::InfeasibleRadius(format!(
                    "Hessian norm never drops below the drift threshold {cap:e}"
                )));
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if chemo.hess_norm_radial_max(mid) > cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let far = 10.0 * radius + 10.0;
    for i in 0..2000 {
        let r = radius + (far - radius) * i as f64 / 1999.0;
        if chemo.hess_norm_radial_max(r) > cap * (1.0 + 1e-9) {
            return Err(CoreError::InfeasibleRadius(format!(
                "Hessian norm re-exceeds the drift threshold at radius {r}"
            )));
        }
    }
    Ok(radius)
}

/// Per-x summary of the node-wise generator check.
#[derive(Debug, Clone)]
pub struct DriftRow {
    /// |x| of the node.
    pub radius: f64,
    pub exterior: bool,
    /// max over v of L*φ + cφ.
    pub max_slack: f64,
    /// max over v of L*φ.
    pub max_generator: f64,
}

#[derive(Debug, Clone)]
pub struct DriftReport {
    pub c: f64,
    pub a_const: f64,
    pub radius: f64,
    pub tol: f64,
    /// max over exterior nodes of L*φ + cφ; the certificate needs <= tol.
    pub worst_exterior_slack: f64,
    /// max over exterior nodes of (L*φ + cφ)/(cφ); negative means margin.
    pub worst_exterior_ratio: f64,
    /// max over interior nodes of L*φ; must stay below a_const.
    pub interior_max_generator: f64,
    /// range of φ e^{γM}; the construction guarantees [1/2, 3/2].
    pub sandwich_min: f64,
    pub sandwich_max: f64,
    pub exterior_nodes: usize,
    pub interior_nodes: usize,
    pub rows: Vec<DriftRow>,
}

impl DriftReport {
    pub fn holds(&self) -> bool {
        self.worst_exterior_slack <= self.tol
            && self.interior_max_generator <= self.a_const
            && self.sandwich_min >= 0.5 - 1e-12
            && self.sandwich_max <= 1.5 + 1e-12
            && self.exterior_nodes > 0
    }
}

/// Evaluate L*φ = v·∇φ + λ(v·∇M)(φ̄ - φ) at every grid node with analytic
/// x-derivatives and the grid's velocity quadrature for φ̄, and compare
/// against the certified bounds.
pub fn verify_drift(
    model: &ModelParams,
    grid: &PhaseGrid,
    w: &LyapunovWeights,
    tol: f64,
) -> Result<DriftReport> {
    let chemo = &model.chemo;
    let psi = model.rate.psi;
    let (gamma, beta, c) = (w.gamma, w.beta, w.c);
    let nv = grid.n_v();
    let mut x = vec![0.0; grid.d];
    let mut g = vec![0.0; grid.d];
    let mut phis = vec![0.0; nv];
    let mut dphiv = vec![0.0; nv];

    let mut rows = Vec::with_capacity(grid.n_x());
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut interior_max = f64::NEG_INFINITY;
    let (mut sand_min, mut sand_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_ext, mut n_int) = (0usize, 0usize);

    for i in 0..grid.n_x() {
        grid.x_node(i, &mut x);
        chemo.grad(&x, &mut g);
        let e = (-gamma * chemo.m(&x)).exp();
        let mut phibar = 0.0;
        for j in 0..nv {
            let v = grid.v_node(j);
            let m = dot(v, &g);
            let pm = psi.eval(m);
            let wfac = 1.0 - gamma * m - beta * gamma * pm * m;
            sand_min = sand_min.min(wfac);
            sand_max = sand_max.max(wfac);
            let hq = chemo.hess_quad(&x, v);
            phis[j] = wfac * e;
            dphiv[j] =
                e * (-gamma * (1.0 + beta * (psi.deriv(m) * m + pm)) * hq - gamma * m * wfac);
            phibar += grid.v_weight(j) * phis[j];
        }
        let r = norm(&x);
        let exterior = r > w.radius;
        let mut max_slack = f64::NEG_INFINITY;
        let mut max_gen = f64::NEG_INFINITY;
        for j in 0..nv {
            let v = grid.v_node(j);
            let m = dot(v, &g);
            let lstar = dphiv[j] + model.rate.eval(m) * (phibar - phis[j]);
            let slack = lstar + c * phis[j];
            max_slack = max_slack.max(slack);
            max_gen = max_gen.max(lstar);
            if exterior {
                worst_ratio = worst_ratio.max(slack / (c * phis[j]));
            }
        }
        if exterior {
            worst_slack = worst_slack.max(max_slack);
            n_ext += 1;
        } else {
            interior_max = interior_max.max(max_gen);
            n_int += 1;
        }
        rows.push(DriftRow {
            radius: r,
            exterior,
            max_slack,
            max_generator: max_gen,
        });
    }

    Ok(DriftReport {
        c,
        a_const: w.a_const,
        radius: w.radius,
        tol,
        worst_exterior_slack: worst_slack,
        worst_exterior_ratio: worst_ratio,
        interior_max_generator: interior_max,
        sandwich_min: sand_min,
        sandwich_max: sand_max,
        exterior_nodes: n_ext,
        interior_nodes: n_int,
        rows,
    })
}

/// Explicit small-set bound: after T = 3 + R*/V0, every start in B(0, R*)
/// has density at least α = (1-χ)² e^{-(1+χ)T} / T^d on {|x| <= V0} × 𝒱.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorisationBound {
    pub r_star: f64,
    pub t: f64,
    pub alpha: f64,
}

pub fn minorisation_bound(model: &ModelParams, r_star: f64) -> Result<MinorisationBound> {
    if !(r_star > 0.0) || !r_star.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "r_star",
            detail: format!("minorisation needs a finite start radius > 0, got {r_star}"),
        });
    }
    let chi = model.rate.chi;
    let t = 3.0 + r_star / model.vspace.v0;
    let alpha =
        (1.0 - chi).powi(2) * (-(1.0 + chi) * t).exp() / t.powi(model.vspace.d as i32);
    Ok(MinorisationBound { r_star, t, alpha })
}

#[derive(Debug, Clone)]
pub struct MinorisationStart {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// min of f(T) over the small-set nodes for this start.
    pub alpha_observed: f64,
}

#[derive(Debug, Clone)]
pub struct MinorisationReport {
    pub bound: MinorisationBound,
    pub starts: Vec<MinorisationStart>,
    pub alpha_observed_min: f64,
    /// alpha_observed_min / alpha; the grid check asks for >= 0.9.
    pub ratio: f64,
}

impl MinorisationReport {
    pub fn holds(&self) -> bool {
        self.alpha_observed_min > 0.0 && self.ratio >= 0.9
    }
}

/// March adversarial Dirac-cell starts (the +R* corner plus 10 seeded random
/// points of B(0, R*), each paired with its fastest outward velocity node)
/// to time T and record the smallest density reached on the small set.
pub fn verify_minorisation(
    model: &ModelParams,
    grid: &PhaseGrid,
    r_star: f64,
    seed: u64,
) -> Result<MinorisationReport> {
    let bound = minorisation_bound(model, r_star)?;
    let v0 = model.vspace.v0;
    let needed = r_star + v0 * bound.t;
    if grid.l < needed {
        return Err(CoreError::InvalidParameter {
            name: "l",
            detail: format!(
                "box half-width {} cannot contain the minorisation support radius {needed}",
                grid.l
            ),
        });
    }
    let solver = GridSolver::new(grid, model)?;

    // small-set node indices: |x_i| <= V0
    let mut x = vec![0.0; grid.d];
    let small: Vec<usize> = (0..grid.n_x())
        .filter(|&i| {
            grid.x_node(i, &mut x);
            norm(&x) <= v0
        })
        .collect();
    debug_assert!(!small.is_empty(), "grid too coarse to resolve the small set");

    let outward_node = |dir: &[f64]| -> usize {
        (0..grid.n_v())
            .max_by(|&a, &b| dot(grid.v_node(a), dir).total_cmp(&dot(grid.v_node(b), dir)))
            .expect("nonempty velocity grid")
    };

    let mut start_points: Vec<Vec<f64>> = Vec::with_capacity(11);
    let corner: Vec<f64> = vec![r_star / (grid.d as f64).sqrt(); grid.d];
    start_points.push(corner);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while start_points.len() < 11 {
        let p: Vec<f64> = (0..grid.d)
            .map(|_| rng.gen_range(-r_star..r_star))
            .collect();
        if norm(&p) <= r_star {
            start_points.push(p);
        }
    }

    let mut starts = Vec::with_capacity(start_points.len());
    let mut overall = f64::INFINITY;
    for p in start_points {
        let r = norm(&p);
        let dir: Vec<f64> = if r > 1e-12 {
            p.iter().map(|c| c / r).collect()
        } else {
            let mut e = vec![0.0; grid.d];
            e[0] = 1.0;
            e
        };
        let xi = grid.x_index_of(&p).expect("start inside the box");
        let vj = outward_node(&dir);
        let mut state = KineticState::dirac_cell(grid, xi, vj);
        solver.run_until(&mut state, bound.t)?;
        let alpha_observed = small
            .iter()
            .flat_map(|&i| state.f.row(i).to_vec())
            .fold(f64::INFINITY, f64::min);
        overall = overall.min(alpha_observed);
        starts.push(MinorisationStart {
            x: p,
            v: grid.v_node(vj).to_vec(),
            alpha_observed,
        });
    }

    Ok(MinorisationReport {
        bound,
        starts,
        alpha_observed_min: overall,
        ratio: overall / bound.alpha,
    })
}

/// One-sided lower confidence bound for a binomial proportion (Wilson).
fn wilson_lower(p_hat: f64, n: f64, z: f64) -> f64 {
    let denom = 1.0 + z * z / n;
    let centre = (p_hat + z * z / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    centre - half
}

#[derive(Debug, Clone, Copy)]
pub struct WitnessReport {
    pub bound: MinorisationBound,
    pub n: usize,
    /// Fraction of particles inside {|x| <= V0} at time T.
    pub p_hat: f64,
    /// One-sided 99% lower confidence bound for that fraction.
    pub lower_confidence: f64,
}

impl WitnessReport {
    /// The small set has unit x-volume, so the minorisation implies the
    /// in-set probability itself is at least α.
    pub fn holds(&self) -> bool {
        self.lower_confidence >= self.bound.alpha
    }
}

/// Monte-Carlo witness of the minorisation: particles start at the +R*
/// corner moving outward at full speed, the worst case the bound covers.
pub fn particle_witness(
    model: &ModelParams,
    r_star: f64,
    n: usize,
    seed: u64,
) -> Result<WitnessReport> {
    let bound = minorisation_bound(model, r_star)?;
    let d = model.vspace.d;
    let dir = 1.0 / (d as f64).sqrt();
    let x0: Vec<f64> = vec![r_star * dir; d];
    let v0: Vec<f64> = vec![model.vspace.v0 * dir; d];
    let mut ensemble = ParticleEnsemble::new_dirac(n, &x0, &v0, seed)?;
    ensemble.advance(model, bound.t)?;
    let p_hat = ensemble.in_ball_fraction(model.vspace.v0);
    let lower = wilson_lower(p_hat, n as f64, 2.3263);
    Ok(WitnessReport {
        bound,
        n,
        p_hat,
        lower_confidence: lower,
    })
}

/// Inputs of the Harris recursion for one coupling cycle of length T.
#[derive(Debug, Clone, Copy)]
pub struct HarrisInputs {
    /// Small-set mass α ∈ (0, 1).
    pub alpha: f64,
    /// Lyapunov contraction over one cycle: E φ(X_T) <= λ_FL φ + K.
    pub lambda_fl: f64,
    pub k_const: f64,
    /// Level of the coupling set {φ <= R}.
    pub r_level: f64,
    pub t_cycle: f64,
    /// Override for λ0 (default λ_FL + 2K/R).
    pub lambda0: Option<f64>,
    /// Override for α0 (default α/2).
    pub alpha0: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct HarrisRate {
    /// Per-cycle contraction of the weighted TV distance.
    pub alpha_bar: f64,
    /// Prefactor C = 1/ᾱ of the exponential estimate.
    pub c_prefactor: f64,
    /// Continuous-time rate: distance <= C e^{-σ t} initially-weighted.
    pub sigma: f64,
    pub lambda0: f64,
    pub alpha0: f64,
    /// Weight β = α0/K of the composite norm 1 + β φ.
    pub beta_weight: f64,
}

pub fn harris_rate(inp: &HarrisInputs) -> Result<HarrisRate> {
    let HarrisInputs {
        alpha,
        lambda_fl,
        k_const,
        r_level,
        t_cycle,
        ..
    } = *inp;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CoreError::InvalidParameter {
            name: "alpha",
            detail: format!("small-set mass must lie in (0, 1), got {alpha}"),
        });
    }
    if !(lambda_fl > 0.0 && lambda_fl < 1.0) {
        return Err(CoreError::InvalidParameter {
            name: "lambda_fl",
            detail: format!("cycle contraction must lie in (0, 1), got {lambda_fl}"),
        });
    }
    if !(k_const > 0.0) || !(t_cycle > 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "k_const",
            detail: format!("need K > 0 and T > 0, got K = {k_const}, T = {t_cycle}"),
        });
    }
    let r_min = 2.0 * k_const / (1.0 - alpha);
    if r_level <= r_min {
        return Err(CoreError::InfeasibleRadius(format!(
            "level {r_level} must exceed 2K/(1-α) = {r_min}"
        )));
    }
    let lambda0 = inp.lambda0.unwrap_or(lambda_fl + 2.0 * k_const / r_level);
    if lambda0 >= 1.0 {
        return Err(CoreError::InfeasibleRadius(format!(
            "λ0 = {lambda0} >= 1; raise the level radius {r_level}"
        )));
    }
    let alpha0 = inp.alpha0.unwrap_or(alpha / 2.0);
    if !(alpha0 > 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "alpha0",
            detail: format!("coupling share must be positive, got {alpha0}"),
        });
    }
    let beta_weight = alpha0 / k_const;
    let alpha_bar = (1.0 - alpha - alpha0)
        .max((2.0 + r_level * beta_weight * lambda0) / (2.0 + r_level * beta_weight));
    debug_assert!(alpha_bar < 1.0);
    Ok(HarrisRate {
        alpha_bar,
        c_prefactor: 1.0 / alpha_bar,
        sigma: -alpha_bar.ln() / t_cycle,
        lambda0,
        alpha0,
        beta_weight,
    })
}

/// Unweighted Doeblin fallback: contraction 1-α per cycle, no Lyapunov input.
#[derive(Debug, Clone, Copy)]
pub struct DoeblinRate {
    pub c_prefactor: f64,
    pub sigma: f64,
}

pub fn doeblin_rate(alpha: f64, t_cycle: f64) -> Result<DoeblinRate> {
    if !(alpha > 0.0 && alpha < 1.0) || !(t_cycle > 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "alpha",
            detail: format!("need α in (0, 1) and T > 0, got α = {alpha}, T = {t_cycle}"),
        });
    }
    Ok(DoeblinRate {
        c_prefactor: 1.0 / (1.0 - alpha),
        sigma: -(1.0 - alpha).ln() / t_cycle,
    })
}

/// End-to-end certificate: drift constants, minorisation, and Harris rate
/// composed into one certified σ > 0.
#[derive(Debug, Clone)]
pub struct CertifiedChain {
    pub weights: LyapunovWeights,
    pub drift: DriftReport,
    pub minor: MinorisationBound,
    /// Cycle contraction λ_FL = e^{-cT}.
    pub lambda_fl: f64,
    /// Cycle inflow K = (A/c)(1 - e^{-cT}).
    pub k_const: f64,
    pub r_level: f64,
    pub rate: HarrisRate,
    /// {φ <= R} is contained in {⟨x⟩ <= outer} and contains {⟨x⟩ <= inner}
    /// when the profile carries two-sided tail bounds.
    pub sublevel_outer_bracket: Option<f64>,
    pub sublevel_inner_bracket: Option<f64>,
}

pub fn certified_chain(
    model: &ModelParams,
    grid: &PhaseGrid,
    r_star: f64,
    r_level: Option<f64>,
    drift_tol: f64,
) -> Result<CertifiedChain> {
    let weights = LyapunovWeights::from_model(model, grid)?;
    let drift = verify_drift(model, grid, &weights, drift_tol)?;
    if !drift.holds() {
        return Err(CoreError::CertificateFailed {
            what: "Lyapunov drift inequality on the verification grid".into(),
            margin: drift.worst_exterior_slack,
        });
    }
    let minor = minorisation_bound(model, r_star)?;
    let lambda_fl = (-weights.c * minor.t).exp();
    let k_const = weights.a_const / weights.c * (1.0 - lambda_fl);
    let r_level = r_level.unwrap_or_else(|| {
        2.0 * (2.0 * k_const / (1.0 - minor.alpha)).max(2.0 * k_const / (1.0 - lambda_fl))
    });
    let rate = harris_rate(&HarrisInputs {
        alpha: minor.alpha,
        lambda_fl,
        k_const,
        r_level,
        t_cycle: minor.t,
        lambda0: None,
        alpha0: None,
    })?;
    let (outer, inner) = match model.chemo.tail() {
        Some(t) => {
            let g = weights.gamma;
            let outer = ((2.0 * r_level).ln() + g * t.upper_offset) / (g * t.slope);
            let inner = ((2.0 * r_level / 3.0).ln() + g * t.lower_offset) / (g * t.slope);
            (Some(outer), Some(inner))
        }
        None => (None, None),
    };
    Ok(CertifiedChain {
        weights,
        drift,
        minor,
        lambda_fl,
        k_const,
        r_level,
        rate,
        sublevel_outer_bracket: outer,
        sublevel_inner_bracket: inner,
    })
}
