//! Weakly non-linear coupling M = M∞ + log(1 + η N*ρ): the fixed-point map
//! G, the admissible η threshold, the coupled steady state, and the
//! perturbation estimates behind the nonlinear decay certificate.
//!
//! Throughout, f_∞^M is the kinetic steady state under a frozen field M,
//! ρ^M its position marginal, and ‖·‖** the e^{δ⟨x⟩}-weighted L¹ norm with
//! δ = βγ taken from the linear certificate of the background profile.

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};
use crate::grid::{steady_state, ChemoOnGrid, GridSolver, KineticState, PhaseGrid, WeightTable};
use crate::harris::{
    certified_chain, drift_radius, harris_rate, minorisation_bound, HarrisInputs, LyapunovWeights,
};
use crate::model::{reduced_lower_bound, ChemoProfile, ModelParams};
use crate::quad::mesh_max;

/// Mesh for the numeric kernel sup-norms: 1e-6 spacing on the radial
/// coordinate, fine enough that the recorded norms carry ~9 digits.
const KERNEL_MESH: usize = 1_000_001;

/// Compactly supported radial bump a·exp(-1/(1 - (|x|/r)²)) on |x| < r.
///
/// The canonical coupling kernel: positive, smooth, and compact. Sup-norms
/// are computed on a fine radial mesh at construction and recorded; the
/// amplitude e with radius 1 normalises the peak to ‖N‖∞ = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpKernel {
    pub amplitude: f64,
    pub radius: f64,
    /// ‖N‖∞ (attained at the origin).
    pub sup: f64,
    /// ‖∇N‖∞.
    pub grad_sup: f64,
    /// Sup of the Hessian operator norm: max of the radial second
    /// derivative and the tangential N'(s)/s component.
    pub hess_sup: f64,
}

impl BumpKernel {
    pub fn new(amplitude: f64, radius: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "amplitude",
                detail: format!("kernel amplitude must be positive and finite, got {amplitude}"),
            });
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "radius",
                detail: format!("kernel support radius must be positive and finite, got {radius}"),
            });
        }
        let (mut sup, mut grad_sup, mut hess_sup) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..KERNEL_MESH {
            let s = i as f64 / (KERNEL_MESH - 1) as f64;
            if s >= 1.0 {
                continue;
            }
            let u = 1.0 - s * s;
            let p = amplitude * (-1.0 / u).exp();
            sup = sup.max(p);
            grad_sup = grad_sup.max(p * (2.0 * s) / (u * u));
            let radial = p * (6.0 * s.powi(4) - 2.0).abs() / u.powi(4);
            let tangential = p * 2.0 / (u * u);
            hess_sup = hess_sup.max(radial.max(tangential));
        }
        Ok(Self {
            amplitude,
            radius,
            sup,
            grad_sup: grad_sup / radius,
            hess_sup: hess_sup / (radius * radius),
        })
    }

    /// Unit-amplitude-e kernel on the unit ball: ‖N‖∞ = 1.
    pub fn standard() -> Result<Self> {
        Self::new(std::f64::consts::E, 1.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let s2: f64 = x.iter().map(|c| (c / self.radius).powi(2)).sum();
        if s2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - s2)).exp()
        }
    }

    /// N and ∇N at x in one pass; returns N, fills `grad`.
    pub fn eval_with_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let s2: f64 = x.iter().map(|c| (c / self.radius).powi(2)).sum();
        if s2 >= 1.0 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return 0.0;
        }
        let u = 1.0 - s2;
        let n = self.amplitude * (-1.0 / u).exp();
        let scale = -2.0 * n / (self.radius * self.radius * u * u);
        for (g, c) in grad.iter_mut().zip(x) {
            *g = scale * c;
        }
        n
    }
}

/// Coupling data: kernel, strength η, and the Taylor-validity restriction
/// η ≤ 1/‖N‖∞ under which log(1 + ηN*ρ) stays well defined for every
/// probability density ρ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSpec {
    pub kernel: BumpKernel,
    pub eta: f64,
}

impl CouplingSpec {
    pub fn new(kernel: BumpKernel, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "eta",
                detail: format!("coupling strength must be a finite nonnegative real, got {eta}"),
            });
        }
        if eta * kernel.sup > 1.0 + 1e-12 {
            return Err(CoreError::InvalidParameter {
                name: "eta",
                detail: format!(
                    "Taylor validity needs eta <= 1/sup N = {:e}, got {eta:e}",
                    1.0 / kernel.sup
                ),
            });
        }
        Ok(Self { kernel, eta })
    }

    /// Assemble the coupled field M = M∞ + log(1 + η N*ρ) and its analytic
    /// gradient ∇M = ∇M∞ + η (∇N*ρ) / (1 + η N*ρ) on the grid nodes.
    ///
    /// The convolution is direct quadrature over the cells inside the
    /// kernel support; ρ holds marginal density values at the nodes.
    pub fn assemble(&self, grid: &PhaseGrid, chemo: &ChemoProfile, rho: &Array1<f64>) -> ChemoOnGrid {
        let n = grid.n_x();
        debug_assert_eq!(rho.len(), n);
        let dx = grid.dx();
        let cellvol = grid.cell_volume();
        let reach = (self.kernel.radius / dx).ceil() as isize;
        let nx = grid.nx as isize;

        let mut m = Array1::zeros(n);
        let mut grad = Array2::zeros((n, grid.d));
        let mut x = vec![0.0; grid.d];
        let mut g = vec![0.0; grid.d];
        let mut nk = vec![0.0; grid.d];
        for i in 0..n {
            let mut conv = 0.0;
            let mut cgrad = [0.0f64; 2];
            match grid.d {
                1 => {
                    let a = i as isize;
                    let lo = (a - reach).max(0);
                    let hi = (a + reach).min(nx - 1);
                    for b in lo..=hi {
                        let dxi = [(a - b) as f64 * dx];
                        let nval = self.kernel.eval_with_grad(&dxi, &mut nk[..1]);
                        let w = rho[b as usize] * cellvol;
                        conv += nval * w;
                        cgrad[0] += nk[0] * w;
                    }
                }
                2 => {
                    let (a0, a1) = ((i as isize) / nx, (i as isize) % nx);
                    for b0 in (a0 - reach).max(0)..=(a0 + reach).min(nx - 1) {
                        for b1 in (a1 - reach).max(0)..=(a1 + reach).min(nx - 1) {
                            let dxi = [(a0 - b0) as f64 * dx, (a1 - b1) as f64 * dx];
                            let nval = self.kernel.eval_with_grad(&dxi, &mut nk[..2]);
                            if nval == 0.0 {
                                continue;
                            }
                            let w = rho[(b0 * nx + b1) as usize] * cellvol;
                            conv += nval * w;
                            cgrad[0] += nk[0] * w;
                            cgrad[1] += nk[1] * w;
                        }
                    }
                }
                _ => unreachable!("phase grids are one- or two-dimensional"),
            }
            grid.x_node(i, &mut x);
            chemo.grad(&x, &mut g);
            let denom = 1.0 + self.eta * conv;
            m[i] = chemo.m(&x) + (self.eta * conv).ln_1p();
            for a in 0..grid.d {
                grad[[i, a]] = g[a] + self.eta * cgrad[a] / denom;
            }
        }
        ChemoOnGrid { m, grad }
    }
}

/// W^{1,∞} distance between two grid fields: max over nodes of |ΔM| and of
/// every |Δ∂M| component.
pub fn field_w1inf(a: &ChemoOnGrid, b: &ChemoOnGrid) -> f64 {
    debug_assert_eq!(a.m.len(), b.m.len());
    let dm = a
        .m
        .iter()
        .zip(b.m.iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f64, f64::max);
    let dg = a
        .grad
        .iter()
        .zip(b.grad.iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f64, f64::max);
    dm.max(dg)
}

/// The admissibility threshold as pure arithmetic:
/// λ̃ χ(1-χ) m*^k / (48 χ(1+χ) V0 ‖ψ'‖∞ ‖∇N‖∞), intersected with 1/‖N‖∞.
/// The χ cancels; it is kept as written for traceability of the constants.
pub fn eta_threshold_raw(
    lambda_tilde: f64,
    chi: f64,
    m_star: f64,
    k: f64,
    v0: f64,
    psi_prime_sup: f64,
    grad_n_sup: f64,
    n_sup: f64,
) -> f64 {
    let thr = lambda_tilde * chi * (1.0 - chi) * m_star.powf(k)
        / (48.0 * chi * (1.0 + chi) * v0 * psi_prime_sup * grad_n_sup);
    thr.min(1.0 / n_sup)
}

/// Coupling strengths below this threshold make G a (1/2)-contraction in
/// W^{1,∞}. Needs a Lipschitz response; the sign response has no finite
/// derivative sup and is rejected.
pub fn eta_threshold(model: &ModelParams, kernel: &BumpKernel) -> Result<f64> {
    if !model.rate.psi.is_smooth() {
        return Err(CoreError::NonsmoothResponse(
            "the coupling threshold needs a Lipschitz response; sign has no derivative sup",
        ));
    }
    let chi = model.rate.chi;
    if !(chi > 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "chi",
            detail: "the coupling threshold needs chi > 0".into(),
        });
    }
    Ok(eta_threshold_raw(
        model.lambda_tilde(),
        chi,
        model.chemo.confinement().m_star,
        model.moment_exponent(),
        model.vspace.v0,
        model.rate.psi.deriv_sup(),
        kernel.grad_sup,
        kernel.sup,
    ))
}

/// Largest ‖f0‖** for which the nonlinear decay estimate closes:
/// (1/4)(σ²/(4ηχV0·D·‖ψ'‖∞‖∇N‖∞) - C*). A nonpositive return means the
/// hypothesis is vacuous for these constants; that is a regime report, not
/// an error. η → 0 sends the bound to +∞.
pub fn initial_data_bound(
    sigma: f64,
    eta: f64,
    chi: f64,
    v0: f64,
    d_const: f64,
    c_star: f64,
    psi_prime_sup: f64,
    grad_n_sup: f64,
) -> f64 {
    0.25 * (sigma * sigma / (4.0 * eta * chi * v0 * d_const * psi_prime_sup * grad_n_sup) - c_star)
}

/// Certified constants for the whole perturbed profile family
/// {M∞ + log(1 + ηN*ρ) : ρ a probability density}, derived once from the
/// background chain and valid uniformly in ρ.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearConstants {
    pub eta: f64,
    pub eta_threshold: f64,
    /// η above the certified contraction threshold: constants are still
    /// reported but the fixed-point contraction is unproven there.
    pub threshold_exceeded: bool,
    /// Exponent of the ‖·‖** weight e^{δ⟨x⟩}: δ = βγ of the linear chain.
    pub delta: f64,
    /// Lyapunov section of the frozen background chain.
    pub linear: LyapunovWeights,
    pub sigma_linear: f64,
    /// Lyapunov section valid uniformly over the perturbed family.
    pub unif: LyapunovWeights,
    pub lambda_tilde_unif: f64,
    /// Gradient window of the family: m*/2 <= |∇M| <= gsup + η‖∇N‖∞.
    pub m_star_unif: f64,
    pub gsup_unif: f64,
    /// Additive Hessian allowance η‖N‖_{W²,∞}-type term for the log factor.
    pub hess_slack: f64,
    pub sigma_unif: f64,
    pub c_prefactor_unif: f64,
    /// Exterior decay coefficient of the background chain (the c of the
    /// φ-drift), reused by the moment budget below.
    pub c6: f64,
    /// Sharp perturbation loss: what the coupling can feed back into the
    /// φ-drift at strength η.
    pub p_sharp: f64,
    /// Net moment decay margin (2/3)(c6 - p_sharp); positive means the
    /// nonlinear moment bound closes at this η.
    pub b_moment: f64,
    /// Norm conversions between ‖·‖** and the φ-weighted norm, domain
    /// restricted to the grid box.
    pub e1: f64,
    pub e2: f64,
    /// e1·e2; the trajectory bound takes the form C* + 4‖f0‖** when <= 4.
    pub init_factor: f64,
    /// Trajectory moment offset: ‖f_t‖** <= C* + init_factor·‖f0‖**.
    pub c_star: f64,
    /// Uniform steady-state bound: ‖f_∞^M‖** <= C̃ for every admissible M.
    pub c_tilde: f64,
    /// Semigroup-continuity constant entering the initial-data bound.
    pub d_semigroup: f64,
    /// Admissible ‖f0‖** for certified nonlinear decay; nonpositive means
    /// the certified regime is vacuous at these constants.
    pub init_bound: f64,
}

/// Derive the uniform constants. The background chain is certified on the
/// given grid (drift verified node-wise); the family variants rescan the
/// reduced integral over the widened gradient window [m*/2, gsup + η‖∇N‖∞]
/// and enlarge the drift radius so the Hessian allowance of the log factor
/// fits under the smallness cap.
pub fn uniform_constants(
    model: &ModelParams,
    grid: &PhaseGrid,
    spec: &CouplingSpec,
    r_star: f64,
    drift_tol: f64,
) -> Result<NonlinearConstants> {
    if !model.rate.psi.is_smooth() {
        return Err(CoreError::NonsmoothResponse(
            "uniform perturbed-family constants need a Lipschitz response",
        ));
    }
    let tail = model.chemo.tail().ok_or_else(|| {
        CoreError::HypothesisViolation(
            "uniform constants need two-sided exponential tail bounds on the background profile"
                .into(),
        )
    })?;
    let eta = spec.eta;
    let thr = eta_threshold(model, &spec.kernel)?;

    let chain = certified_chain(model, grid, r_star, None, drift_tol)?;
    let linear = chain.weights;
    let delta = linear.delta();
    let c6 = linear.c;

    let chi = model.rate.chi;
    let beta = linear.beta;
    let v0 = model.vspace.v0;
    let conf = model.chemo.confinement();
    let m_star_unif = conf.m_star / 2.0;
    let gsup_unif = model.chemo.grad_sup() + eta * spec.kernel.grad_sup;
    if eta * spec.kernel.grad_sup > m_star_unif {
        return Err(CoreError::HypothesisViolation(format!(
            "perturbation swallows the gradient window: eta*sup|grad N| = {:e} > m*/2 = {:e}",
            eta * spec.kernel.grad_sup,
            m_star_unif
        )));
    }

    let reduced = reduced_lower_bound(&model.rate.psi, grid.d, v0, m_star_unif, gsup_unif)?;
    let (lt, k) = (reduced.lambda_tilde, reduced.k);
    let xi = if k < 2.0 {
        m_star_unif.powf(k - 2.0)
    } else if k == 2.0 {
        1.0
    } else {
        gsup_unif.powf(k - 2.0)
    };
    let b1 = lt * chi * (1.0 - chi) * xi / (8.0 * (1.0 + chi));
    let b2 = (1.0 + chi) / (2.0 * (2.0 + chi) * v0 * gsup_unif);
    let gamma_u = b1.min(b2);
    let slope_sup = mesh_max(
        |z| model.rate.psi.deriv(z) * z + model.rate.psi.eval(z),
        0.0,
        v0 * gsup_unif,
        10_000,
    );
    let c1_u = 1.0 + beta * slope_sup;
    let cap = lt * chi * (1.0 - chi) * m_star_unif.powf(k) / (4.0 * c1_u * (1.0 + chi) * v0 * v0);
    let hess_slack = eta * spec.kernel.hess_sup + eta * eta * spec.kernel.grad_sup.powi(2);
    let cap_eff = cap - hess_slack;
    if !(cap_eff > 0.0) {
        return Err(CoreError::HypothesisViolation(format!(
            "Hessian allowance {hess_slack:e} of the coupling exceeds the drift cap {cap:e}"
        )));
    }
    let radius_u = drift_radius(&model.chemo, cap_eff)?;
    let c_u = gamma_u * lt * chi * (1.0 - chi) * m_star_unif.powf(k) / (6.0 * (1.0 + chi));

    // family interior bound: Hess M picks up at most hess_slack and the
    // weight e^{-γM} only shrinks, since the log factor is nonnegative
    let mut x = vec![0.0; grid.d];
    let mut sup = 0.0f64;
    for i in 0..grid.n_x() {
        grid.x_node(i, &mut x);
        if x.iter().map(|c| c * c).sum::<f64>().sqrt() <= radius_u {
            let val =
                (model.chemo.hess_norm(&x) + hess_slack) * (-gamma_u * model.chemo.m(&x)).exp();
            sup = sup.max(val);
        }
    }
    let a_u = gamma_u * c1_u * v0 * v0 * sup;
    let unif = LyapunovWeights {
        gamma: gamma_u,
        beta,
        c: c_u,
        c1: c1_u,
        radius: radius_u,
        hess_cap: cap_eff,
        a_const: a_u,
    };

    let minor = minorisation_bound(model, r_star)?;
    let lambda_fl = (-c_u * minor.t).exp();
    let k_const = a_u / c_u * (1.0 - lambda_fl);
    let r_level = 2.0
        * (2.0 * k_const / (1.0 - minor.alpha)).max(2.0 * k_const / (1.0 - lambda_fl));
    let rate_u = harris_rate(&HarrisInputs {
        alpha: minor.alpha,
        lambda_fl,
        k_const,
        r_level,
        t_cycle: minor.t,
        lambda0: None,
        alpha0: None,
    })?;

    let psi_prime_sup = model.rate.psi.deriv_sup();
    let wspread = 2.0 * linear.gamma * v0 * gsup_unif * (1.0 + beta);
    let p_sharp = chi * psi_prime_sup * v0 * eta * spec.kernel.grad_sup
        * wspread
        * (linear.gamma * eta * spec.kernel.sup).exp();
    let b_moment = (2.0 / 3.0) * (c6 - p_sharp);

    // norm conversions, domain restricted to the grid box |x|∞ <= L:
    // e^{δ⟨x⟩} <= e1·φ and φ <= e2·e^{δ⟨x⟩} through the tail bounds of M∞
    // and the envelope 0 <= log factor <= η‖N‖∞
    let bmax = (1.0 + grid.d as f64 * grid.l * grid.l).sqrt();
    let e1 = 2.0
        * (gamma_u * (tail.upper_offset + eta * spec.kernel.sup)).exp()
        * ((delta - gamma_u * tail.slope).max(0.0) * bmax).exp();
    let e2 = 1.5
        * (-gamma_u * tail.lower_offset).exp()
        * ((gamma_u * tail.slope - delta).max(0.0) * bmax).exp();
    let init_factor = e1 * e2;
    let c_star = e1 * a_u / c_u;
    let d_semigroup = init_factor * rate_u.c_prefactor;
    let init_bound = initial_data_bound(
        rate_u.sigma,
        eta,
        chi,
        v0,
        d_semigroup,
        c_star,
        psi_prime_sup,
        spec.kernel.grad_sup,
    );

    Ok(NonlinearConstants {
        eta,
        eta_threshold: thr,
        threshold_exceeded: eta > thr,
        delta,
        linear,
        sigma_linear: chain.rate.sigma,
        unif,
        lambda_tilde_unif: lt,
        m_star_unif,
        gsup_unif,
        hess_slack,
        sigma_unif: rate_u.sigma,
        c_prefactor_unif: rate_u.c_prefactor,
        c6,
        p_sharp,
        b_moment,
        e1,
        e2,
        init_factor,
        c_star,
        c_tilde: c_star,
        d_semigroup,
        init_bound,
    })
}

/// Steady-solve configuration for one G evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SolveCfg {
    /// Time step; the grid default when absent.
    pub dt: Option<f64>,
    /// Weighted steady-state residual target.
    pub ss_tol: f64,
    pub ss_max_steps: usize,
}

impl Default for SolveCfg {
    fn default() -> Self {
        Self {
            dt: None,
            ss_tol: 1e-9,
            ss_max_steps: 400_000,
        }
    }
}

/// One application of G.
pub struct GOutcome {
    /// G(M) = M∞ + log(1 + η N*ρ^M) with its analytic gradient.
    pub field: ChemoOnGrid,
    /// The kinetic steady state under the input field.
    pub f_inf: KineticState,
    /// Its position marginal ρ^M.
    pub rho: Array1<f64>,
    /// Final weighted steady-state residual.
    pub residual: f64,
    pub steps: usize,
}

/// Apply G to a field: solve the kinetic steady state under frozen M, take
/// its marginal, and reassemble the coupled field. The input must sit in
/// the coupling envelope |M - M∞| <= η‖N‖∞, which is what the image of any
/// probability density looks like.
pub fn g_map(
    grid: &PhaseGrid,
    model: &ModelParams,
    spec: &CouplingSpec,
    weight: &WeightTable,
    field: &ChemoOnGrid,
    cfg: &SolveCfg,
) -> Result<GOutcome> {
    let envelope = spec.eta * spec.kernel.sup + 1e-9;
    let mut x = vec![0.0; grid.d];
    for i in 0..grid.n_x() {
        grid.x_node(i, &mut x);
        let dev = (field.m[i] - model.chemo.m(&x)).abs();
        if dev > envelope {
            return Err(CoreError::HypothesisViolation(format!(
                "input field strays {dev:e} from the background profile at node {i}; \
                 the coupling envelope is {:e}",
                spec.eta * spec.kernel.sup
            )));
        }
    }
    let dt = cfg.dt.unwrap_or_else(|| grid.default_dt());
    let solver = GridSolver::from_field(grid, &model.rate, field, dt)?;
    let out = steady_state(
        &solver,
        KineticState::uniform(grid),
        weight,
        cfg.ss_tol,
        cfg.ss_max_steps,
    )?;
    let mass = out.state.mass(grid);
    if (mass - 1.0).abs() > 1e-9 {
        return Err(CoreError::NumericalInstability {
            time: out.state.time,
            detail: format!("steady-state mass {mass} escaped renormalisation"),
        });
    }
    let rho = out.state.x_marginal(grid);
    let field = spec.assemble(grid, &model.chemo, &rho);
    Ok(GOutcome {
        field,
        f_inf: out.state,
        rho,
        residual: out.residual,
        steps: out.steps,
    })
}

/// Residual history of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct FixedPointTrace {
    /// ‖M_{n+1} - M_n‖_{W^{1,∞}} per sweep.
    pub residuals: Vec<f64>,
    /// Successive residual quotients; below 1/2 in the contraction regime.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

/// Fixed point of G with its kinetic steady state.
pub struct FixedPoint {
    pub field: ChemoOnGrid,
    /// Steady state re-solved under the final field.
    pub f_inf: KineticState,
    pub rho: Array1<f64>,
    pub trace: FixedPointTrace,
    /// G applications until the residual dropped below tolerance.
    pub iterations: usize,
}

/// Iterate M_{n+1} = G(M_n) from M_0 = M∞ until the W^{1,∞} residual drops
/// below `tol`. Three consecutive non-contracting sweeps abort with the
/// residual trace. On convergence the kinetic state is re-solved under the
/// final field so the returned pair is self-consistent to the solver
/// tolerance.
pub fn solve_fixed_point(
    grid: &PhaseGrid,
    model: &ModelParams,
    spec: &CouplingSpec,
    weight: &WeightTable,
    cfg: &SolveCfg,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    let mut cur = ChemoOnGrid::sample(grid, &model.chemo);
    let mut residuals: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    for it in 1..=max_iter {
        let out = g_map(grid, model, spec, weight, &cur, cfg)?;
        let r = field_w1inf(&out.field, &cur);
        if let Some(&prev) = residuals.last() {
            if prev > 0.0 {
                ratios.push(r / prev);
            }
        }
        residuals.push(r);
        if ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|q| *q >= 1.0) {
            return Err(CoreError::FixedPointDiverged { trace: residuals });
        }
        if r < tol {
            let last = g_map(grid, model, spec, weight, &out.field, cfg)?;
            return Ok(FixedPoint {
                field: out.field,
                f_inf: last.f_inf,
                rho: last.rho,
                trace: FixedPointTrace {
                    residuals,
                    ratios,
                    converged: true,
                },
                iterations: it,
            });
        }
        cur = out.field;
    }
    Err(CoreError::NonConvergence {
        steps: max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
        tol,
    })
}

/// Node-wise defect h = (L_{M̃} - L_{M_t})f of freezing the field at M̃
/// instead of M_t, together with its certified envelope
/// 2χηV0‖ψ'‖∞‖∇N‖∞·‖f_t - f_∞‖**·‖f_t‖**. Transport cancels in the
/// difference, leaving the tumbling asymmetry of the two fields.
pub fn perturbation_residual(
    grid: &PhaseGrid,
    model: &ModelParams,
    spec: &CouplingSpec,
    sstar: &WeightTable,
    f_t: &KineticState,
    f_inf: &KineticState,
    m_tilde: &ChemoOnGrid,
    m_t: &ChemoOnGrid,
) -> (f64, f64) {
    let (n, nv) = (grid.n_x(), grid.n_v());
    let chi = model.rate.chi;
    let mut h = Array2::zeros((n, nv));
    let mut dl = vec![0.0; nv];
    for i in 0..n {
        let mut gain = 0.0;
        for (j, dlj) in dl.iter_mut().enumerate() {
            let v = grid.v_node(j);
            let (mut a, mut b) = (0.0, 0.0);
            for ax in 0..grid.d {
                a += v[ax] * m_tilde.grad[[i, ax]];
                b += v[ax] * m_t.grad[[i, ax]];
            }
            *dlj = -chi * (model.rate.psi.eval(a) - model.rate.psi.eval(b));
            gain += grid.v_weight(j) * *dlj * f_t.f[[i, j]];
        }
        for j in 0..nv {
            h[[i, j]] = gain - dl[j] * f_t.f[[i, j]];
        }
    }
    let h_norm = sstar.norm(grid, &h);
    let dist = sstar.distance(grid, &f_t.f, &f_inf.f);
    let bound = 2.0 * chi * spec.eta * model.vspace.v0
        * model.rate.psi.deriv_sup()
        * spec.kernel.grad_sup
        * dist
        * sstar.norm(grid, &f_t.f);
    debug_assert!(
        !(h_norm > bound + 1e-8),
        "perturbation defect {h_norm:e} exceeds its envelope {bound:e}"
    );
    (h_norm, bound)
}

/// One sample of the nonlinear trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveRecord {
    pub t: f64,
    /// ‖f_t - f_∞‖**.
    pub dist: f64,
    /// ‖f_t‖**, for the moment-bound audit.
    pub norm: f64,
}

pub struct EvolveOutcome {
    pub samples: Vec<EvolveRecord>,
    pub state: KineticState,
}

/// March the coupled equation with frozen-coefficient steps: each step
/// reassembles M_t = M∞ + log(1 + η N*ρ_t) from the current marginal and
/// advances one dt under that frozen field (first order in dt; halving dt
/// must shrink the defect). Distances are recorded against the supplied
/// steady state.
///
/// The coupling premises ρ_t a probability density, and the equation
/// conserves mass; boundary outflow is truncation error. Each step
/// therefore re-injects the outflow by renormalising to unit mass, the
/// same projective stepping that defines the grid steady state.
pub fn nonlinear_evolve(
    grid: &PhaseGrid,
    model: &ModelParams,
    spec: &CouplingSpec,
    sstar: &WeightTable,
    mut state: KineticState,
    f_inf: &KineticState,
    t_end: f64,
    dt: Option<f64>,
) -> Result<EvolveOutcome> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "t_end",
            detail: format!("horizon must be a finite nonnegative time, got {t_end}"),
        });
    }
    let dt = dt.unwrap_or_else(|| grid.default_dt());
    let t0 = state.time;
    let target = t0 + t_end;
    let mut samples = vec![EvolveRecord {
        t: state.time,
        dist: sstar.distance(grid, &state.f, &f_inf.f),
        norm: sstar.norm(grid, &state.f),
    }];
    while state.time < target - 1e-12 * (1.0 + target.abs()) {
        let step_dt = dt.min(target - state.time);
        let rho = state.x_marginal(grid);
        let field = spec.assemble(grid, &model.chemo, &rho);
        let solver = GridSolver::from_field(grid, &model.rate, &field, step_dt)?;
        solver.step(&mut state)?;
        let mass = state.mass(grid);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(CoreError::NumericalInstability {
                time: state.time,
                detail: format!("mass {mass} after a coupled step"),
            });
        }
        state.f.mapv_inplace(|y| y / mass);
        samples.push(EvolveRecord {
            t: state.time,
            dist: sstar.distance(grid, &state.f, &f_inf.f),
            norm: sstar.norm(grid, &state.f),
        });
    }
    state.time = target;
    if let Some(last) = samples.last_mut() {
        last.t = target;
    }
    Ok(EvolveOutcome { samples, state })
}
