//! Macroscopic (parabolic) limit: the chemotactic drift u_c, a conservative
//! finite-volume solver for the aggregation-diffusion equation
//! ∂_τρ = ∇_ξ·(D∇_ξρ − u_c ρ), and the ε-sweep comparing parabolically
//! rescaled kinetic runs (rate sensitivity εχ, time τ/ε², space ξ = εx)
//! against the limit equation on the same node set.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::{Boundary, ChemoOnGrid, GridSolver, KineticState, PhaseGrid};
use crate::model::{axis_second_moment, ChemoProfile, ModelParams, TumblingRate};
use crate::quad::integrate;

/// Bulk chemotactic velocity u_c(x) = χ ∫_𝒱 v ψ(v·∇M(x)) dv by quadrature
/// over the grid's velocity nodes (their weights are the Lebesgue measure,
/// |𝒱| = 1). Only the velocity discretization of `grid` is used.
pub fn chemotactic_velocity(
    grid: &PhaseGrid,
    rate: &TumblingRate,
    chemo: &ChemoProfile,
    x: &[f64],
    out: &mut [f64],
) {
    debug_assert_eq!(x.len(), grid.d);
    debug_assert_eq!(out.len(), grid.d);
    let mut g = [0.0f64; 2];
    chemo.grad(x, &mut g[..grid.d]);
    out.iter_mut().for_each(|c| *c = 0.0);
    for j in 0..grid.n_v() {
        let v = grid.v_node(j);
        let m: f64 = v.iter().zip(&g[..grid.d]).map(|(a, b)| a * b).sum();
        let w = rate.chi * grid.v_weight(j) * rate.psi.eval(m);
        for a in 0..grid.d {
            out[a] += w * v[a];
        }
    }
}

/// Where a discontinuous response can jump, ∇M vanishes: only at the
/// origin for the confining profiles here. The line integral starts just
/// off that point, on the smooth branch; the shift moves U by at most
/// χV0·offset.
const ORIGIN_OFFSET: f64 = 1e-12;

/// Entropy potential U(ξ) = −∫₀^ξ u_c(s) ds at the grid nodes (d = 1):
/// the confining part of the free energy D∫ρ ln ρ + ∫ρU the equation
/// dissipates. Adaptive quadrature per node.
pub fn entropy_potential(
    grid: &PhaseGrid,
    rate: &TumblingRate,
    chemo: &ChemoProfile,
) -> Result<Array1<f64>> {
    if grid.d != 1 {
        return Err(CoreError::InvalidDimension(
            grid.d,
            "the entropy potential is a line integral; use d = 1",
        ));
    }
    let uc = |s: f64| {
        let mut u = [0.0];
        chemotactic_velocity(grid, rate, chemo, &[s], &mut u);
        u[0]
    };
    let mut out = Array1::zeros(grid.n_x());
    let mut x = [0.0];
    for i in 0..grid.n_x() {
        grid.x_node(i, &mut x);
        out[i] = if x[0] >= 0.0 {
            -integrate(&uc, ORIGIN_OFFSET, x[0].max(ORIGIN_OFFSET), 1e-13)?
        } else {
            integrate(&uc, x[0].min(-ORIGIN_OFFSET), -ORIGIN_OFFSET, 1e-13)?
        };
    }
    Ok(out)
}

/// Position density on the ξ-grid at one scaled time.
#[derive(Debug, Clone)]
pub struct MacroState {
    pub rho: Array1<f64>,
    pub tau: f64,
}

/// Solver knobs for the aggregation-diffusion march.
#[derive(Debug, Clone, Copy)]
pub struct MacroCfg {
    /// Diffusion coefficient. 1.0 is the convention of the limit equation
    /// as written; `kinetic_diffusion` gives the velocity-moment value the
    /// rescaled kinetic runs actually approach.
    pub d_coeff: f64,
    /// Explicit step; the stability bound 0.9·min(Δξ²/(2dD), Δξ/max|u_c|)
    /// when absent. A larger request is a configuration error.
    pub dtau: Option<f64>,
    /// Cap on recorded states (endpoints included).
    pub snapshots: usize,
}

impl Default for MacroCfg {
    fn default() -> Self {
        Self {
            d_coeff: 1.0,
            dtau: None,
            snapshots: 129,
        }
    }
}

/// Trajectory of the finite-volume march with its hygiene monitors.
#[derive(Debug)]
pub struct MacroRun {
    /// Snapshots from the initial state to τ_end.
    pub states: Vec<MacroState>,
    /// (τ, D∫ρlnρ + ∫ρU) at the snapshot times; empty unless d = 1.
    pub free_energy: Vec<(f64, f64)>,
    /// Largest single-step |Δmass| observed.
    pub mass_step_max: f64,
    /// Smallest density value over the whole run.
    pub rho_min: f64,
}

impl MacroRun {
    pub fn final_state(&self) -> &MacroState {
        self.states.last().expect("at least the initial state")
    }
}

/// Diffusion coefficient of the actual kinetic limit: the axis second
/// moment ∫_𝒱 v_1² dv of the unit-mass velocity ball.
pub fn kinetic_diffusion(d: usize, v0: f64) -> Result<f64> {
    axis_second_moment(d, v0)
}

/// Harmonic (van Leer) mean of adjacent cell differences; vanishes at
/// extrema, which keeps the face reconstruction monotone.
fn limited_slope(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

/// March ∂_τρ = ∇·(D∇ρ − u_c ρ) to τ_end with a conservative scheme:
/// centered diffusion plus MUSCL-limited upwind drift through face-normal
/// u_c values, explicit Euler in τ, no-flux walls. Mass conservation and
/// positivity are monitored, not enforced.
pub fn solve_aggregation_diffusion(
    grid: &PhaseGrid,
    rate: &TumblingRate,
    chemo: &ChemoProfile,
    rho0: &Array1<f64>,
    tau_end: f64,
    cfg: &MacroCfg,
) -> Result<MacroRun> {
    let nx = grid.nx;
    let n = grid.n_x();
    if rho0.len() != n {
        return Err(CoreError::InvalidParameter {
            name: "rho0",
            detail: format!("expected {n} cell values, got {}", rho0.len()),
        });
    }
    if rho0.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "rho0",
            detail: "initial density must be finite and nonnegative".into(),
        });
    }
    if !(tau_end >= 0.0) || !tau_end.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "tau_end",
            detail: format!("scaled horizon must be a finite nonnegative time, got {tau_end}"),
        });
    }
    if !(cfg.d_coeff > 0.0) || !cfg.d_coeff.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "d_coeff",
            detail: format!("diffusion coefficient must be positive, got {}", cfg.d_coeff),
        });
    }
    let dxi = grid.dx();
    let vol = grid.cell_volume();

    // face-normal drift values, one layer per axis
    let mut u_face: Vec<Array2<f64>> = Vec::with_capacity(grid.d);
    let mut umax = 0.0f64;
    {
        let mut u = vec![0.0; grid.d];
        for axis in 0..grid.d {
            let transverse = if grid.d == 1 { 1 } else { nx };
            let mut layer = Array2::zeros((nx + 1, transverse));
            for k in 0..=nx {
                for t in 0..transverse {
                    let mut pos = [0.0f64; 2];
                    pos[axis] = -grid.l + k as f64 * dxi;
                    if grid.d == 2 {
                        pos[1 - axis] = -grid.l + (t as f64 + 0.5) * dxi;
                    }
                    chemotactic_velocity(grid, rate, chemo, &pos[..grid.d], &mut u);
                    layer[[k, t]] = u[axis];
                    umax = umax.max(u[axis].abs());
                }
            }
            u_face.push(layer);
        }
    }

    let diff_limit = dxi * dxi / (2.0 * grid.d as f64 * cfg.d_coeff);
    let drift_limit = if umax > 0.0 { dxi / umax } else { f64::INFINITY };
    let max_dtau = 0.9 * diff_limit.min(drift_limit);
    let h = match cfg.dtau {
        Some(h) => {
            if h > max_dtau * (1.0 + 1e-12) || !(h > 0.0) {
                return Err(CoreError::CflViolation {
                    dt: h,
                    max_dt: max_dtau,
                });
            }
            h
        }
        None => max_dtau,
    };

    let potential = if grid.d == 1 {
        Some(entropy_potential(grid, rate, chemo)?)
    } else {
        None
    };
    let energy = |rho: &Array1<f64>| -> f64 {
        let u = potential.as_ref().expect("d = 1 only");
        rho.iter()
            .zip(u.iter())
            .map(|(&r, &pu)| {
                let ent = if r > 0.0 { r * r.ln() } else { 0.0 };
                (cfg.d_coeff * ent + r * pu) * vol
            })
            .sum()
    };

    let n_steps = if tau_end == 0.0 {
        0
    } else {
        (tau_end / h).ceil() as usize
    };
    let snapshots = cfg.snapshots.max(2);
    let stride = (n_steps / (snapshots - 1)).max(1);

    let mut rho = rho0.clone();
    let mut next = Array1::zeros(n);
    let mut flux = Array1::zeros(nx + 1);
    let mut states = vec![MacroState {
        rho: rho.clone(),
        tau: 0.0,
    }];
    let mut free_energy = Vec::new();
    if potential.is_some() {
        free_energy.push((0.0, energy(&rho)));
    }
    let mut mass_step_max = 0.0f64;
    let mut rho_min = rho.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut tau = 0.0;

    for step in 1..=n_steps {
        let dt = h.min(tau_end - tau);
        let mass_before: f64 = rho.sum() * vol;
        next.assign(&rho);
        for axis in 0..grid.d {
            let layer = &u_face[axis];
            let transverse = if grid.d == 1 { 1 } else { nx };
            for t in 0..transverse {
                // flat index of cell k along this axis at transverse slot t
                let at = |k: usize| -> usize {
                    if grid.d == 1 {
                        k
                    } else if axis == 0 {
                        k * nx + t
                    } else {
                        t * nx + k
                    }
                };
                flux[0] = 0.0;
                flux[nx] = 0.0;
                for k in 1..nx {
                    let lo = rho[at(k - 1)];
                    let hi = rho[at(k)];
                    let diff = -cfg.d_coeff * (hi - lo) / dxi;
                    let u = layer[[k, t]];
                    let adv = if u >= 0.0 {
                        let s = if k >= 2 {
                            limited_slope(lo - rho[at(k - 2)], hi - lo)
                        } else {
                            0.0
                        };
                        u * (lo + 0.5 * s)
                    } else {
                        let s = if k + 1 < nx {
                            limited_slope(hi - lo, rho[at(k + 1)] - hi)
                        } else {
                            0.0
                        };
                        u * (hi - 0.5 * s)
                    };
                    flux[k] = diff + adv;
                }
                for k in 0..nx {
                    next[at(k)] += dt / dxi * (flux[k] - flux[k + 1]);
                }
            }
        }
        std::mem::swap(&mut rho, &mut next);
        tau = if step == n_steps { tau_end } else { tau + dt };
        let mass_after: f64 = rho.sum() * vol;
        mass_step_max = mass_step_max.max((mass_after - mass_before).abs());
        rho_min = rho_min.min(rho.iter().cloned().fold(f64::INFINITY, f64::min));
        if step % stride == 0 || step == n_steps {
            states.push(MacroState {
                rho: rho.clone(),
                tau,
            });
            if potential.is_some() {
                free_energy.push((tau, energy(&rho)));
            }
        }
    }

    Ok(MacroRun {
        states,
        free_energy,
        mass_step_max,
        rho_min,
    })
}

/// One ε leg of the comparison sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub epsilon: f64,
    pub tau: f64,
    /// L¹(ξ) distance between the rescaled kinetic marginal and the
    /// aggregation-diffusion solution at τ.
    pub l1_error: f64,
}

/// Comparison sweep result; `d_coeff` is the diffusion used on the macro
/// side.
#[derive(Debug)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    pub d_coeff: f64,
}

/// Knobs for the ε-sweep.
#[derive(Debug, Clone, Copy)]
pub struct ParabolicCfg {
    /// Velocity resolution of the kinetic legs (d = 2 needs 2·nr²).
    pub nv: usize,
    /// Macro diffusion: the kinetic moment value when absent, or an
    /// explicit coefficient (1.0 reproduces the equation as written).
    pub d_coeff: Option<f64>,
    /// Cell-step budget per kinetic leg; an over-budget leg is refused
    /// with the required-resource estimate.
    pub budget: f64,
}

impl Default for ParabolicCfg {
    fn default() -> Self {
        Self {
            nv: 64,
            d_coeff: None,
            budget: 2e9,
        }
    }
}

/// For each ε: run the kinetic solver with tumbling sensitivity εχ on the
/// x-box [−L_ξ/ε, L_ξ/ε] (same node count, so x_i = ξ_i/ε index-wise) to
/// physical time τ_end/ε², rescale its marginal by ε^{−d}, and take the
/// L¹(ξ) distance to the macro solution at τ_end. Legs run in parallel;
/// rows keep the input ε order.
pub fn parabolic_compare<F>(
    model: &ModelParams,
    l_xi: f64,
    nx: usize,
    rho0: F,
    epsilons: &[f64],
    tau_end: f64,
    cfg: &ParabolicCfg,
) -> Result<CompareTable>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if epsilons.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "epsilon",
            detail: "the sweep needs at least one scale".into(),
        });
    }
    for &eps in epsilons {
        if !(eps > 0.0 && eps <= 1.0) || !eps.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "epsilon",
                detail: format!("scales must lie in (0, 1], got {eps}"),
            });
        }
    }
    let d = model.vspace.d;
    let v0 = model.vspace.v0;
    let xi_grid = PhaseGrid::new(d, l_xi, nx, cfg.nv, Boundary::Outflow)?;
    let vol = xi_grid.cell_volume();

    let mut rho_init = Array1::zeros(xi_grid.n_x());
    let mut pos = vec![0.0; d];
    for i in 0..xi_grid.n_x() {
        xi_grid.x_node(i, &mut pos);
        rho_init[i] = rho0(&pos);
    }
    let mass: f64 = rho_init.sum() * vol;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "rho0",
            detail: format!("initial profile has mass {mass} on the ξ-grid"),
        });
    }
    rho_init.mapv_inplace(|r| r / mass);

    let d_coeff = match cfg.d_coeff {
        Some(dc) => dc,
        None => kinetic_diffusion(d, v0)?,
    };
    let macro_run = solve_aggregation_diffusion(
        &xi_grid,
        &model.rate,
        &model.chemo,
        &rho_init,
        tau_end,
        &MacroCfg {
            d_coeff,
            dtau: None,
            snapshots: 2,
        },
    )?;
    let rho_macro = &macro_run.final_state().rho;

    let rows: Vec<CompareRow> = epsilons
        .par_iter()
        .map(|&eps| -> Result<CompareRow> {
            let kin_grid = PhaseGrid::new(d, l_xi / eps, nx, cfg.nv, Boundary::Outflow)?;
            let dt = kin_grid.default_dt();
            let t_phys = tau_end / (eps * eps);
            let n_steps = (t_phys / dt).ceil();
            let estimate = n_steps * (kin_grid.n_x() * kin_grid.n_v()) as f64;
            if estimate > cfg.budget {
                return Err(CoreError::ResourceExceeded {
                    detail: format!(
                        "kinetic leg at ε = {eps} needs {n_steps:.0} steps on a \
                         {nx}^{d} × {} phase grid ({estimate:.3e} cell-steps); \
                         shrink the ξ-box, raise ε, or lift the budget",
                        kin_grid.n_v()
                    ),
                    estimate,
                    budget: cfg.budget,
                });
            }

            let n = kin_grid.n_x();
            let mut m = Array1::zeros(n);
            let mut grad = Array2::zeros((n, d));
            let mut x = vec![0.0; d];
            let mut xi = vec![0.0; d];
            let mut g = vec![0.0; d];
            for i in 0..n {
                kin_grid.x_node(i, &mut x);
                for a in 0..d {
                    xi[a] = eps * x[a];
                }
                m[i] = model.chemo.m(&xi) / eps;
                model.chemo.grad(&xi, &mut g);
                for a in 0..d {
                    grad[[i, a]] = g[a];
                }
            }
            let field = ChemoOnGrid { m, grad };
            let rate = TumblingRate::new(eps * model.rate.chi, model.rate.psi)?;

            let mut state = KineticState::from_fn(&kin_grid, |x, _v| {
                let xi: Vec<f64> = x.iter().map(|c| eps * c).collect();
                rho0(&xi)
            });
            state.renormalize(&kin_grid);
            let solver = GridSolver::from_field(&kin_grid, &rate, &field, dt)?;
            solver.run_until(&mut state, t_phys)?;

            let marginal = state.x_marginal(&kin_grid);
            let scale = eps.powi(d as i32);
            let l1_error = marginal
                .iter()
                .zip(rho_macro.iter())
                .map(|(&mk, &mm)| (mk / scale - mm).abs())
                .sum::<f64>()
                * vol;
            Ok(CompareRow {
                epsilon: eps,
                tau: tau_end,
                l1_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CompareTable { rows, d_coeff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Response, VelocitySpace};

    fn sign_model() -> ModelParams {
        ModelParams::reference().unwrap()
    }

    fn tanh_model() -> ModelParams {
        ModelParams::new(
            VelocitySpace::new(1).unwrap(),
            TumblingRate::new(0.5, Response::Tanh { kappa: 2.0 }).unwrap(),
            ChemoProfile::smoothed_cone(1, 0.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn gaussian(center: f64, width: f64) -> impl Fn(&[f64]) -> f64 + Sync {
        move |x: &[f64]| {
            let r2: f64 = x.iter().map(|c| ((c - center) / width).powi(2)).sum();
            (-r2).exp()
        }
    }

    fn sample_normalized(grid: &PhaseGrid, f: impl Fn(&[f64]) -> f64) -> Array1<f64> {
        let mut rho = Array1::zeros(grid.n_x());
        let mut x = vec![0.0; grid.d];
        for i in 0..grid.n_x() {
            grid.x_node(i, &mut x);
            rho[i] = f(&x);
        }
        let mass = rho.sum() * grid.cell_volume();
        rho.mapv_into(|r| r / mass)
    }

    fn moment(grid: &PhaseGrid, rho: &Array1<f64>, power: i32) -> f64 {
        let mut x = vec![0.0; grid.d];
        let mut acc = 0.0;
        for i in 0..grid.n_x() {
            grid.x_node(i, &mut x);
            let r2: f64 = x.iter().map(|c| c * c).sum();
            acc += rho[i] * r2.sqrt().powi(power);
        }
        acc * grid.cell_volume()
    }

    #[test]
    fn drift_vanishes_where_the_gradient_does() {
        let model = sign_model();
        let grid = PhaseGrid::line(10.0, 50, 64, Boundary::Outflow).unwrap();
        let mut u = [f64::NAN];
        chemotactic_velocity(&grid, &model.rate, &model.chemo, &[0.0], &mut u);
        assert!(u[0].abs() < 1e-15, "u_c(0) = {}", u[0]);

        let tanh = tanh_model();
        chemotactic_velocity(&grid, &tanh.rate, &tanh.chemo, &[0.0], &mut u);
        assert!(u[0].abs() < 1e-15, "tanh u_c(0) = {}", u[0]);
    }

    #[test]
    fn sign_drift_matches_the_closed_form() {
        let model = sign_model();
        let grid = PhaseGrid::line(10.0, 50, 64, Boundary::Outflow).unwrap();
        let mut u = [0.0];
        // M decreases away from the origin, so the drift points inward:
        // u_c = χV0²·sign(M') = ±0.125
        for &x in &[0.5, 2.0, 7.5] {
            chemotactic_velocity(&grid, &model.rate, &model.chemo, &[x], &mut u);
            assert!((u[0] + 0.125).abs() < 1e-10, "u_c({x}) = {}", u[0]);
            chemotactic_velocity(&grid, &model.rate, &model.chemo, &[-x], &mut u);
            assert!((u[0] - 0.125).abs() < 1e-10, "u_c(-{x}) = {}", u[0]);
        }
    }

    #[test]
    fn drift_is_parallel_to_the_gradient_and_bounded() {
        let vspace = VelocitySpace::new(2).unwrap();
        let v0 = vspace.v0;
        let tanh = ModelParams::new(
            vspace,
            TumblingRate::new(0.5, Response::Tanh { kappa: 2.0 }).unwrap(),
            ChemoProfile::smoothed_cone(2, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let grid = PhaseGrid::plane(5.0, 10, 16, Boundary::Outflow).unwrap();
        let mut u = [0.0, 0.0];
        let mut g = [0.0, 0.0];
        for &(x, y) in &[(1.0, 0.3), (-2.0, 1.7), (0.4, -3.1), (2.2, 2.9)] {
            chemotactic_velocity(&grid, &tanh.rate, &tanh.chemo, &[x, y], &mut u);
            tanh.chemo.grad(&[x, y], &mut g);
            let cross = u[0] * g[1] - u[1] * g[0];
            let norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
            let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
            // smooth periodic angular integrand: the quadrature keeps the
            // transverse component at spectral accuracy
            assert!(cross.abs() <= 1e-9 * gnorm.max(1.0), "cross = {cross}");
            assert!(norm <= 0.5 * v0 + 1e-12, "|u_c| = {norm}");
            // inward drift: opposite the outward coordinate, along -∇M...
            // M falls away from 0, so u_c·x < 0
            assert!(u[0] * x + u[1] * y < 0.0);
        }
    }

    #[test]
    fn entropy_potential_two_quadrature_routes_agree() {
        for model in [sign_model(), tanh_model()] {
            let grid = PhaseGrid::line(10.0, 40, 64, Boundary::Outflow).unwrap();
            let route_a = entropy_potential(&grid, &model.rate, &model.chemo).unwrap();

            // composite Simpson between consecutive nodes, accumulated
            // outward from 0 on each side
            let uc = |s: f64| {
                let mut u = [0.0];
                chemotactic_velocity(&grid, &model.rate, &model.chemo, &[s], &mut u);
                u[0]
            };
            let simpson = |a: f64, b: f64| {
                let n = 400;
                let h = (b - a) / n as f64;
                let mut acc = uc(a) + uc(b);
                for k in 1..n {
                    let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * uc(a + k as f64 * h);
                }
                acc * h / 3.0
            };
            let mut x = [0.0];
            let nodes: Vec<f64> = (0..grid.n_x())
                .map(|i| {
                    grid.x_node(i, &mut x);
                    x[0]
                })
                .collect();
            let mut route_b = vec![0.0; nodes.len()];
            let mid = nodes.len() / 2;
            // same basepoint as the adaptive route, off the response jump
            let mut acc = -simpson(1e-12, nodes[mid]);
            route_b[mid] = acc;
            for i in mid + 1..nodes.len() {
                acc -= simpson(nodes[i - 1], nodes[i]);
                route_b[i] = acc;
            }
            acc = -simpson(-1e-12, nodes[mid - 1]);
            route_b[mid - 1] = acc;
            for i in (0..mid - 1).rev() {
                acc += simpson(nodes[i], nodes[i + 1]);
                route_b[i] = acc;
            }
            for i in 0..nodes.len() {
                assert!(
                    (route_a[i] - route_b[i]).abs() < 1e-10,
                    "node {i}: {} vs {}",
                    route_a[i],
                    route_b[i]
                );
            }
        }
    }

    #[test]
    fn pure_diffusion_spreads_at_the_heat_rate() {
        // χ = 0 silences the drift entirely; unit diffusion then grows the
        // second moment by exactly 2dτ
        let free = ModelParams::new(
            VelocitySpace::new(1).unwrap(),
            TumblingRate::new(0.0, Response::Sign).unwrap(),
            ChemoProfile::smoothed_cone(1, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let grid = PhaseGrid::line(10.0, 400, 8, Boundary::Outflow).unwrap();
        let rho0 = sample_normalized(&grid, gaussian(0.0, 0.5));
        let var0 = moment(&grid, &rho0, 2);
        let run = solve_aggregation_diffusion(
            &grid,
            &free.rate,
            &free.chemo,
            &rho0,
            0.5,
            &MacroCfg::default(),
        )
        .unwrap();
        let var = moment(&grid, &run.final_state().rho, 2);
        let target = var0 + 2.0 * 0.5;
        assert!(
            (var - target).abs() <= 0.01 * target,
            "variance {var} vs {target}"
        );
        assert!(run.mass_step_max <= 1e-12);
        assert!(run.rho_min >= -1e-15);
    }

    #[test]
    fn long_time_profile_matches_the_exponential_steady_state() {
        // d=1 cone with Sign: u_c = -0.125·sign(ξ), so the zero-flux
        // steady state is ρ ∝ exp(-0.125|ξ|/D) restricted to the box
        let model = sign_model();
        let grid = PhaseGrid::line(10.0, 200, 64, Boundary::Outflow).unwrap();
        let reference = sample_normalized(&grid, |x| (-0.125 * x[0].abs()).exp());
        // start on a perturbation of the target so only fast modes remain
        let mut x = [0.0];
        let rho0 = {
            let mut r = reference.clone();
            for i in 0..grid.n_x() {
                grid.x_node(i, &mut x);
                r[i] *= 1.0 + 0.3 * (std::f64::consts::PI * x[0] / 10.0).cos();
            }
            let mass = r.sum() * grid.cell_volume();
            r.mapv_into(|v| v / mass)
        };
        let run = solve_aggregation_diffusion(
            &grid,
            &model.rate,
            &model.chemo,
            &rho0,
            80.0,
            &MacroCfg::default(),
        )
        .unwrap();
        let l1: f64 = run
            .final_state()
            .rho
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * grid.cell_volume();
        assert!(l1 <= 0.01, "steady-state L¹ gap {l1}");
        assert!(run.mass_step_max <= 1e-12, "mass drift {}", run.mass_step_max);
        assert!(run.rho_min >= -1e-15, "negative density {}", run.rho_min);

        // gradient-flow structure: the free energy never increases
        for w in run.free_energy.windows(2) {
            assert!(
                w[1].1 <= w[0].1 + 1e-10,
                "free energy rose: {:?} -> {:?}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn drifted_run_keeps_mass_positivity_and_dissipation() {
        let model = tanh_model();
        let grid = PhaseGrid::line(10.0, 300, 64, Boundary::Outflow).unwrap();
        let rho0 = sample_normalized(&grid, gaussian(2.0, 1.0));
        let cfg = MacroCfg {
            d_coeff: kinetic_diffusion(1, 0.5).unwrap(),
            ..MacroCfg::default()
        };
        let run =
            solve_aggregation_diffusion(&grid, &model.rate, &model.chemo, &rho0, 5.0, &cfg)
                .unwrap();
        assert!(run.mass_step_max <= 1e-12);
        assert!(run.rho_min >= -1e-15);
        for w in run.free_energy.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-10);
        }
        let mass: f64 = run.final_state().rho.sum() * grid.cell_volume();
        assert!((mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn requested_step_above_the_stability_bound_is_refused() {
        let model = sign_model();
        let grid = PhaseGrid::line(5.0, 100, 16, Boundary::Outflow).unwrap();
        let rho0 = sample_normalized(&grid, gaussian(0.0, 1.0));
        let cfg = MacroCfg {
            dtau: Some(1.0),
            ..MacroCfg::default()
        };
        let err = solve_aggregation_diffusion(&grid, &model.rate, &model.chemo, &rho0, 1.0, &cfg)
            .unwrap_err();
        assert!(matches!(err, CoreError::CflViolation { .. }));
    }

    #[test]
    fn zero_horizon_reports_the_projection_gap_only() {
        let model = sign_model();
        let table = parabolic_compare(
            &model,
            6.0,
            120,
            gaussian(0.0, 1.0),
            &[0.4, 0.2, 1.0],
            0.0,
            &ParabolicCfg {
                nv: 32,
                ..ParabolicCfg::default()
            },
        )
        .unwrap();
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows {
            assert_eq!(row.tau, 0.0);
            assert!(
                row.l1_error <= 1e-13,
                "ε = {}: projection gap {}",
                row.epsilon,
                row.l1_error
            );
        }
        // rows keep the input order
        assert_eq!(table.rows[0].epsilon, 0.4);
        assert_eq!(table.rows[2].epsilon, 1.0);
    }

    #[test]
    fn decoupled_sweep_converges_to_pure_diffusion() {
        let free = ModelParams::new(
            VelocitySpace::new(1).unwrap(),
            TumblingRate::new(0.0, Response::Sign).unwrap(),
            ChemoProfile::smoothed_cone(1, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let table = parabolic_compare(
            &free,
            6.0,
            960,
            gaussian(0.0, 0.5),
            &[0.4, 0.2, 0.1],
            0.5,
            &ParabolicCfg {
                nv: 32,
                ..ParabolicCfg::default()
            },
        )
        .unwrap();
        let e: Vec<f64> = table.rows.iter().map(|r| r.l1_error).collect();
        // with no drift the two sides differ only through discretisation;
        // the ε = 0.1 leg sits near the transport-interpolation floor, so
        // only the coarse-to-fine drop and the absolute level are checked
        assert!(e[2] < 0.05, "ε = 0.1 error {}", e[2]);
        assert!(e[2] < e[0], "no improvement from ε = 0.4: {e:?}");
        // the moment-consistent diffusion of the d=1 half-width ball
        assert!((table.d_coeff - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn chemotactic_sweep_errors_shrink_with_epsilon() {
        let model = sign_model();
        let table = parabolic_compare(
            &model,
            6.0,
            1920,
            gaussian(0.0, 1.0),
            &[0.4, 0.2, 0.1],
            0.25,
            &ParabolicCfg {
                nv: 32,
                ..ParabolicCfg::default()
            },
        )
        .unwrap();
        let e: Vec<f64> = table.rows.iter().map(|r| r.l1_error).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "errors not decreasing: {e:?}");
        assert!(e[2] <= 0.5 * e[0], "top-to-bottom ratio too weak: {e:?}");
    }

    #[test]
    fn over_budget_leg_is_refused_with_an_estimate() {
        let model = sign_model();
        let err = parabolic_compare(
            &model,
            6.0,
            120,
            gaussian(0.0, 1.0),
            &[0.1],
            0.5,
            &ParabolicCfg {
                nv: 32,
                budget: 1e3,
                ..ParabolicCfg::default()
            },
        )
        .unwrap_err();
        match err {
            CoreError::ResourceExceeded {
                estimate, budget, ..
            } => {
                assert!(estimate > budget);
                assert_eq!(budget, 1e3);
            }
            other => panic!("expected a resource refusal, got {other:?}"),
        }
    }

    #[test]
    fn sweep_validates_scales() {
        let model = sign_model();
        for bad in [0.0, -0.2, 1.5, f64::NAN] {
            let err = parabolic_compare(
                &model,
                6.0,
                60,
                gaussian(0.0, 1.0),
                &[bad],
                0.1,
                &ParabolicCfg {
                    nv: 16,
                    ..ParabolicCfg::default()
                },
            )
            .unwrap_err();
            assert!(
                matches!(err, CoreError::InvalidParameter { name: "epsilon", .. }),
                "{bad} -> {err:?}"
            );
        }
        let err = parabolic_compare(
            &model,
            6.0,
            60,
            gaussian(0.0, 1.0),
            &[],
            0.1,
            &ParabolicCfg::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::InvalidParameter { name: "epsilon", .. }));
    }

    #[test]
    fn plane_solver_keeps_mass_and_positivity() {
        let model = ModelParams::new(
            VelocitySpace::new(2).unwrap(),
            TumblingRate::new(0.5, Response::Tanh { kappa: 2.0 }).unwrap(),
            ChemoProfile::smoothed_cone(2, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let free = ModelParams::new(
            VelocitySpace::new(2).unwrap(),
            TumblingRate::new(0.0, Response::Sign).unwrap(),
            ChemoProfile::smoothed_cone(2, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let grid = PhaseGrid::plane(4.0, 40, 4, Boundary::Outflow).unwrap();
        let rho0 = sample_normalized(&grid, gaussian(0.5, 1.0));
        let cfg = MacroCfg {
            d_coeff: kinetic_diffusion(2, model.vspace.v0).unwrap(),
            ..MacroCfg::default()
        };
        let run =
            solve_aggregation_diffusion(&grid, &model.rate, &model.chemo, &rho0, 0.3, &cfg)
                .unwrap();
        let mass: f64 = run.final_state().rho.sum() * grid.cell_volume();
        assert!((mass - 1.0).abs() <= 1e-12, "mass {mass}");
        assert!(run.mass_step_max <= 1e-12);
        assert!(run.rho_min >= -1e-15);
        assert!(run.free_energy.is_empty());
        // the inward drift holds the blob tighter than free diffusion does
        let drift_free =
            solve_aggregation_diffusion(&grid, &free.rate, &free.chemo, &rho0, 0.3, &cfg)
                .unwrap();
        let r_drift = moment(&grid, &run.final_state().rho, 1);
        let r_free = moment(&grid, &drift_free.final_state().rho, 1);
        assert!(r_drift < r_free, "mean radius {r_drift} vs free {r_free}");
    }
}

