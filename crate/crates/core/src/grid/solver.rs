//! Strang-split deterministic solver.
//!
//! One step is jump(dt/2) ∘ transport(dt) ∘ jump(dt/2). The jump half-step
//! integrates the relaxation exactly at frozen rates and redistributes the
//! departed mass uniformly over the velocity ball, so each x-row conserves
//! its velocity integral to roundoff. Transport is semi-Lagrangian with
//! (multi)linear interpolation: for a fixed velocity node the displacement
//! is a constant shift, making the sweep conservative on periodic grids and
//! exactly tallied on outflow grids. Both stages preserve nonnegativity.

use ndarray::Array2;
use rayon::prelude::*;

use super::norms::WeightTable;
use super::{Boundary, ChemoOnGrid, KineticState, LambdaTable, PhaseGrid};
use crate::error::{CoreError, Result};
use crate::model::{ModelParams, TumblingRate};

pub struct GridSolver<'g> {
    pub grid: &'g PhaseGrid,
    dt: f64,
    lambda: LambdaTable,
    /// e^{-λ dt/2} per node, for the fixed-step fast path.
    decay_half: Array2<f64>,
}

impl<'g> GridSolver<'g> {
    pub fn new(grid: &'g PhaseGrid, model: &ModelParams) -> Result<Self> {
        Self::with_dt(grid, model, grid.default_dt())
    }

    pub fn with_dt(grid: &'g PhaseGrid, model: &ModelParams, dt: f64) -> Result<Self> {
        let field = ChemoOnGrid::sample(grid, &model.chemo);
        Self::from_field(grid, &model.rate, &field, dt)
    }

    /// Build from an explicit gradient field; the nonlinear solver uses this
    /// to freeze self-consistent fields between fixed-point sweeps.
    pub fn from_field(
        grid: &'g PhaseGrid,
        rate: &TumblingRate,
        field: &ChemoOnGrid,
        dt: f64,
    ) -> Result<Self> {
        let max_dt = grid.max_dt();
        if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
            return Err(CoreError::CflViolation { dt, max_dt });
        }
        let lambda = LambdaTable::build(grid, rate, field);
        let decay_half = lambda.lam.mapv(|l| (-l * dt / 2.0).exp());
        Ok(Self {
            grid,
            dt,
            lambda,
            decay_half,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lambda(&self) -> &LambdaTable {
        &self.lambda
    }

    /// Advance by the solver step. Mass accounting (retained + outflow) is
    /// audited to 1e-12 relative per step in debug builds.
    pub fn step(&self, state: &mut KineticState) -> Result<()> {
        self.step_inner(state, self.dt, None)
    }

    /// Advance by an arbitrary dt <= the CFL bound (used for remainder steps).
    pub fn step_with_dt(&self, state: &mut KineticState, dt: f64) -> Result<()> {
        if (dt - self.dt).abs() <= 16.0 * f64::EPSILON * self.dt {
            return self.step(state);
        }
        let max_dt = self.grid.max_dt();
        if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
            return Err(CoreError::CflViolation { dt, max_dt });
        }
        let decay = self.lambda.lam.mapv(|l| (-l * dt / 2.0).exp());
        self.step_inner(state, dt, Some(&decay))
    }

    fn step_inner(
        &self,
        state: &mut KineticState,
        dt: f64,
        decay: Option<&Array2<f64>>,
    ) -> Result<()> {
        #[cfg(debug_assertions)]
        let m_before = state.mass(self.grid);

        let decay = decay.unwrap_or(&self.decay_half);
        self.jump_with_decay(&mut state.f, decay);
        let lost = self.transport_step(&mut state.f, dt);
        state.outflow_cum += lost;
        self.jump_with_decay(&mut state.f, decay);
        state.time += dt;

        #[cfg(debug_assertions)]
        {
            let m_after = state.mass(self.grid);
            debug_assert!(
                (m_after + lost - m_before).abs() <= 1e-12 * m_before.max(1.0),
                "mass audit failed: before {m_before}, after {m_after}, outflow {lost}"
            );
        }

        if !state.f.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NumericalInstability {
                time: state.time,
                detail: "non-finite density after step".into(),
            });
        }
        Ok(())
    }

    /// Take fixed steps until `t_end`, shortening the last one to land on it.
    pub fn run_until(&self, state: &mut KineticState, t_end: f64) -> Result<usize> {
        let mut steps = 0;
        while t_end - state.time > 1e-9 * self.dt {
            let dt = self.dt.min(t_end - state.time);
            self.step_with_dt(state, dt)?;
            steps += 1;
        }
        state.time = t_end;
        Ok(steps)
    }

    /// Exact relaxation over `delta` at frozen rates, conservative per x-row.
    pub fn jump_step(&self, f: &mut Array2<f64>, delta: f64) {
        let decay = self.lambda.lam.mapv(|l| (-l * delta).exp());
        self.jump_with_decay(f, &decay);
    }

    fn jump_with_decay(&self, f: &mut Array2<f64>, decay: &Array2<f64>) {
        let nv = self.grid.n_v();
        let weights = self
            .grid
            .v_weights()
            .as_slice()
            .expect("contiguous weights");
        let dslice = decay.as_slice().expect("contiguous decay");
        f.as_slice_mut()
            .expect("contiguous density")
            .par_chunks_mut(nv)
            .zip(dslice.par_chunks(nv))
            .for_each(|(row, drow)| {
                let mut gained = 0.0;
                for ((v, &e), &w) in row.iter_mut().zip(drow).zip(weights) {
                    gained += w * (1.0 - e) * *v;
                    *v *= e;
                }
                // K ≡ 1: departed mass lands uniformly on the unit-volume ball
                for v in row.iter_mut() {
                    *v += gained;
                }
            });
    }

    /// Shift every velocity slice by v dt; returns the mass carried out of
    /// the box (zero on periodic grids).
    pub fn transport_step(&self, f: &mut Array2<f64>, dt: f64) -> f64 {
        let grid = self.grid;
        let dx = grid.dx();
        let (nx, nv) = (grid.nx, grid.n_v());
        let cv = grid.cell_volume();
        let mut lost_mass = 0.0;
        let mut src = vec![0.0; nx];
        let mut dst = vec![0.0; nx];

        match grid.d {
            1 => {
                for j in 0..nv {
                    let s = grid.v_node(j)[0] * dt / dx;
                    let mut col = f.column_mut(j);
                    for (a, b) in src.iter_mut().zip(col.iter()) {
                        *a = *b;
                    }
                    let lost = shift_line(&src, &mut dst, s, grid.boundary);
                    for (b, a) in col.iter_mut().zip(dst.iter()) {
                        *b = *a;
                    }
                    lost_mass += lost * cv * grid.v_weight(j);
                }
            }
            2 => {
                // axis-split sweeps; exact tensor-product interpolation
                // because the shift is constant per velocity node
                for axis in 0..2 {
                    for j in 0..nv {
                        let s = grid.v_node(j)[axis] * dt / dx;
                        if s == 0.0 {
                            continue;
                        }
                        let mut lost = 0.0;
                        for line in 0..nx {
                            for i in 0..nx {
                                let flat = if axis == 0 {
                                    i * nx + line
                                } else {
                                    line * nx + i
                                };
                                src[i] = f[[flat, j]];
                            }
                            lost += shift_line(&src, &mut dst, s, grid.boundary);
                            for i in 0..nx {
                                let flat = if axis == 0 {
                                    i * nx + line
                                } else {
                                    line * nx + i
                                };
                                f[[flat, j]] = dst[i];
                            }
                        }
                        lost_mass += lost * cv * grid.v_weight(j);
                    }
                }
            }
            _ => unreachable!("grid construction rejects d > 2"),
        }
        lost_mass
    }
}

/// Semi-Lagrangian shift of one line by `s` cells: dst[i] = src(i - s) with
/// linear interpolation. Returns the node-sum lost over the ends (0 when
/// periodic).
pub(crate) fn shift_line(src: &[f64], dst: &mut [f64], s: f64, boundary: Boundary) -> f64 {
    let n = src.len() as i64;
    let k = s.floor();
    let theta = s - k;
    let k = k as i64;
    match boundary {
        Boundary::Periodic => {
            for (i, d) in dst.iter_mut().enumerate() {
                let a = (i as i64 - k).rem_euclid(n) as usize;
                let b = (i as i64 - k - 1).rem_euclid(n) as usize;
                *d = (1.0 - theta) * src[a] + theta * src[b];
            }
            0.0
        }
        Boundary::Outflow => {
            let pick = |idx: i64| -> f64 {
                if (0..n).contains(&idx) {
                    src[idx as usize]
                } else {
                    0.0
                }
            };
            let mut sum_dst = 0.0;
            for (i, d) in dst.iter_mut().enumerate() {
                let v = (1.0 - theta) * pick(i as i64 - k) + theta * pick(i as i64 - k - 1);
                *d = v;
                sum_dst += v;
            }
            let sum_src: f64 = src.iter().sum();
            sum_src - sum_dst
        }
    }
}

/// Quasi-stationary outcome of the renormalised power iteration.
pub struct SteadyStateOutcome {
    pub state: KineticState,
    pub residual: f64,
    pub steps: usize,
    /// (time, residual) samples, one per step.
    pub history: Vec<(f64, f64)>,
}

/// March `init` with per-step mass renormalisation until the weighted step
/// difference ‖f_{n+1} - f_n‖ / dt drops below `tol`.
///
/// Renormalising makes the iteration a power method for the quasi-stationary
/// profile: on outflow grids the raw step drains boundary mass, and the
/// normalised fixed point is the principal eigenfunction of the step map.
pub fn steady_state(
    solver: &GridSolver,
    mut init: KineticState,
    weight: &WeightTable,
    tol: f64,
    max_steps: usize,
) -> Result<SteadyStateOutcome> {
    let grid = solver.grid;
    init.renormalize(grid);
    let mut prev = init.f.clone();
    let mut history = Vec::new();
    for step in 1..=max_steps {
        solver.step(&mut init)?;
        init.renormalize(grid);
        let residual = weight.distance(grid, &init.f, &prev) / solver.dt();
        history.push((init.time, residual));
        if residual < tol {
            return Ok(SteadyStateOutcome {
                state: init,
                residual,
                steps: step,
                history,
            });
        }
        prev.assign(&init.f);
    }
    let residual = history.last().map(|&(_, r)| r).unwrap_or(f64::NAN);
    Err(CoreError::NonConvergence {
        steps: max_steps,
        residual,
        tol,
    })
}

/// Log-linear fit of a decay curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Decay exponent: dist(t) ≈ C e^{-sigma t} on the fitted window.
    pub sigma: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Fit `dist(t) = C e^{-sigma t}` to (time, distance) samples.
///
/// Only the cleanly decaying window is used: distances below half the
/// initial value (transients excluded) and above 10x the noise floor
/// max(1e-15, 1e-12 * d0) (roundoff plateau excluded).
pub fn convergence_rate(samples: &[(f64, f64)]) -> Result<RateFit> {
    let d0 = samples
        .iter()
        .map(|&(_, d)| d)
        .find(|d| d.is_finite() && *d > 0.0)
        .ok_or_else(|| {
            CoreError::InsufficientDecayRange("no positive distances in series".into())
        })?;
    let floor = (1e-12 * d0).max(1e-15);
    let window: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(_, d)| d.is_finite() && d >= 10.0 * floor && d <= 0.5 * d0)
        .collect();
    if window.len() < 2 {
        return Err(CoreError::InsufficientDecayRange(format!(
            "{} usable samples between noise floor {:.3e} and half the initial distance {:.3e}",
            window.len(),
            10.0 * floor,
            0.5 * d0
        )));
    }
    let n = window.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &(t, d) in &window {
        let y = d.ln();
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    if denom.abs() < 1e-300 {
        return Err(CoreError::InsufficientDecayRange(
            "degenerate time spread in fit window".into(),
        ));
    }
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    let mean_y = sy / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(t, d) in &window {
        let y = d.ln();
        let e = y - (intercept + slope * t);
        ss_res += e * e;
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(RateFit {
        sigma: -slope,
        r_squared,
        points_used: window.len(),
    })
}
