//! Phase-space discretisation of [-L, L]^d × B(0, V0).
//!
//! Positions are cell-centred on a uniform grid, so x = 0 is never a node
//! and sign-type responses see no ambiguous gradient direction. Velocities
//! use midpoint nodes in d = 1 (even count keeps v = 0 on a cell edge) and
//! an equal-area polar layout in d = 2; both give weights summing to the
//! unit ball volume, i.e. exactly 1.

pub mod field;
pub mod norms;
pub mod solver;
pub mod state;

pub use field::{ChemoOnGrid, LambdaTable};
pub use norms::WeightTable;
pub use solver::{convergence_rate, steady_state, GridSolver, RateFit, SteadyStateOutcome};
pub use state::KineticState;

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};
use crate::model::VelocitySpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Mass leaving the box is removed and tallied.
    Outflow,
    /// Wrap-around; useful for conservation tests, not for confinement runs.
    Periodic,
}

pub struct PhaseGrid {
    pub d: usize,
    pub l: f64,
    pub nx: usize,
    pub boundary: Boundary,
    pub vspace: VelocitySpace,
    /// Rings of the polar velocity layout; 0 in d = 1.
    nr: usize,
    vnodes: Array2<f64>,
    vweights: Array1<f64>,
}

impl PhaseGrid {
    /// d = 1 grid with `nv` midpoint velocity nodes (must be even).
    pub fn line(l: f64, nx: usize, nv: usize, boundary: Boundary) -> Result<Self> {
        let vspace = VelocitySpace::new(1)?;
        Self::validate_x(l, nx)?;
        if nv < 2 || nv % 2 != 0 {
            return Err(CoreError::InvalidParameter {
                name: "nv",
                detail: format!("line velocity grid needs even nv >= 2, got {nv}"),
            });
        }
        let dv = 2.0 * vspace.v0 / nv as f64;
        let mut vnodes = Array2::zeros((nv, 1));
        for j in 0..nv {
            vnodes[[j, 0]] = -vspace.v0 + (j as f64 + 0.5) * dv;
        }
        let vweights = Array1::from_elem(nv, dv);
        Ok(Self {
            d: 1,
            l,
            nx,
            boundary,
            vspace,
            nr: 0,
            vnodes,
            vweights,
        })
    }

    /// d = 2 grid with `nr` equal-area velocity rings and 2*nr angles per ring.
    pub fn plane(l: f64, nx: usize, nr: usize, boundary: Boundary) -> Result<Self> {
        let vspace = VelocitySpace::new(2)?;
        Self::validate_x(l, nx)?;
        if nr == 0 {
            return Err(CoreError::InvalidParameter {
                name: "nr",
                detail: "plane velocity grid needs nr >= 1".into(),
            });
        }
        let ntheta = 2 * nr;
        let n_v = nr * ntheta;
        let mut vnodes = Array2::zeros((n_v, 2));
        for i in 0..nr {
            // area-median radius of the i-th equal-area ring
            let r = vspace.v0 * ((i as f64 + 0.5) / nr as f64).sqrt();
            for k in 0..ntheta {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / ntheta as f64;
                let j = i * ntheta + k;
                vnodes[[j, 0]] = r * th.cos();
                vnodes[[j, 1]] = r * th.sin();
            }
        }
        let vweights = Array1::from_elem(n_v, 1.0 / n_v as f64);
        Ok(Self {
            d: 2,
            l,
            nx,
            boundary,
            vspace,
            nr,
            vnodes,
            vweights,
        })
    }

    /// Dispatch on dimension with a flat velocity-node count. In d = 2 the
    /// count must factor as 2*nr² (the layout used by the state format).
    pub fn new(d: usize, l: f64, nx: usize, nv: usize, boundary: Boundary) -> Result<Self> {
        match d {
            1 => Self::line(l, nx, nv, boundary),
            2 => {
                let nr = ((nv as f64) / 2.0).sqrt().round() as usize;
                if nr == 0 || 2 * nr * nr != nv {
                    return Err(CoreError::InvalidParameter {
                        name: "nv",
                        detail: format!("plane velocity grid needs nv = 2*nr², got {nv}"),
                    });
                }
                Self::plane(l, nx, nr, boundary)
            }
            _ => Err(CoreError::InvalidDimension(d, "grids support d = 1 or 2")),
        }
    }

    fn validate_x(l: f64, nx: usize) -> Result<()> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "l",
                detail: format!("box half-width must be positive, got {l}"),
            });
        }
        if nx < 2 {
            return Err(CoreError::InvalidParameter {
                name: "nx",
                detail: format!("need at least 2 cells per axis, got {nx}"),
            });
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.nx.pow(self.d as u32)
    }

    pub fn n_v(&self) -> usize {
        self.vnodes.nrows()
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.l / self.nx as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Cell-centre coordinates of the flat x index.
    pub fn x_node(&self, flat: usize, out: &mut [f64]) {
        debug_assert!(flat < self.n_x());
        debug_assert_eq!(out.len(), self.d);
        let dx = self.dx();
        let mut rem = flat;
        for a in (0..self.d).rev() {
            let i = rem % self.nx;
            rem /= self.nx;
            out[a] = -self.l + (i as f64 + 0.5) * dx;
        }
    }

    /// Flat index of the cell containing x, or None outside the box.
    pub fn x_index_of(&self, x: &[f64]) -> Option<usize> {
        let dx = self.dx();
        let mut flat = 0;
        for &c in x {
            if c < -self.l || c >= self.l {
                return None;
            }
            let i = (((c + self.l) / dx) as usize).min(self.nx - 1);
            flat = flat * self.nx + i;
        }
        Some(flat)
    }

    pub fn v_node(&self, j: usize) -> &[f64] {
        self.vnodes.row(j).to_slice().expect("contiguous row")
    }

    /// Flat index of the velocity cell containing v, or None outside the ball.
    pub fn v_index_of(&self, v: &[f64]) -> Option<usize> {
        let v0 = self.vspace.v0;
        match self.d {
            1 => {
                let c = v[0];
                if c.abs() > v0 {
                    return None;
                }
                let nv = self.n_v();
                let dv = 2.0 * v0 / nv as f64;
                Some((((c + v0) / dv) as usize).min(nv - 1))
            }
            2 => {
                let r2 = v[0] * v[0] + v[1] * v[1];
                if r2 > v0 * v0 {
                    return None;
                }
                // equal-area rings are uniform in r²
                let i = ((r2 / (v0 * v0) * self.nr as f64) as usize).min(self.nr - 1);
                let ntheta = 2 * self.nr;
                let mut th = v[1].atan2(v[0]);
                if th < 0.0 {
                    th += 2.0 * std::f64::consts::PI;
                }
                let k = ((th / (2.0 * std::f64::consts::PI) * ntheta as f64) as usize)
                    .min(ntheta - 1);
                Some(i * ntheta + k)
            }
            _ => unreachable!(),
        }
    }

    pub fn v_weight(&self, j: usize) -> f64 {
        self.vweights[j]
    }

    pub fn v_weights(&self) -> &Array1<f64> {
        &self.vweights
    }

    /// Largest stable step of the transport sweep: one cell per step.
    pub fn max_dt(&self) -> f64 {
        self.dx() / self.vspace.v0
    }

    pub fn default_dt(&self) -> f64 {
        0.9 * self.max_dt()
    }

    /// Total mass ∫∫ f dx dv of a node table shaped (n_x, n_v).
    pub fn mass(&self, f: &Array2<f64>) -> f64 {
        let cv = self.cell_volume();
        let mut total = 0.0;
        for row in f.outer_iter() {
            for (v, w) in row.iter().zip(self.vweights.iter()) {
                total += v * w;
            }
        }
        total * cv
    }

    /// Spatial density ρ(x_i) = ∫ f dv.
    pub fn x_marginal(&self, f: &Array2<f64>) -> Array1<f64> {
        let mut rho = Array1::zeros(self.n_x());
        for (i, row) in f.outer_iter().enumerate() {
            rho[i] = row
                .iter()
                .zip(self.vweights.iter())
                .map(|(v, w)| v * w)
                .sum();
        }
        rho
    }
}
