//! Density snapshots on a phase grid.

use ndarray::{Array1, Array2};

use super::PhaseGrid;

/// Node values of f(t, ·, ·) with the running time and the mass lost through
/// an outflow boundary so far. Layout is (n_x, n_v), row major.
#[derive(Debug, Clone)]
pub struct KineticState {
    pub f: Array2<f64>,
    pub time: f64,
    pub outflow_cum: f64,
}

impl KineticState {
    pub fn zeros(grid: &PhaseGrid) -> Self {
        Self {
            f: Array2::zeros((grid.n_x(), grid.n_v())),
            time: 0.0,
            outflow_cum: 0.0,
        }
    }

    /// Uniform probability density on the box: f ≡ (2L)^-d.
    pub fn uniform(grid: &PhaseGrid) -> Self {
        let c = (2.0 * grid.l).powi(-(grid.d as i32));
        Self {
            f: Array2::from_elem((grid.n_x(), grid.n_v()), c),
            time: 0.0,
            outflow_cum: 0.0,
        }
    }

    /// Unit mass concentrated in a single phase-space cell.
    pub fn dirac_cell(grid: &PhaseGrid, x_idx: usize, v_idx: usize) -> Self {
        let mut s = Self::zeros(grid);
        s.f[[x_idx, v_idx]] = 1.0 / (grid.cell_volume() * grid.v_weight(v_idx));
        s
    }

    /// Sample a closure at the cell centres. No normalisation is applied.
    pub fn from_fn(grid: &PhaseGrid, g: impl Fn(&[f64], &[f64]) -> f64) -> Self {
        let mut s = Self::zeros(grid);
        let mut x = vec![0.0; grid.d];
        for i in 0..grid.n_x() {
            grid.x_node(i, &mut x);
            for j in 0..grid.n_v() {
                s.f[[i, j]] = g(&x, grid.v_node(j));
            }
        }
        s
    }

    pub fn mass(&self, grid: &PhaseGrid) -> f64 {
        grid.mass(&self.f)
    }

    /// Scale to unit mass; returns the mass before scaling.
    pub fn renormalize(&mut self, grid: &PhaseGrid) -> f64 {
        let m = self.mass(grid);
        if m > 0.0 {
            self.f.mapv_inplace(|v| v / m);
        }
        m
    }

    pub fn x_marginal(&self, grid: &PhaseGrid) -> Array1<f64> {
        grid.x_marginal(&self.f)
    }

    /// Velocity density g(v_j) = ∫ f dx.
    pub fn v_marginal(&self, grid: &PhaseGrid) -> Array1<f64> {
        let cv = grid.cell_volume();
        let mut g = Array1::zeros(grid.n_v());
        for row in self.f.outer_iter() {
            for (j, v) in row.iter().enumerate() {
                g[j] += v * cv;
            }
        }
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.f.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }
}
