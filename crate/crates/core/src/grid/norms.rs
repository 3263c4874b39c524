//! Weighted L¹ norms on grid densities.
//!
//! All certificates measure distances in weighted total variation:
//! ‖f‖_w = ∫∫ |f| w dx dv for a positive node weight w. The plain table
//! (w ≡ 1) gives total variation of the density itself; the exponential
//! table e^{δ⟨x⟩} is the confinement norm the convergence statements use;
//! arbitrary tables come from Lyapunov weights.

use ndarray::Array2;

use super::PhaseGrid;
use crate::model::jbracket;

pub struct WeightTable {
    /// Shape (n_x, n_v).
    pub w: Array2<f64>,
}

impl WeightTable {
    pub fn from_fn(grid: &PhaseGrid, weight: impl Fn(&[f64], &[f64]) -> f64) -> Self {
        let mut w = Array2::zeros((grid.n_x(), grid.n_v()));
        let mut x = vec![0.0; grid.d];
        for i in 0..grid.n_x() {
            grid.x_node(i, &mut x);
            for j in 0..grid.n_v() {
                w[[i, j]] = weight(&x, grid.v_node(j));
            }
        }
        Self { w }
    }

    /// w ≡ 1: plain total variation.
    pub fn plain(grid: &PhaseGrid) -> Self {
        Self {
            w: Array2::ones((grid.n_x(), grid.n_v())),
        }
    }

    /// w = e^{delta ⟨x⟩}, velocity independent.
    pub fn exp_bracket(grid: &PhaseGrid, delta: f64) -> Self {
        Self::from_fn(grid, |x, _| (delta * jbracket(x)).exp())
    }

    pub fn norm(&self, grid: &PhaseGrid, f: &Array2<f64>) -> f64 {
        let cv = grid.cell_volume();
        let weights = grid.v_weights();
        let mut total = 0.0;
        for (frow, wrow) in f.outer_iter().zip(self.w.outer_iter()) {
            for ((v, w), q) in frow.iter().zip(wrow.iter()).zip(weights.iter()) {
                total += v.abs() * w * q;
            }
        }
        total * cv
    }

    pub fn distance(&self, grid: &PhaseGrid, f: &Array2<f64>, g: &Array2<f64>) -> f64 {
        let cv = grid.cell_volume();
        let weights = grid.v_weights();
        let mut total = 0.0;
        for ((frow, grow), wrow) in f.outer_iter().zip(g.outer_iter()).zip(self.w.outer_iter()) {
            for (((a, b), w), q) in frow.iter().zip(grow.iter()).zip(wrow.iter()).zip(weights.iter())
            {
                total += (a - b).abs() * w * q;
            }
        }
        total * cv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, KineticState};

    #[test]
    fn plain_norm_of_probability_density_is_one() {
        let grid = PhaseGrid::line(10.0, 400, 64, Boundary::Outflow).unwrap();
        let s = KineticState::uniform(&grid);
        let w = WeightTable::plain(&grid);
        assert!((w.norm(&grid, &s.f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_weight_dominates_plain() {
        let grid = PhaseGrid::line(10.0, 100, 16, Boundary::Outflow).unwrap();
        let s = KineticState::uniform(&grid);
        let plain = WeightTable::plain(&grid);
        let heavy = WeightTable::exp_bracket(&grid, 0.02);
        assert!(heavy.norm(&grid, &s.f) > plain.norm(&grid, &s.f));
        // and stays within e^{δ sup ⟨x⟩} of it
        let cap = (0.02f64 * (1.0 + 100.0f64).sqrt()).exp();
        assert!(heavy.norm(&grid, &s.f) <= cap * plain.norm(&grid, &s.f));
    }

    #[test]
    fn distance_is_a_metric_on_samples() {
        let grid = PhaseGrid::line(5.0, 30, 8, Boundary::Outflow).unwrap();
        let a = KineticState::from_fn(&grid, |x, _| (-x[0] * x[0]).exp());
        let b = KineticState::from_fn(&grid, |x, v| (-x[0] * x[0]).exp() * (1.0 + 0.1 * v[0]));
        let w = WeightTable::exp_bracket(&grid, 0.01);
        assert_eq!(w.distance(&grid, &a.f, &a.f), 0.0);
        let dab = w.distance(&grid, &a.f, &b.f);
        assert!(dab > 0.0);
        assert!((w.distance(&grid, &b.f, &a.f) - dab).abs() < 1e-15);
    }
}
