//! Grid samples of the chemoattractant and the tumbling rate.

use ndarray::{Array1, Array2};

use super::PhaseGrid;
use crate::model::{ChemoProfile, TumblingRate};

/// M and ∇M at every cell centre.
pub struct ChemoOnGrid {
    pub m: Array1<f64>,
    /// Shape (n_x, d).
    pub grad: Array2<f64>,
}

impl ChemoOnGrid {
    pub fn sample(grid: &PhaseGrid, chemo: &ChemoProfile) -> Self {
        let n = grid.n_x();
        let mut m = Array1::zeros(n);
        let mut grad = Array2::zeros((n, grid.d));
        let mut x = vec![0.0; grid.d];
        let mut g = vec![0.0; grid.d];
        for i in 0..n {
            grid.x_node(i, &mut x);
            m[i] = chemo.m(&x);
            chemo.grad(&x, &mut g);
            for a in 0..grid.d {
                grad[[i, a]] = g[a];
            }
        }
        Self { m, grad }
    }
}

/// λ(v_j · ∇M(x_i)) tabulated for every node pair.
pub struct LambdaTable {
    pub lam: Array2<f64>,
}

impl LambdaTable {
    pub fn build(grid: &PhaseGrid, rate: &TumblingRate, field: &ChemoOnGrid) -> Self {
        let (n, nv) = (grid.n_x(), grid.n_v());
        let mut lam = Array2::zeros((n, nv));
        for i in 0..n {
            for j in 0..nv {
                let v = grid.v_node(j);
                let mut dot = 0.0;
                for a in 0..grid.d {
                    dot += v[a] * field.grad[[i, a]];
                }
                lam[[i, j]] = rate.eval(dot);
            }
        }
        Self { lam }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::model::Response;

    #[test]
    fn lambda_table_respects_rate_bounds() {
        let grid = PhaseGrid::line(10.0, 100, 32, Boundary::Outflow).unwrap();
        let chemo = ChemoProfile::smoothed_cone(1, 0.0, 1.0).unwrap();
        let rate = TumblingRate::new(0.5, Response::Sign).unwrap();
        let field = ChemoOnGrid::sample(&grid, &chemo);
        let tab = LambdaTable::build(&grid, &rate, &field);
        for &l in tab.lam.iter() {
            assert!(l >= rate.min_rate() - 1e-15 && l <= rate.max_rate() + 1e-15);
        }
    }

    #[test]
    fn sign_rate_is_low_for_inward_velocities() {
        // cone gradient points toward the origin: moving inward means
        // v·∇M > 0, so λ = 1 - χ there
        let grid = PhaseGrid::line(10.0, 100, 32, Boundary::Outflow).unwrap();
        let chemo = ChemoProfile::smoothed_cone(1, 0.0, 1.0).unwrap();
        let rate = TumblingRate::new(0.5, Response::Sign).unwrap();
        let field = ChemoOnGrid::sample(&grid, &chemo);
        let tab = LambdaTable::build(&grid, &rate, &field);
        // x < 0 (index 0), v > 0 (last node): inward
        assert!((tab.lam[[0, 31]] - 0.5).abs() < 1e-15);
        // x < 0, v < 0 (first node): outward
        assert!((tab.lam[[0, 0]] - 1.5).abs() < 1e-15);
    }
}
