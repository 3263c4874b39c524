//! One-dimensional adaptive quadrature and mesh minimisation.

use crate::error::{CoreError, Result};

const MAX_DEPTH: u32 = 48;

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> std::result::Result<f64, f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = left + right - whole;
    // Standard Richardson acceptance for composite Simpson.
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(err.abs());
    }
    let l = adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    adapt(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
        .map_err(|residual| CoreError::QuadratureNonConvergence { tol, residual })
}

/// Minimum of `f` over a uniform `n`-point mesh on `[lo, hi]`, returning `(argmin, min)`.
pub fn mesh_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    assert!(n >= 2 && hi >= lo);
    let mut best = (lo, f(lo));
    for i in 1..n {
        let g = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let v = f(g);
        if v < best.1 {
            best = (g, v);
        }
    }
    best
}

/// Maximum of `f` over a uniform `n`-point mesh on `[lo, hi]`.
pub fn mesh_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let (_, neg) = mesh_min(|z| -f(z), lo, hi, n);
    -neg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        let v = integrate(|x| x * x * x - 2.0 * x, -1.0, 3.0, 1e-12).unwrap();
        // antiderivative x^4/4 - x^2: (81/4 - 9) - (1/4 - 1)
        assert!((v - (81.0 / 4.0 - 9.0 - 0.25 + 1.0)).abs() < 1e-10);
    }

    #[test]
    fn integrates_kinked_absolute_value() {
        let v = integrate(|x| x.abs(), -0.5, 0.5, 1e-12).unwrap();
        assert!((v - 0.25).abs() < 1e-10);
    }

    #[test]
    fn mesh_min_finds_parabola_vertex() {
        let (g, v) = mesh_min(|x| (x - 0.3) * (x - 0.3), 0.0, 1.0, 10001);
        assert!((g - 0.3).abs() < 1e-3);
        assert!(v < 1e-7);
    }
}
