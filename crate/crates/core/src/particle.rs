//! Stochastic run-and-tumble ensemble with exact thinning.
//!
//! Between tumbles a particle moves ballistically; tumble proposals arrive
//! at the constant majorant rate 1 + χ >= sup λ and are accepted with
//! probability λ(v·∇M(x))/(1 + χ), evaluated at the proposal position. The
//! accepted-event process is then exactly the inhomogeneous tumbling clock,
//! with no time-discretisation error.
//!
//! Randomness is keyed per (seed, particle, epoch): every `advance` call
//! opens a fresh stream for each particle, so trajectories are reproducible
//! bit for bit under any thread partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::{KineticState, PhaseGrid};
use crate::model::ModelParams;

/// Draw v uniformly from the ball B(0, v0) ⊂ R^d: gaussian direction,
/// radius v0 · U^{1/d}.
pub fn sample_uniform_ball(rng: &mut impl Rng, d: usize, v0: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), d);
    loop {
        let mut n2 = 0.0;
        for c in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *c = g;
            n2 += g * g;
        }
        if n2 > 0.0 {
            let r = v0 * rng.gen::<f64>().powf(1.0 / d as f64);
            let s = r / n2.sqrt();
            for c in out.iter_mut() {
                *c *= s;
            }
            return;
        }
    }
}

pub struct ParticleEnsemble {
    d: usize,
    /// Positions, particle-major: x[p*d..(p+1)*d].
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
    seed: u64,
    epoch: u64,
}

fn stream_rng(seed: u64, pid: u64, epoch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&pid.to_le_bytes());
    key[16..24].copy_from_slice(&epoch.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

impl ParticleEnsemble {
    /// All particles at (x0, v0).
    pub fn new_dirac(n: usize, x0: &[f64], v0: &[f64], seed: u64) -> Result<Self> {
        let d = x0.len();
        if d == 0 || v0.len() != d {
            return Err(CoreError::InvalidDimension(d, "positions and velocities must share d >= 1"));
        }
        let mut x = Vec::with_capacity(n * d);
        let mut v = Vec::with_capacity(n * d);
        for _ in 0..n {
            x.extend_from_slice(x0);
            v.extend_from_slice(v0);
        }
        Ok(Self {
            d,
            x,
            v,
            time: 0.0,
            seed,
            epoch: 0,
        })
    }

    /// x uniform on [-l, l]^d, v uniform on the velocity ball.
    pub fn new_uniform_box(n: usize, model: &ModelParams, l: f64, seed: u64) -> Result<Self> {
        let d = model.vspace.d;
        if !(l > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "l",
                detail: format!("box half-width must be positive, got {l}"),
            });
        }
        let mut x = vec![0.0; n * d];
        let mut v = vec![0.0; n * d];
        let v0 = model.vspace.v0;
        x.par_chunks_mut(d)
            .zip(v.par_chunks_mut(d))
            .enumerate()
            .for_each(|(pid, (xp, vp))| {
                let mut rng = stream_rng(seed, pid as u64, u64::MAX);
                for c in xp.iter_mut() {
                    *c = rng.gen_range(-l..l);
                }
                sample_uniform_ball(&mut rng, d, v0, vp);
            });
        Ok(Self {
            d,
            x,
            v,
            time: 0.0,
            seed,
            epoch: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Advance every particle by `duration`. Exact in law; O(λ̄ duration)
    /// proposals per particle.
    pub fn advance(&mut self, model: &ModelParams, duration: f64) -> Result<()> {
        self.advance_impl(model, duration, false).map(|_| ())
    }

    /// Advance and return each particle's first accepted tumble time within
    /// the window, NaN if it never tumbled.
    pub fn advance_recording_tumbles(
        &mut self,
        model: &ModelParams,
        duration: f64,
    ) -> Result<Vec<f64>> {
        self.advance_impl(model, duration, true)
    }

    fn advance_impl(
        &mut self,
        model: &ModelParams,
        duration: f64,
        record: bool,
    ) -> Result<Vec<f64>> {
        if model.vspace.d != self.d {
            return Err(CoreError::InvalidDimension(
                self.d,
                "ensemble dimension must match model",
            ));
        }
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "duration",
                detail: format!("advance needs a finite duration >= 0, got {duration}"),
            });
        }
        let d = self.d;
        let majorant = model.rate.max_rate();
        let v0 = model.vspace.v0;
        let (seed, epoch) = (self.seed, self.epoch);
        let chemo = &model.chemo;
        let rate = &model.rate;
        let mut first = if record {
            vec![f64::NAN; self.len()]
        } else {
            Vec::new()
        };

        debug_assert!(d <= 8, "stack gradient buffer caps at d = 8");
        let body = |pid: usize, xp: &mut [f64], vp: &mut [f64]| -> f64 {
            let mut rng = stream_rng(seed, pid as u64, epoch);
            let mut grad = [0.0f64; 8];
            let grad = &mut grad[..d];
            let mut t = 0.0;
            let mut first_tumble = f64::NAN;
            loop {
                let tau = -rng.gen::<f64>().ln() / majorant;
                if t + tau >= duration {
                    let dt = duration - t;
                    for (xc, vc) in xp.iter_mut().zip(vp.iter()) {
                        *xc += vc * dt;
                    }
                    break;
                }
                t += tau;
                for (xc, vc) in xp.iter_mut().zip(vp.iter()) {
                    *xc += vc * tau;
                }
                chemo.grad(xp, grad);
                let m: f64 = vp.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
                if rng.gen::<f64>() * majorant <= rate.eval(m) {
                    sample_uniform_ball(&mut rng, d, v0, vp);
                    if first_tumble.is_nan() {
                        first_tumble = t;
                    }
                }
            }
            first_tumble
        };

        if record {
            self.x
                .par_chunks_mut(d)
                .zip(self.v.par_chunks_mut(d))
                .zip(first.par_chunks_mut(1))
                .enumerate()
                .for_each(|(pid, ((xp, vp), ft))| {
                    ft[0] = body(pid, xp, vp);
                });
        } else {
            self.x
                .par_chunks_mut(d)
                .zip(self.v.par_chunks_mut(d))
                .enumerate()
                .for_each(|(pid, (xp, vp))| {
                    body(pid, xp, vp);
                });
        }

        self.time += duration;
        self.epoch += 1;
        Ok(first)
    }

    /// Histogram density on a phase grid, unit total mass minus the fraction
    /// outside the box (tallied as outflow).
    pub fn empirical_density(&self, grid: &PhaseGrid) -> Result<KineticState> {
        if grid.d != self.d {
            return Err(CoreError::InvalidDimension(
                grid.d,
                "grid dimension must match ensemble",
            ));
        }
        let mut s = KineticState::zeros(grid);
        s.time = self.time;
        let n = self.len();
        let mut outside = 0usize;
        for p in 0..n {
            let xp = &self.x[p * self.d..(p + 1) * self.d];
            let vp = &self.v[p * self.d..(p + 1) * self.d];
            match (grid.x_index_of(xp), grid.v_index_of(vp)) {
                (Some(i), Some(j)) => {
                    s.f[[i, j]] += 1.0 / (n as f64 * grid.cell_volume() * grid.v_weight(j));
                }
                _ => outside += 1,
            }
        }
        s.outflow_cum = outside as f64 / n as f64;
        Ok(s)
    }

    /// Fraction of particles with |x| <= r.
    pub fn in_ball_fraction(&self, r: f64) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let inside = self
            .x
            .chunks(self.d)
            .filter(|xp| xp.iter().map(|c| c * c).sum::<f64>() <= r * r)
            .count();
        inside as f64 / n as f64
    }
}

/// Kolmogorov-Smirnov distance of samples to the Exp(1) law.
pub fn ks_statistic_exp1(samples: &[f64]) -> f64 {
    let mut s: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &t) in s.iter().enumerate() {
        let cdf = 1.0 - (-t).exp();
        d = d.max((cdf - i as f64 / n).abs());
        d = d.max((cdf - (i as f64 + 1.0) / n).abs());
    }
    d
}
