//! Kinetic run-and-tumble chemotaxis: deterministic and stochastic solvers
//! together with computable ergodicity certificates.
//!
//! The crate is organised around one model family: densities f(t, x, v) on
//! R^d × B(0, V0) evolving by free transport and velocity jumps with rate
//! λ(v·∇M(x)) = 1 - χ ψ(v·∇M(x)). The modules provide
//!
//! - [`model`]: profiles M, responses ψ, and derived sublinearity constants;
//! - [`grid`]: deterministic phase-space solver (splitting scheme);
//! - [`particle`]: exact-thinning stochastic ensemble;
//! - [`harris`]: Lyapunov drift and small-set certificates with quantitative
//!   convergence rates;
//! - [`nonlinear`]: logarithmic coupling to a self-consistent chemoattractant;
//! - [`macro_limit`]: drift-diffusion limit solver and kinetic comparison.

pub mod error;
pub mod grid;
pub mod io;
pub mod harris;
pub mod macro_limit;
pub mod model;
pub mod nonlinear;
pub mod particle;
pub mod quad;

pub use error::{CoreError, Result};

/// Crate version, for provenance records written next to outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
