//! Scenario files: one TOML file describes one experiment. Unknown keys
//! are rejected by name; numeric ranges are checked before any module
//! runs so misconfiguration surfaces as exit 3, never mid-computation.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use rtlab_core::grid::{Boundary, PhaseGrid};
use rtlab_core::model::{ChemoProfile, ModelParams, Response, TumblingRate, VelocitySpace};

use crate::fail::Failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Output directory; `out/<name>` when absent, `--out` overrides.
    pub out_dir: Option<PathBuf>,
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub chi: f64,
    /// Response kind: "sign" or "tanh".
    pub psi: String,
    /// Gain of the tanh response; 2 when absent.
    pub kappa: Option<f64>,
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Plateau half-width of the smoothed cone.
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "one")]
    pub slope: f64,
}

fn default_profile() -> String {
    "smoothed_cone".into()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub l: f64,
    pub nx: usize,
    pub nv: usize,
    /// Time step; the CFL default when absent.
    pub dt: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            l: 10.0,
            nx: 400,
            nv: 64,
            dt: None,
        }
    }
}

/// Command-specific knobs; every command reads the subset it documents and
/// ignores none silently (required ones are checked per command).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_end: Option<f64>,
    /// Horizon in the parabolic time variable (macro-compare).
    pub tau_end: Option<f64>,
    pub tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub max_iter: Option<usize>,
    /// Coupling strength; alternatively eta_scale times the computed
    /// contraction threshold.
    pub eta: Option<f64>,
    pub eta_scale: Option<f64>,
    pub kernel_amplitude: Option<f64>,
    pub kernel_radius: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub n_particles: Option<usize>,
    pub seed: Option<u64>,
    /// Small-set radius for minorisation and constant chains.
    pub r_star: Option<f64>,
    /// Initial datum kind: "gaussian" (default) or "uniform".
    pub init: Option<String>,
    pub x0: Option<Vec<f64>>,
    /// Gaussian width, or box half-width for particle ensembles.
    pub width: Option<f64>,
    /// Record every k-th step in trajectory outputs.
    pub sample_every: Option<usize>,
    /// Macro diffusion coefficient; the velocity second moment when absent.
    pub d_coeff: Option<f64>,
    /// Cell-update budget for the parabolic sweep.
    pub budget: Option<f64>,
}

impl Scenario {
    /// Read and validate a scenario, returning the raw bytes alongside for
    /// the manifest's input hash.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), Failure> {
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Failure::Config(format!("{} is not UTF-8: {e}", path.display())))?;
        let scenario: Scenario = toml::from_str(text)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        scenario.validate()?;
        Ok((scenario, bytes))
    }

    fn validate(&self) -> Result<(), Failure> {
        let m = &self.model;
        if m.d != 1 && m.d != 2 {
            return Err(bad(format!("d = {} is unsupported; use 1 or 2", m.d)));
        }
        if !(m.chi > 0.0 && m.chi < 1.0) {
            return Err(bad(format!(
                "chi = {} is outside (0, 1); the tumbling rate 1 - chi*psi must stay positive",
                m.chi
            )));
        }
        match m.psi.as_str() {
            "sign" => {
                if m.kappa.is_some() {
                    return Err(bad("kappa applies to the tanh response only".into()));
                }
            }
            "tanh" => {
                if let Some(k) = m.kappa {
                    positive("kappa", k)?;
                }
            }
            other => {
                return Err(bad(format!(
                    "psi = \"{other}\" is unknown; use \"sign\" or \"tanh\""
                )))
            }
        }
        if m.profile != "smoothed_cone" {
            return Err(bad(format!(
                "profile = \"{}\" is unknown; \"smoothed_cone\" is the built-in profile",
                m.profile
            )));
        }
        if !(m.offset >= 0.0 && m.offset.is_finite()) {
            return Err(bad(format!("offset = {} must be finite and >= 0", m.offset)));
        }
        positive("slope", m.slope)?;

        let g = &self.grid;
        positive("l", g.l)?;
        if g.nx < 2 {
            return Err(bad(format!("nx = {} is too coarse; need at least 2", g.nx)));
        }
        if g.nv < 2 {
            return Err(bad(format!("nv = {} is too coarse; need at least 2", g.nv)));
        }
        if let Some(dt) = g.dt {
            positive("dt", dt)?;
        }

        let r = &self.run;
        for (name, v) in [
            ("t_end", r.t_end),
            ("tau_end", r.tau_end),
            ("tol", r.tol),
            ("eta_scale", r.eta_scale),
            ("kernel_amplitude", r.kernel_amplitude),
            ("kernel_radius", r.kernel_radius),
            ("r_star", r.r_star),
            ("width", r.width),
            ("d_coeff", r.d_coeff),
            ("budget", r.budget),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if let Some(eta) = r.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(bad(format!("eta = {eta} must be finite and >= 0")));
            }
        }
        if r.eta.is_some() && r.eta_scale.is_some() {
            return Err(bad("set eta or eta_scale, not both".into()));
        }
        if r.kernel_amplitude.is_some() != r.kernel_radius.is_some() {
            return Err(bad(
                "kernel_amplitude and kernel_radius come together".into(),
            ));
        }
        if let Some(eps) = &r.epsilons {
            if eps.is_empty() {
                return Err(bad("epsilons is empty; list at least one scale".into()));
            }
            for (i, &e) in eps.iter().enumerate() {
                if !(e > 0.0 && e <= 1.0) || !e.is_finite() {
                    return Err(bad(format!("epsilons[{i}] = {e} is outside (0, 1]")));
                }
            }
        }
        if let Some(n) = r.n_particles {
            if n == 0 {
                return Err(bad("n_particles = 0; need at least one particle".into()));
            }
        }
        for (name, v) in [("max_steps", r.max_steps), ("max_iter", r.max_iter), ("sample_every", r.sample_every)] {
            if v == Some(0) {
                return Err(bad(format!("{name} = 0; need at least 1")));
            }
        }
        if let Some(init) = &r.init {
            if init != "gaussian" && init != "uniform" {
                return Err(bad(format!(
                    "init = \"{init}\" is unknown; use \"gaussian\" or \"uniform\""
                )));
            }
        }
        if let Some(x0) = &r.x0 {
            if x0.len() != m.d {
                return Err(bad(format!(
                    "x0 has {} components; the model has d = {}",
                    x0.len(),
                    m.d
                )));
            }
            if x0.iter().any(|c| !c.is_finite()) {
                return Err(bad("x0 has a non-finite component".into()));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<ModelParams, Failure> {
        let m = &self.model;
        let vspace = VelocitySpace::new(m.d)?;
        let psi = match m.psi.as_str() {
            "sign" => Response::Sign,
            _ => Response::Tanh {
                kappa: m.kappa.unwrap_or(2.0),
            },
        };
        let rate = TumblingRate::new(m.chi, psi)?;
        let chemo = ChemoProfile::smoothed_cone(m.d, m.offset, m.slope)?;
        Ok(ModelParams::new(vspace, rate, chemo)?)
    }

    pub fn build_grid(&self) -> Result<PhaseGrid, Failure> {
        Ok(PhaseGrid::new(
            self.model.d,
            self.grid.l,
            self.grid.nx,
            self.grid.nv,
            Boundary::Outflow,
        )?)
    }

    /// Lipschitz-response gate for the coupled commands.
    pub fn require_smooth_response(&self) -> Result<(), Failure> {
        if self.model.psi == "sign" {
            return Err(bad(
                "the coupled solver linearises the response; psi = \"sign\" has no \
                 Lipschitz slope, use \"tanh\""
                    .into(),
            ));
        }
        Ok(())
    }
}

fn bad(msg: String) -> Failure {
    Failure::Config(msg)
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} = {v} must be finite and > 0")))
    }
}
