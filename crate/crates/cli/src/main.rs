//! rtlab: scenario-driven runs of the kinetic run-and-tumble toolkit.
//! Every command takes one scenario file, writes its outputs plus a hashed
//! manifest to one directory, and exits 0 on success, 1 on numerical
//! failure, 2 on usage errors, 3 on configuration errors, and 4 when a
//! checked certificate does not hold.

mod commands;
mod fail;
mod outputs;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Ctx;
use fail::Failure;
use outputs::{sha256_hex, Meta, Sink};
use scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "rtlab",
    version,
    about = "Run-and-tumble kinetics: simulation and ergodicity certification",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; the scenario's out_dir, then out/<name>, when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the data-parallel stages.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed override for stochastic commands.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// March the linear kinetic equation and record the approach to its steady profile.
    SimulateLinear(RunArgs),
    /// Sample the velocity-jump process and save the final ensemble.
    SimulateParticles(RunArgs),
    /// Power-iterate the renormalised semigroup to the steady profile.
    SteadyState(RunArgs),
    /// Compute the certified constant chain, from drift weights to the convergence rate.
    HarrisConstants(RunArgs),
    /// Check the Lyapunov drift inequality node by node.
    VerifyDrift(RunArgs),
    /// Check the small-set floor from adversarial starts, with an optional particle witness.
    VerifyMinorisation(RunArgs),
    /// Measure the two-run contraction rate and compare it with the certificate.
    RateCompare(RunArgs),
    /// Solve the weakly coupled steady state by fixed-point iteration.
    NonlinearSteady(RunArgs),
    /// March the coupled equation and record the approach to its fixed point.
    NonlinearEvolve(RunArgs),
    /// Sweep the parabolic rescaling and tabulate kinetic-vs-macro errors.
    MacroCompare(RunArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::SimulateLinear(_) => "simulate-linear",
            Cmd::SimulateParticles(_) => "simulate-particles",
            Cmd::SteadyState(_) => "steady-state",
            Cmd::HarrisConstants(_) => "harris-constants",
            Cmd::VerifyDrift(_) => "verify-drift",
            Cmd::VerifyMinorisation(_) => "verify-minorisation",
            Cmd::RateCompare(_) => "rate-compare",
            Cmd::NonlinearSteady(_) => "nonlinear-steady",
            Cmd::NonlinearEvolve(_) => "nonlinear-evolve",
            Cmd::MacroCompare(_) => "macro-compare",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Cmd::SimulateLinear(a)
            | Cmd::SimulateParticles(a)
            | Cmd::SteadyState(a)
            | Cmd::HarrisConstants(a)
            | Cmd::VerifyDrift(a)
            | Cmd::VerifyMinorisation(a)
            | Cmd::RateCompare(a)
            | Cmd::NonlinearSteady(a)
            | Cmd::NonlinearEvolve(a)
            | Cmd::MacroCompare(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cmd: &Cmd) -> Result<(), Failure> {
    let args = cmd.args();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot size the thread pool: {e}")))?;
    }

    let (scenario, raw) = Scenario::load(&args.scenario)?;
    if matches!(cmd, Cmd::NonlinearSteady(_) | Cmd::NonlinearEvolve(_)) {
        scenario.require_smooth_response()?;
    }
    let seed = args.seed.or(scenario.run.seed).unwrap_or(0);
    let out_dir = args
        .out
        .clone()
        .or_else(|| scenario.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));

    let model = scenario.build_model()?;
    let grid = scenario.build_grid()?;
    let ctx = Ctx {
        scenario,
        model,
        grid,
        seed,
    };
    let mut sink = Sink::create(&out_dir)?;
    let meta = Meta {
        command: cmd.name(),
        scenario_path: args.scenario.display().to_string(),
        scenario_name: &ctx.scenario.name,
        scenario_sha256: sha256_hex(&raw),
        seed,
        threads: args.threads.unwrap_or_else(rayon::current_num_threads),
    };

    let result = commands::dispatch(cmd.name(), &ctx, &mut sink);
    sink.manifest(&meta, result.as_ref().err())?;
    println!("outputs in {}", sink.dir().display());
    result
}
