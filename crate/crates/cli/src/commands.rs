//! The ten commands. Each reads its knobs from the scenario's [run]
//! section, writes CSV tables and binary states through the sink, prints a
//! short summary, and returns a failed-certificate error after persisting
//! the evidence when a checked inequality does not hold.

use rtlab_core::grid::{
    convergence_rate, steady_state, GridSolver, KineticState, PhaseGrid, WeightTable,
};
use rtlab_core::harris::{certified_chain, verify_drift, verify_minorisation, particle_witness, LyapunovWeights};
use rtlab_core::macro_limit::{parabolic_compare, ParabolicCfg};
use rtlab_core::model::ModelParams;
use rtlab_core::nonlinear::{
    eta_threshold, nonlinear_evolve, solve_fixed_point, uniform_constants, BumpKernel,
    CouplingSpec, NonlinearConstants, SolveCfg,
};
use rtlab_core::particle::ParticleEnsemble;

use crate::fail::Failure;
use crate::outputs::Sink;
use crate::scenario::Scenario;

pub struct Ctx {
    pub scenario: Scenario,
    pub model: ModelParams,
    pub grid: PhaseGrid,
    pub seed: u64,
}

pub fn dispatch(command: &str, ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    match command {
        "simulate-linear" => simulate_linear(ctx, sink),
        "simulate-particles" => simulate_particles(ctx, sink),
        "steady-state" => steady_state_cmd(ctx, sink),
        "harris-constants" => harris_constants(ctx, sink),
        "verify-drift" => verify_drift_cmd(ctx, sink),
        "verify-minorisation" => verify_minorisation_cmd(ctx, sink),
        "rate-compare" => rate_compare(ctx, sink),
        "nonlinear-steady" => nonlinear_steady(ctx, sink),
        "nonlinear-evolve" => nonlinear_evolve_cmd(ctx, sink),
        "macro-compare" => macro_compare(ctx, sink),
        other => unreachable!("clap admits no command named {other}"),
    }
}

fn solver<'g>(ctx: &'g Ctx) -> Result<GridSolver<'g>, Failure> {
    Ok(match ctx.scenario.grid.dt {
        Some(dt) => GridSolver::with_dt(&ctx.grid, &ctx.model, dt)?,
        None => GridSolver::new(&ctx.grid, &ctx.model)?,
    })
}

fn initial_state(ctx: &Ctx) -> KineticState {
    let run = &ctx.scenario.run;
    match run.init.as_deref().unwrap_or("gaussian") {
        "uniform" => KineticState::uniform(&ctx.grid),
        _ => {
            let width = run.width.unwrap_or(1.5);
            let center = run
                .x0
                .clone()
                .unwrap_or_else(|| vec![0.0; ctx.grid.d]);
            let mut s = KineticState::from_fn(&ctx.grid, |x, _| {
                let r2: f64 = x
                    .iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (-r2 / (width * width)).exp()
            });
            s.renormalize(&ctx.grid);
            s
        }
    }
}

/// Comma-joined coordinate headers, e.g. "x1,x2" for d = 2.
fn coord_header(prefix: &str, d: usize) -> String {
    if d == 1 {
        prefix.to_string()
    } else {
        (1..=d)
            .map(|i| format!("{prefix}{i}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn simulate_linear(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let t_end = run.t_end.unwrap_or(20.0);
    let every = run.sample_every.unwrap_or(10);
    let solver = solver(ctx)?;
    let plain = WeightTable::plain(&ctx.grid);
    let steady = steady_state(
        &solver,
        KineticState::uniform(&ctx.grid),
        &plain,
        run.tol.unwrap_or(1e-9),
        run.max_steps.unwrap_or(400_000),
    )?;

    let mut state = initial_state(ctx);
    let mut rows = vec![trajectory_row(ctx, &plain, &state, &steady.state)];
    let mut k = 0usize;
    while state.time < t_end - 1e-12 * (1.0 + t_end) {
        solver.step(&mut state)?;
        k += 1;
        if k % every == 0 || state.time >= t_end - 1e-12 * (1.0 + t_end) {
            rows.push(trajectory_row(ctx, &plain, &state, &steady.state));
        }
    }
    sink.csv("trajectory.csv", "t,mass,outflow,dist_steady", rows)?;
    sink.state("final.state", &ctx.grid, &state)?;
    println!(
        "marched to t = {}: mass {}, L1 distance to the steady profile {:e}",
        state.time,
        state.mass(&ctx.grid),
        plain.distance(&ctx.grid, &state.f, &steady.state.f)
    );
    Ok(())
}

fn trajectory_row(
    ctx: &Ctx,
    plain: &WeightTable,
    state: &KineticState,
    steady: &KineticState,
) -> String {
    format!(
        "{},{},{},{}",
        state.time,
        state.mass(&ctx.grid),
        state.outflow_cum,
        plain.distance(&ctx.grid, &state.f, &steady.f)
    )
}

fn simulate_particles(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let n = run.n_particles.unwrap_or(10_000);
    let t_end = run.t_end.unwrap_or(5.0);
    let half = run.width.unwrap_or(ctx.grid.l / 2.0);
    let mut ens = ParticleEnsemble::new_uniform_box(n, &ctx.model, half, ctx.seed)?;
    ens.advance(&ctx.model, t_end)?;

    let d = ctx.grid.d;
    let header = format!("{},{}", coord_header("x", d), coord_header("v", d));
    sink.csv(
        "particles.csv",
        &header,
        (0..n).map(|p| {
            format!(
                "{},{}",
                join(&ens.x[p * d..(p + 1) * d]),
                join(&ens.v[p * d..(p + 1) * d])
            )
        }),
    )?;

    let empirical = ens.empirical_density(&ctx.grid)?;
    let rho = empirical.x_marginal(&ctx.grid);
    let mut x = vec![0.0; d];
    sink.csv(
        "marginal.csv",
        &format!("{},rho", coord_header("x", d)),
        rho.iter().enumerate().map(|(i, r)| {
            ctx.grid.x_node(i, &mut x);
            format!("{},{}", join(&x), r)
        }),
    )?;
    println!("advanced {n} particles to t = {t_end} (seed {})", ctx.seed);
    Ok(())
}

fn steady_state_cmd(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let solver = solver(ctx)?;
    let out = steady_state(
        &solver,
        initial_state(ctx),
        &WeightTable::plain(&ctx.grid),
        run.tol.unwrap_or(1e-9),
        run.max_steps.unwrap_or(400_000),
    )?;
    sink.csv(
        "residuals.csv",
        "t,residual",
        out.history.iter().map(|(t, r)| format!("{t},{r}")),
    )?;
    sink.state("steady.state", &ctx.grid, &out.state)?;
    println!(
        "steady profile after {} steps, step residual {:e}",
        out.steps, out.residual
    );
    Ok(())
}

fn harris_constants(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let chain = certified_chain(
        &ctx.model,
        &ctx.grid,
        run.r_star.unwrap_or(1.0),
        None,
        run.tol.unwrap_or(1e-8),
    )?;
    let w = &chain.weights;
    let pairs: Vec<(&str, f64)> = vec![
        ("beta", w.beta),
        ("gamma", w.gamma),
        ("c", w.c),
        ("a_const", w.a_const),
        ("drift_radius", w.radius),
        ("hess_cap", w.hess_cap),
        ("delta", w.delta()),
        ("lambda_tilde", ctx.model.lambda_tilde()),
        ("moment_exponent", ctx.model.moment_exponent()),
        ("r_star", chain.minor.r_star),
        ("t_cycle", chain.minor.t),
        ("alpha", chain.minor.alpha),
        ("lambda_fl", chain.lambda_fl),
        ("k_const", chain.k_const),
        ("r_level", chain.r_level),
        ("lambda0", chain.rate.lambda0),
        ("alpha0", chain.rate.alpha0),
        ("alpha_bar", chain.rate.alpha_bar),
        ("c_prefactor", chain.rate.c_prefactor),
        ("sigma", chain.rate.sigma),
        ("beta_weight", chain.rate.beta_weight),
    ];
    sink.csv(
        "constants.csv",
        "name,value",
        pairs.iter().map(|(n, v)| format!("{n},{v}")),
    )?;
    println!(
        "certified chain: beta = {}, gamma = {:e}, c = {:e}, (T, alpha) = ({}, {:e})",
        w.beta, w.gamma, w.c, chain.minor.t, chain.minor.alpha
    );
    println!(
        "cycle: alpha_bar = {}, C = {}, sigma = {:e}",
        chain.rate.alpha_bar, chain.rate.c_prefactor, chain.rate.sigma
    );
    Ok(())
}

fn verify_drift_cmd(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let w = LyapunovWeights::from_model(&ctx.model, &ctx.grid)?;
    let rep = verify_drift(&ctx.model, &ctx.grid, &w, run.tol.unwrap_or(1e-8))?;
    sink.csv(
        "drift.csv",
        "radius,exterior,max_slack,max_generator",
        rep.rows.iter().map(|r| {
            format!(
                "{},{},{},{}",
                r.radius, r.exterior as u8, r.max_slack, r.max_generator
            )
        }),
    )?;
    let pairs: Vec<(&str, f64)> = vec![
        ("c", rep.c),
        ("a_const", rep.a_const),
        ("radius", rep.radius),
        ("tol", rep.tol),
        ("worst_exterior_slack", rep.worst_exterior_slack),
        ("worst_exterior_ratio", rep.worst_exterior_ratio),
        ("interior_max_generator", rep.interior_max_generator),
        ("sandwich_min", rep.sandwich_min),
        ("sandwich_max", rep.sandwich_max),
        ("exterior_nodes", rep.exterior_nodes as f64),
        ("interior_nodes", rep.interior_nodes as f64),
        ("passed", rep.holds() as u8 as f64),
    ];
    sink.csv(
        "summary.csv",
        "name,value",
        pairs.iter().map(|(n, v)| format!("{n},{v}")),
    )?;
    println!(
        "drift inequality over {} exterior nodes: worst slack {:e}, sandwich [{}, {}]",
        rep.exterior_nodes, rep.worst_exterior_slack, rep.sandwich_min, rep.sandwich_max
    );
    if !rep.holds() {
        return Err(Failure::Certificate(format!(
            "drift inequality fails: worst exterior slack {:e} above tolerance {:e}",
            rep.worst_exterior_slack, rep.tol
        )));
    }
    Ok(())
}

fn verify_minorisation_cmd(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let r_star = run.r_star.unwrap_or(1.0);
    let rep = verify_minorisation(&ctx.model, &ctx.grid, r_star, ctx.seed)?;
    let d = ctx.grid.d;
    sink.csv(
        "starts.csv",
        &format!(
            "{},{},alpha_observed",
            coord_header("x", d),
            coord_header("v", d)
        ),
        rep.starts
            .iter()
            .map(|s| format!("{},{},{}", join(&s.x), join(&s.v), s.alpha_observed)),
    )?;

    let witness = match run.n_particles {
        Some(n) => Some(particle_witness(&ctx.model, r_star, n, ctx.seed)?),
        None => None,
    };
    let mut pairs: Vec<(&str, f64)> = vec![
        ("r_star", r_star),
        ("t_cycle", rep.bound.t),
        ("alpha_theory", rep.bound.alpha),
        ("alpha_observed_min", rep.alpha_observed_min),
        ("ratio", rep.ratio),
        ("grid_passed", rep.holds() as u8 as f64),
    ];
    if let Some(w) = &witness {
        pairs.push(("witness_n", w.n as f64));
        pairs.push(("witness_p_hat", w.p_hat));
        pairs.push(("witness_lower_confidence", w.lower_confidence));
        pairs.push(("witness_passed", w.holds() as u8 as f64));
    }
    sink.csv(
        "summary.csv",
        "name,value",
        pairs.iter().map(|(n, v)| format!("{n},{v}")),
    )?;
    println!(
        "small-set floor from {} starts: min observed {:e} = {} x alpha",
        rep.starts.len(),
        rep.alpha_observed_min,
        rep.ratio
    );
    if let Some(w) = &witness {
        println!(
            "particle witness: p_hat = {}, 99% lower bound {:e} vs alpha {:e}",
            w.p_hat, w.lower_confidence, w.bound.alpha
        );
    }
    let ok = rep.holds() && witness.as_ref().map_or(true, |w| w.holds());
    if !ok {
        return Err(Failure::Certificate(format!(
            "minorisation floor not met: grid ratio {}, witness {}",
            rep.ratio,
            witness
                .as_ref()
                .map_or("skipped".to_string(), |w| format!(
                    "{:e} vs {:e}",
                    w.lower_confidence, w.bound.alpha
                ))
        )));
    }
    Ok(())
}

fn rate_compare(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let chain = certified_chain(
        &ctx.model,
        &ctx.grid,
        run.r_star.unwrap_or(1.0),
        None,
        run.tol.unwrap_or(1e-8),
    )?;
    let beta_w = chain.rate.beta_weight;
    let star = WeightTable::from_fn(&ctx.grid, |x, v| {
        1.0 + beta_w * chain.weights.phi(&ctx.model, x, v)
    });

    // mirrored pair of Gaussians: the flip (x, v) -> (-x, -v) commutes
    // with the dynamics, so their distance decays in one clean mode
    let width = run.width.unwrap_or(1.0);
    let center = run.x0.clone().unwrap_or_else(|| {
        let mut c = vec![0.0; ctx.grid.d];
        c[0] = 2.0;
        c
    });
    let gauss = |x: &[f64], c: &[f64]| {
        let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        (-r2 / (width * width)).exp()
    };
    let mirrored: Vec<f64> = center.iter().map(|c| -c).collect();
    let mut f = KineticState::from_fn(&ctx.grid, |x, _| gauss(x, &center));
    f.renormalize(&ctx.grid);
    let mut g = KineticState::from_fn(&ctx.grid, |x, _| gauss(x, &mirrored));
    g.renormalize(&ctx.grid);

    let solver = solver(ctx)?;
    let t_end = run.t_end.unwrap_or(400.0);
    let every = run.sample_every.unwrap_or(10);
    let mut samples = vec![(0.0, star.distance(&ctx.grid, &f.f, &g.f))];
    let mut k = 0usize;
    while f.time < t_end - 1e-12 * (1.0 + t_end) {
        solver.step(&mut f)?;
        solver.step(&mut g)?;
        k += 1;
        if k % every == 0 {
            samples.push((f.time, star.distance(&ctx.grid, &f.f, &g.f)));
        }
    }
    sink.csv(
        "rate.csv",
        "t,dist",
        samples.iter().map(|(t, d)| format!("{t},{d}")),
    )?;

    let fit = convergence_rate(&samples)?;
    let passed = fit.sigma >= chain.rate.sigma;
    sink.csv(
        "compare.csv",
        "sigma_certified,sigma_measured,r_squared,points_used,passed",
        std::iter::once(format!(
            "{},{},{},{},{}",
            chain.rate.sigma, fit.sigma, fit.r_squared, fit.points_used, passed as u8
        )),
    )?;
    println!(
        "measured rate {:e} vs certified sigma {:e} (r^2 = {}, {} points)",
        fit.sigma, chain.rate.sigma, fit.r_squared, fit.points_used
    );
    if !passed {
        return Err(Failure::Certificate(format!(
            "measured rate {:e} fell below the certified lower bound {:e}",
            fit.sigma, chain.rate.sigma
        )));
    }
    Ok(())
}

fn coupling(ctx: &Ctx) -> Result<(CouplingSpec, NonlinearConstants, WeightTable), Failure> {
    let run = &ctx.scenario.run;
    let kernel = match (run.kernel_amplitude, run.kernel_radius) {
        (Some(a), Some(r)) => BumpKernel::new(a, r)?,
        _ => BumpKernel::standard()?,
    };
    let threshold = eta_threshold(&ctx.model, &kernel)?;
    let eta = match (run.eta, run.eta_scale) {
        (Some(e), _) => e,
        (None, Some(s)) => s * threshold,
        (None, None) => {
            return Err(Failure::Config(
                "coupled commands need eta or eta_scale in [run]".into(),
            ))
        }
    };
    let spec = CouplingSpec::new(kernel, eta)?;
    let consts = uniform_constants(
        &ctx.model,
        &ctx.grid,
        &spec,
        run.r_star.unwrap_or(1.0),
        1e-8,
    )?;
    let sstar = WeightTable::exp_bracket(&ctx.grid, consts.delta);
    Ok((spec, consts, sstar))
}

fn constants_csv(sink: &mut Sink, consts: &NonlinearConstants) -> Result<(), Failure> {
    let pairs: Vec<(&str, f64)> = vec![
        ("eta", consts.eta),
        ("eta_threshold", consts.eta_threshold),
        ("threshold_exceeded", consts.threshold_exceeded as u8 as f64),
        ("delta", consts.delta),
        ("sigma_linear", consts.sigma_linear),
        ("lambda_tilde_unif", consts.lambda_tilde_unif),
        ("m_star_unif", consts.m_star_unif),
        ("gsup_unif", consts.gsup_unif),
        ("hess_slack", consts.hess_slack),
        ("sigma_unif", consts.sigma_unif),
        ("c_prefactor_unif", consts.c_prefactor_unif),
        ("c6", consts.c6),
        ("p_sharp", consts.p_sharp),
        ("b_moment", consts.b_moment),
        ("e1", consts.e1),
        ("e2", consts.e2),
        ("init_factor", consts.init_factor),
        ("c_star", consts.c_star),
        ("c_tilde", consts.c_tilde),
        ("d_semigroup", consts.d_semigroup),
        ("init_bound", consts.init_bound),
    ];
    sink.csv(
        "constants.csv",
        "name,value",
        pairs.iter().map(|(n, v)| format!("{n},{v}")),
    )
}

fn solve_cfg(ctx: &Ctx) -> SolveCfg {
    SolveCfg {
        dt: ctx.scenario.grid.dt,
        ss_tol: 1e-9,
        ss_max_steps: ctx.scenario.run.max_steps.unwrap_or(400_000),
    }
}

fn nonlinear_steady(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let (spec, consts, sstar) = coupling(ctx)?;
    constants_csv(sink, &consts)?;

    let fp = solve_fixed_point(
        &ctx.grid,
        &ctx.model,
        &spec,
        &sstar,
        &solve_cfg(ctx),
        run.tol.unwrap_or(1e-6),
        run.max_iter.unwrap_or(30),
    )?;
    sink.csv(
        "trace.csv",
        "iteration,residual,ratio",
        fp.trace.residuals.iter().enumerate().map(|(i, r)| {
            let ratio = if i == 0 {
                String::new()
            } else {
                fp.trace.ratios[i - 1].to_string()
            };
            format!("{},{},{}", i + 1, r, ratio)
        }),
    )?;

    let d = ctx.grid.d;
    let mut x = vec![0.0; d];
    sink.csv(
        "field.csv",
        &format!(
            "{},m,{}",
            coord_header("x", d),
            coord_header("grad", d)
        ),
        (0..ctx.grid.n_x()).map(|i| {
            ctx.grid.x_node(i, &mut x);
            let grad: Vec<f64> = (0..d).map(|ax| fp.field.grad[[i, ax]]).collect();
            format!("{},{},{}", join(&x), fp.field.m[i], join(&grad))
        }),
    )?;
    sink.state("f_inf.state", &ctx.grid, &fp.f_inf)?;
    println!(
        "fixed point after {} sweeps, residual {:e} (eta = {:e}, threshold {:e})",
        fp.iterations,
        fp.trace.residuals.last().copied().unwrap_or(f64::NAN),
        consts.eta,
        consts.eta_threshold
    );
    Ok(())
}

fn nonlinear_evolve_cmd(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let (spec, consts, sstar) = coupling(ctx)?;
    constants_csv(sink, &consts)?;

    let fp = solve_fixed_point(
        &ctx.grid,
        &ctx.model,
        &spec,
        &sstar,
        &solve_cfg(ctx),
        run.tol.unwrap_or(1e-6),
        run.max_iter.unwrap_or(30),
    )?;
    let out = nonlinear_evolve(
        &ctx.grid,
        &ctx.model,
        &spec,
        &sstar,
        initial_state(ctx),
        &fp.f_inf,
        run.t_end.unwrap_or(40.0),
        ctx.scenario.grid.dt,
    )?;
    let every = run.sample_every.unwrap_or(1);
    let last = out.samples.len() - 1;
    sink.csv(
        "evolve.csv",
        "t,dist,norm",
        out.samples
            .iter()
            .enumerate()
            .filter(|(i, _)| i % every == 0 || *i == last)
            .map(|(_, s)| format!("{},{},{}", s.t, s.dist, s.norm)),
    )?;
    sink.state("f_inf.state", &ctx.grid, &fp.f_inf)?;
    sink.state("final.state", &ctx.grid, &out.state)?;
    let end = out.samples.last().expect("at least the initial sample");
    println!(
        "coupled march to t = {}: distance to the fixed point {:e}",
        end.t, end.dist
    );
    Ok(())
}

fn macro_compare(ctx: &Ctx, sink: &mut Sink) -> Result<(), Failure> {
    let run = &ctx.scenario.run;
    let epsilons = run
        .epsilons
        .clone()
        .ok_or_else(|| Failure::Config("macro-compare needs epsilons = [..] in [run]".into()))?;
    let width = run.width.unwrap_or(1.0);
    let cfg = ParabolicCfg {
        nv: ctx.scenario.grid.nv,
        d_coeff: run.d_coeff,
        budget: run.budget.unwrap_or(2e9),
    };
    let table = parabolic_compare(
        &ctx.model,
        ctx.scenario.grid.l,
        ctx.scenario.grid.nx,
        |x: &[f64]| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            (-r2 / (width * width)).exp()
        },
        &epsilons,
        run.tau_end.unwrap_or(0.25),
        &cfg,
    )?;
    sink.csv(
        "compare.csv",
        "epsilon,tau,l1_error",
        table
            .rows
            .iter()
            .map(|r| format!("{},{},{}", r.epsilon, r.tau, r.l1_error)),
    )?;
    println!("diffusion coefficient {}", table.d_coeff);
    for r in &table.rows {
        println!("epsilon = {}: L1 error {}", r.epsilon, r.l1_error);
    }
    Ok(())
}
