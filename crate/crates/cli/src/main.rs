//! `asgd` — run accelerated-SGD experiment matrices, verify per-step Lyapunov
//! dissipation along traces, emit closed-form bound curves, fit empirical
//! rates, integrate the continuous-time systems, and certify the abstract
//! rate-generating Lyapunov conditions.
//!
//! Exit code is 0 iff every requested check passes.

use anyhow::{bail, Context, Result};
use asgd_core::abstract_lyapunov::{
    abstract_step_bound, check_rate_lyapunov, gd_field, gd_rate_lyapunov, sample_states,
};
use asgd_core::harness::{self, RunConfig};
use asgd_core::lyapunov::{self, GdLyapunovKind};
use asgd_core::ode::{self, OdeSystem};
use asgd_core::optimizers::OptimizerKind;
use asgd_core::Vector;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "asgd", about, version)]
struct Cli {
    /// Worker threads for seed-parallel runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run-config TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the number of seeds in the config.
    #[arg(long)]
    seeds: Option<usize>,
    /// Override the master seed in the config.
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured run matrix; writes aggregates.csv (and
    /// trace.csv for a single-seed run).
    Run(ConfigArgs),
    /// Check the per-step dissipation inequality along a trace CSV.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV produced by `run` with one seed.
        #[arg(long)]
        trace: PathBuf,
        /// Which inequality to check.
        #[arg(long, value_enum)]
        kind: VerifyKind,
    },
    /// Emit the closed-form bound curve matching the config.
    Bounds(ConfigArgs),
    /// Fit a log-log slope on an aggregate CSV column.
    Fit {
        #[arg(long)]
        aggregate: PathBuf,
        /// Observable label (`f_gap`, `lyap_sc` or `lyap_c`).
        #[arg(long, default_value = "f_gap")]
        column: String,
        #[arg(long)]
        kmin: u64,
        #[arg(long)]
        kmax: u64,
    },
    /// Integrate a continuous-time system and check its decay property.
    Ode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum)]
        system: SystemArg,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: f64,
        /// Start time; required > 0 for the convex systems (default `2 dt`).
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Certify a gradient-descent rate-generating Lyapunov function on
    /// sampled states and spot-check the perturbed step bound.
    AbstractCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: GdKindArg,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Sampling box radius around the minimizer (default `10 |x0 - x*|`).
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyKind {
    Sc,
    C,
    GdConvex,
    GdStronglyConvex,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    FirstOrderSc,
    FirstOrderC,
    SecondOrderSc,
    SecondOrderC,
}

impl From<SystemArg> for OdeSystem {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::FirstOrderSc => OdeSystem::FirstOrderSc,
            SystemArg::FirstOrderC => OdeSystem::FirstOrderC,
            SystemArg::SecondOrderSc => OdeSystem::SecondOrderSc,
            SystemArg::SecondOrderC => OdeSystem::SecondOrderC,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GdKindArg {
    Convex,
    StronglyConvex,
}

impl From<GdKindArg> for GdLyapunovKind {
    fn from(k: GdKindArg) -> Self {
        match k {
            GdKindArg::Convex => GdLyapunovKind::Convex,
            GdKindArg::StronglyConvex => GdLyapunovKind::StronglyConvex,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("failed to configure the worker pool")?;
    }
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify {
            config,
            trace,
            kind,
        } => cmd_verify(config, trace, kind),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Fit {
            aggregate,
            column,
            kmin,
            kmax,
        } => cmd_fit(aggregate, &column, kmin, kmax),
        Command::Ode {
            config,
            out,
            system,
            t_end,
            dt,
            t0,
        } => cmd_ode(config, out, system.into(), t_end, dt, t0),
        Command::AbstractCheck {
            config,
            kind,
            samples,
            radius,
            seed,
        } => cmd_abstract_check(config, kind.into(), samples, radius, seed),
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seeds) = args.seeds {
        cfg.run.seeds = seeds;
    }
    if let Some(master) = args.master_seed {
        cfg.run.master_seed = master;
    }
    Ok(cfg)
}

fn cmd_run(args: ConfigArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let out = harness::run_matrix(&cfg)?;
    let r = &out.resolved;
    println!("resolved constants:");
    println!("  step cap        = {}", r.step_cap);
    if let Some(v) = r.e0_sc {
        println!("  E0^SC           = {v}");
    }
    if let Some(v) = r.e0_c {
        println!("  E0^C            = {v}");
    }
    if let Some(v) = r.e_crit {
        println!("  E_crit          = {v}");
    }
    if let Some(v) = r.k0 {
        println!("  k0              = {v}");
    }
    if let Some(v) = r.warmstart_cap {
        println!("  warm-start cap K = {v}");
    }
    std::fs::create_dir_all(&args.out)?;
    let agg_path = args.out.join("aggregates.csv");
    std::fs::write(&agg_path, harness::write_aggregate_csv(&out.aggregates))?;
    println!("wrote {}", agg_path.display());
    if cfg.run.seeds == 1 {
        let problem = cfg.build_problem()?;
        let trace_path = args.out.join("trace.csv");
        std::fs::write(
            &trace_path,
            harness::write_trace_csv(&out.traces[0], &problem),
        )?;
        println!("wrote {}", trace_path.display());
    }
    Ok(())
}

fn cmd_verify(config: PathBuf, trace: PathBuf, kind: VerifyKind) -> Result<()> {
    let cfg = RunConfig::from_path(&config)?;
    let problem = cfg.build_problem()?;
    let text = std::fs::read_to_string(&trace)
        .with_context(|| format!("reading {}", trace.display()))?;
    let (trace_kind, label) = match kind {
        VerifyKind::Sc => (OptimizerKind::AsgdScThreeVar, "sc"),
        VerifyKind::C => (OptimizerKind::AsgdCThreeVar, "c"),
        VerifyKind::GdConvex | VerifyKind::GdStronglyConvex => (OptimizerKind::PerturbedGd, "gd"),
    };
    let parsed = harness::read_trace_csv(&text, &problem, trace_kind)?;
    let report = match kind {
        VerifyKind::Sc => lyapunov::verify_sc_dissipation(&parsed, &problem)?,
        VerifyKind::C => lyapunov::verify_c_dissipation(&parsed, &problem)?,
        VerifyKind::GdConvex => {
            lyapunov::verify_gd_dissipation(&parsed, &problem, GdLyapunovKind::Convex)?
        }
        VerifyKind::GdStronglyConvex => {
            lyapunov::verify_gd_dissipation(&parsed, &problem, GdLyapunovKind::StronglyConvex)?
        }
    };
    println!("{{");
    println!("  \"inequality\": \"{label}\",");
    println!("  \"steps\": {},", report.margin.len());
    println!("  \"worst_margin\": {},", report.worst_margin);
    println!("  \"violated_steps\": {:?}", report.violated_steps);
    println!("}}");
    if !report.passed() {
        bail!("{} dissipation violated at {} steps", label, report.violated_steps.len());
    }
    Ok(())
}

fn cmd_bounds(args: ConfigArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let bound = harness::bound_for(&cfg)?;
    println!("bound: {} ({})", bound.label, bound.source);
    let ks: Vec<u64> = harness::recorded_steps(cfg.run.steps)
        .into_iter()
        .map(|k| k as u64)
        .collect();
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("bounds.csv");
    std::fs::write(&path, harness::write_bound_csv(&bound, &ks))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fit(aggregate: PathBuf, column: &str, kmin: u64, kmax: u64) -> Result<()> {
    let text = std::fs::read_to_string(&aggregate)
        .with_context(|| format!("reading {}", aggregate.display()))?;
    let agg = harness::read_aggregate_csv(&text, column)?;
    let (slope, stderr) = harness::fit_rate(&agg.ks, &agg.mean, kmin, kmax)?;
    println!("slope {slope} +- {stderr} (column {column}, k in [{kmin}, {kmax}])");
    Ok(())
}

fn cmd_ode(
    config: PathBuf,
    out: PathBuf,
    system: OdeSystem,
    t_end: f64,
    dt: f64,
    t0: Option<f64>,
) -> Result<()> {
    let cfg = RunConfig::from_path(&config)?;
    let problem = cfg.build_problem()?;
    let x0 = cfg.initial_point(&problem)?;
    let t0 = t0.unwrap_or(if system.is_convex_clocked() { 2.0 * dt } else { 0.0 });
    let (v0, label): (Vector, &str) = if system.is_second_order() {
        // derive the initial velocity from v0 = x0
        let g = problem.gradient(&x0) * (1.0 / problem.lipschitz().sqrt());
        (-g, "x'")
    } else {
        (x0.clone(), "v")
    };
    let traj = ode::integrate(system, &problem, &x0, &v0, t0, t_end, dt)?;
    std::fs::create_dir_all(&out)?;
    let path = out.join("trajectory.csv");
    std::fs::write(&path, harness::write_ode_csv(&traj, &problem))?;
    println!(
        "integrated {system:?} over [{t0}, {t_end}] at dt = {dt} ({} samples, companion column: {label})",
        traj.len()
    );
    println!("wrote {}", path.display());
    match system {
        OdeSystem::FirstOrderSc => {
            let ratio = ode::verify_continuous_sc_decay(&traj, &problem);
            println!("exp(-sqrt(mu) t) decay ratio: {ratio}");
            if ratio > 1.0 + 1e-4 {
                bail!("continuous decay check failed (ratio {ratio})");
            }
        }
        OdeSystem::FirstOrderC => {
            let ratio = ode::verify_continuous_c_rate(&traj, &problem);
            println!("2|v0 - x*|^2 / t^2 rate ratio: {ratio}");
            if ratio > 1.0 + 1e-4 {
                bail!("continuous rate check failed (ratio {ratio})");
            }
        }
        _ => {}
    }
    Ok(())
}

fn cmd_abstract_check(
    config: PathBuf,
    kind: GdLyapunovKind,
    samples: usize,
    radius: Option<f64>,
    seed: u64,
) -> Result<()> {
    let cfg = RunConfig::from_path(&config)?;
    let problem = cfg.build_problem()?;
    let x0 = cfg.initial_point(&problem)?;
    let radius = radius.unwrap_or(10.0 * (&x0 - problem.minimizer()).norm());
    let field = gd_field(&problem);
    let lyap = gd_rate_lyapunov(&problem, kind);
    let (t_lo, t_hi) = match kind {
        GdLyapunovKind::Convex => (0.1, 5.0),
        GdLyapunovKind::StronglyConvex => (0.0, 0.0),
    };
    let states = sample_states(&problem, radius, t_lo, t_hi, samples, seed);
    let slack = check_rate_lyapunov(&field, &lyap, &problem, &states);
    println!("rate-generating condition worst slack over {samples} samples: {slack}");
    let zero = Vector::zeros(problem.dim());
    let mut worst_margin = f64::INFINITY;
    for (t, z) in &states {
        let h = match kind {
            GdLyapunovKind::StronglyConvex => 2.0 / (problem.lipschitz() + problem.mu()),
            GdLyapunovKind::Convex => {
                let l = problem.lipschitz();
                (-(l * t + 1.0) + ((l * t + 1.0).powi(2) + 8.0 * l * t).sqrt()) / (2.0 * l)
            }
        };
        if h <= 0.0 {
            continue;
        }
        let sb = abstract_step_bound(&field, &lyap, &problem, *t, z, h, &zero)?;
        worst_margin = worst_margin.min(sb.margin);
    }
    println!("perturbed step bound worst margin at the CFL cap: {worst_margin}");
    if slack < -1e-9 || worst_margin < -1e-9 {
        bail!("abstract certification failed");
    }
    println!("certified: r_E = {}, kind {kind:?}", lyap.r_e);
    Ok(())
}
