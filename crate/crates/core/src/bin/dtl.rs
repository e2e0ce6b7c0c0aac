use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dtl_core::algorithms::{max_stepsize, Algo, AlgoConfig};
use dtl_core::harness::{
    self, export_env, features_path_for, fig_names, preset_spec, resolve_env, run_checks,
    run_experiment, run_sweep, runs_csv_string, sweep_preset, write_check_csv, write_output,
    write_sweep_csv, ExperimentSpec, SweepSpec,
};
use dtl_core::linear_fa::gram_and_lambda_min;
use dtl_core::mdp::mixing_time;
use dtl_core::oracles::{error_bound, BoundInputs};
use dtl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dtl", version, about = "Q-learning with linear function approximation: experiments and oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded experiments and write the per-step CSV.
    Run(RunArgs),
    /// Sample-complexity sweep over a (T, K, alpha) ladder.
    Sweep(SweepArgs),
    /// Run the property suite; exits non-zero on any failure.
    Check {
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the finite-sample bound terms.
    Bound(BoundArgs),
    /// Export or import environments as JSON.
    #[command(subcommand)]
    Env(EnvCommand),
    /// Run a named figure preset (fig1 .. fig6).
    Fig {
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "base-seed", env = "DTL_SEED")]
        base_seed: Option<u64>,
        /// List preset names and exit.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "T")]
    outer: Option<usize>,
    #[arg(long = "K")]
    inner: Option<usize>,
    #[arg(long = "r")]
    radius: Option<f64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long = "base-seed", env = "DTL_SEED")]
    base_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output CSV; stdout when neither this nor the spec file names one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    normalize_features: bool,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Comma-separated initial parameter.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta0: Option<Vec<f64>>,
    #[arg(long)]
    guard: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep spec; the shipped `sweep` preset when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long = "base-seed", env = "DTL_SEED")]
    base_seed: Option<u64>,
}

#[derive(Args)]
struct BoundArgs {
    /// Derive lambda_min and t_alpha from this environment.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "T")]
    outer: usize,
    #[arg(long = "K")]
    inner: usize,
    /// Stepsize; the largest admissible one when absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    t_alpha: Option<usize>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    e_approx: f64,
    #[arg(long)]
    init_gap: Option<f64>,
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Write the MDP and feature JSON files of a built-in environment.
    Export {
        name: String,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        features_out: Option<PathBuf>,
    },
    /// Validate an MDP file (and optional features) and print a summary.
    Import {
        file: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Check { out } => cmd_check(out),
        Command::Bound(args) => cmd_bound(args),
        Command::Env(env) => cmd_env(env),
        Command::Fig {
            name,
            out,
            jobs,
            base_seed,
            list,
        } => {
            if list || name.is_none() {
                for n in fig_names() {
                    println!("{n}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let mut spec = preset_spec(name.as_deref().unwrap_or_default())?;
            if let Some(seed) = base_seed {
                spec.base_seed = seed;
            }
            execute(&spec, out.or(spec.output.clone()), jobs)
        }
    }
}

fn execute(spec: &ExperimentSpec, out: Option<PathBuf>, jobs: usize) -> Result<ExitCode> {
    let logs = run_experiment(spec, jobs)?;
    let csv = runs_csv_string(&logs)?;
    emit(out, &csv)?;
    let diverged = logs.iter().filter(|l| l.diverged).count();
    eprintln!("{} runs, {} diverged", logs.len(), diverged);
    Ok(ExitCode::SUCCESS)
}

fn emit(out: Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            write_output(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let mut spec = match &a.spec {
        Some(path) => ExperimentSpec::load(path)?,
        None => {
            let missing = |f: &str| Error::InvalidArgument(format!("--{f} is required without --spec"));
            ExperimentSpec {
                env: a.env.clone().ok_or_else(|| missing("env"))?,
                gamma: None,
                features: None,
                normalize_features: false,
                algo: a.algo.ok_or_else(|| missing("algo"))?,
                cfg: AlgoConfig::new(
                    a.outer.ok_or_else(|| missing("T"))?,
                    a.inner.ok_or_else(|| missing("K"))?,
                    a.alpha.ok_or_else(|| missing("alpha"))?,
                ),
                n_seeds: 1,
                base_seed: 0,
                output: None,
            }
        }
    };
    if let Some(v) = a.env {
        spec.env = v;
    }
    if let Some(v) = a.algo {
        spec.algo = v;
    }
    if a.gamma.is_some() {
        spec.gamma = a.gamma;
    }
    if let Some(v) = a.alpha {
        spec.cfg.alpha = v;
    }
    if let Some(v) = a.outer {
        spec.cfg.outer = v;
    }
    if let Some(v) = a.inner {
        spec.cfg.inner = v;
    }
    if a.radius.is_some() {
        spec.cfg.radius = a.radius;
    }
    if let Some(v) = a.seeds {
        spec.n_seeds = v;
    }
    if let Some(v) = a.base_seed {
        spec.base_seed = v;
    }
    if a.features.is_some() {
        spec.features = a.features;
    }
    spec.normalize_features |= a.normalize_features;
    if a.theta0.is_some() {
        spec.cfg.theta0 = a.theta0;
    }
    if let Some(v) = a.guard {
        spec.cfg.divergence_guard = v;
    }
    if let Some(v) = a.log_every {
        spec.cfg.log_every = v;
    }
    let out = a.out.or(spec.output.clone());
    execute(&spec, out, a.jobs)
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode> {
    let mut spec: SweepSpec = match &a.spec {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => sweep_preset()?,
    };
    if let Some(seed) = a.base_seed {
        spec.base_seed = seed;
    }
    let summary = run_sweep(&spec, a.jobs)?;
    let mut buf = Vec::new();
    write_sweep_csv(&summary, &mut buf)?;
    emit(a.out.or(spec.output.clone()), &String::from_utf8_lossy(&buf))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(out: Option<PathBuf>) -> Result<ExitCode> {
    let results = run_checks();
    let width = results.iter().map(|r| r.module.len() + r.property.len() + 2).max().unwrap_or(0);
    for r in &results {
        let label = format!("{}::{}", r.module, r.property);
        println!(
            "{} {label:<width$} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} properties, {failed} failed", results.len());
    if let Some(path) = out {
        let mut buf = Vec::new();
        write_check_csv(&results, &mut buf)?;
        write_output(&path, &String::from_utf8_lossy(&buf))?;
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_bound(a: BoundArgs) -> Result<ExitCode> {
    let env = match &a.env {
        Some(name) => Some(resolve_env(name, a.gamma, None, false)?),
        None => None,
    };
    let gamma = match (&env, a.gamma) {
        (Some(e), _) => e.mdp.gamma(),
        (None, Some(g)) => g,
        (None, None) => return Err(Error::InvalidArgument("--gamma or --env is required".into())),
    };
    let lambda_min = match (a.lambda_min, &env) {
        (Some(l), _) => l,
        (None, Some(e)) => gram_and_lambda_min(&e.features, &e.weights)?.1,
        (None, None) => return Err(Error::InvalidArgument("--lambda-min or --env is required".into())),
    };
    let alpha = a.alpha.unwrap_or_else(|| max_stepsize(lambda_min, gamma));
    let t_alpha = match (a.t_alpha, &env) {
        (Some(t), _) => t,
        (None, Some(e)) => mixing_time(&e.behavior_chain(), &e.mu, alpha.min(0.5))?,
        (None, None) => return Err(Error::InvalidArgument("--t-alpha or --env is required".into())),
    };
    let init_gap = match (a.init_gap, &env) {
        (Some(g), _) => g,
        (None, Some(e)) => e.q_star.sup_norm(),
        (None, None) => return Err(Error::InvalidArgument("--init-gap or --env is required".into())),
    };
    let inputs = BoundInputs {
        gamma,
        outer: a.outer,
        inner: a.inner,
        alpha,
        t_alpha,
        lambda_min,
        e_approx: a.e_approx,
        init_gap,
    };
    let terms = error_bound(&inputs)?;
    println!("gamma       {gamma}");
    println!("alpha       {}", num(alpha));
    println!("lambda_min  {lambda_min}");
    println!("t_alpha     {t_alpha}");
    println!("E1          {}", num(terms.e1));
    println!("E2          {}", num(terms.e2));
    println!("E3          {}", num(terms.e3));
    println!("E4          {}", num(terms.e4));
    println!("total       {}", num(terms.total));
    if terms.stepsize_warning {
        println!(
            "warning: alpha exceeds lambda_min (1-gamma)^2 / 130 = {}",
            max_stepsize(lambda_min, gamma)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_env(cmd: EnvCommand) -> Result<ExitCode> {
    match cmd {
        EnvCommand::Export {
            name,
            gamma,
            out,
            features_out,
        } => {
            let env = resolve_env(&name, gamma, None, false)?;
            let fpath = features_out.unwrap_or_else(|| features_path_for(&out));
            export_env(&env, &out, &fpath)?;
            eprintln!("wrote {} and {}", out.display(), fpath.display());
        }
        EnvCommand::Import {
            file,
            features,
            gamma,
        } => {
            let path = file.to_str().ok_or_else(|| Error::InvalidArgument("non-UTF-8 path".into()))?;
            let env = harness::resolve_env(path, gamma, features.as_deref(), false)?;
            let (_, lambda) = gram_and_lambda_min(&env.features, &env.weights)?;
            println!("name        {}", env.name);
            println!("states      {}", env.mdp.n_states());
            println!("actions     {}", env.mdp.n_actions());
            println!("gamma       {}", env.mdp.gamma());
            println!("features    {}", env.features.dim());
            println!("lambda_min  {lambda}");
            let q: Vec<String> = env.q_star.as_slice().iter().map(|v| v.to_string()).collect();
            println!("q_star      {}", q.join(" "));
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Plain decimals for moderate magnitudes, scientific notation otherwise.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e9).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}
