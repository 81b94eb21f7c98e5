//! `gcsl` subcommands. Exit codes: 0 success, 1 check failure, 2 usage,
//! configuration or IO error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use gcsl_core::eval::evaluate;
use gcsl_core::oracle::{
    expert_demonstrations, run_bound_suite, run_performance_suite, SuiteOptions,
};
use gcsl_core::trainer::{
    evaluation_goals, evaluation_streams, interquartile_range, run_sweep_point, sweep_grid,
    Ablation,
};

use crate::checkpoint;
use crate::config::{EnvName, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{self, SweepRecord};
use crate::runner::run_training;
use crate::trajlog;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "gcsl",
    version,
    about = "Goal-conditioned supervised learning: training, evaluation and exact checks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy and write metrics, a checkpoint and run.json.
    Train(TrainArgs),
    /// Train with an ablation (same as `train --ablation`).
    Ablate(AblateArgs),
    /// Evaluate a checkpoint on fixed goals.
    Eval(EvalArgs),
    /// Run the 3x3 grid of hidden sizes and update ratios.
    Sweep(SweepArgs),
    /// Run the exact oracle checks on random finite instances.
    Verify(VerifyArgs),
    /// Demonstration utilities.
    #[command(subcommand)]
    Demos(DemosCommand),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// four-rooms, grid-rooms or chain.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set policy.hidden=[64,64]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct OutArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output location.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Total environment steps (multiple of the horizon).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    ablation: Option<String>,
    /// Trajectory log to preload into the buffer.
    #[arg(long)]
    demos: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long)]
    steps: Option<usize>,
    /// none, time-varying, limited-relabel, on-policy or fixed-collection.
    #[arg(long)]
    ablation: String,
    #[arg(long)]
    demos: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of goals; defaults to trainer.eval_episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Sample actions instead of acting greedily.
    #[arg(long)]
    stochastic: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long)]
    steps: Option<usize>,
    /// Worker threads, one run per worker.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = gcsl_core::oracle::DEFAULT_INSTANCES)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
    /// Test hook: corrupt the policy table of this instance.
    #[arg(long, hide = true)]
    corrupt_instance: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum DemosCommand {
    /// Write expert trajectories from the DP-optimal policy.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of trajectories.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Output trajectory log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => cmd_train("train", a.config, a.out, a.steps, a.ablation, a.demos),
        Command::Ablate(a) => cmd_train(
            "ablate",
            a.config,
            a.out,
            a.steps,
            Some(a.ablation),
            a.demos,
        ),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Demos(DemosCommand::Generate(a)) => cmd_demos_generate(a),
    }
}

fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        config.apply_file(path)?;
    }
    for s in &args.sets {
        config.apply_override(s)?;
    }
    if let Some(env) = &args.env {
        config.env = EnvName::parse(env).ok_or_else(|| {
            CliError::Config(format!(
                "unknown environment `{env}` (four-rooms, grid-rooms, chain)"
            ))
        })?;
    }
    if let Some(seed) = args.seed {
        config.trainer.seed = seed;
    }
    Ok(config)
}

fn default_out(kind: &str, config: &RunConfig) -> PathBuf {
    PathBuf::from("runs").join(format!(
        "{kind}-{}-seed{}",
        config.env.name(),
        config.seed()
    ))
}

fn cmd_train(
    command: &str,
    config_args: ConfigArgs,
    out: OutArgs,
    steps: Option<usize>,
    ablation: Option<String>,
    demos: Option<PathBuf>,
) -> Result<i32> {
    let mut config = resolve_config(&config_args)?;
    if let Some(steps) = steps {
        config.trainer.total_env_steps = steps;
    }
    if let Some(a) = ablation {
        config.trainer.ablation = Ablation::parse(&a).ok_or_else(|| {
            CliError::Config(format!(
                "unknown ablation `{a}` (none, time-varying, limited-relabel, on-policy, fixed-collection)"
            ))
        })?;
        if config.trainer.ablation == Ablation::TimeVarying {
            config.time_varying = true;
        }
    }
    if let Some(d) = demos {
        config.demo_path = Some(d);
    }
    config.validate()?;
    let dir = out
        .out
        .clone()
        .unwrap_or_else(|| default_out(command, &config));
    output::prepare_out_dir(&dir, out.force)?;

    let built = config.build_env()?;
    let env = built.as_env();
    let demos = match &config.demo_path {
        Some(p) => trajlog::load_demos(p, env)?,
        None => Vec::new(),
    };
    if !demos.is_empty() {
        eprintln!("loaded {} demonstration trajectories", demos.len());
    }
    let mut metrics = output::MetricsWriter::create(&dir.join(output::METRICS_FILE))?;
    let outcome = run_training(&config, env, demos, |row| {
        metrics.write(row)?;
        eprintln!(
            "steps {:>8}  median_dist {:.4}  success {:.3}  loss {:.4}",
            row.env_steps, row.median_final_distance, row.success_ratio, row.mean_training_loss
        );
        Ok(true)
    })?;
    output::write_episodes(&dir.join(output::EPISODES_FILE), &outcome.final_eval)?;
    checkpoint::save(
        &dir.join(output::CHECKPOINT_FILE),
        &outcome.learner.checkpoint(),
    )?;
    output::write_manifest(&dir, command, &config)?;
    let last = outcome.rows.last().copied();
    println!(
        "{}: {} env steps, success_ratio {:.3}, median_final_distance {:.4}; wrote {}",
        command,
        last.map_or(0, |r| r.env_steps),
        outcome.final_eval.success_ratio,
        outcome.final_eval.median_final_distance,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let config = resolve_config(&args.config)?;
    let built = config.build_env()?;
    let env = built.as_env();
    let ckpt = checkpoint::load(&args.checkpoint, env)?;
    let n = args.episodes.unwrap_or(config.trainer.eval_episodes);
    if n == 0 {
        return Err(CliError::Config("--episodes must be positive".into()));
    }
    let dir = args.out.out.clone().unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("eval-seed{}", config.seed()))
    });
    output::prepare_out_dir(&dir, args.out.force)?;
    let goals = evaluation_goals(env, n, config.seed());
    let report = evaluate(
        ckpt.policy(),
        env,
        &goals,
        env.spec().goal_threshold,
        &evaluation_streams(config.seed()),
        !args.stochastic,
    )?;
    output::write_episodes(&dir.join(output::EPISODES_FILE), &report)?;
    output::write_manifest(&dir, "eval", &config)?;
    println!(
        "episodes {}  median_final_distance {:.4}  mean_final_distance {:.4}  success_ratio {:.3}",
        report.n_episodes,
        report.median_final_distance,
        report.mean_final_distance,
        report.success_ratio
    );
    Ok(EXIT_OK)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let mut config = resolve_config(&args.config)?;
    if let Some(steps) = args.steps {
        config.trainer.total_env_steps = steps;
    }
    config.validate()?;
    if config.uses_tabular() {
        return Err(CliError::Config(
            "the sweep varies MLP hidden sizes; set policy.kind = mlp".into(),
        ));
    }
    let dir = args
        .out
        .out
        .clone()
        .unwrap_or_else(|| default_out("sweep", &config));
    output::prepare_out_dir(&dir, args.out.force)?;
    let built = config.build_env()?;
    let env = built.as_env();
    let base = config.train_config();
    let grid = sweep_grid();
    let results: Mutex<Vec<Option<SweepRecord>>> = Mutex::new(vec![None; grid.len()]);
    let next = AtomicUsize::new(0);
    let workers = args.threads.clamp(1, grid.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&point) = grid.get(i) else { break };
                let record = match run_sweep_point(
                    env,
                    &base,
                    point,
                    config.learning_rate,
                    config.time_varying,
                ) {
                    Ok(row) => {
                        eprintln!(
                            "hidden {:>4} grad_steps {}  success {:.3}  median_dist {:.4}",
                            point.hidden_size,
                            point.grad_steps,
                            row.success_ratio,
                            row.median_final_distance
                        );
                        SweepRecord {
                            hidden_size: point.hidden_size,
                            grad_steps: point.grad_steps,
                            final_success_ratio: row.success_ratio,
                            final_median_distance: row.median_final_distance,
                        }
                    }
                    Err(e) => {
                        eprintln!(
                            "hidden {} grad_steps {} failed: {e}",
                            point.hidden_size, point.grad_steps
                        );
                        SweepRecord {
                            hidden_size: point.hidden_size,
                            grad_steps: point.grad_steps,
                            final_success_ratio: f64::NAN,
                            final_median_distance: f64::NAN,
                        }
                    }
                };
                results.lock().unwrap()[i] = Some(record);
            });
        }
    });
    let rows: Vec<SweepRecord> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .flatten()
        .collect();
    output::write_sweep(&dir.join(output::SWEEP_FILE), &rows)?;
    output::write_manifest(&dir, "sweep", &config)?;
    let successes: Vec<f64> = rows
        .iter()
        .map(|r| r.final_success_ratio)
        .filter(|x| x.is_finite())
        .collect();
    println!(
        "sweep: {} configurations, success IQR {:.4}; wrote {}",
        rows.len(),
        interquartile_range(&successes),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let dir = args
        .out
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("verify-seed{}", args.seed)));
    output::prepare_out_dir(&dir, args.out.force)?;
    let options = SuiteOptions {
        instances: args.instances,
        seed: args.seed,
        corrupt: args.corrupt_instance,
    };
    let reports = run_bound_suite(&options)?;
    println!(
        "{:>20}  {:>9}  {:>10}  {:>10}  {:>7}  {:>8}  {:>10}  {:>10}  result",
        "seed", "J", "J_surr", "J_gcsl", "alpha", "p_wrong", "gap", "gap_bound"
    );
    for (seed, r) in &reports {
        println!(
            "{:>20}  {:>9.5}  {:>10.5}  {:>10.5}  {:>7.4}  {:>8.4}  {:>10.6}  {:>10.6}  {}",
            seed,
            r.j,
            r.j_surr,
            r.j_gcsl,
            r.alpha,
            r.gap.p_wrong,
            r.gap.gap,
            r.gap.gap_bound,
            mark(r.passed())
        );
    }
    output::write_bound_report(&dir.join(output::BOUND_REPORT_FILE), &reports)?;

    let count = |f: &dyn Fn(&gcsl_core::oracle::BoundReport) -> bool| {
        reports.iter().filter(|(_, r)| f(r)).count()
    };
    let n = reports.len();
    let summary = [
        ("tables normalized", count(&|r| r.normalized)),
        (
            "J >= J_surr - 4T(T-1)alpha^2",
            count(&|r| r.lower_bound_holds),
        ),
        (
            "J_surr >= E[log pi(tau | s_T)]",
            count(&|r| r.relabel_holds),
        ),
        (
            "E[log pi(tau | s_T)] = J_gcsl + C2",
            count(&|r| r.decomposition_holds),
        ),
        ("|gap| <= gap bound", count(&|r| r.gap.holds)),
    ];
    println!();
    for (name, ok) in summary {
        println!("{name:<40} {ok}/{n}  {}", mark(ok == n));
    }

    let mut all_ok = reports.iter().all(|(_, r)| r.passed());
    for (name, report) in run_performance_suite()? {
        println!(
            "{:<40} J* {:.6}  J(relabel-optimal) {:.6}  {}",
            format!("{name}: optimal policies agree"),
            report.j_star,
            report.j_relabel_optimal,
            mark(report.optimal_matches)
        );
        for row in &report.rows {
            println!(
                "{:<40} shortfall {:.6} <= {:.4}  {}",
                format!("{name}: epsilon {}", row.epsilon),
                row.shortfall,
                row.bound,
                mark(row.holds)
            );
        }
        all_ok &= report.passed();
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|(_, r)| !r.passed())
        .map(|(s, _)| s.to_string())
        .collect();
    if !failed.is_empty() {
        println!("failing instance seeds: {}", failed.join(", "));
    }
    println!(
        "verify: {n} instances, {}",
        if all_ok {
            "all checks pass"
        } else {
            "CHECKS FAILED"
        }
    );
    Ok(if all_ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_demos_generate(args: GenerateArgs) -> Result<i32> {
    let mut config = resolve_config(&args.config)?;
    if args.config.env.is_none() && args.config.config.is_none() {
        config.env = EnvName::GridRooms;
    }
    let built = config.build_env()?;
    let mdp = built
        .finite()
        .filter(|m| m.is_deterministic())
        .ok_or_else(|| {
            CliError::Config(format!(
                "demos need a finite deterministic environment; {} is not",
                config.env.name()
            ))
        })?;
    output::prepare_out_file(&args.out, args.force)?;
    let demos = expert_demonstrations(mdp, args.n, config.seed())?;
    let reached = demos
        .iter()
        .filter(|t| t.final_state() == &t.commanded_goal[..])
        .count();
    trajlog::write_log(&args.out, &demos)?;
    println!(
        "wrote {} trajectories ({} reach their goal) to {}",
        demos.len(),
        reached,
        args.out.display()
    );
    Ok(EXIT_OK)
}
