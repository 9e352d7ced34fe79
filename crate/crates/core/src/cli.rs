//! Command-line entry point. [`run`] returns the process exit code:
//! 0 on success, 2 for invalid input (configuration, files, scenario names,
//! checkpoint/environment mismatch), 3 when training diverges.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{RunConfig, FROZEN_CONFIG_NAME, OUTPUT_DIR_ENV, POINT_REACH};
use crate::env::{scenario_by_name, Scenario, CANONICAL_SCENARIOS};
use crate::eval::{self, DEFAULT_EVAL_SCENARIOS, DEFAULT_EVAL_SEED};
use crate::neural::Checkpoint;
use crate::task::Task;
use crate::toy::PointReachConfig;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "crane-rl", version, about = "Mobile-crane lift-path planning with PPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy from a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a configuration value, e.g. `--set ppo.total_steps=10000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Threads stepping environments during rollout collection.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate one or more checkpoints with the deterministic policy.
    Eval {
        /// Checkpoint file; repeat to evaluate several models on the same seeds.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Scenario name or file; repeat for several cells (default: the four canonical scenarios).
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_EVAL_SCENARIOS)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_EVAL_SEED)]
        seed: u64,
        /// Run configuration supplying crane, reward and env settings
        /// (default: built-in settings with the checkpoint's reward parameters).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for report CSVs (default: `$CRANE_RL_OUTPUT_DIR` or `eval_out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one trajectory CSV per episode.
        #[arg(long)]
        trajectories: bool,
    },
    /// Run one deterministic episode and write its trajectory and path plot.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = DEFAULT_EVAL_SEED)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot a learning curve and print its summary.
    Plot {
        #[arg(long)]
        curve: PathBuf,
        /// SVG output path (default: the curve path with an `.svg` extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default run configuration.
    ConfigDefault,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            match e {
                Error::Diverged(_) => EXIT_DIVERGED,
                _ => EXIT_INVALID,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            config,
            mut overrides,
            workers,
        } => {
            if let Some(w) = workers {
                overrides.push(format!("ppo.workers={w}"));
            }
            cmd_train(&config, &overrides)
        }
        Command::Eval {
            checkpoints,
            scenarios,
            n,
            seed,
            config,
            out,
            trajectories,
        } => cmd_eval(&checkpoints, &scenarios, n, seed, config.as_deref(), out, trajectories),
        Command::Replay {
            checkpoint,
            scenario,
            seed,
            config,
            out,
        } => cmd_replay(&checkpoint, &scenario, seed, config.as_deref(), out),
        Command::Plot { curve, out } => {
            let (summary, path) = eval::export_curve(&curve, out.as_deref())?;
            println!("{summary}");
            println!("plot written to {}", path.display());
            Ok(())
        }
        Command::ConfigDefault => {
            print!("{}", RunConfig::default().to_toml_string());
            Ok(())
        }
    }
}

fn cmd_train(config: &Path, overrides: &[String]) -> Result<()> {
    let cfg = RunConfig::load(config, overrides)?;
    let task = cfg.task()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::file(&out, e))?;
    let frozen = out.join(FROZEN_CONFIG_NAME);
    fs::write(&frozen, cfg.to_toml_string()).map_err(|e| Error::file(&frozen, e))?;
    let ppo = cfg.ppo_config();
    let n_updates = ppo.n_updates();
    println!(
        "training on {} for {} steps ({} updates), output in {}",
        task.name(),
        ppo.total_steps,
        n_updates,
        out.display()
    );
    let result = crate::ppo::train_with(&ppo, &task, Some(&out), |u, row| {
        if u.update % 10 == 9 || u.update + 1 == n_updates {
            println!(
                "update {:>5}/{n_updates} steps {:>8} reward {:>9.3} success {:>5.2}",
                u.update + 1,
                row.env_steps,
                row.mean_cum_reward,
                row.success_rate
            );
        }
    });
    match result {
        Ok(_) => {
            println!("final checkpoint: {}", out.join("final.ckpt").display());
            Ok(())
        }
        Err(Error::Diverged(m)) => Err(Error::Diverged(format!(
            "{m}; last good parameters kept in {}",
            out.join("last_good.ckpt").display()
        ))),
        Err(e) => Err(e),
    }
}

fn output_dir(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("eval_out"))
}

/// Task for `name` with crane, reward and env settings from `config` or, by
/// default, built-in settings with the checkpoint's reward parameters.
fn resolve_task(name: &str, ck: &Checkpoint, config: Option<&Path>) -> Result<Task> {
    let base = match config {
        Some(p) => RunConfig::load(p, &[])?,
        None => RunConfig {
            reward: ck.reward.clone(),
            ..RunConfig::default()
        },
    };
    if name == POINT_REACH {
        return Ok(Task::PointReach(PointReachConfig {
            action_bound: base.env.action_bound,
            reward: base.reward,
            ..PointReachConfig::default()
        }));
    }
    let scenario = match scenario_by_name(name) {
        Some(sc) => sc,
        None if Path::new(name).is_file() => Scenario::load(Path::new(name))?,
        None => {
            return Err(Error::InvalidScenario(format!(
                "unknown scenario {name}; available: {}, {POINT_REACH}, or a scenario file path",
                CANONICAL_SCENARIOS.join(", ")
            )))
        }
    };
    scenario.validate(&base.crane)?;
    Ok(Task::Crane {
        crane: base.crane,
        reward: base.reward,
        env: base.env,
        scenario,
    })
}

fn model_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    match (path.parent().and_then(Path::file_name), stem) {
        (Some(dir), Some(stem)) if stem == "final" => dir.to_string_lossy().into_owned(),
        (_, Some(stem)) => stem,
        _ => path.display().to_string(),
    }
}

fn cmd_eval(
    checkpoints: &[PathBuf],
    scenarios: &[String],
    n: usize,
    seed: u64,
    config: Option<&Path>,
    out: Option<PathBuf>,
    trajectories: bool,
) -> Result<()> {
    let names: Vec<String> = if scenarios.is_empty() {
        CANONICAL_SCENARIOS.iter().map(|s| s.to_string()).collect()
    } else {
        scenarios.to_vec()
    };
    let out = output_dir(out);
    fs::create_dir_all(&out).map_err(|e| Error::file(&out, e))?;
    let mut reports = Vec::new();
    for path in checkpoints {
        let ck = Checkpoint::load(path)?;
        let model = model_name(path);
        let tasks = names
            .iter()
            .map(|s| resolve_task(s, &ck, config))
            .collect::<Result<Vec<_>>>()?;
        let traj_dir = trajectories.then(|| out.join("trajectories").join(&model));
        let report = eval::evaluate_cells(&ck, &model, &tasks, n, seed, traj_dir.as_deref())?;
        println!("{report}");
        let csv = out.join(format!("eval_{model}.csv"));
        fs::write(&csv, report.to_csv()).map_err(|e| Error::file(&csv, e))?;
        reports.push(report);
    }
    let table = out.join("success_table.csv");
    fs::write(&table, eval::success_table_csv(&reports)?).map_err(|e| Error::file(&table, e))?;
    for pair in reports.windows(2) {
        println!("{}", eval::compare(&pair[0], &pair[1])?);
    }
    println!("reports written to {}", out.display());
    Ok(())
}

fn cmd_replay(
    checkpoint: &Path,
    scenario: &str,
    seed: u64,
    config: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let task = resolve_task(scenario, &ck, config)?;
    let out = output_dir(out);
    fs::create_dir_all(&out).map_err(|e| Error::file(&out, e))?;
    let mut env = task.build()?;
    let traj = eval::run_episode(&ck, env.as_mut(), task.name(), seed)?;
    let csv = out.join(traj.file_name());
    traj.write_csv(&csv)?;
    let svg = csv.with_extension("svg");
    fs::write(&svg, crate::plot::path_svg(&traj, env.world()))
        .map_err(|e| Error::file(&svg, e))?;
    println!(
        "{} seed {}: {} after {} steps, cumulative reward {:.3}",
        traj.scenario,
        seed,
        traj.outcome.as_str(),
        traj.rows.len(),
        traj.rows.last().map_or(0.0, |r| r.cum_reward)
    );
    println!("trajectory: {}", csv.display());
    println!("path plot: {}", svg.display());
    Ok(())
}
