//! Deterministic batch evaluation, model comparison and learning-curve summaries.
//!
//! Evaluation runs the policy mean (no sampling). Episode `i` of an
//! evaluation with base seed `s` resets the environment with seed `s + i`, so
//! two models evaluated with the same base seed face the same targets.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Observation, ObstacleMode, TaskKind, TerminationReason, ACT_DIM};
use crate::neural::Checkpoint;
use crate::ppo::CurveRow;
use crate::task::Task;
use crate::{Error, Result, Vec3};

pub const DEFAULT_EVAL_SCENARIOS: usize = 100;
pub const DEFAULT_EVAL_SEED: u64 = 1_000_000;

/// Fraction of the curve's value range a drawdown must exceed to count as a dip.
pub const DIP_FRACTION: f64 = 0.1;

pub const TRAJECTORY_HEADER: &str = "step,tip_x,tip_y,tip_z,payload_x,payload_y,payload_z,\
rope_angle,action_x,action_y,action_z,reward,cum_reward";

/// State after one step. `action` is the clamped world-frame tip increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u32,
    pub tip_x: f64,
    pub tip_y: f64,
    pub tip_z: f64,
    pub payload_x: f64,
    pub payload_y: f64,
    pub payload_z: f64,
    pub rope_angle: f64,
    pub action_x: f64,
    pub action_y: f64,
    pub action_z: f64,
    pub reward: f64,
    pub cum_reward: f64,
}

impl TrajectoryRow {
    pub fn tip(&self) -> Vec3 {
        Vec3::new(self.tip_x, self.tip_y, self.tip_z)
    }

    pub fn payload(&self) -> Vec3 {
        Vec3::new(self.payload_x, self.payload_y, self.payload_z)
    }
}

/// One deterministic episode. Rows start at step 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scenario: String,
    pub seed: u64,
    pub start: Vec3,
    pub target: Vec3,
    pub outcome: TerminationReason,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn peak_rope_angle(&self) -> f64 {
        self.rows.iter().map(|r| r.rope_angle).fold(0.0, f64::max)
    }

    pub fn file_name(&self) -> String {
        format!("{}_seed{}.csv", self.scenario, self.seed)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::file(path, e))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(TRAJECTORY_HEADER.split(','))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the rows of a trajectory CSV, checking the header and step order.
pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::file(path, e))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != TRAJECTORY_HEADER {
        return Err(Error::file(path, "unexpected trajectory header"));
    }
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<TrajectoryRow>, _>>()?;
    if rows.windows(2).any(|w| w[1].step <= w[0].step) {
        return Err(Error::file(path, "step index not strictly increasing"));
    }
    Ok(rows)
}

/// World-frame tip increment chosen by the policy mean at `obs`.
pub fn greedy_action(ck: &Checkpoint, obs: &Observation) -> Result<Vec3> {
    let x = ck.io.encode(obs);
    let mean = ck.policy.mean(&x[..ck.io.input_dim()])?;
    Ok(ck.io.decode(obs, &mean))
}

fn check_compatible(ck: &Checkpoint, env: &dyn Environment) -> Result<()> {
    if ck.policy.act_dim() != ACT_DIM {
        return Err(Error::Dimension {
            context: "policy output",
            expected: ACT_DIM,
            got: ck.policy.act_dim(),
        });
    }
    if ck.io.obs_scale != env.observation_scale() || ck.io.action_scale != env.action_bound() {
        return Err(Error::Checkpoint(
            "normalization metadata does not match the environment configuration".into(),
        ));
    }
    Ok(())
}

/// Runs one deterministic episode from `env.reset(seed)`.
pub fn run_episode(
    ck: &Checkpoint,
    env: &mut dyn Environment,
    scenario: &str,
    seed: u64,
) -> Result<Trajectory> {
    check_compatible(ck, env)?;
    let mut obs = env.reset(seed)?;
    let (start, target) = (obs.material_pos, obs.target_pos);
    let bound = env.action_bound();
    let mut rows = Vec::new();
    let mut cum = 0.0;
    loop {
        let action = greedy_action(ck, &obs)?.map(|v| v.clamp(-bound, bound));
        let out = env.step(&action)?;
        let snap = env.snapshot().expect("environment was reset");
        cum += out.reward;
        rows.push(TrajectoryRow {
            step: rows.len() as u32 + 1,
            tip_x: snap.tip.x,
            tip_y: snap.tip.y,
            tip_z: snap.tip.z,
            payload_x: snap.payload.x,
            payload_y: snap.payload.y,
            payload_z: snap.payload.z,
            rope_angle: snap.rope_angle,
            action_x: action.x,
            action_y: action.y,
            action_z: action.z,
            reward: out.reward,
            cum_reward: cum,
        });
        obs = out.observation;
        if out.terminated {
            return Ok(Trajectory {
                scenario: scenario.to_string(),
                seed,
                start,
                target,
                outcome: out.termination_reason,
                rows,
            });
        }
    }
}

/// Outcome counts and means for one (task kind, obstacle mode) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub scenario: String,
    /// `None` for tasks other than the crane scenarios.
    pub task_kind: Option<TaskKind>,
    pub obstacle_mode: ObstacleMode,
    pub n_scenarios: usize,
    pub n_success: usize,
    pub n_collisions: usize,
    pub n_swing_exceeded: usize,
    pub n_timeout: usize,
    pub mean_episode_length: f64,
    pub mean_peak_rope_angle: f64,
}

impl CellReport {
    pub fn success_rate(&self) -> f64 {
        if self.n_scenarios == 0 {
            0.0
        } else {
            100.0 * self.n_success as f64 / self.n_scenarios as f64
        }
    }

    fn from_trajectories(task: &Task, trajectories: &[Trajectory]) -> Self {
        let count = |r: TerminationReason| trajectories.iter().filter(|t| t.outcome == r).count();
        let n = trajectories.len().max(1) as f64;
        let (task_kind, obstacle_mode) = match task {
            Task::Crane { scenario, .. } => (
                Some(scenario.task_kind),
                if scenario.world.obstacles().is_empty() {
                    ObstacleMode::Absent
                } else {
                    ObstacleMode::Present
                },
            ),
            Task::PointReach(_) => (None, ObstacleMode::Absent),
        };
        CellReport {
            scenario: task.name().to_string(),
            task_kind,
            obstacle_mode,
            n_scenarios: trajectories.len(),
            n_success: count(TerminationReason::Success),
            n_collisions: count(TerminationReason::Collision),
            n_swing_exceeded: count(TerminationReason::SwingExceeded),
            n_timeout: count(TerminationReason::StepLimit),
            mean_episode_length: trajectories.iter().map(|t| t.rows.len() as f64).sum::<f64>() / n,
            mean_peak_rope_angle: trajectories.iter().map(Trajectory::peak_rope_angle).sum::<f64>()
                / n,
        }
    }
}

/// Evaluation of one model over one or more cells with a shared base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub cells: Vec<CellReport>,
}

/// Evaluates `ck` on `task` for `n_scenarios` episodes with seeds
/// `seed, seed + 1, ...`. With `trajectory_dir` set, each episode is written
/// there as `<scenario>_seed<seed>.csv`.
pub fn evaluate(
    ck: &Checkpoint,
    task: &Task,
    n_scenarios: usize,
    seed: u64,
    trajectory_dir: Option<&Path>,
) -> Result<(CellReport, Vec<Trajectory>)> {
    let mut env = task.build()?;
    check_compatible(ck, env.as_ref())?;
    if let Some(dir) = trajectory_dir {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let mut trajectories = Vec::with_capacity(n_scenarios);
    for i in 0..n_scenarios as u64 {
        let t = run_episode(ck, env.as_mut(), task.name(), seed.wrapping_add(i))?;
        if let Some(dir) = trajectory_dir {
            t.write_csv(&dir.join(t.file_name()))?;
        }
        trajectories.push(t);
    }
    Ok((CellReport::from_trajectories(task, &trajectories), trajectories))
}

/// Evaluates `ck` on each task in turn with the same base seed.
pub fn evaluate_cells(
    ck: &Checkpoint,
    model: &str,
    tasks: &[Task],
    n_scenarios: usize,
    seed: u64,
    trajectory_dir: Option<&Path>,
) -> Result<EvalReport> {
    let cells = tasks
        .iter()
        .map(|t| evaluate(ck, t, n_scenarios, seed, trajectory_dir).map(|(c, _)| c))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        model: model.to_string(),
        seed,
        cells,
    })
}

pub const REPORT_HEADER: &str = "model,scenario,task_kind,obstacle_mode,n_scenarios,n_success,\
success_rate,mean_episode_length,mean_peak_rope_angle,n_collisions,n_swing_exceeded,n_timeout";

impl EvalReport {
    pub fn cell(&self, scenario: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.scenario == scenario)
    }

    /// One row per cell with every count.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for c in &self.cells {
            out += &format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.model,
                c.scenario,
                c.task_kind.map_or("-", TaskKind::as_str),
                c.obstacle_mode.as_str(),
                c.n_scenarios,
                c.n_success,
                c.success_rate(),
                c.mean_episode_length,
                c.mean_peak_rope_angle,
                c.n_collisions,
                c.n_swing_exceeded,
                c.n_timeout
            );
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {} (base seed {})", self.model, self.seed)?;
        writeln!(
            f,
            "{:<20} {:>5} {:>8} {:>8} {:>9} {:>6} {:>6} {:>8}",
            "scenario", "n", "success%", "mean_len", "peak_rope", "coll", "swing", "timeout"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<20} {:>5} {:>8.1} {:>8.1} {:>9.3} {:>6} {:>6} {:>8}",
                c.scenario,
                c.n_scenarios,
                c.success_rate(),
                c.mean_episode_length,
                c.mean_peak_rope_angle,
                c.n_collisions,
                c.n_swing_exceeded,
                c.n_timeout
            )?;
        }
        Ok(())
    }
}

/// Success rates with models as rows and cells as columns, in the order the
/// cells appear. All reports must cover the same cells.
pub fn success_table_csv(reports: &[EvalReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::ReportMismatch("no reports".into()));
    };
    let names: Vec<&str> = first.cells.iter().map(|c| c.scenario.as_str()).collect();
    let mut out = format!("model,{}\n", names.join(","));
    for r in reports {
        let these: Vec<&str> = r.cells.iter().map(|c| c.scenario.as_str()).collect();
        if these != names {
            return Err(Error::ReportMismatch(format!(
                "model {} covers {:?}, expected {:?}",
                r.model, these, names
            )));
        }
        let rates: Vec<String> = r.cells.iter().map(|c| c.success_rate().to_string()).collect();
        out += &format!("{},{}\n", r.model, rates.join(","));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellComparison {
    pub scenario: String,
    pub rate_a: f64,
    pub rate_b: f64,
    /// `rate_a - rate_b` in percentage points.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    pub cells: Vec<CellComparison>,
}

/// Paired per-cell comparison. Both reports must share base seed, cell list
/// and per-cell scenario counts.
pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    if a.seed != b.seed {
        return Err(Error::ReportMismatch(format!(
            "base seeds differ ({} vs {})",
            a.seed, b.seed
        )));
    }
    if a.cells.len() != b.cells.len() {
        return Err(Error::ReportMismatch(format!(
            "{} cells vs {} cells",
            a.cells.len(),
            b.cells.len()
        )));
    }
    let cells = a
        .cells
        .iter()
        .zip(&b.cells)
        .map(|(x, y)| {
            if x.scenario != y.scenario || x.n_scenarios != y.n_scenarios {
                return Err(Error::ReportMismatch(format!(
                    "cell {} ({} episodes) vs {} ({} episodes)",
                    x.scenario, x.n_scenarios, y.scenario, y.n_scenarios
                )));
            }
            Ok(CellComparison {
                scenario: x.scenario.clone(),
                rate_a: x.success_rate(),
                rate_b: y.success_rate(),
                difference: x.success_rate() - y.success_rate(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        model_a: a.model.clone(),
        model_b: b.model.clone(),
        cells,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>10} {:>10} {:>8}",
            "scenario", self.model_a, self.model_b, "diff"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<20} {:>10.1} {:>10.1} {:>+8.1}",
                c.scenario, c.rate_a, c.rate_b, c.difference
            )?;
        }
        Ok(())
    }
}

/// Summary of a learning curve, computed over rows with a finite reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSummary {
    pub rows: usize,
    pub first_mean: f64,
    pub final_mean: f64,
    /// First step whose reward reaches `first_mean + 0.95 (final_mean - first_mean)`.
    pub convergence_step: u64,
    /// Largest drop below an earlier peak.
    pub max_drawdown: f64,
    /// `max_drawdown` exceeds [`DIP_FRACTION`] of the reward range.
    pub dip: bool,
}

impl fmt::Display for CurveSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows with finished episodes: {}", self.rows)?;
        writeln!(f, "first-10% mean cumulative reward: {:.4}", self.first_mean)?;
        writeln!(f, "final-10% mean cumulative reward: {:.4}", self.final_mean)?;
        writeln!(f, "95% of final reward first reached at step: {}", self.convergence_step)?;
        write!(
            f,
            "max drawdown: {:.4}{}",
            self.max_drawdown,
            if self.dip { " (dip)" } else { "" }
        )
    }
}

pub fn summarize_curve(rows: &[CurveRow]) -> Result<CurveSummary> {
    let pts: Vec<(u64, f64)> = rows
        .iter()
        .filter(|r| r.mean_cum_reward.is_finite())
        .map(|r| (r.env_steps, r.mean_cum_reward))
        .collect();
    if pts.is_empty() {
        return Err(Error::Curve("no row has a finished episode".into()));
    }
    let k = pts.len().div_ceil(10);
    let mean = |s: &[(u64, f64)]| s.iter().map(|p| p.1).sum::<f64>() / s.len() as f64;
    let first_mean = mean(&pts[..k]);
    let final_mean = mean(&pts[pts.len() - k..]);
    let threshold = first_mean + 0.95 * (final_mean - first_mean);
    let convergence_step = pts
        .iter()
        .find(|p| p.1 >= threshold)
        .map_or(pts[pts.len() - 1].0, |p| p.0);
    let (mut peak, mut lo, mut hi, mut max_drawdown) =
        (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(_, v) in &pts {
        peak = peak.max(v);
        lo = lo.min(v);
        hi = hi.max(v);
        max_drawdown = max_drawdown.max(peak - v);
    }
    Ok(CurveSummary {
        rows: pts.len(),
        first_mean,
        final_mean,
        convergence_step,
        max_drawdown,
        dip: hi > lo && max_drawdown > DIP_FRACTION * (hi - lo),
    })
}

/// Reads `log_file`, writes the reward-vs-steps plot next to it (or to
/// `plot_path`) and returns the summary.
pub fn export_curve(log_file: &Path, plot_path: Option<&Path>) -> Result<(CurveSummary, PathBuf)> {
    let rows = crate::ppo::read_curve(log_file)?;
    let summary = summarize_curve(&rows)?;
    let out = plot_path.map_or_else(|| log_file.with_extension("svg"), Path::to_path_buf);
    let svg = crate::plot::reward_curve_svg(&rows);
    fs::write(&out, svg).map_err(|e| Error::file(&out, e))?;
    Ok((summary, out))
}
