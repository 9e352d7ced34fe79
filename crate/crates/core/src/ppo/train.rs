use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffer::{collect_rollouts, EnvSlot, EpisodeStats};
use super::config::PpoConfig;
use super::gae::compute_gae;
use super::loss::{actor_loss, critic_loss, Sample};
use crate::env::{TerminationReason, ACT_DIM};
use crate::neural::{clip_grad_norm, Adam, Checkpoint, GaussianPolicy, Mlp};
use crate::policy_io::PolicyIo;
use crate::task::Task;
use crate::{Error, Result};

pub const CURVE_HEADER: &str =
    "env_steps,mean_cum_reward,success_rate,mean_rope_angle,mean_ep_len,wall_time_s";

/// Episodes in the rolling window behind each curve row.
const CURVE_WINDOW: usize = 100;

/// One learning-curve row. Episode statistics cover the last completed
/// episodes (up to 100) and are NaN before the first episode ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub env_steps: u64,
    pub mean_cum_reward: f64,
    pub success_rate: f64,
    /// Mean rope angle over the steps collected in this update (rad).
    pub mean_rope_angle: f64,
    pub mean_ep_len: f64,
    pub wall_time_s: f64,
}

impl CurveRow {
    fn to_line(self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.env_steps,
            self.mean_cum_reward,
            self.success_rate,
            self.mean_rope_angle,
            self.mean_ep_len,
            self.wall_time_s
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub update: usize,
    pub env_steps: u64,
    pub learning_rate: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Largest `|ratio - 1|` in the first minibatch of the first epoch.
    pub first_ratio_dev: f64,
    pub entropy: f64,
    /// Normalized advantage mean and std over the update's buffer.
    pub adv_mean: f64,
    pub adv_std: f64,
    pub episodes_finished: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurveRow>,
    pub updates: Vec<UpdateStats>,
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::file(path, e.to_string()))
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e.to_string()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CURVE_HEADER => {}
        other => {
            return Err(Error::Curve(format!(
                "{}: expected header `{CURVE_HEADER}`, found `{}`",
                path.display(),
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Curve(format!("{}:{}: {what}", path.display(), i + 2));
        if f.len() != 6 {
            return Err(bad(&format!("expected 6 fields, found {}", f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].trim().parse::<f64>().map_err(|_| bad(&format!("bad number `{}`", f[k])))
        };
        let env_steps = f[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| bad(&format!("bad step count `{}`", f[0])))?;
        if let Some(prev) = rows.last().map(|r: &CurveRow| r.env_steps) {
            if env_steps <= prev {
                return Err(bad("env_steps must increase"));
            }
        }
        rows.push(CurveRow {
            env_steps,
            mean_cum_reward: num(1)?,
            success_rate: num(2)?,
            mean_rope_angle: num(3)?,
            mean_ep_len: num(4)?,
            wall_time_s: num(5)?,
        });
    }
    Ok(rows)
}

struct CurveLog {
    path: PathBuf,
    file: BufWriter<File>,
}

impl CurveLog {
    fn create(path: PathBuf) -> Result<Self> {
        let f = File::create(&path).map_err(|e| Error::file(&path, e.to_string()))?;
        let mut log = Self {
            file: BufWriter::new(f),
            path,
        };
        log.line(CURVE_HEADER)?;
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.file, "{s}")
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::file(&self.path, e.to_string()))
    }
}

fn window_stats(window: &VecDeque<EpisodeStats>) -> (f64, f64, f64) {
    if window.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = window.len() as f64;
    let reward = window.iter().map(|e| e.cum_reward).sum::<f64>() / n;
    let success = window
        .iter()
        .filter(|e| e.reason == TerminationReason::Success)
        .count() as f64
        / n;
    let len = window.iter().map(|e| f64::from(e.length)).sum::<f64>() / n;
    (reward, success, len)
}

/// Trains a fresh policy on `task`. See [`train_with`].
pub fn train(cfg: &PpoConfig, task: &Task, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    train_with(cfg, task, out_dir, |_, _| {})
}

/// Runs `cfg.n_updates()` collect/update cycles and calls `on_update` after
/// each one.
///
/// With `out_dir` set, writes `curve.csv` (one row per update, appended as
/// training proceeds), `checkpoint_<steps>.ckpt` every `checkpoint_every`
/// updates and `final.ckpt`. A non-finite loss or ratio aborts with
/// [`Error::Diverged`] after saving the parameters from before the failing
/// update to `last_good.ckpt`.
pub fn train_with<F>(
    cfg: &PpoConfig,
    task: &Task,
    out_dir: Option<&Path>,
    mut on_update: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&UpdateStats, &CurveRow),
{
    cfg.validate()?;
    let start = Instant::now();
    let mut slots = (0..cfg.n_envs)
        .map(|i| Ok(EnvSlot::new(task.build()?, cfg.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let io = PolicyIo::new(cfg.input_frame, task.reward(), slots[0].env().action_bound());

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut actor_sizes = vec![io.input_dim()];
    actor_sizes.extend(&cfg.hidden);
    let mut critic_sizes = actor_sizes.clone();
    actor_sizes.push(ACT_DIM);
    critic_sizes.push(1);
    let mut policy = GaussianPolicy::init(&actor_sizes, cfg.init_log_std, &mut init_rng)?;
    let mut value_net = Mlp::orthogonal(&critic_sizes, 2f64.sqrt(), 1.0, &mut init_rng)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED_5EED_5EED);
    let mut actor_opt = Adam::new(policy.param_count(), cfg.learning_rate);
    let mut critic_opt = Adam::new(value_net.params().len(), cfg.learning_rate);

    let pool = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::Config(format!("ppo.workers: {e}")))?,
        )
    } else {
        None
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e.to_string()))?;
    }
    let mut log = out_dir
        .map(|d| CurveLog::create(d.join("curve.csv")))
        .transpose()?;

    let snapshot = |policy: &GaussianPolicy, value_net: &Mlp, env_steps: u64| Checkpoint {
        policy: policy.clone(),
        value_net: value_net.clone(),
        io,
        reward: task.reward().clone(),
        env_steps,
    };

    let n_updates = cfg.n_updates();
    let mut env_steps = 0u64;
    let mut window: VecDeque<EpisodeStats> = VecDeque::with_capacity(CURVE_WINDOW);
    let mut curve = Vec::with_capacity(n_updates);
    let mut updates = Vec::with_capacity(n_updates);

    for update in 0..n_updates {
        let lr = if cfg.lr_decay {
            cfg.learning_rate * (1.0 - update as f64 / n_updates as f64)
        } else {
            cfg.learning_rate
        };
        actor_opt.learning_rate = lr;
        critic_opt.learning_rate = lr;

        let last_good = (policy.clone(), value_net.clone(), env_steps);
        let result = run_update(
            cfg,
            &mut policy,
            &mut value_net,
            &mut actor_opt,
            &mut critic_opt,
            &mut slots,
            &io,
            pool.as_ref(),
            &mut shuffle_rng,
        );
        let (buffer, mut stats) = match result {
            Ok(v) => v,
            Err(err @ (Error::Diverged(_) | Error::NonFinite(_))) => {
                if let Some(dir) = out_dir {
                    snapshot(&last_good.0, &last_good.1, last_good.2)
                        .save(&dir.join("last_good.ckpt"))?;
                }
                return Err(Error::Diverged(format!(
                    "update {update} at {env_steps} env steps: {err}"
                )));
            }
            Err(err) => return Err(err),
        };

        env_steps += buffer.len() as u64;
        for ep in &buffer.episodes {
            if window.len() == CURVE_WINDOW {
                window.pop_front();
            }
            window.push_back(*ep);
        }
        let (mean_cum_reward, success_rate, mean_ep_len) = window_stats(&window);
        let row = CurveRow {
            env_steps,
            mean_cum_reward,
            success_rate,
            mean_rope_angle: buffer.mean_rope_angle(),
            mean_ep_len,
            wall_time_s: if cfg.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        stats.update = update;
        stats.env_steps = env_steps;
        stats.learning_rate = lr;
        stats.episodes_finished = buffer.episodes.len();
        if let Some(log) = log.as_mut() {
            log.line(&row.to_line())?;
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (update + 1) % cfg.checkpoint_every == 0 {
                snapshot(&policy, &value_net, env_steps)
                    .save(&dir.join(format!("checkpoint_{env_steps:08}.ckpt")))?;
            }
        }
        on_update(&stats, &row);
        curve.push(row);
        updates.push(stats);
    }

    let checkpoint = snapshot(&policy, &value_net, env_steps);
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join("final.ckpt"))?;
    }
    Ok(TrainOutcome {
        checkpoint,
        curve,
        updates,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_update(
    cfg: &PpoConfig,
    policy: &mut GaussianPolicy,
    value_net: &mut Mlp,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    slots: &mut [EnvSlot],
    io: &PolicyIo,
    pool: Option<&rayon::ThreadPool>,
    rng: &mut ChaCha8Rng,
) -> Result<(super::RolloutBuffer, UpdateStats)> {
    let buffer = collect_rollouts(
        policy,
        value_net,
        slots,
        cfg.steps_per_update,
        io,
        pool,
    )?;
    let mut est = compute_gae(&buffer, cfg.gamma, cfg.gae_lambda);
    est.normalize();
    let n = buffer.len();
    let adv_mean = est.advantages.iter().sum::<f64>() / n as f64;
    let adv_std = (est
        .advantages
        .iter()
        .map(|a| (a - adv_mean).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let samples: Vec<Sample> = buffer
        .transitions
        .iter()
        .zip(est.advantages.iter().zip(&est.returns))
        .map(|(t, (&advantage, &ret))| Sample {
            obs: t.obs,
            action: t.action,
            old_log_prob: t.log_prob,
            advantage,
            ret,
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = Vec::with_capacity(cfg.minibatch_size);
    let mut stats = UpdateStats {
        update: 0,
        env_steps: 0,
        learning_rate: actor_opt.learning_rate,
        actor_loss: 0.0,
        critic_loss: 0.0,
        clip_fraction: 0.0,
        approx_kl: 0.0,
        first_ratio_dev: f64::NAN,
        entropy: 0.0,
        adv_mean,
        adv_std,
        episodes_finished: 0,
    };
    let mut n_batches = 0usize;
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));

            let mut a = actor_loss(policy, &batch, cfg.clip_eps, cfg.entropy_coef)?;
            if !a.loss.is_finite() {
                return Err(Error::Diverged(format!("actor loss is {}", a.loss)));
            }
            if stats.first_ratio_dev.is_nan() {
                stats.first_ratio_dev = a.max_ratio_dev;
            }
            clip_grad_norm(&mut a.grad, cfg.max_grad_norm);
            let mut flat = policy.flat_params();
            actor_opt.step(&mut flat, &a.grad)?;
            policy.set_flat_params(&flat)?;
            policy.clamp_log_std();

            let (c_loss, mut c_grad) = critic_loss(value_net, &batch)?;
            if !c_loss.is_finite() {
                return Err(Error::Diverged(format!("critic loss is {c_loss}")));
            }
            c_grad.iter_mut().for_each(|g| *g *= cfg.value_coef);
            clip_grad_norm(&mut c_grad, cfg.max_grad_norm);
            critic_opt.step(value_net.params_mut(), &c_grad)?;

            stats.actor_loss += a.loss;
            stats.critic_loss += c_loss;
            stats.clip_fraction += a.clip_fraction;
            stats.approx_kl += a.approx_kl;
            n_batches += 1;
        }
    }
    let inv = 1.0 / n_batches.max(1) as f64;
    stats.actor_loss *= inv;
    stats.critic_loss *= inv;
    stats.clip_fraction *= inv;
    stats.approx_kl *= inv;
    stats.entropy = policy.entropy();
    Ok((buffer, stats))
}
