use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{Environment, Observation, TerminationReason, ACT_DIM, OBS_DIM};
use crate::neural::{GaussianPolicy, Mlp};
use crate::policy_io::PolicyIo;
use crate::Result;

/// One collected step. `obs` is the encoded network input (zero past the
/// input width); `action` is the raw network-frame sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub value: f64,
    pub log_prob: f64,
    pub done: bool,
}

/// Contiguous run of transitions from one environment. When the last step
/// is not terminal, `bootstrap_value` is the critic's value of the next state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub cum_reward: f64,
    pub length: u32,
    pub reason: TerminationReason,
    pub peak_rope_angle: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub segments: Vec<Segment>,
    /// Episodes that finished during collection.
    pub episodes: Vec<EpisodeStats>,
    /// Sum of rope angles over all collected steps.
    pub rope_angle_sum: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn mean_rope_angle(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.rope_angle_sum / self.len() as f64
        }
    }

    fn append(&mut self, mut other: RolloutBuffer) {
        let offset = self.transitions.len();
        self.transitions.append(&mut other.transitions);
        self.segments.extend(other.segments.into_iter().map(|s| Segment {
            start: s.start + offset,
            end: s.end + offset,
            ..s
        }));
        self.episodes.append(&mut other.episodes);
        self.rope_angle_sum += other.rope_angle_sum;
    }
}

/// Seed of episode `episode` in environment `env_index`'s reset stream.
pub fn episode_seed(run_seed: u64, env_index: usize, episode: u64) -> u64 {
    let mut z = run_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((env_index as u64) << 40)
        .wrapping_add(episode);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An environment with its own action-noise RNG and episode seed stream.
pub struct EnvSlot {
    env: Box<dyn Environment>,
    index: usize,
    run_seed: u64,
    episodes_started: u64,
    rng: ChaCha8Rng,
    obs: Option<Observation>,
    cum_reward: f64,
    length: u32,
    peak_rope_angle: f64,
}

impl EnvSlot {
    pub fn new(env: Box<dyn Environment>, run_seed: u64, index: usize) -> Self {
        Self {
            env,
            index,
            run_seed,
            episodes_started: 0,
            rng: ChaCha8Rng::seed_from_u64(episode_seed(run_seed ^ 0xA5A5_A5A5, index, u64::MAX)),
            obs: None,
            cum_reward: 0.0,
            length: 0,
            peak_rope_angle: 0.0,
        }
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    fn ensure_started(&mut self) -> Result<Observation> {
        if let Some(obs) = self.obs {
            return Ok(obs);
        }
        let seed = episode_seed(self.run_seed, self.index, self.episodes_started);
        self.episodes_started += 1;
        let obs = self.env.reset(seed)?;
        self.obs = Some(obs);
        self.cum_reward = 0.0;
        self.length = 0;
        self.peak_rope_angle = obs.rope_angle;
        Ok(obs)
    }

    fn collect(
        &mut self,
        policy: &GaussianPolicy,
        value_net: &Mlp,
        n_steps: usize,
        io: &PolicyIo,
    ) -> Result<RolloutBuffer> {
        let dim = io.input_dim();
        let mut out = RolloutBuffer::default();
        out.transitions.reserve(n_steps);
        for _ in 0..n_steps {
            let obs = self.ensure_started()?;
            let s = io.encode(&obs);
            let value = value_net.predict(&s[..dim])?[0];
            let mean = policy.mean(&s[..dim])?;
            let a = policy.sample_around(&mean, &mut self.rng);
            let log_prob = policy.log_density(&mean, &a);
            let cmd = io.decode(&obs, &a);
            let step = self.env.step(&cmd)?;

            self.cum_reward += step.reward;
            self.length += 1;
            self.peak_rope_angle = self.peak_rope_angle.max(step.observation.rope_angle);
            out.rope_angle_sum += step.observation.rope_angle;
            out.transitions.push(Transition {
                obs: s,
                action: [a[0], a[1], a[2]],
                reward: step.reward,
                value,
                log_prob,
                done: step.terminated,
            });
            if step.terminated {
                out.episodes.push(EpisodeStats {
                    cum_reward: self.cum_reward,
                    length: self.length,
                    reason: step.termination_reason,
                    peak_rope_angle: self.peak_rope_angle,
                });
                self.obs = None;
            } else {
                self.obs = Some(step.observation);
            }
        }
        let bootstrap_value = match self.obs {
            Some(obs) if n_steps > 0 => value_net.predict(&io.encode(&obs)[..dim])?[0],
            _ => 0.0,
        };
        if n_steps > 0 {
            out.segments.push(Segment {
                start: 0,
                end: n_steps,
                bootstrap_value,
            });
        }
        Ok(out)
    }
}

/// Collects `n_steps` transitions split evenly over `slots` (earlier slots
/// take the remainder). Finished episodes restart with the next seed of their
/// slot's stream. With `pool` set, slots are stepped in parallel; the result
/// does not depend on the number of threads.
pub fn collect_rollouts(
    policy: &GaussianPolicy,
    value_net: &Mlp,
    slots: &mut [EnvSlot],
    n_steps: usize,
    io: &PolicyIo,
    pool: Option<&rayon::ThreadPool>,
) -> Result<RolloutBuffer> {
    let n_envs = slots.len().max(1);
    let share = |i: usize| n_steps / n_envs + usize::from(i < n_steps % n_envs);
    let run = |(i, slot): (usize, &mut EnvSlot)| {
        slot.collect(policy, value_net, share(i), io)
    };
    let parts: Vec<Result<RolloutBuffer>> = match pool {
        Some(pool) => pool.install(|| slots.par_iter_mut().enumerate().map(run).collect()),
        None => slots.iter_mut().enumerate().map(run).collect(),
    };
    let mut buffer = RolloutBuffer::default();
    for part in parts {
        buffer.append(part?);
    }
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{RewardParams, Snapshot, StepOutcome};
    use crate::world::World;
    use crate::{Error, Vec3};

    /// Episode ends after exactly `len` steps with reward 1 per step.
    struct Countdown {
        len: u32,
        t: u32,
        reward: RewardParams,
        world: World,
        resets: std::sync::Arc<std::sync::Mutex<Vec<u64>>>,
    }

    impl Environment for Countdown {
        fn reset(&mut self, seed: u64) -> Result<Observation> {
            self.t = 0;
            self.resets.lock().unwrap().push(seed);
            Ok(self.obs())
        }
        fn step(&mut self, _a: &Vec3) -> Result<StepOutcome> {
            if self.t >= self.len {
                return Err(Error::EpisodeTerminated);
            }
            self.t += 1;
            let done = self.t == self.len;
            Ok(StepOutcome {
                observation: self.obs(),
                reward: 1.0,
                terms: Default::default(),
                terminated: done,
                termination_reason: if done {
                    TerminationReason::StepLimit
                } else {
                    TerminationReason::None
                },
            })
        }
        fn reward_params(&self) -> &RewardParams {
            &self.reward
        }
        fn action_bound(&self) -> f64 {
            1.0
        }
        fn snapshot(&self) -> Option<Snapshot> {
            None
        }
        fn world(&self) -> &World {
            &self.world
        }
    }

    impl Countdown {
        fn obs(&self) -> Observation {
            Observation {
                material_pos: Vec3::new(f64::from(self.t), 0.0, 0.0),
                target_pos: Vec3::zeros(),
                distance: f64::from(self.t),
                collision_warning: 0.0,
                rope_angle: 0.0,
                steps: f64::from(self.t),
            }
        }
    }

    fn io() -> PolicyIo {
        PolicyIo {
            frame: crate::policy_io::InputFrame::World,
            obs_scale: [1.0; 10],
            action_scale: 1.0,
        }
    }

    fn nets() -> (GaussianPolicy, Mlp) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (
            GaussianPolicy::init(&[10, 8, 3], 0.0, &mut rng).unwrap(),
            Mlp::orthogonal(&[10, 8, 1], 2f64.sqrt(), 1.0, &mut rng).unwrap(),
        )
    }

    fn countdown(len: u32) -> (Box<dyn Environment>, std::sync::Arc<std::sync::Mutex<Vec<u64>>>) {
        let resets = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let env = Countdown {
            len,
            t: 0,
            reward: RewardParams::default(),
            world: World::empty(),
            resets: resets.clone(),
        };
        (Box::new(env), resets)
    }

    #[test]
    fn zero_steps_gives_empty_buffer() {
        let (policy, value) = nets();
        let (env, _) = countdown(5);
        let mut slots = vec![EnvSlot::new(env, 0, 0)];
        let buf = collect_rollouts(&policy, &value, &mut slots, 0, &io(), None).unwrap();
        assert!(buf.is_empty());
        assert!(buf.segments.is_empty());
    }

    #[test]
    fn done_flag_and_auto_reset() {
        let (policy, value) = nets();
        let (env, resets) = countdown(4);
        let mut slots = vec![EnvSlot::new(env, 7, 0)];
        let buf = collect_rollouts(&policy, &value, &mut slots, 10, &io(), None).unwrap();
        let dones: Vec<bool> = buf.transitions.iter().map(|t| t.done).collect();
        assert_eq!(
            dones,
            vec![false, false, false, true, false, false, false, true, false, false]
        );
        // fresh episode starts at step count zero
        assert_eq!(buf.transitions[4].obs[9], 0.0);
        assert_eq!(buf.episodes.len(), 2);
        assert_eq!(buf.episodes[0].cum_reward, 4.0);
        let seeds = resets.lock().unwrap().clone();
        assert_eq!(seeds, vec![episode_seed(7, 0, 0), episode_seed(7, 0, 1), episode_seed(7, 0, 2)]);
        // unfinished tail gets a bootstrap value from the critic
        let tail = buf.segments[0];
        let expected = value.predict(&buf.transitions[9].obs).unwrap()[0];
        assert_ne!(tail.bootstrap_value, 0.0);
        assert_ne!(tail.bootstrap_value, expected);
    }

    #[test]
    fn stored_log_probs_match_recomputation() {
        let (policy, value) = nets();
        let (env, _) = countdown(6);
        let mut slots = vec![EnvSlot::new(env, 3, 0)];
        let buf = collect_rollouts(&policy, &value, &mut slots, 40, &io(), None).unwrap();
        for t in &buf.transitions {
            let lp = policy.log_prob(&t.obs, &t.action).unwrap();
            assert!((lp - t.log_prob).abs() <= 1e-12);
        }
    }

    #[test]
    fn parallel_collection_matches_serial() {
        let (policy, value) = nets();
        let make = || -> Vec<EnvSlot> {
            (0..3)
                .map(|i| EnvSlot::new(countdown(5 + i as u32).0, 11, i))
                .collect()
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = collect_rollouts(&policy, &value, &mut make(), 50, &io(), None).unwrap();
        let b = collect_rollouts(&policy, &value, &mut make(), 50, &io(), Some(&pool)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.segments.len(), 3);
        assert_eq!(a.segments[0].end - a.segments[0].start, 17);
    }
}
