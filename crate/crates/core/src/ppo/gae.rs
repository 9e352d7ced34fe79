use super::buffer::RolloutBuffer;

/// Per-step advantages and return targets, aligned with the buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation over every segment of `buffer`.
///
/// `returns` are `advantage + value` computed before normalization.
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> AdvantageEstimate {
    let n = buffer.transitions.len();
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    for seg in &buffer.segments {
        let mut next_value = seg.bootstrap_value;
        let mut next_adv = 0.0;
        for i in (seg.start..seg.end).rev() {
            let tr = &buffer.transitions[i];
            let live = if tr.done { 0.0 } else { 1.0 };
            let delta = tr.reward + gamma * next_value * live - tr.value;
            let adv = delta + gamma * lambda * live * next_adv;
            advantages[i] = adv;
            returns[i] = adv + tr.value;
            next_value = tr.value;
            next_adv = adv;
        }
    }
    AdvantageEstimate {
        advantages,
        returns,
    }
}

impl AdvantageEstimate {
    /// Shift and scale advantages to zero mean and unit (population) variance.
    pub fn normalize(&mut self) {
        let n = self.advantages.len();
        if n < 2 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
        self.advantages
            .iter_mut()
            .for_each(|a| *a = (*a - mean) * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::buffer::{Segment, Transition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transition(reward: f64, value: f64, done: bool) -> Transition {
        Transition {
            obs: [0.0; 10],
            action: [0.0; 3],
            reward,
            value,
            log_prob: 0.0,
            done,
        }
    }

    fn buffer(trs: Vec<Transition>, bootstrap: f64) -> RolloutBuffer {
        let n = trs.len();
        RolloutBuffer {
            transitions: trs,
            segments: vec![Segment {
                start: 0,
                end: n,
                bootstrap_value: bootstrap,
            }],
            ..RolloutBuffer::default()
        }
    }

    // Direct double-loop summation: adv_t = sum_k (gamma*lambda)^k delta_{t+k},
    // truncated at the first done flag.
    fn oracle(trs: &[Transition], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = trs.len();
        let value_after = |i: usize| {
            if trs[i].done {
                0.0
            } else if i + 1 < n {
                trs[i + 1].value
            } else {
                bootstrap
            }
        };
        (0..n)
            .map(|t| {
                let mut total = 0.0;
                let mut weight = 1.0;
                for k in t..n {
                    let delta = trs[k].reward + gamma * value_after(k) - trs[k].value;
                    total += weight * delta;
                    if trs[k].done {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                total
            })
            .collect()
    }

    #[test]
    fn telescoping_identity_for_full_episode() {
        let rewards = [1.0, -0.5, 2.0, 0.25];
        let values = [0.3, 0.1, -0.2, 0.7];
        let trs: Vec<_> = (0..4)
            .map(|i| transition(rewards[i], values[i], i == 3))
            .collect();
        let est = compute_gae(&buffer(trs, 123.0), 1.0, 1.0);
        for t in 0..4 {
            let togo: f64 = rewards[t..].iter().sum();
            assert!((est.advantages[t] - (togo - values[t])).abs() < 1e-12);
            assert!((est.returns[t] - togo).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let trs = vec![
            transition(1.0, 0.5, false),
            transition(2.0, 0.25, false),
            transition(3.0, 1.0, true),
            transition(0.5, 2.0, false),
        ];
        let est = compute_gae(&buffer(trs, 4.0), 0.9, 0.0);
        let expected = [
            1.0 + 0.9 * 0.25 - 0.5,
            2.0 + 0.9 * 1.0 - 0.25,
            3.0 - 1.0,
            0.5 + 0.9 * 4.0 - 2.0,
        ];
        assert_eq!(est.advantages, expected);
    }

    #[test]
    fn matches_brute_force_on_random_buffers() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let n = rng.random_range(1..=32);
            let trs: Vec<_> = (0..n)
                .map(|_| {
                    transition(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_bool(0.15),
                    )
                })
                .collect();
            let boot = rng.random_range(-3.0..3.0);
            let gamma = rng.random_range(0.5..1.0);
            let lambda = rng.random_range(0.0..1.0);
            let est = compute_gae(&buffer(trs.clone(), boot), gamma, lambda);
            for (a, b) in est.advantages.iter().zip(oracle(&trs, boot, gamma, lambda)) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn normalization() {
        let mut est = AdvantageEstimate {
            advantages: vec![1.0, 5.0, -2.0, 7.5, 0.0],
            returns: vec![0.0; 5],
        };
        est.normalize();
        let n = 5.0;
        let mean = est.advantages.iter().sum::<f64>() / n;
        let var = est.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 1e-6);
        assert!((var.sqrt() - 1.0).abs() <= 1e-6);
        let mut single = AdvantageEstimate {
            advantages: vec![3.0],
            returns: vec![0.0],
        };
        single.normalize();
        assert_eq!(single.advantages, vec![3.0]);
    }
}
