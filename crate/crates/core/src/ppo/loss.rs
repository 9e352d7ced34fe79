use crate::env::{ACT_DIM, OBS_DIM};
use crate::neural::{GaussianPolicy, Mlp};
use crate::{Error, Result};

/// Minibatch entry for the actor and critic losses. Only the leading
/// network-input-width entries of `obs` are read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub obs: [f64; OBS_DIM],
    pub action: [f64; ACT_DIM],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    /// Negated mean surrogate minus the entropy bonus (minimized).
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Fraction of samples whose ratio left `[1 - eps, 1 + eps]`.
    pub clip_fraction: f64,
    /// Largest `|r - 1|` over the batch.
    pub max_ratio_dev: f64,
    /// Sample estimate of `KL(old || new)`.
    pub approx_kl: f64,
}

/// Clipped-surrogate loss and its gradient with respect to the flat policy
/// parameters. A non-finite probability ratio is an error.
pub fn actor_loss(
    policy: &GaussianPolicy,
    batch: &[Sample],
    eps: f64,
    entropy_coef: f64,
) -> Result<ActorLoss> {
    let n = batch.len();
    let mut grad = vec![0.0; policy.param_count()];
    if n == 0 {
        return Ok(ActorLoss {
            loss: 0.0,
            grad,
            clip_fraction: 0.0,
            max_ratio_dev: 0.0,
            approx_kl: 0.0,
        });
    }
    let inv_n = 1.0 / n as f64;
    let (mut surrogate, mut clipped, mut max_dev, mut kl) = (0.0, 0usize, 0.0f64, 0.0);
    for s in batch {
        let (mean, cache) = policy.forward(&s.obs[..policy.obs_dim()])?;
        let log_prob = policy.log_density(&mean, &s.action);
        let log_ratio = log_prob - s.old_log_prob;
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(Error::Diverged(format!(
                "probability ratio is {ratio} (log ratio {log_ratio})"
            )));
        }
        surrogate += clipped_surrogate(ratio, s.advantage, eps);
        let dev = (ratio - 1.0).abs();
        max_dev = max_dev.max(dev);
        if dev > eps {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
        // The unclipped term is the minimum unless the ratio has moved past the
        // clip boundary in the direction the advantage favors.
        let flat = (s.advantage > 0.0 && ratio > 1.0 + eps)
            || (s.advantage < 0.0 && ratio < 1.0 - eps);
        if !flat {
            policy.accumulate_grad(&cache, &mean, &s.action, -s.advantage * ratio * inv_n, &mut grad);
        }
    }
    let n_mean = grad.len() - policy.act_dim();
    for g in &mut grad[n_mean..] {
        *g -= entropy_coef;
    }
    Ok(ActorLoss {
        loss: -surrogate * inv_n - entropy_coef * policy.entropy(),
        grad,
        clip_fraction: clipped as f64 * inv_n,
        max_ratio_dev: max_dev,
        approx_kl: kl * inv_n,
    })
}

/// Mean squared error `mean (V(s) - R)^2` and its gradient.
pub fn critic_loss(value_net: &Mlp, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; value_net.params().len()];
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        let (v, cache) = value_net.forward(&s.obs[..value_net.input_dim()])?;
        let err = v[0] - s.ret;
        loss += err * err * inv_n;
        value_net.backward(&cache, &[2.0 * err * inv_n], &mut grad);
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn surrogate_examples() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, 1.0, 0.2) - 0.5).abs() < 1e-12);
        assert!((clipped_surrogate(1.5, -1.0, 0.2) + 1.5).abs() < 1e-12);
        assert_eq!(clipped_surrogate(1.0, 3.0, 0.2), 3.0);
    }

    fn setup() -> (GaussianPolicy, Mlp, Vec<Sample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = GaussianPolicy::init(&[10, 6, 3], -0.3, &mut rng).unwrap();
        let critic = Mlp::orthogonal(&[10, 6, 1], 1.0, 1.0, &mut rng).unwrap();
        let batch = (0..12)
            .map(|_| {
                let obs: [f64; 10] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let action: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let lp = policy.log_prob(&obs, &action).unwrap();
                Sample {
                    obs,
                    action,
                    // shift so some ratios start outside the clip range
                    old_log_prob: lp + rng.random_range(-0.4..0.4),
                    advantage: rng.random_range(-2.0..2.0),
                    ret: rng.random_range(-3.0..3.0),
                }
            })
            .collect();
        (policy, critic, batch)
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let (mut policy, _, batch) = setup();
        let analytic = actor_loss(&policy, &batch, 0.2, 0.01).unwrap();
        let base = policy.flat_params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            policy.set_flat_params(&p).unwrap();
            let up = actor_loss(&policy, &batch, 0.2, 0.01).unwrap().loss;
            p[i] -= 2.0 * h;
            policy.set_flat_params(&p).unwrap();
            let down = actor_loss(&policy, &batch, 0.2, 0.01).unwrap().loss;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - analytic.grad[i]).abs() < 1e-5, "param {i}: fd {fd} vs {}", analytic.grad[i]);
        }
        policy.set_flat_params(&base).unwrap();
    }

    #[test]
    fn fresh_policy_has_unit_ratio() {
        let (policy, _, mut batch) = setup();
        for s in &mut batch {
            s.old_log_prob = policy.log_prob(&s.obs, &s.action).unwrap();
        }
        let out = actor_loss(&policy, &batch, 0.2, 0.0).unwrap();
        assert!(out.max_ratio_dev < 1e-12);
        assert_eq!(out.clip_fraction, 0.0);
        assert!(out.approx_kl.abs() < 1e-12);
        let mean_adv = batch.iter().map(|s| s.advantage).sum::<f64>() / batch.len() as f64;
        assert!((out.loss + mean_adv).abs() < 1e-12);
    }

    #[test]
    fn non_finite_ratio_is_an_error() {
        let (policy, _, mut batch) = setup();
        batch[0].old_log_prob = -1e6;
        assert!(matches!(
            actor_loss(&policy, &batch, 0.2, 0.0),
            Err(Error::Diverged(_))
        ));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let (_, mut critic, batch) = setup();
        let (_, grad) = critic_loss(&critic, &batch).unwrap();
        let h = 1e-6;
        for i in 0..grad.len() {
            critic.params_mut()[i] += h;
            let up = critic_loss(&critic, &batch).unwrap().0;
            critic.params_mut()[i] -= 2.0 * h;
            let down = critic_loss(&critic, &batch).unwrap().0;
            critic.params_mut()[i] += h;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "param {i}");
        }
    }
}
