use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{ForwardCache, Mlp};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian over actions: mean from an MLP, state-independent log std.
///
/// The flat parameter vector is the mean network's parameters followed by
/// `log_std`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean_net: Mlp, log_std: Vec<f64>) -> Result<Self> {
        if log_std.len() != mean_net.output_dim() {
            return Err(Error::Dimension {
                context: "policy log_std",
                expected: mean_net.output_dim(),
                got: log_std.len(),
            });
        }
        let mut p = Self { mean_net, log_std };
        p.clamp_log_std();
        Ok(p)
    }

    /// Orthogonal init with the output layer scaled by 0.01.
    pub fn init<R: Rng>(sizes: &[usize], init_log_std: f64, rng: &mut R) -> Result<Self> {
        let net = Mlp::orthogonal(sizes, 2f64.sqrt(), 0.01, rng)?;
        let act_dim = net.output_dim();
        Self::new(net, vec![init_log_std; act_dim])
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.params().len() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.mean_net.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "policy parameters",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let n = self.mean_net.params().len();
        self.mean_net.params_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
        Ok(())
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std
            .iter_mut()
            .for_each(|v| *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.exp()).collect()
    }

    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.predict(s)
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let mean = self.mean(s)?;
        self.check_action(a)?;
        Ok(self.log_density(&mean, a))
    }

    /// Log density and its gradient with respect to the flat parameters.
    pub fn log_prob_and_grad(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (mean, cache) = self.mean_net.forward(s)?;
        self.check_action(a)?;
        let mut grad = vec![0.0; self.param_count()];
        let lp = self.log_density(&mean, a);
        self.accumulate_grad(&cache, &mean, a, 1.0, &mut grad);
        Ok((lp, grad))
    }

    /// Forward pass returning the mean and the backprop cache.
    pub fn forward(&self, s: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.mean_net.forward(s)
    }

    pub fn log_density(&self, mean: &[f64], a: &[f64]) -> f64 {
        let k = self.log_std.len() as f64;
        let quad: f64 = mean
            .iter()
            .zip(a)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                0.5 * z * z + ls
            })
            .sum();
        -quad - 0.5 * k * (2.0 * PI).ln()
    }

    /// Adds `weight * d(log_prob)/d(params)` into `grad`.
    pub fn accumulate_grad(
        &self,
        cache: &ForwardCache,
        mean: &[f64],
        a: &[f64],
        weight: f64,
        grad: &mut [f64],
    ) {
        let n = self.mean_net.params().len();
        let mut d_mean = vec![0.0; mean.len()];
        for i in 0..mean.len() {
            let var = (2.0 * self.log_std[i]).exp();
            let diff = a[i] - mean[i];
            d_mean[i] = weight * diff / var;
            grad[n + i] += weight * (diff * diff / var - 1.0);
        }
        self.mean_net.backward(cache, &d_mean, &mut grad[..n]);
    }

    pub fn sample<R: Rng>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mean = self.mean(s)?;
        Ok(self.sample_around(&mean, rng))
    }

    pub fn sample_around<R: Rng>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        mean.iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn entropy(&self) -> f64 {
        let k = self.log_std.len() as f64;
        self.log_std.iter().sum::<f64>() + 0.5 * k * (1.0 + (2.0 * PI).ln())
    }

    fn check_action(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.act_dim() {
            return Err(Error::Dimension {
                context: "policy action",
                expected: self.act_dim(),
                got: a.len(),
            });
        }
        Ok(())
    }
}
