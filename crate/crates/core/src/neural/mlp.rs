use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix
/// (`n_out x n_in`, row-major) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer inputs recorded by [`Mlp::forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let expected = Self::param_count(sizes);
        if params.len() != expected {
            return Err(Error::Dimension {
                context: "mlp parameters",
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    /// Orthogonal initialization with `hidden_gain` on hidden layers and
    /// `output_gain` on the last one; zero biases.
    pub fn orthogonal<R: Rng>(
        sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let n_layers = sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l + 1 == n_layers { output_gain } else { hidden_gain };
            let q = orthonormal(n_out, n_in, rng);
            for r in 0..n_out {
                for c in 0..n_in {
                    net.params[offset + r * n_in + c] = gain * q[(r, c)];
                }
            }
            offset += n_in * n_out + n_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.sizes.len() - 1);
        let mut h = x.to_vec();
        let n_layers = self.sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let z = self.affine(offset, w[0], w[1], &h);
            offset += w[0] * w[1] + w[1];
            acts.push(h);
            h = if l + 1 == n_layers {
                z
            } else {
                z.into_iter().map(f64::tanh).collect()
            };
        }
        Ok((h, ForwardCache { acts }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        let n_layers = self.sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let mut z = self.affine(offset, w[0], w[1], &h);
            offset += w[0] * w[1] + w[1];
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = z;
        }
        Ok(h)
    }

    /// Adds `d(output . grad_out)/d(params)` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(grad_out.len(), self.output_dim());
        let mut offsets: Vec<usize> = Vec::with_capacity(self.sizes.len() - 1);
        let mut acc = 0;
        for w in self.sizes.windows(2) {
            offsets.push(acc);
            acc += w[0] * w[1] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + r * n_in..off + (r + 1) * n_in];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                grad[off + n_in * n_out + r] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for r in 0..n_out {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.params[off + r * n_in..off + (r + 1) * n_in];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
                }
                // input of layer l is tanh output of layer l-1
                prev.iter_mut()
                    .zip(input)
                    .for_each(|(p, a)| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.sizes[0] {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.sizes[0],
                got: x.len(),
            });
        }
        Ok(())
    }

    fn affine(&self, offset: usize, n_in: usize, n_out: usize, h: &[f64]) -> Vec<f64> {
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (0..n_out)
            .map(|r| {
                let row = &w[r * n_in..(r + 1) * n_in];
                b[r] + row.iter().zip(h).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever is shorter).
fn orthonormal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (tall, wide) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::from_fn(tall, wide, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..wide {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Straightforward reimplementation over nested Vec matrices.
    fn oracle_forward(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w: Vec<Vec<f64>> = (0..n_out)
                .map(|r| params[off + r * n_in..off + (r + 1) * n_in].to_vec())
                .collect();
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z = vec![0.0; n_out];
            for r in 0..n_out {
                let mut s = 0.0;
                for c in 0..n_in {
                    s += w[r][c] * h[c];
                }
                z[r] = s + b[r];
            }
            if l + 2 < sizes.len() {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            }
            h = z;
            off += n_in * n_out + n_out;
        }
        h
    }

    fn random_net(sizes: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        let params = (0..Mlp::param_count(sizes))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Mlp::from_params(sizes, params).unwrap()
    }

    #[test]
    fn param_count_formula() {
        assert_eq!(Mlp::param_count(&[10, 64, 64, 3]), 10 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
        let net = Mlp::zeros(&[10, 16, 16, 3]).unwrap();
        assert_eq!(net.params().len(), Mlp::param_count(&[10, 16, 16, 3]));
    }

    #[test]
    fn zero_weights_return_last_bias() {
        let sizes = [4, 5, 3];
        let mut net = Mlp::zeros(&sizes).unwrap();
        let n = net.params().len();
        net.params_mut()[n - 3..].copy_from_slice(&[0.5, -1.0, 2.0]);
        let y = net.predict(&[1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(y, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn single_linear_layer() {
        let net = Mlp::from_params(&[2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        let y = net.predict(&[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![3.5, 6.5]);
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sizes = [10, 16, 16, 3];
        for _ in 0..20 {
            let net = random_net(&sizes, &mut rng);
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (y, _) = net.forward(&x).unwrap();
            let expected = oracle_forward(&sizes, net.params(), &x);
            for (a, b) in y.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert_eq!(net.predict(&x).unwrap(), y);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(Mlp::from_params(&[3, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sizes = [5, 7, 6, 3];
        for _ in 0..10 {
            let net = random_net(&sizes, &mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, cache) = net.forward(&x).unwrap();
            let mut grad = vec![0.0; net.params().len()];
            net.backward(&cache, &w, &mut grad);
            let f = |n: &Mlp| -> f64 {
                n.predict(&x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let h = 1e-5;
            for i in 0..grad.len() {
                let mut p = net.clone();
                p.params_mut()[i] += h;
                let mut m = net.clone();
                m.params_mut()[i] -= h;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                let err = (fd - grad[i]).abs();
                assert!(err <= 1e-6_f64.max(1e-4 * fd.abs().max(grad[i].abs())), "param {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn orthogonal_init_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthonormal(4, 10, &mut rng);
        let qqt = &q * q.transpose();
        assert!((qqt - DMatrix::identity(4, 4)).norm() < 1e-12);
        let net = Mlp::orthogonal(&[10, 64, 3], 2f64.sqrt(), 0.01, &mut rng).unwrap();
        assert!(net.params().iter().all(|v| v.is_finite()));
        let again = Mlp::orthogonal(&[10, 64, 3], 2f64.sqrt(), 0.01, &mut ChaCha8Rng::seed_from_u64(3));
        // different stream position, different weights
        assert_ne!(again.unwrap().params(), net.params());
    }
}
