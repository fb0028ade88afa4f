use rand_chacha::ChaCha8Rng;

use super::conv::accumulate;
use super::{expect_batch, missing_cache, Layer, LayerSpec};
use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tensor::Tensor;

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over the batch and length axes.
///
/// Accepts `[channels, length]` or `[features]` samples. Training uses
/// biased batch statistics and folds the unbiased variance into the
/// running estimate with momentum 0.1; eval mode uses the running values.
#[derive(Clone)]
pub struct BatchNorm<T> {
    sample_shape: Vec<usize>,
    channels: usize,
    inner: usize,
    gamma: Tensor<T>,
    beta: Tensor<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Clone)]
struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    batch: usize,
}

impl<T: Float> BatchNorm<T> {
    pub fn new(sample_shape: &[usize]) -> Result<Self> {
        let (channels, inner) = match *sample_shape {
            [c, l] => (c, l),
            [f] => (f, 1),
            _ => {
                return Err(NnError::Config(format!(
                    "batch_norm expects [channels, length] or [features], got {sample_shape:?}"
                )))
            }
        };
        let mut gamma = Tensor::parameter(&[channels]);
        gamma.data_mut().iter_mut().for_each(|v| *v = T::one());
        Ok(BatchNorm {
            sample_shape: sample_shape.to_vec(),
            channels,
            inner,
            gamma,
            beta: Tensor::parameter(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            cache: None,
        })
    }

    pub fn running_mean(&self) -> &[T] {
        self.running_mean.data()
    }

    pub fn running_var(&self) -> &[T] {
        self.running_var.data()
    }

    /// Visits the contiguous runs of channel `c` across the batch.
    fn for_channel(&self, data: &[T], batch: usize, c: usize, mut f: impl FnMut(usize, &[T])) {
        for b in 0..batch {
            let start = (b * self.channels + c) * self.inner;
            f(start, &data[start..start + self.inner]);
        }
    }
}

impl<T: Float> Layer<T> for BatchNorm<T> {
    fn spec(&self) -> LayerSpec {
        LayerSpec::BatchNorm
    }

    fn output_shape(&self) -> Vec<usize> {
        self.sample_shape.clone()
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = expect_batch("batch_norm", x, &self.sample_shape)?;
        let mut y = x.clone();
        let eps = T::of(EPS);
        for c in 0..self.channels {
            let scale = self.gamma.data()[c] / (self.running_var.data()[c] + eps).sqrt();
            let shift = self.beta.data()[c] - self.running_mean.data()[c] * scale;
            for b in 0..batch {
                let start = (b * self.channels + c) * self.inner;
                for v in &mut y.data_mut()[start..start + self.inner] {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(y)
    }

    fn forward_train(&mut self, x: &Tensor<T>, _rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        let batch = expect_batch("batch_norm", x, &self.sample_shape)?;
        let count = batch * self.inner;
        let n = T::of(count as f64);
        let eps = T::of(EPS);
        let momentum = T::of(MOMENTUM);
        let mut y = x.clone();
        let mut x_hat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); self.channels];
        #[allow(clippy::needless_range_loop)]
        for c in 0..self.channels {
            let mut sum = T::zero();
            self.for_channel(x.data(), batch, c, |_, run| {
                sum += run.iter().copied().sum::<T>()
            });
            let mean = sum / n;
            let mut sq = T::zero();
            self.for_channel(x.data(), batch, c, |_, run| {
                sq += run.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>()
            });
            let var = sq / n;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[c] = istd;
            let (g, b) = (self.gamma.data()[c], self.beta.data()[c]);
            let out = y.data_mut();
            self.for_channel(x.data(), batch, c, |start, run| {
                for (i, &v) in run.iter().enumerate() {
                    let h = (v - mean) * istd;
                    x_hat[start + i] = h;
                    out[start + i] = g * h + b;
                }
            });
            let unbiased = if count > 1 {
                var * n / T::of((count - 1) as f64)
            } else {
                var
            };
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = (T::one() - momentum) * *rm + momentum * mean;
            let rv = &mut self.running_var.data_mut()[c];
            *rv = (T::one() - momentum) * *rv + momentum * unbiased;
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            batch,
        });
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| missing_cache("batch_norm"))?;
        let mut shape = vec![cache.batch];
        shape.extend_from_slice(&self.sample_shape);
        grad_out.expect_shape("batch_norm backward", &shape)?;
        let n = T::of((cache.batch * self.inner) as f64);
        let g = grad_out.data();
        let mut dx = Tensor::zeros(&shape);
        let mut dgamma = vec![T::zero(); self.channels];
        let mut dbeta = vec![T::zero(); self.channels];
        for c in 0..self.channels {
            let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
            self.for_channel(g, cache.batch, c, |start, run| {
                let xh = &cache.x_hat[start..start + run.len()];
                sum_g += run.iter().copied().sum::<T>();
                sum_gx += run.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
            });
            dgamma[c] = sum_gx;
            dbeta[c] = sum_g;
            let k = self.gamma.data()[c] * cache.inv_std[c] / n;
            let out = dx.data_mut();
            self.for_channel(g, cache.batch, c, |start, run| {
                for (i, &gi) in run.iter().enumerate() {
                    out[start + i] = k * (n * gi - sum_g - cache.x_hat[start + i] * sum_gx);
                }
            });
        }
        accumulate(&mut self.gamma, &dgamma);
        accumulate(&mut self.beta, &dbeta);
        Ok(dx)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("running_mean".into(), &self.running_mean),
            ("running_var".into(), &self.running_var),
        ]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn boxed_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn train_output_has_zero_mean_unit_variance_per_channel() {
        let mut bn = BatchNorm::<f64>::new(&[2, 3]).unwrap();
        let vals: Vec<f64> = (0..24)
            .map(|i| (i as f64 * 1.7).cos() * 3.0 + 1.0)
            .collect();
        let x = Tensor::from_f64(&[4, 2, 3], &vals).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = bn.forward_train(&x, &mut rng).unwrap();
        for c in 0..2 {
            let v: Vec<f64> = (0..4)
                .flat_map(|b| y.data()[(b * 2 + c) * 3..(b * 2 + c + 1) * 3].to_vec())
                .collect();
            let mean = v.iter().sum::<f64>() / 12.0;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        // running stats moved towards batch stats
        assert!(bn.running_mean().iter().any(|&m| m != 0.0));
    }

    #[test]
    fn fresh_layer_is_identity_in_eval_mode_up_to_eps() {
        let bn = BatchNorm::<f64>::new(&[3]).unwrap();
        let x = Tensor::from_f64(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        let y = bn.infer(&x).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4 * a.abs().max(1.0));
        }
    }
}
