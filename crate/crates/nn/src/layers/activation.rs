use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{expect_batch, missing_cache, Layer, LayerSpec};
use crate::error::Result;
use crate::float::Float;
use crate::tensor::Tensor;

#[derive(Clone)]
pub struct Relu {
    shape: Vec<usize>,
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new(shape: &[usize]) -> Self {
        Relu {
            shape: shape.to_vec(),
            mask: None,
        }
    }
}

impl<T: Float> Layer<T> for Relu {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Relu
    }

    fn output_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_batch("relu", x, &self.shape)?;
        Ok(x.map(|v| v.max(T::zero())))
    }

    fn forward_train(&mut self, x: &Tensor<T>, _rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or_else(|| missing_cache("relu"))?;
        let mut dx = grad_out.clone();
        dx.data_mut()
            .iter_mut()
            .zip(&mask)
            .filter(|(_, &keep)| !keep)
            .for_each(|(g, _)| *g = T::zero());
        Ok(dx)
    }

    fn clear_cache(&mut self) {
        self.mask = None;
    }

    fn boxed_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` in training so
/// that eval mode is the identity.
#[derive(Clone)]
pub struct Dropout {
    shape: Vec<usize>,
    rate: f64,
    scale: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(shape: &[usize], rate: f64) -> Self {
        Dropout {
            shape: shape.to_vec(),
            rate,
            scale: None,
        }
    }
}

impl<T: Float> Layer<T> for Dropout {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Dropout { rate: self.rate }
    }

    fn output_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_batch("dropout", x, &self.shape)?;
        Ok(x.clone())
    }

    fn forward_train(&mut self, x: &Tensor<T>, rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        expect_batch("dropout", x, &self.shape)?;
        let keep = 1.0 / (1.0 - self.rate);
        let scale: Vec<f64> = if self.rate == 0.0 {
            vec![1.0; x.len()]
        } else {
            (0..x.len())
                .map(|_| {
                    if rng.random::<f64>() < self.rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        };
        let mut y = x.clone();
        y.data_mut()
            .iter_mut()
            .zip(&scale)
            .for_each(|(v, &s)| *v *= T::of(s));
        self.scale = Some(scale);
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let scale = self.scale.take().ok_or_else(|| missing_cache("dropout"))?;
        let mut dx = grad_out.clone();
        dx.data_mut()
            .iter_mut()
            .zip(&scale)
            .for_each(|(v, &s)| *v *= T::of(s));
        Ok(dx)
    }

    fn clear_cache(&mut self) {
        self.scale = None;
    }

    fn boxed_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// `[C, L]` to `[C * L]`, channel-major; a pure reshape of the row-major buffer.
#[derive(Clone)]
pub struct Flatten {
    shape: Vec<usize>,
    batch: Option<usize>,
}

impl Flatten {
    pub fn new(shape: &[usize]) -> Self {
        Flatten {
            shape: shape.to_vec(),
            batch: None,
        }
    }
}

impl<T: Float> Layer<T> for Flatten {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Flatten
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.shape.iter().product()]
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = expect_batch("flatten", x, &self.shape)?;
        x.clone().reshape(&[batch, self.shape.iter().product()])
    }

    fn forward_train(&mut self, x: &Tensor<T>, _rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.batch = Some(x.batch());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.batch.take().ok_or_else(|| missing_cache("flatten"))?;
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.shape);
        grad_out.clone().reshape(&shape)
    }

    fn clear_cache(&mut self) {
        self.batch = None;
    }

    fn boxed_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// Row-wise softmax over `[batch, n]`. Networks built for training end in
/// logits instead; the loss applies its own stabilised softmax.
#[derive(Clone)]
pub struct Softmax {
    n: usize,
    probs: Option<Vec<f64>>,
}

impl Softmax {
    pub fn new(n: usize) -> Self {
        Softmax { n, probs: None }
    }
}

pub(crate) fn softmax_row<T: Float>(row: &[T]) -> Vec<f64> {
    let max = row
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<T: Float> Layer<T> for Softmax {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Softmax
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.n]
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = expect_batch("softmax", x, &[self.n])?;
        let data = x
            .data()
            .chunks(self.n)
            .flat_map(softmax_row)
            .map(T::of)
            .collect();
        Tensor::new(&[batch, self.n], data)
    }

    fn forward_train(&mut self, x: &Tensor<T>, _rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.probs = Some(y.data().iter().map(|v| v.as_f64()).collect());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let probs = self.probs.take().ok_or_else(|| missing_cache("softmax"))?;
        let mut dx = grad_out.clone();
        for (g_row, p_row) in dx.data_mut().chunks_mut(self.n).zip(probs.chunks(self.n)) {
            let dot: f64 = g_row.iter().zip(p_row).map(|(g, p)| g.as_f64() * p).sum();
            for (g, &p) in g_row.iter_mut().zip(p_row) {
                *g = T::of(p * (g.as_f64() - dot));
            }
        }
        Ok(dx)
    }

    fn clear_cache(&mut self) {
        self.probs = None;
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
    fn dropout_expectation_matches_eval_output() {
        let mut layer = Dropout::new(&[8], 0.2);
        let x =
            Tensor::<f64>::from_f64(&[1, 8], &[1.0, -2.0, 0.5, 3.0, 4.0, -1.0, 2.0, 0.25]).unwrap();
        let eval = Layer::<f64>::infer(&layer, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 100_000;
        let mut mean = [0.0; 8];
        for _ in 0..trials {
            let y = layer.forward_train(&x, &mut rng).unwrap();
            mean.iter_mut().zip(y.data()).for_each(|(m, v)| *m += v);
        }
        for (m, e) in mean.iter().zip(eval.data()) {
            let m = m / trials as f64;
            assert!((m - e).abs() <= 0.01 * e.abs(), "{m} vs {e}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let s = Softmax::new(3);
        let x = Tensor::<f32>::from_f64(&[2, 3], &[1.0, 2.0, 3.0, 1000.0, 1000.0, -5.0]).unwrap();
        let y = Layer::<f32>::infer(&s, &x).unwrap();
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
