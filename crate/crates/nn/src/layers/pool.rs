use rand_chacha::ChaCha8Rng;

use super::{expect_batch, missing_cache, Layer, LayerSpec};
use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tensor::Tensor;

/// Non-overlapping max pooling (stride == width); a trailing partial window is dropped.
///
/// Ties resolve to the earliest position, which is where the gradient is routed.
#[derive(Clone)]
pub struct MaxPool1d {
    channels: usize,
    length: usize,
    width: usize,
    cache: Option<(usize, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(channels: usize, length: usize, width: usize) -> Result<Self> {
        if length < width {
            return Err(NnError::Config(format!(
                "max_pool1d of width {width} needs length >= {width}, got {length}"
            )));
        }
        Ok(MaxPool1d {
            channels,
            length,
            width,
            cache: None,
        })
    }

    fn out_len(&self) -> usize {
        self.length / self.width
    }

    fn run<T: Float>(&self, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Vec<usize>)> {
        let batch = expect_batch("max_pool1d", x, &[self.channels, self.length])?;
        let out_len = self.out_len();
        let mut y = Tensor::zeros(&[batch, self.channels, out_len]);
        let mut argmax = if record {
            Vec::with_capacity(y.len())
        } else {
            Vec::new()
        };
        for (row, (src, dst)) in x
            .data()
            .chunks(self.length)
            .zip(y.data_mut().chunks_mut(out_len))
            .enumerate()
        {
            for (j, out) in dst.iter_mut().enumerate() {
                let start = j * self.width;
                let mut best = start;
                for i in start + 1..start + self.width {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                *out = src[best];
                if record {
                    argmax.push(row * self.length + best);
                }
            }
        }
        Ok((y, argmax))
    }
}

impl<T: Float> Layer<T> for MaxPool1d {
    fn spec(&self) -> LayerSpec {
        LayerSpec::MaxPool1d { width: self.width }
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.channels, self.out_len()]
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, false)?.0)
    }

    fn forward_train(&mut self, x: &Tensor<T>, _rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        let (y, argmax) = self.run(x, true)?;
        self.cache = Some((x.batch(), argmax));
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, argmax) = self
            .cache
            .take()
            .ok_or_else(|| missing_cache("max_pool1d"))?;
        grad_out.expect_shape(
            "max_pool1d backward",
            &[batch, self.channels, self.out_len()],
        )?;
        let mut dx = Tensor::zeros(&[batch, self.channels, self.length]);
        for (&src, &g) in argmax.iter().zip(grad_out.data()) {
            dx.data_mut()[src] += g;
        }
        Ok(dx)
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
    fn pools_pairs_and_drops_remainder() {
        let pool = MaxPool1d::new(1, 5, 2).unwrap();
        let x = Tensor::<f64>::from_f64(&[1, 1, 5], &[1.0, 3.0, -2.0, -5.0, 9.0]).unwrap();
        let y = Layer::<f64>::infer(&pool, &x).unwrap();
        assert_eq!(y.data(), &[3.0, -2.0]);
    }

    #[test]
    fn gradient_routes_to_first_maximum() {
        let mut pool = MaxPool1d::new(1, 4, 2).unwrap();
        let x = Tensor::<f64>::from_f64(&[1, 1, 4], &[2.0, 2.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        pool.forward_train(&x, &mut rng).unwrap();
        let g = Tensor::<f64>::from_f64(&[1, 1, 2], &[1.0, 5.0]).unwrap();
        let dx = pool.backward(&g).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn too_short_input_is_a_config_error() {
        assert!(MaxPool1d::new(2, 1, 2).is_err());
    }
}
