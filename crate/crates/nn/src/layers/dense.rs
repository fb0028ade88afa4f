use rand_chacha::ChaCha8Rng;

use super::conv::accumulate;
use super::{expect_batch, he_uniform, missing_cache, Layer, LayerSpec};
use crate::error::Result;
use crate::float::Float;
use crate::tensor::Tensor;

/// Fully connected layer, `y = x W^T + b` with `W` stored `[out, in]`.
#[derive(Clone)]
pub struct Dense<T> {
    inputs: usize,
    units: usize,
    weight: Tensor<T>,
    bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Float> Dense<T> {
    pub fn new(inputs: usize, units: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut weight = Tensor::parameter(&[units, inputs]);
        he_uniform(&mut weight, inputs, rng);
        Dense {
            inputs,
            units,
            weight,
            bias: Tensor::parameter(&[units]),
            cache: None,
        }
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.bias
    }

    fn run(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = expect_batch("dense", x, &[self.inputs])?;
        let mut y = Tensor::zeros(&[batch, self.units]);
        T::gemm(
            batch,
            self.inputs,
            self.units,
            T::one(),
            x.data(),
            (self.inputs as isize, 1),
            self.weight.data(),
            (1, self.inputs as isize),
            T::zero(),
            y.data_mut(),
            (self.units as isize, 1),
        );
        for row in y.data_mut().chunks_mut(self.units) {
            row.iter_mut()
                .zip(self.bias.data())
                .for_each(|(v, &b)| *v += b);
        }
        Ok(y)
    }
}

impl<T: Float> Layer<T> for Dense<T> {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Dense { units: self.units }
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.units]
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x)
    }

    fn forward_train(&mut self, x: &Tensor<T>, _rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        let y = self.run(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(|| missing_cache("dense"))?;
        let batch = x.batch();
        grad_out.expect_shape("dense backward", &[batch, self.units])?;
        let mut dw = vec![T::zero(); self.weight.len()];
        // dW = dY^T X
        T::gemm(
            self.units,
            batch,
            self.inputs,
            T::one(),
            grad_out.data(),
            (1, self.units as isize),
            x.data(),
            (self.inputs as isize, 1),
            T::zero(),
            &mut dw,
            (self.inputs as isize, 1),
        );
        let mut db = vec![T::zero(); self.units];
        for row in grad_out.data().chunks(self.units) {
            db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
        }
        let mut dx = Tensor::zeros(&[batch, self.inputs]);
        T::gemm(
            batch,
            self.units,
            self.inputs,
            T::one(),
            grad_out.data(),
            (self.units as isize, 1),
            self.weight.data(),
            (self.inputs as isize, 1),
            T::zero(),
            dx.data_mut(),
            (self.inputs as isize, 1),
        );
        accumulate(&mut self.weight, &dw);
        accumulate(&mut self.bias, &db);
        Ok(dx)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn boxed_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}
