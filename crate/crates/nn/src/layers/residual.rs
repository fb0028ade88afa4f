use rand_chacha::ChaCha8Rng;

use super::{expect_batch, missing_cache, BatchNorm, Conv1d, Layer, LayerSpec};
use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tensor::Tensor;

/// Two-convolution residual block:
/// `relu(bn(conv(relu(bn(conv(x))))) + shortcut(x))`.
///
/// The shortcut is the identity when channel counts match and a learned
/// kernel-size-1 projection otherwise. Batch norm can be switched off; when
/// it is on, the two convolutions carry no bias.
#[derive(Clone)]
pub struct ResidualBlock<T> {
    in_channels: usize,
    filters: usize,
    length: usize,
    conv1: Conv1d<T>,
    bn1: Option<BatchNorm<T>>,
    conv2: Conv1d<T>,
    bn2: Option<BatchNorm<T>>,
    projection: Option<Conv1d<T>>,
    cache: Option<BlockCache>,
}

#[derive(Clone)]
struct BlockCache {
    inner_mask: Vec<bool>,
    outer_mask: Vec<bool>,
}

impl<T: Float> ResidualBlock<T> {
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        length: usize,
        batch_norm: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut conv1 = Conv1d::new(in_channels, filters, kernel, length, rng);
        let mut conv2 = Conv1d::new(filters, filters, kernel, length, rng);
        if batch_norm {
            conv1 = conv1.without_bias();
            conv2 = conv2.without_bias();
        }
        let projection =
            (in_channels != filters).then(|| Conv1d::new(in_channels, filters, 1, length, rng));
        let bn = || batch_norm.then(|| BatchNorm::new(&[filters, length]).expect("2-d shape"));
        ResidualBlock {
            in_channels,
            filters,
            length,
            conv1,
            bn1: bn(),
            conv2,
            bn2: bn(),
            projection,
            cache: None,
        }
    }

    /// Mutable access to the two convolutions and the optional projection.
    pub fn convs_mut(&mut self) -> (&mut Conv1d<T>, &mut Conv1d<T>, Option<&mut Conv1d<T>>) {
        (&mut self.conv1, &mut self.conv2, self.projection.as_mut())
    }

    fn kernel(&self) -> usize {
        self.conv1.weight().shape()[2]
    }
}

fn add_assign<T: Float>(dst: &mut Tensor<T>, src: &Tensor<T>) {
    dst.data_mut()
        .iter_mut()
        .zip(src.data())
        .for_each(|(a, &b)| *a += b);
}

fn relu_in_place<T: Float>(t: &mut Tensor<T>) -> Vec<bool> {
    t.data_mut()
        .iter_mut()
        .map(|v| {
            let keep = *v > T::zero();
            if !keep {
                *v = T::zero();
            }
            keep
        })
        .collect()
}

fn mask_grad<T: Float>(g: &mut Tensor<T>, mask: &[bool]) {
    g.data_mut()
        .iter_mut()
        .zip(mask)
        .filter(|(_, &keep)| !keep)
        .for_each(|(v, _)| *v = T::zero());
}

impl<T: Float> Layer<T> for ResidualBlock<T> {
    fn spec(&self) -> LayerSpec {
        LayerSpec::ResidualBlock {
            filters: self.filters,
            kernel: self.kernel(),
            batch_norm: self.bn1.is_some(),
        }
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.filters, self.length]
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_batch("residual_block", x, &[self.in_channels, self.length])?;
        let mut h = self.conv1.infer(x)?;
        if let Some(bn) = &self.bn1 {
            h = bn.infer(&h)?;
        }
        relu_in_place(&mut h);
        let mut h = self.conv2.infer(&h)?;
        if let Some(bn) = &self.bn2 {
            h = bn.infer(&h)?;
        }
        match &self.projection {
            Some(p) => add_assign(&mut h, &p.infer(x)?),
            None => add_assign(&mut h, x),
        }
        relu_in_place(&mut h);
        Ok(h)
    }

    fn forward_train(&mut self, x: &Tensor<T>, rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        expect_batch("residual_block", x, &[self.in_channels, self.length])?;
        let mut h = self.conv1.forward_train(x, rng)?;
        if let Some(bn) = self.bn1.as_mut() {
            h = bn.forward_train(&h, rng)?;
        }
        let inner_mask = relu_in_place(&mut h);
        let mut h = self.conv2.forward_train(&h, rng)?;
        if let Some(bn) = self.bn2.as_mut() {
            h = bn.forward_train(&h, rng)?;
        }
        match self.projection.as_mut() {
            Some(p) => add_assign(&mut h, &p.forward_train(x, rng)?),
            None => add_assign(&mut h, x),
        }
        let outer_mask = relu_in_place(&mut h);
        self.cache = Some(BlockCache {
            inner_mask,
            outer_mask,
        });
        Ok(h)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| missing_cache("residual_block"))?;
        if grad_out.len() != cache.outer_mask.len() {
            return Err(NnError::shape(
                "residual_block backward",
                &[cache.outer_mask.len()],
                &[grad_out.len()],
            ));
        }
        let mut dz = grad_out.clone();
        mask_grad(&mut dz, &cache.outer_mask);
        let mut dh = match self.bn2.as_mut() {
            Some(bn) => bn.backward(&dz)?,
            None => dz.clone(),
        };
        dh = self.conv2.backward(&dh)?;
        mask_grad(&mut dh, &cache.inner_mask);
        if let Some(bn) = self.bn1.as_mut() {
            dh = bn.backward(&dh)?;
        }
        let mut dx = self.conv1.backward(&dh)?;
        match self.projection.as_mut() {
            Some(p) => add_assign(&mut dx, &p.backward(&dz)?),
            None => add_assign(&mut dx, &dz),
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let parts: [(&str, Option<&dyn Layer<T>>); 5] = [
            ("conv1", Some(&self.conv1)),
            ("bn1", self.bn1.as_ref().map(|b| b as &dyn Layer<T>)),
            ("conv2", Some(&self.conv2)),
            ("bn2", self.bn2.as_ref().map(|b| b as &dyn Layer<T>)),
            (
                "projection",
                self.projection.as_ref().map(|p| p as &dyn Layer<T>),
            ),
        ];
        parts
            .into_iter()
            .filter_map(|(prefix, layer)| layer.map(|l| (prefix, l)))
            .flat_map(|(prefix, layer)| {
                layer
                    .params()
                    .into_iter()
                    .map(move |(name, t)| (format!("{prefix}.{name}"), t))
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.conv1.params_mut();
        if let Some(bn) = self.bn1.as_mut() {
            out.extend(bn.params_mut());
        }
        out.extend(self.conv2.params_mut());
        if let Some(bn) = self.bn2.as_mut() {
            out.extend(bn.params_mut());
        }
        if let Some(p) = self.projection.as_mut() {
            out.extend(p.params_mut());
        }
        out
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, bn) in [("bn1", &self.bn1), ("bn2", &self.bn2)] {
            if let Some(bn) = bn {
                for (name, t) in bn.buffers() {
                    out.push((format!("{prefix}.{name}"), t));
                }
            }
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        if let Some(bn) = self.bn1.as_mut() {
            out.extend(bn.buffers_mut());
        }
        if let Some(bn) = self.bn2.as_mut() {
            out.extend(bn.buffers_mut());
        }
        out
    }

    fn clear_cache(&mut self) {
        self.cache = None;
        self.conv1.clear_cache();
        self.conv2.clear_cache();
        if let Some(bn) = self.bn1.as_mut() {
            bn.clear_cache();
        }
        if let Some(bn) = self.bn2.as_mut() {
            bn.clear_cache();
        }
        if let Some(p) = self.projection.as_mut() {
            p.clear_cache();
        }
    }

    fn boxed_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::layers::Relu;

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_leave_the_shortcut() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut block = ResidualBlock::<f64>::new(4, 4, 5, 6, false, &mut rng);
        let (c1, c2, proj) = block.convs_mut();
        assert!(proj.is_none());
        c1.weight_mut().data_mut().iter_mut().for_each(|v| *v = 0.0);
        c2.weight_mut().data_mut().iter_mut().for_each(|v| *v = 0.0);
        let x = random_tensor(&[2, 4, 6], &mut rng);
        let y = block.infer(&x).unwrap();
        let want = x.map(|v| v.max(0.0));
        assert_eq!(y.data(), want.data());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block = ResidualBlock::<f64>::new(3, 5, 5, 7, true, &mut rng);
        let y = block.infer(&Tensor::zeros(&[2, 3, 7])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    /// Composes the block from its standalone parts and compares, in train mode.
    #[test]
    fn matches_independent_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut block = ResidualBlock::<f64>::new(3, 6, 5, 10, true, &mut rng);
        let mut conv1 = block.conv1.clone();
        let mut bn1 = block.bn1.clone().unwrap();
        let mut conv2 = block.conv2.clone();
        let mut bn2 = block.bn2.clone().unwrap();
        let mut proj = block.projection.clone().unwrap();
        let mut relu = Relu::new(&[6, 10]);
        let x = random_tensor(&[4, 3, 10], &mut rng);

        let y = block.forward_train(&x, &mut rng).unwrap();

        let h = conv1.forward_train(&x, &mut rng).unwrap();
        let h = bn1.forward_train(&h, &mut rng).unwrap();
        let h = relu.forward_train(&h, &mut rng).unwrap();
        let h = conv2.forward_train(&h, &mut rng).unwrap();
        let mut h = bn2.forward_train(&h, &mut rng).unwrap();
        let s = proj.forward_train(&x, &mut rng).unwrap();
        add_assign(&mut h, &s);
        let want = relu.forward_train(&h, &mut rng).unwrap();

        for (a, b) in y.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12));
        }
    }
}
