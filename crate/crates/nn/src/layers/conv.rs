use rand_chacha::ChaCha8Rng;

use super::{expect_batch, he_uniform, missing_cache, Layer, LayerSpec};
use crate::error::Result;
use crate::float::Float;
use crate::tensor::Tensor;

/// 1-D convolution with "same" zero padding.
///
/// Uses the cross-correlation convention of deep-learning frameworks:
/// `y[o, l] = b[o] + sum_{c, k} w[o, c, k] * x[c, l + k - K/2]`, with
/// out-of-range taps reading zero. Weights are stored `[out, in, kernel]`.
#[derive(Clone)]
pub struct Conv1d<T> {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    length: usize,
    weight: Tensor<T>,
    bias: Option<Tensor<T>>,
    cache: Option<Tensor<T>>,
}

impl<T: Float> Conv1d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        length: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut weight = Tensor::parameter(&[out_channels, in_channels, kernel]);
        he_uniform(&mut weight, in_channels * kernel, rng);
        Conv1d {
            in_channels,
            out_channels,
            kernel,
            length,
            weight,
            bias: Some(Tensor::parameter(&[out_channels])),
            cache: None,
        }
    }

    /// Drops the bias term (used ahead of batch norm, which cancels it).
    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> Option<&mut Tensor<T>> {
        self.bias.as_mut()
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel
    }

    /// Unfolds one sample `[in, L]` into the `[in * K, L]` block of a patch
    /// matrix whose rows are `stride` long, starting at column `offset`.
    fn im2col(&self, x: &[T], cols: &mut [T], stride: usize, offset: usize) {
        let (len, k_size) = (self.length, self.kernel);
        let pad = k_size / 2;
        for c in 0..self.in_channels {
            let src = &x[c * len..(c + 1) * len];
            for k in 0..k_size {
                let r = c * k_size + k;
                let row = &mut cols[r * stride + offset..r * stride + offset + len];
                // row[l] = src[l + k - pad]
                let lo = pad.saturating_sub(k).min(len);
                let hi = (len + pad).saturating_sub(k).min(len);
                row[..lo].iter_mut().for_each(|v| *v = T::zero());
                if lo < hi {
                    row[lo..hi].copy_from_slice(&src[lo + k - pad..hi + k - pad]);
                }
                row[hi.max(lo)..].iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters patch gradients back onto `dx`.
    fn col2im_add(&self, cols: &[T], stride: usize, offset: usize, dx: &mut [T]) {
        let (len, k_size) = (self.length, self.kernel);
        let pad = k_size / 2;
        for c in 0..self.in_channels {
            let dst = &mut dx[c * len..(c + 1) * len];
            for k in 0..k_size {
                let r = c * k_size + k;
                let row = &cols[r * stride + offset..r * stride + offset + len];
                let lo = pad.saturating_sub(k).min(len);
                let hi = (len + pad).saturating_sub(k).min(len);
                if lo < hi {
                    dst[lo + k - pad..hi + k - pad]
                        .iter_mut()
                        .zip(&row[lo..hi])
                        .for_each(|(d, &g)| *d += g);
                }
            }
        }
    }

    /// Samples per GEMM: bounds the unfolded patch matrix to about 8M elements.
    fn group_size(&self, batch: usize) -> usize {
        (GROUP_ELEMS / (self.patch_rows() * self.length).max(1)).clamp(1, batch.max(1))
    }

    /// Unfolds samples `[b0, b0 + g)` into a `[in * K, g * L]` patch matrix.
    fn unfold_group(&self, x: &[T], b0: usize, g: usize, cols: &mut [T]) {
        let per_in = self.in_channels * self.length;
        let width = g * self.length;
        for j in 0..g {
            let xb = &x[(b0 + j) * per_in..(b0 + j + 1) * per_in];
            self.im2col(xb, cols, width, j * self.length);
        }
    }

    fn run(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = expect_batch("conv1d", x, &[self.in_channels, self.length])?;
        let (len, rows) = (self.length, self.patch_rows());
        let per_out = self.out_channels * len;
        let mut out = Tensor::zeros(&[batch, self.out_channels, len]);
        let group = self.group_size(batch);
        let mut cols = vec![T::zero(); rows * group * len];
        let mut y = vec![T::zero(); self.out_channels * group * len];
        for b0 in (0..batch).step_by(group) {
            let g = group.min(batch - b0);
            let width = g * len;
            self.unfold_group(x.data(), b0, g, &mut cols);
            T::gemm(
                self.out_channels,
                rows,
                width,
                T::one(),
                self.weight.data(),
                (rows as isize, 1),
                &cols,
                (width as isize, 1),
                T::zero(),
                &mut y,
                (width as isize, 1),
            );
            // [out, g * L] -> [g, out, L]
            for o in 0..self.out_channels {
                let b = self.bias.as_ref().map_or(T::zero(), |b| b.data()[o]);
                for j in 0..g {
                    let src = &y[o * width + j * len..o * width + (j + 1) * len];
                    let dst = &mut out.data_mut()
                        [(b0 + j) * per_out + o * len..(b0 + j) * per_out + (o + 1) * len];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = v + b;
                    }
                }
            }
        }
        Ok(out)
    }
}

const GROUP_ELEMS: usize = 1 << 23;

impl<T: Float> Layer<T> for Conv1d<T> {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Conv1d {
            filters: self.out_channels,
            kernel: self.kernel,
        }
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.length]
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
        let x = self.cache.take().ok_or_else(|| missing_cache("conv1d"))?;
        let batch = x.batch();
        grad_out.expect_shape("conv1d backward", &[batch, self.out_channels, self.length])?;
        let (len, rows) = (self.length, self.patch_rows());
        let per_in = self.in_channels * len;
        let per_out = self.out_channels * len;
        let group = self.group_size(batch);
        let mut dx = Tensor::zeros(x.shape());
        let mut cols = vec![T::zero(); rows * group * len];
        let mut dcols = vec![T::zero(); rows * group * len];
        let mut gy = vec![T::zero(); self.out_channels * group * len];
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); self.out_channels];
        for b0 in (0..batch).step_by(group) {
            let g = group.min(batch - b0);
            let width = g * len;
            // [g, out, L] -> [out, g * L]
            for j in 0..g {
                let gb = &grad_out.data()[(b0 + j) * per_out..(b0 + j + 1) * per_out];
                for (o, src) in gb.chunks(len).enumerate() {
                    gy[o * width + j * len..o * width + (j + 1) * len].copy_from_slice(src);
                    db[o] += src.iter().copied().sum::<T>();
                }
            }
            self.unfold_group(x.data(), b0, g, &mut cols);
            // dW += dY * patches^T
            T::gemm(
                self.out_channels,
                width,
                rows,
                T::one(),
                &gy,
                (width as isize, 1),
                &cols,
                (1, width as isize),
                T::one(),
                &mut dw,
                (rows as isize, 1),
            );
            // dPatches = W^T * dY
            T::gemm(
                rows,
                self.out_channels,
                width,
                T::one(),
                self.weight.data(),
                (1, rows as isize),
                &gy,
                (width as isize, 1),
                T::zero(),
                &mut dcols,
                (width as isize, 1),
            );
            for j in 0..g {
                let dxb = &mut dx.data_mut()[(b0 + j) * per_in..(b0 + j + 1) * per_in];
                self.col2im_add(&dcols, width, j * len, dxb);
            }
        }
        accumulate(&mut self.weight, &dw);
        if let Some(bias) = self.bias.as_mut() {
            accumulate(bias, &db);
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("weight".into(), &self.weight)];
        if let Some(bias) = &self.bias {
            out.push(("bias".into(), bias));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.weight];
        if let Some(bias) = self.bias.as_mut() {
            out.push(bias);
        }
        out
    }

    fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn boxed_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

pub(crate) fn accumulate<T: Float>(param: &mut Tensor<T>, delta: &[T]) {
    param.enable_grad();
    if let Some(g) = param.grad_mut() {
        g.iter_mut().zip(delta).for_each(|(g, &d)| *g += d);
    }
}
