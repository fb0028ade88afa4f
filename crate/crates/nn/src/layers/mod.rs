//! Layer kinds and the object-safe [`Layer`] trait every kind implements.
//!
//! All sequence layers use the `[batch, channels, length]` layout; dense
//! layers use `[batch, features]`.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod pool;
mod residual;

pub(crate) use activation::softmax_row;
pub use activation::{Dropout, Flatten, Relu, Softmax};
pub use batchnorm::BatchNorm;
pub use conv::Conv1d;
pub use dense::Dense;
pub use pool::MaxPool1d;
pub use residual::ResidualBlock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tensor::Tensor;

/// Declarative description of one layer; the unit stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel: usize,
    },
    ResidualBlock {
        filters: usize,
        kernel: usize,
        #[serde(default = "default_true")]
        batch_norm: bool,
    },
    MaxPool1d {
        width: usize,
    },
    BatchNorm,
    Dense {
        units: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Flatten,
    Softmax,
}

fn default_true() -> bool {
    true
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::ResidualBlock { .. } => "residual_block",
            LayerSpec::MaxPool1d { .. } => "max_pool1d",
            LayerSpec::BatchNorm => "batch_norm",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NnError::Config(msg));
        match *self {
            LayerSpec::Conv1d { filters, kernel }
            | LayerSpec::ResidualBlock {
                filters, kernel, ..
            } => {
                if filters == 0 {
                    return bad(format!("{}: filter count must be positive", self.kind()));
                }
                if kernel % 2 == 0 {
                    return bad(format!(
                        "{}: kernel size must be odd for symmetric same-padding, got {kernel}",
                        self.kind()
                    ));
                }
            }
            LayerSpec::MaxPool1d { width: 0 } => {
                return bad("max_pool1d: width must be positive".into())
            }
            LayerSpec::Dense { units: 0 } => {
                return bad("dense: unit count must be positive".into())
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                return bad(format!("dropout: rate must lie in [0, 1), got {rate}"))
            }
            _ => {}
        }
        Ok(())
    }
}

/// One differentiable stage of a [`crate::Network`].
///
/// `infer` is the pure eval-mode path. `forward_train` records whatever
/// `backward` needs; `backward` consumes that record, accumulates parameter
/// gradients and returns the gradient with respect to the layer input.
pub trait Layer<T: Float>: Send + Sync {
    fn spec(&self) -> LayerSpec;

    /// Per-sample output shape (without the batch dimension).
    fn output_shape(&self) -> Vec<usize>;

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    fn forward_train(&mut self, x: &Tensor<T>, rng: &mut ChaCha8Rng) -> Result<Tensor<T>>;

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    /// Trainable parameters with their names, in declaration order.
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }

    /// Non-trainable state (batch-norm running statistics).
    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }

    fn clear_cache(&mut self);

    fn boxed_clone(&self) -> Box<dyn Layer<T>>;
}

/// Materializes a layer for the given per-sample input shape.
pub fn build_layer<T: Float>(
    spec: &LayerSpec,
    input_shape: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Layer<T>>> {
    spec.validate()?;
    let seq = |what: &str| -> Result<(usize, usize)> {
        match *input_shape {
            [c, l] => Ok((c, l)),
            _ => Err(NnError::Config(format!(
                "{what} expects a [channels, length] input, got {input_shape:?}"
            ))),
        }
    };
    let layer: Box<dyn Layer<T>> = match *spec {
        LayerSpec::Conv1d { filters, kernel } => {
            let (c, l) = seq("conv1d")?;
            Box::new(Conv1d::new(c, filters, kernel, l, rng))
        }
        LayerSpec::ResidualBlock {
            filters,
            kernel,
            batch_norm,
        } => {
            let (c, l) = seq("residual_block")?;
            Box::new(ResidualBlock::new(c, filters, kernel, l, batch_norm, rng))
        }
        LayerSpec::MaxPool1d { width } => {
            let (c, l) = seq("max_pool1d")?;
            Box::new(MaxPool1d::new(c, l, width)?)
        }
        LayerSpec::BatchNorm => Box::new(BatchNorm::new(input_shape)?),
        LayerSpec::Dense { units } => match *input_shape {
            [features] => Box::new(Dense::new(features, units, rng)),
            _ => {
                return Err(NnError::Config(format!(
                    "dense expects a flat [features] input, got {input_shape:?}; insert flatten"
                )))
            }
        },
        LayerSpec::Relu => Box::new(Relu::new(input_shape)),
        LayerSpec::Dropout { rate } => Box::new(Dropout::new(input_shape, rate)),
        LayerSpec::Flatten => Box::new(Flatten::new(input_shape)),
        LayerSpec::Softmax => match *input_shape {
            [n] => Box::new(Softmax::new(n)),
            _ => {
                return Err(NnError::Config(format!(
                    "softmax expects a flat input, got {input_shape:?}"
                )))
            }
        },
    };
    Ok(layer)
}

/// He-uniform initialisation: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub(crate) fn he_uniform<T: Float>(t: &mut Tensor<T>, fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in t.data_mut() {
        *v = T::of(rng.random_range(-bound..bound));
    }
}

pub(crate) fn expect_batch<T: Float>(
    context: &str,
    x: &Tensor<T>,
    sample: &[usize],
) -> Result<usize> {
    let got = x.shape();
    if got.len() != sample.len() + 1 || got[1..] != *sample {
        let mut expected = vec![got.first().copied().unwrap_or(0)];
        expected.extend_from_slice(sample);
        return Err(NnError::shape(context, &expected, got));
    }
    Ok(got[0])
}

pub(crate) fn missing_cache(kind: &str) -> NnError {
    NnError::Usage(format!(
        "{kind}: backward called without a recorded forward pass"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_is_tagged_by_kind() {
        let s = serde_json::to_string(&LayerSpec::Conv1d {
            filters: 64,
            kernel: 5,
        })
        .unwrap();
        assert_eq!(s, r#"{"kind":"conv1d","filters":64,"kernel":5}"#);
        let back: LayerSpec = serde_json::from_str(r#"{"kind":"batch_norm"}"#).unwrap();
        assert_eq!(back, LayerSpec::BatchNorm);
    }

    #[test]
    fn validation_rejects_even_kernels_and_bad_dropout() {
        assert!(LayerSpec::Conv1d {
            filters: 4,
            kernel: 4
        }
        .validate()
        .is_err());
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: -0.1 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: 0.0 }.validate().is_ok());
    }
}
