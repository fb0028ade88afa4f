use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::float::Float;
use crate::layers::{build_layer, Layer, LayerSpec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A copy of every parameter and buffer value, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    params: Vec<Vec<T>>,
    buffers: Vec<Vec<T>>,
}

/// Sequential stack of layers over `[batch, ...input_shape]` batches.
pub struct Network<T: Float> {
    input_shape: Vec<usize>,
    layers: Vec<Box<dyn Layer<T>>>,
    mode: Mode,
    seed: u64,
    dropout_rng: ChaCha8Rng,
    recorded: bool,
}

impl<T: Float> Clone for Network<T> {
    fn clone(&self) -> Self {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(|l| l.boxed_clone()).collect(),
            mode: self.mode,
            seed: self.seed,
            dropout_rng: self.dropout_rng.clone(),
            recorded: false,
        }
    }
}

fn dropout_stream(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

impl<T: Float> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("input_shape", &self.input_shape)
            .field("layers", &self.specs())
            .field("mode", &self.mode)
            .field("seed", &self.seed)
            .finish()
    }
}

impl<T: Float> Network<T> {
    /// Materializes `specs` for a per-sample input shape, drawing initial
    /// weights from `seed`. Starts in train mode.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(NnError::Config("network needs at least one layer".into()));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NnError::Config(format!(
                "invalid input shape {input_shape:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = build_layer::<T>(spec, &shape, &mut rng)
                .map_err(|e| NnError::Config(format!("layer {i} ({}): {e}", spec.kind())))?;
            shape = layer.output_shape();
            layers.push(layer);
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            mode: Mode::Train,
            seed,
            dropout_rng: dropout_stream(seed),
            recorded: false,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers
            .last()
            .map(|l| l.output_shape())
            .unwrap_or_else(|| self.input_shape.clone())
    }

    /// Width of a flat output (the class count for classifiers).
    pub fn n_outputs(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<T>>] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        if mode != self.mode {
            self.clear_caches();
        }
        self.mode = mode;
    }

    /// Restarts the dropout mask stream; used to make train-mode passes repeatable.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = dropout_stream(seed);
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        let shape = batch.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(NnError::shape("network input", &expected, shape));
        }
        Ok(())
    }

    /// Forward pass in the current mode. Train mode records what `backward` needs.
    pub fn forward(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        match self.mode {
            Mode::Eval => {
                self.clear_caches();
                self.infer(batch)
            }
            Mode::Train => {
                let mut x = batch.clone();
                for layer in self.layers.iter_mut() {
                    x = layer.forward_train(&x, &mut self.dropout_rng)?;
                }
                self.recorded = true;
                Ok(x)
            }
        }
    }

    /// Eval-mode forward pass that leaves the network untouched.
    pub fn infer(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let mut layers = self.layers.iter();
        let first = layers.next().expect("non-empty network");
        let mut x = first.infer(batch)?;
        for layer in layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Backpropagates `grad_output` (d loss / d output) through the recorded
    /// pass, accumulating into every parameter's gradient. Returns the
    /// gradient with respect to the network input.
    pub fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.recorded {
            return Err(NnError::Usage(
                "backward called without a train-mode forward pass".into(),
            ));
        }
        self.recorded = false;
        let mut g = grad_output.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.named(|l| l.params())
    }

    pub fn named_buffers(&self) -> Vec<(String, &Tensor<T>)> {
        self.named(|l| l.buffers())
    }

    fn named<'a>(
        &'a self,
        get: impl Fn(&'a dyn Layer<T>) -> Vec<(String, &'a Tensor<T>)>,
    ) -> Vec<(String, &'a Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.spec().kind();
                get(l.as_ref())
                    .into_iter()
                    .map(move |(n, t)| (format!("{i}.{kind}.{n}"), t))
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.buffers_mut())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn weights(&self) -> Weights<T> {
        Weights {
            params: self
                .named_params()
                .iter()
                .map(|(_, t)| t.data().to_vec())
                .collect(),
            buffers: self
                .named_buffers()
                .iter()
                .map(|(_, t)| t.data().to_vec())
                .collect(),
        }
    }

    pub fn load_weights(&mut self, weights: &Weights<T>) -> Result<()> {
        let mismatch = || NnError::Config("weights do not match this network's layout".into());
        let params = self.params_mut();
        if params.len() != weights.params.len() {
            return Err(mismatch());
        }
        for (p, w) in params.into_iter().zip(&weights.params) {
            if p.len() != w.len() {
                return Err(mismatch());
            }
            p.data_mut().copy_from_slice(w);
        }
        let buffers = self.buffers_mut();
        if buffers.len() != weights.buffers.len() {
            return Err(mismatch());
        }
        for (b, w) in buffers.into_iter().zip(&weights.buffers) {
            if b.len() != w.len() {
                return Err(mismatch());
            }
            b.data_mut().copy_from_slice(w);
        }
        Ok(())
    }

    fn clear_caches(&mut self) {
        self.recorded = false;
        for layer in self.layers.iter_mut() {
            layer.clear_cache();
        }
    }
}
