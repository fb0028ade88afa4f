//! Central finite-difference verification of analytic gradients (64-bit only).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{build_layer, Layer, LayerSpec};
use crate::loss::cross_entropy;
use crate::network::{Mode, Network};
use crate::tensor::Tensor;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// Which value produced the maximum.
    pub worst: String,
    pub checked: usize,
}

impl GradCheck {
    fn new() -> Self {
        GradCheck {
            max_rel_error: 0.0,
            worst: String::new(),
            checked: 0,
        }
    }

    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = rel_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || self.checked == 1 {
            self.max_rel_error = err;
            self.worst = what();
        }
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("consistent shape")
}

/// Distinct values at least 0.05 apart so no pooling window is near a tie.
fn spaced(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.05).collect();
    values.shuffle(rng);
    Tensor::new(shape, values).expect("consistent shape")
}

/// Random probe for a layer kind: spaced distinct values for pooling, uniform otherwise.
pub fn probe_for(spec: &LayerSpec, batch_shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        LayerSpec::MaxPool1d { .. } => spaced(batch_shape, &mut rng),
        _ => uniform(batch_shape, &mut rng),
    }
}

/// Builds `spec` for `batch_shape[1..]` and checks input and parameter gradients
/// of the train-mode forward pass under the loss `sum(y * r)` for a fixed random `r`.
pub fn gradient_check(
    spec: &LayerSpec,
    probe: &Tensor<f64>,
    eps: f64,
    seed: u64,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = build_layer::<f64>(spec, &probe.shape()[1..], &mut rng)?;
    gradient_check_layer(layer.as_mut(), probe, eps, seed)
}

pub fn gradient_check_layer(
    layer: &mut dyn Layer<f64>,
    probe: &Tensor<f64>,
    eps: f64,
    seed: u64,
) -> Result<GradCheck> {
    // Every pass reuses the same mask stream so dropout is a fixed function.
    let mask_rng = || ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let y = layer.forward_train(probe, &mut mask_rng())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let weights = uniform(y.shape(), &mut rng);
    let loss_of = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = layer.forward_train(x, &mut mask_rng())?;
        layer.clear_cache();
        Ok(y.data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&weights)?;
    let analytic_params: Vec<(String, Vec<f64>)> = layer
        .params()
        .into_iter()
        .map(|(n, t)| (n, t.grad().map(|g| g.to_vec()).unwrap_or_default()))
        .collect();

    let mut report = GradCheck::new();
    let mut x = probe.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps;
        let plus = loss_of(layer, &x)?;
        x.data_mut()[i] = orig - eps;
        let minus = loss_of(layer, &x)?;
        x.data_mut()[i] = orig;
        report.record(
            || format!("input[{i}]"),
            dx.data()[i],
            (plus - minus) / (2.0 * eps),
        );
    }
    for (pi, (name, analytic)) in analytic_params.iter().enumerate() {
        for (j, &a) in analytic.iter().enumerate() {
            let nudge = |layer: &mut dyn Layer<f64>, v: f64| {
                layer.params_mut()[pi].data_mut()[j] = v;
            };
            let orig = layer.params()[pi].1.data()[j];
            nudge(layer, orig + eps);
            let plus = loss_of(layer, probe)?;
            nudge(layer, orig - eps);
            let minus = loss_of(layer, probe)?;
            nudge(layer, orig);
            report.record(|| format!("{name}[{j}]"), a, (plus - minus) / (2.0 * eps));
        }
    }
    Ok(report)
}

/// Whole-network check against mean cross-entropy, train mode.
pub fn gradient_check_network(
    net: &mut Network<f64>,
    probe: &Tensor<f64>,
    labels: &[usize],
    eps: f64,
    seed: u64,
) -> Result<GradCheck> {
    net.set_mode(Mode::Train);
    let loss_of = |net: &mut Network<f64>, x: &Tensor<f64>| -> Result<f64> {
        net.reseed_dropout(seed);
        let logits = net.forward(x)?;
        Ok(cross_entropy(&logits, labels)?.loss)
    };
    net.zero_grad();
    net.reseed_dropout(seed);
    let logits = net.forward(probe)?;
    let seed_grad = cross_entropy(&logits, labels)?.grad;
    let dx = net.backward(&seed_grad)?;
    let analytic: Vec<(String, Vec<f64>)> = net
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.grad().map(|g| g.to_vec()).unwrap_or_default()))
        .collect();

    let mut report = GradCheck::new();
    let mut x = probe.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps;
        let plus = loss_of(net, &x)?;
        x.data_mut()[i] = orig - eps;
        let minus = loss_of(net, &x)?;
        x.data_mut()[i] = orig;
        report.record(
            || format!("input[{i}]"),
            dx.data()[i],
            (plus - minus) / (2.0 * eps),
        );
    }
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = net.params_mut()[pi].data()[j];
            net.params_mut()[pi].data_mut()[j] = orig + eps;
            let plus = loss_of(net, probe)?;
            net.params_mut()[pi].data_mut()[j] = orig - eps;
            let minus = loss_of(net, probe)?;
            net.params_mut()[pi].data_mut()[j] = orig;
            report.record(|| format!("{name}[{j}]"), a, (plus - minus) / (2.0 * eps));
        }
    }
    Ok(report)
}
