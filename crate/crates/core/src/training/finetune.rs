use std::time::Instant;

use rffp_nn::{cross_entropy, Mode, Sgd, Tensor, Weights};
use serde::{Deserialize, Serialize};

use super::fit::{check_loss, epoch_order, OptimizerConfig};
use super::policy::{PolicyTracker, StoppingPolicy};
use super::report::{EpochRecord, TrainReport};
use crate::classifiers::{classify_indices, EnsembleModel, EVAL_BATCH};
use crate::dataset::{LabeledDataset, Task};
use crate::error::{CoreError, Result};

/// Fine-tuning switches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneOptions {
    /// Also train the distance classifier on the distance labels (ablation).
    /// Off by default: the router stays frozen.
    pub joint: bool,
}

/// Outcome of [`finetune_ensemble`].
#[derive(Debug, Clone)]
pub struct FinetuneReport {
    pub report: TrainReport,
    /// Training windows routed to each device model by the initial router.
    pub routed_counts: Vec<usize>,
}

/// Retrains the device models of an assembled ensemble on all-distance data.
///
/// Each training window goes to the device model its distance prediction
/// selects, and only that model is updated on it; every batch gives each
/// device model one step on its share. Validation accuracy is the ensemble's.
/// The distance classifier is untouched unless `options.joint` is set.
pub fn finetune_ensemble(
    e: &mut EnsembleModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    policy: &StoppingPolicy,
    optimizer: &OptimizerConfig,
    seed: u64,
    options: &FinetuneOptions,
) -> Result<FinetuneReport> {
    policy.validate()?;
    optimizer.validate()?;
    for (name, d) in [("training", train), ("validation", val)] {
        if d.is_empty() {
            return Err(CoreError::Config(format!("{name} set is empty")));
        }
        if d.task != Task::Device || d.n_classes() != e.n_devices() || d.window != e.window() {
            return Err(CoreError::Argument(format!(
                "{name} data must be an all-distance device task with {} classes and W={}",
                e.n_devices(),
                e.window()
            )));
        }
    }
    let distance_targets = distance_labels(e, train)?;
    let start = Instant::now();
    let n_models = e.n_distances();
    let mut sgd: Vec<Sgd<f32>> = (0..n_models)
        .map(|_| Sgd::new(optimizer.lr, optimizer.momentum))
        .collect::<std::result::Result<_, _>>()?;
    let mut router_sgd = Sgd::new(optimizer.lr, optimizer.momentum)?;
    let mut tracker = PolicyTracker::new(policy, optimizer.lr);
    let mut best = snapshot(e);
    let all: Vec<usize> = (0..train.len()).collect();
    let mut routes = classify_indices(&e.distance.model.net, train, &all)?;
    let mut routed_counts = vec![0; n_models];
    for &k in &routes {
        routed_counts[k] += 1;
    }
    let warnings: Vec<String> = routed_counts
        .iter()
        .zip(&e.devices)
        .filter(|(c, _)| **c == 0)
        .map(|(_, d)| {
            format!(
                "device model for {} ft received no training windows",
                d.distance_ft
            )
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut epochs = Vec::new();
    let stop_reason = loop {
        let epoch = epochs.len() + 1;
        let lr = tracker.lr();
        for s in sgd.iter_mut() {
            s.set_lr(lr);
        }
        router_sgd.set_lr(lr);
        if options.joint && epoch > 1 {
            routes = classify_indices(&e.distance.model.net, train, &all)?;
        }
        for d in e.devices.iter_mut() {
            d.model.net.set_mode(Mode::Train);
        }
        let mut loss_sum = 0.0;
        let order = epoch_order(train.len(), seed, epoch);
        for (step, chunk) in order.chunks(optimizer.batch_size).enumerate() {
            for (k, model) in e.devices.iter_mut().enumerate() {
                let sub: Vec<usize> = chunk.iter().copied().filter(|&i| routes[i] == k).collect();
                if sub.is_empty() {
                    continue;
                }
                let (x, y) = train.batch(&sub);
                let net = &mut model.model.net;
                net.zero_grad();
                let out = cross_entropy(&net.forward(&x)?, &y)?;
                check_loss(out.loss, epoch, step)?;
                net.backward(&out.grad)?;
                sgd[k].step(net)?;
                loss_sum += out.loss * sub.len() as f64;
            }
            if options.joint {
                let (x, _) = train.batch(chunk);
                let y: Vec<usize> = chunk.iter().map(|&i| distance_targets[i]).collect();
                let net = &mut e.distance.model.net;
                net.set_mode(Mode::Train);
                net.zero_grad();
                let out = cross_entropy(&net.forward(&x)?, &y)?;
                check_loss(out.loss, epoch, step)?;
                net.backward(&out.grad)?;
                router_sgd.step(net)?;
                net.set_mode(Mode::Eval);
            }
        }
        for d in e.devices.iter_mut() {
            d.model.net.set_mode(Mode::Eval);
        }
        let (val_loss, val_acc) = routed_loss_and_accuracy(e, val)?;
        log::info!("finetune epoch {epoch}: lr {lr} val_loss {val_loss:.4} val_acc {val_acc:.4}");
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_acc,
        });
        let decision = tracker.observe(val_acc);
        if decision.improved {
            best = snapshot(e);
        }
        if let Some(reason) = decision.stop {
            break reason;
        }
    };
    restore(e, &best)?;
    let (best_epoch, best_val_acc) = tracker.best().expect("at least one epoch ran");
    Ok(FinetuneReport {
        report: TrainReport {
            epochs,
            stop_reason,
            best_epoch,
            best_val_acc,
            wall_time_s: start.elapsed().as_secs_f64(),
            checkpoint: None,
            warnings,
        },
        routed_counts,
    })
}

fn distance_labels(e: &EnsembleModel, data: &LabeledDataset) -> Result<Vec<usize>> {
    let labels = e.distance.distance_labels();
    data.sources
        .iter()
        .map(|s| {
            labels
                .iter()
                .position(|&d| d == s.distance_ft)
                .ok_or_else(|| {
                    CoreError::Data(format!("window from unknown distance {} ft", s.distance_ft))
                })
        })
        .collect()
}

struct Snapshot {
    devices: Vec<Weights<f32>>,
    distance: Weights<f32>,
}

fn snapshot(e: &EnsembleModel) -> Snapshot {
    Snapshot {
        devices: e.devices.iter().map(|d| d.model.net.weights()).collect(),
        distance: e.distance.model.net.weights(),
    }
}

fn restore(e: &mut EnsembleModel, s: &Snapshot) -> Result<()> {
    for (d, w) in e.devices.iter_mut().zip(&s.devices) {
        d.model.net.load_weights(w)?;
    }
    e.distance.model.net.load_weights(&s.distance)?;
    Ok(())
}

/// Cross-entropy of the routed device model and ensemble accuracy.
pub fn routed_loss_and_accuracy(e: &EnsembleModel, data: &LabeledDataset) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..data.len()).collect();
    let routes = classify_indices(&e.distance.model.net, data, &all)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (k, model) in e.devices.iter().enumerate() {
        let idx: Vec<usize> = all.iter().copied().filter(|&i| routes[i] == k).collect();
        for chunk in idx.chunks(EVAL_BATCH) {
            let (x, y) = data.batch(chunk);
            let logits: Tensor<f32> = model.model.net.infer(&x)?;
            loss += cross_entropy(&logits, &y)?.loss * chunk.len() as f64;
            correct += (0..chunk.len())
                .filter(|&r| rffp_nn::argmax(logits.row(r)) == y[r])
                .count();
        }
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}
