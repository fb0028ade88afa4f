use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rffp_nn::{argmax, cross_entropy, Mode, Network, Sgd};
use serde::{Deserialize, Serialize};

use super::policy::{PolicyTracker, StoppingPolicy};
use super::report::{EpochRecord, TrainReport};
use crate::classifiers::EVAL_BATCH;
use crate::dataset::LabeledDataset;
use crate::error::{CoreError, Result};
use crate::seed::{derive, stream};

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::Config("batch_size must be at least 1".into()));
        }
        Sgd::<f32>::new(self.lr, self.momentum)?;
        Ok(())
    }
}

/// Mean cross-entropy and accuracy of `net` on `data`, in eval mode.
pub fn loss_and_accuracy(net: &Network<f32>, data: &LabeledDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(CoreError::Argument("cannot score an empty dataset".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, y) = data.batch(chunk);
        let logits = net.infer(&x)?;
        loss += cross_entropy(&logits, &y)?.loss * chunk.len() as f64;
        correct += (0..chunk.len())
            .filter(|&r| argmax(logits.row(r)) == y[r])
            .count();
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Shuffled batch order for one epoch.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[stream::SHUFFLE, epoch as u64]));
    idx.shuffle(&mut rng);
    idx
}

pub(crate) fn check_loss(loss: f64, epoch: usize, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(CoreError::Data(format!(
            "training diverged: loss {loss} at epoch {epoch}, step {step}"
        )))
    }
}

/// Trains `net` with shuffled mini-batches, scoring the validation set after
/// every epoch. The learning rate decays and training stops according to
/// `policy`; on return `net` holds the weights of the best validation epoch
/// and is in eval mode.
pub fn fit(
    net: &mut Network<f32>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    policy: &StoppingPolicy,
    optimizer: &OptimizerConfig,
    seed: u64,
) -> Result<TrainReport> {
    policy.validate()?;
    optimizer.validate()?;
    if train.is_empty() {
        return Err(CoreError::Config("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(CoreError::Config("validation set is empty".into()));
    }
    for (name, d) in [("training", train), ("validation", val)] {
        if d.n_classes() != net.n_outputs() || [2, d.window] != net.input_shape() {
            return Err(CoreError::Argument(format!(
                "{name} data (W={}, {} classes) does not fit the network",
                d.window,
                d.n_classes()
            )));
        }
    }
    let start = Instant::now();
    let mut sgd = Sgd::new(optimizer.lr, optimizer.momentum)?;
    let mut tracker = PolicyTracker::new(policy, optimizer.lr);
    let mut best = net.weights();
    let mut epochs = Vec::new();
    let stop_reason = loop {
        let epoch = epochs.len() + 1;
        let lr = tracker.lr();
        sgd.set_lr(lr);
        net.set_mode(Mode::Train);
        let order = epoch_order(train.len(), seed, epoch);
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(optimizer.batch_size).enumerate() {
            let (x, y) = train.batch(chunk);
            net.zero_grad();
            let logits = net.forward(&x)?;
            let out = cross_entropy(&logits, &y)?;
            check_loss(out.loss, epoch, step)?;
            net.backward(&out.grad)?;
            sgd.step(net)?;
            loss_sum += out.loss * chunk.len() as f64;
        }
        net.set_mode(Mode::Eval);
        let (val_loss, val_acc) = loss_and_accuracy(net, val)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: lr {lr} train_loss {:.4} val_loss {val_loss:.4} val_acc {val_acc:.4}",
            record.train_loss
        );
        epochs.push(record);
        let decision = tracker.observe(val_acc);
        if decision.improved {
            best = net.weights();
        }
        if let Some(reason) = decision.stop {
            break reason;
        }
    };
    net.load_weights(&best)?;
    let (best_epoch, best_val_acc) = tracker.best().expect("at least one epoch ran");
    Ok(TrainReport {
        epochs,
        stop_reason,
        best_epoch,
        best_val_acc,
        wall_time_s: start.elapsed().as_secs_f64(),
        checkpoint: None,
        warnings: Vec::new(),
    })
}
