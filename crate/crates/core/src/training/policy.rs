use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// When to decay the learning rate and when to stop, judged on validation accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingPolicy {
    pub early_stop_patience: usize,
    pub lr_decay_factor: f64,
    pub lr_decay_patience: usize,
    pub min_lr: f64,
    pub max_epochs: usize,
    /// Stop as soon as validation accuracy reaches this value.
    pub target_val_accuracy: Option<f64>,
}

impl Default for StoppingPolicy {
    fn default() -> Self {
        StoppingPolicy {
            early_stop_patience: 10,
            lr_decay_factor: 0.5,
            lr_decay_patience: 3,
            min_lr: 1e-5,
            max_epochs: 50,
            target_val_accuracy: None,
        }
    }
}

impl StoppingPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.early_stop_patience == 0 || self.lr_decay_patience == 0 || self.max_epochs == 0 {
            return Err(CoreError::Config(
                "patience and epoch limits must be at least 1".into(),
            ));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(CoreError::Config(format!(
                "lr_decay_factor must be in (0, 1), got {}",
                self.lr_decay_factor
            )));
        }
        if self.min_lr < 0.0 {
            return Err(CoreError::Config("min_lr must be non-negative".into()));
        }
        Ok(())
    }
}

/// Why training ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    TargetReached,
    MaxEpochs,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::TargetReached => "target_reached",
            StopReason::MaxEpochs => "max_epochs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::EarlyStop, Self::TargetReached, Self::MaxEpochs]
            .into_iter()
            .find(|r| r.name() == s)
    }
}

/// What the tracker decided after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDecision {
    pub improved: bool,
    /// Learning rate to use from the next epoch on.
    pub next_lr: f64,
    pub stop: Option<StopReason>,
}

/// Applies a [`StoppingPolicy`] epoch by epoch.
#[derive(Debug, Clone)]
pub struct PolicyTracker {
    policy: StoppingPolicy,
    lr: f64,
    epoch: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl PolicyTracker {
    pub fn new(policy: &StoppingPolicy, lr: f64) -> Self {
        PolicyTracker {
            policy: policy.clone(),
            lr,
            epoch: 0,
            best: None,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Epoch number and accuracy of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, val_accuracy: f64) -> EpochDecision {
        self.epoch += 1;
        let improved = self.best.is_none_or(|(_, b)| val_accuracy > b);
        if improved {
            self.best = Some((self.epoch, val_accuracy));
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale.is_multiple_of(self.policy.lr_decay_patience) {
                self.lr = (self.lr * self.policy.lr_decay_factor).max(self.policy.min_lr);
            }
        }
        let stop = if self
            .policy
            .target_val_accuracy
            .is_some_and(|t| val_accuracy >= t)
        {
            Some(StopReason::TargetReached)
        } else if self.stale >= self.policy.early_stop_patience {
            Some(StopReason::EarlyStop)
        } else if self.epoch >= self.policy.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        EpochDecision {
            improved,
            next_lr: self.lr,
            stop,
        }
    }
}
