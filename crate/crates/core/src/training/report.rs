use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::policy::StopReason;
use crate::error::{CoreError, Result};

/// Metrics of one training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// History and outcome of one call to a training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Wall-clock duration; kept out of the CSV so that it stays reproducible.
    pub wall_time_s: f64,
    pub checkpoint: Option<PathBuf>,
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: &str = "epoch,lr,train_loss,val_loss,val_acc";

impl TrainReport {
    /// First epoch whose validation accuracy reaches `threshold`.
    pub fn epochs_to(&self, threshold: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.val_acc >= threshold)
            .map(|e| e.epoch)
    }

    /// Per-epoch rows followed by `#` summary and warning lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.lr, e.train_loss, e.val_loss, e.val_acc
            );
        }
        let _ = writeln!(
            out,
            "# stop_reason={} best_epoch={} best_val_acc={} epochs={}",
            self.stop_reason.name(),
            self.best_epoch,
            self.best_val_acc,
            self.epochs.len()
        );
        for w in &self.warnings {
            let _ = writeln!(out, "# warning: {w}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| CoreError::io(path, e))
    }

    /// Parses the output of [`Self::to_csv`]; wall time and checkpoint are not stored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| CoreError::format("training report", m);
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut epochs = Vec::new();
        let mut summary = None;
        let mut warnings = Vec::new();
        for line in lines {
            if let Some(w) = line.strip_prefix("# warning: ") {
                warnings.push(w.to_string());
            } else if let Some(s) = line.strip_prefix("# ") {
                summary = Some(s.to_string());
            } else {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(bad(format!("bad row {line:?}")));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
                epochs.push(EpochRecord {
                    epoch: f[0].parse().map_err(|e| bad(format!("{:?}: {e}", f[0])))?,
                    lr: num(f[1])?,
                    train_loss: num(f[2])?,
                    val_loss: num(f[3])?,
                    val_acc: num(f[4])?,
                });
            }
        }
        let summary = summary.ok_or_else(|| bad("missing summary line".into()))?;
        let field = |k: &str| {
            summary
                .split(' ')
                .find_map(|kv| kv.strip_prefix(k).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| bad(format!("summary lacks {k}")))
        };
        Ok(TrainReport {
            stop_reason: StopReason::parse(field("stop_reason")?)
                .ok_or_else(|| bad("unknown stop reason".into()))?,
            best_epoch: field("best_epoch")?
                .parse()
                .map_err(|e| bad(format!("{e}")))?,
            best_val_acc: field("best_val_acc")?
                .parse()
                .map_err(|e| bad(format!("{e}")))?,
            epochs,
            wall_time_s: 0.0,
            checkpoint: None,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips() {
        let r = TrainReport {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    lr: 0.01,
                    train_loss: 1.25,
                    val_loss: 1.5,
                    val_acc: 0.5,
                },
                EpochRecord {
                    epoch: 2,
                    lr: 0.005,
                    train_loss: 0.1 + 0.2,
                    val_loss: 1.0 / 3.0,
                    val_acc: 0.75,
                },
            ],
            stop_reason: StopReason::EarlyStop,
            best_epoch: 2,
            best_val_acc: 0.75,
            wall_time_s: 0.0,
            checkpoint: None,
            warnings: vec!["model for 8 ft received no windows".into()],
        };
        let text = r.to_csv();
        assert!(text.starts_with("epoch,lr,train_loss,val_loss,val_acc\n1,0.01,1.25,1.5,0.5\n"));
        assert_eq!(TrainReport::from_csv(&text).unwrap(), r);
        assert_eq!(r.epochs_to(0.7), Some(2));
        assert_eq!(r.epochs_to(0.8), None);
    }
}
