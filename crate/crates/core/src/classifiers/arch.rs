use std::collections::BTreeMap;

use rffp_nn::{LayerSpec, Network};

use crate::error::{CoreError, Result};

/// A named network topology for `[2, W]` IQ windows.
pub trait Architecture: Send + Sync {
    fn name(&self) -> &str;

    /// Shortest window the topology accepts.
    fn min_window(&self) -> usize;

    /// Layer list for `n_classes` outputs.
    fn layers(&self, n_classes: usize) -> Vec<LayerSpec>;

    /// A single output is allowed so that a one-distance ensemble can carry
    /// a constant gate.
    fn build(&self, n_classes: usize, window: usize, seed: u64) -> Result<Network<f32>> {
        if n_classes == 0 {
            return Err(CoreError::Config(format!(
                "{} needs at least one class",
                self.name()
            )));
        }
        if window < self.min_window() {
            return Err(CoreError::Config(format!(
                "{} needs windows of at least {} samples, got {window}",
                self.name(),
                self.min_window()
            )));
        }
        Ok(Network::new(&[2, window], &self.layers(n_classes), seed)?)
    }
}

/// Residual network: a 64-filter conv, two residual blocks of 128 and 256
/// filters with max pooling after each stage, batch norm, then dense layers
/// of 256, 64 and `n` units with dropout 0.2 between them.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResNet;

impl Architecture for ResNet {
    fn name(&self) -> &str {
        "resnet"
    }

    fn min_window(&self) -> usize {
        8
    }

    fn layers(&self, n_classes: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        vec![
            Conv1d {
                filters: 64,
                kernel: 5,
            },
            Relu,
            MaxPool1d { width: 2 },
            ResidualBlock {
                filters: 128,
                kernel: 5,
                batch_norm: true,
            },
            MaxPool1d { width: 2 },
            ResidualBlock {
                filters: 256,
                kernel: 5,
                batch_norm: true,
            },
            MaxPool1d { width: 2 },
            BatchNorm,
            Flatten,
            Dense { units: 256 },
            Relu,
            Dropout { rate: 0.2 },
            Dense { units: 64 },
            Relu,
            Dropout { rate: 0.2 },
            Dense { units: n_classes },
        ]
    }
}

/// Two-conv, two-dense CNN in the style of the ORACLE fingerprinting network:
/// 50 filters of width 7 twice, then dense 256 and 80 before the classifier.
#[derive(Debug, Clone, Copy, Default)]
pub struct Baseline;

impl Architecture for Baseline {
    fn name(&self) -> &str {
        "baseline"
    }

    fn min_window(&self) -> usize {
        1
    }

    fn layers(&self, n_classes: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        vec![
            Conv1d {
                filters: 50,
                kernel: 7,
            },
            Relu,
            Conv1d {
                filters: 50,
                kernel: 7,
            },
            Relu,
            Flatten,
            Dense { units: 256 },
            Relu,
            Dropout { rate: 0.5 },
            Dense { units: 80 },
            Relu,
            Dense { units: n_classes },
        ]
    }
}

/// Topologies by name.
pub struct ArchitectureRegistry {
    entries: BTreeMap<String, Box<dyn Architecture>>,
}

impl ArchitectureRegistry {
    pub fn empty() -> Self {
        ArchitectureRegistry {
            entries: BTreeMap::new(),
        }
    }

    /// Registry holding `resnet` and `baseline`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(ResNet));
        r.register(Box::new(Baseline));
        r
    }

    /// Adds or replaces an architecture under its own name.
    pub fn register(&mut self, arch: Box<dyn Architecture>) {
        self.entries.insert(arch.name().to_string(), arch);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Architecture> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            CoreError::Config(format!(
                "unknown architecture {name:?}; known: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl Default for ArchitectureRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn at_least_two(n_classes: usize) -> Result<()> {
    if n_classes < 2 {
        return Err(CoreError::Config(format!(
            "a classifier needs at least 2 classes, got {n_classes}"
        )));
    }
    Ok(())
}

pub fn build_resnet(n_classes: usize, window: usize, seed: u64) -> Result<Network<f32>> {
    at_least_two(n_classes)?;
    ResNet.build(n_classes, window, seed)
}

pub fn build_baseline(n_classes: usize, window: usize, seed: u64) -> Result<Network<f32>> {
    at_least_two(n_classes)?;
    Baseline.build(n_classes, window, seed)
}
