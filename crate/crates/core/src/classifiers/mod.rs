//! Device and distance classifiers, their topologies, and the distance-gated ensemble.

mod arch;
mod ensemble;

use std::fs;
use std::path::{Path, PathBuf};

use rffp_nn::{argmax, load_checkpoint, save_checkpoint, softmax, Network, Tensor};
use serde::{Deserialize, Serialize};

pub use arch::{
    build_baseline, build_resnet, Architecture, ArchitectureRegistry, Baseline, ResNet,
};
pub use ensemble::{
    ensemble_predict, CombineMode, EnsembleManifest, EnsembleModel, EnsembleOutput, ENSEMBLE_FILE,
};

use crate::dataset::{LabeledDataset, Task};
use crate::error::{CoreError, Result};
use crate::sim::{write_json_file, Manifest};

/// Examples per inference batch when scoring whole datasets.
pub const EVAL_BATCH: usize = 256;

/// Arg-max class and its softmax probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Description of a trained network, stored next to its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub format_version: u32,
    pub architecture: String,
    pub task: Task,
    pub label_names: Vec<String>,
    /// Device ids or distances in feet, in label order.
    pub class_values: Vec<u32>,
    pub window: usize,
    /// Checkpoint file, relative to the card.
    pub checkpoint: String,
}

/// A network together with what its outputs mean.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub net: Network<f32>,
    pub architecture: String,
    pub task: Task,
    pub label_names: Vec<String>,
    pub class_values: Vec<u32>,
}

impl Classifier {
    /// Builds an untrained classifier for `task` over the classes of `manifest`.
    pub fn new(
        arch: &dyn Architecture,
        task: Task,
        manifest: &Manifest,
        window: usize,
        seed: u64,
    ) -> Result<Self> {
        let class_values = match task {
            Task::Distance => manifest.distances_ft.clone(),
            _ => manifest.devices.clone(),
        };
        let net = arch.build(class_values.len(), window, seed)?;
        Ok(Classifier {
            net,
            architecture: arch.name().to_string(),
            task,
            label_names: task.label_names(manifest),
            class_values,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.net.n_outputs()
    }

    pub fn window(&self) -> usize {
        self.net.input_shape()[1]
    }

    /// Predictions for every row of a `[B, 2, W]` batch.
    pub fn predict_batch(&self, batch: &Tensor<f32>) -> Result<Vec<Prediction>> {
        let logits = self.net.infer(batch)?;
        Ok(softmax(&logits)
            .into_iter()
            .map(|probs| Prediction {
                class: argmax(&probs),
                probs,
            })
            .collect())
    }

    /// Predicted class of every example, in order.
    pub fn predict_dataset(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        self.check_dataset(data)?;
        let idx: Vec<usize> = (0..data.len()).collect();
        classify_indices(&self.net, data, &idx)
    }

    pub fn check_dataset(&self, data: &LabeledDataset) -> Result<()> {
        if data.window != self.window() || data.n_classes() != self.n_classes() {
            return Err(CoreError::Argument(format!(
                "dataset has W={} and {} classes; model expects W={} and {} classes",
                data.window,
                data.n_classes(),
                self.window(),
                self.n_classes()
            )));
        }
        Ok(())
    }

    /// Writes `<stem>.ckpt` and `<stem>.model.json` into `dir`; returns the card path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        let ckpt = format!("{stem}.ckpt");
        save_checkpoint(&self.net, dir.join(&ckpt))?;
        let card = ModelCard {
            format_version: 1,
            architecture: self.architecture.clone(),
            task: self.task,
            label_names: self.label_names.clone(),
            class_values: self.class_values.clone(),
            window: self.window(),
            checkpoint: ckpt,
        };
        let path = dir.join(format!("{stem}.model.json"));
        write_json_file(&path, &card)?;
        Ok(path)
    }

    pub fn load(card_path: impl AsRef<Path>) -> Result<Self> {
        let card_path = card_path.as_ref();
        let text = fs::read_to_string(card_path).map_err(|e| CoreError::io(card_path, e))?;
        let card: ModelCard =
            serde_json::from_str(&text).map_err(|e| CoreError::format("model card", e))?;
        let dir = card_path.parent().unwrap_or(Path::new("."));
        let net: Network<f32> = load_checkpoint(dir.join(&card.checkpoint))?;
        if net.n_outputs() != card.class_values.len() || net.input_shape() != [2, card.window] {
            return Err(CoreError::format(
                "model card",
                format!("{} does not match its checkpoint", card_path.display()),
            ));
        }
        Ok(Classifier {
            net,
            architecture: card.architecture,
            task: card.task,
            label_names: card.label_names,
            class_values: card.class_values,
        })
    }
}

/// Identifies the transmitter among `n_devices` radios at one distance.
#[derive(Debug, Clone)]
pub struct DeviceClassifier {
    pub model: Classifier,
    pub distance_ft: u32,
}

impl DeviceClassifier {
    pub fn new(model: Classifier) -> Result<Self> {
        match model.task {
            Task::DeviceAtDistance(d) => Ok(DeviceClassifier {
                model,
                distance_ft: d,
            }),
            other => Err(CoreError::Config(format!(
                "expected a per-distance device model, got task {other}"
            ))),
        }
    }

    pub fn n_devices(&self) -> usize {
        self.model.n_classes()
    }
}

/// Predicts the transmitter distance.
#[derive(Debug, Clone)]
pub struct DistanceClassifier {
    pub model: Classifier,
}

impl DistanceClassifier {
    pub fn new(model: Classifier) -> Result<Self> {
        if model.task != Task::Distance {
            return Err(CoreError::Config(format!(
                "expected a distance model, got task {}",
                model.task
            )));
        }
        Ok(DistanceClassifier { model })
    }

    /// Distances in feet, in output order.
    pub fn distance_labels(&self) -> &[u32] {
        &self.model.class_values
    }
}

/// Prediction of a distance classifier, with the decoded distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistancePrediction {
    pub index: usize,
    pub distance_ft: u32,
    pub probs: Vec<f64>,
}

/// Arg-max class of the listed examples, ignoring the dataset's own labels.
pub fn classify_indices(
    net: &Network<f32>,
    data: &LabeledDataset,
    indices: &[usize],
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, _) = data.batch(chunk);
        let logits = net.infer(&x)?;
        out.extend((0..chunk.len()).map(|r| argmax(logits.row(r))));
    }
    Ok(out)
}

fn single(window: &Tensor<f32>) -> Result<Tensor<f32>> {
    let shape = window.shape();
    if shape.len() != 2 || shape[0] != 2 {
        return Err(CoreError::Argument(format!(
            "expected one [2, W] window, got {shape:?}"
        )));
    }
    let t = window.clone().reshape(&[1, 2, shape[1]])?;
    flag_unnormalized(&t);
    Ok(t)
}

/// Debug builds warn about windows that are not unit-RMS.
fn flag_unnormalized(batch: &Tensor<f32>) {
    if cfg!(debug_assertions) {
        for r in 0..batch.batch() {
            let row = batch.row(r);
            let power: f64 =
                row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() * 2.0 / row.len() as f64;
            if (power - 1.0).abs() > 1e-3 {
                log::warn!("window {r} is not normalized (mean power {power:.4})");
            }
        }
    }
}

/// Device prediction for one `[2, W]` window. Ties go to the lowest index.
pub fn predict_device(model: &DeviceClassifier, window: &Tensor<f32>) -> Result<Prediction> {
    let mut p = model.model.predict_batch(&single(window)?)?;
    Ok(p.remove(0))
}

/// Distance prediction for one `[2, W]` window.
pub fn predict_distance(
    model: &DistanceClassifier,
    window: &Tensor<f32>,
) -> Result<DistancePrediction> {
    let p = model.model.predict_batch(&single(window)?)?.remove(0);
    Ok(DistancePrediction {
        index: p.class,
        distance_ft: model.distance_labels()[p.class],
        probs: p.probs,
    })
}
