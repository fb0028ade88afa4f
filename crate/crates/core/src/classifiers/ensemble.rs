use std::fs;
use std::path::{Path, PathBuf};

use rffp_nn::{argmax, softmax, Tensor};
use serde::{Deserialize, Serialize};

use super::{classify_indices, Classifier, DeviceClassifier, DistanceClassifier};
use crate::dataset::LabeledDataset;
use crate::error::{CoreError, Result};
use crate::sim::write_json_file;

pub const ENSEMBLE_FILE: &str = "ensemble.json";

/// How device outputs enter the concatenated vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// One-hot arg-max of each device model.
    #[default]
    Hard,
    /// Softmax probabilities of each device model.
    Soft,
}

/// A distance classifier gating one device classifier per distance.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub distance: DistanceClassifier,
    pub devices: Vec<DeviceClassifier>,
    pub combine: CombineMode,
}

impl EnsembleModel {
    /// Checks that the device models line up with the distance labels and agree
    /// on device count and window length.
    pub fn new(distance: DistanceClassifier, devices: Vec<DeviceClassifier>) -> Result<Self> {
        let labels = distance.distance_labels();
        if labels.len() != devices.len() {
            return Err(CoreError::Config(format!(
                "{} distances but {} device models",
                labels.len(),
                devices.len()
            )));
        }
        let window = distance.model.window();
        let n_devices = devices.first().map(|d| d.n_devices()).unwrap_or(0);
        for (k, (d, &ft)) in devices.iter().zip(labels).enumerate() {
            if d.distance_ft != ft {
                return Err(CoreError::Config(format!(
                    "device model {k} is for {} ft, distance label {k} is {ft} ft",
                    d.distance_ft
                )));
            }
            if d.n_devices() != n_devices || d.model.window() != window {
                return Err(CoreError::Config(format!(
                    "device model for {ft} ft disagrees on device count or window length"
                )));
            }
        }
        Ok(EnsembleModel {
            distance,
            devices,
            combine: CombineMode::Hard,
        })
    }

    pub fn n_devices(&self) -> usize {
        self.devices[0].n_devices()
    }

    pub fn n_distances(&self) -> usize {
        self.devices.len()
    }

    pub fn window(&self) -> usize {
        self.distance.model.window()
    }

    /// `(distance index, device)` for every example, evaluating only the
    /// routed device model. Equal to [`ensemble_predict`] by construction of
    /// the mask; used where the full fan-out would be wasted work.
    pub fn predict_routed(&self, data: &LabeledDataset) -> Result<Vec<(usize, usize)>> {
        let all: Vec<usize> = (0..data.len()).collect();
        let routes = classify_indices(&self.distance.model.net, data, &all)?;
        let mut out: Vec<(usize, usize)> = routes.iter().map(|&k| (k, 0)).collect();
        for (k, model) in self.devices.iter().enumerate() {
            let idx: Vec<usize> = all.iter().copied().filter(|&i| routes[i] == k).collect();
            for (i, m) in idx
                .iter()
                .zip(classify_indices(&model.model.net, data, &idx)?)
            {
                out[*i].1 = m;
            }
        }
        Ok(out)
    }

    /// Writes every member checkpoint and the ensemble manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let distance_model = self
            .distance
            .model
            .save(dir, "distance")?
            .file_name()
            .expect("file")
            .to_string_lossy()
            .into_owned();
        let mut device_models = Vec::new();
        for d in &self.devices {
            let card = d
                .model
                .save(dir, &format!("device_{:03}ft", d.distance_ft))?;
            device_models.push(EnsembleMember {
                distance_ft: d.distance_ft,
                model: card
                    .file_name()
                    .expect("file")
                    .to_string_lossy()
                    .into_owned(),
            });
        }
        let manifest = EnsembleManifest {
            format_version: 1,
            combine: self.combine,
            distance_labels_ft: self.distance.distance_labels().to_vec(),
            distance_model,
            device_models,
        };
        let path = dir.join(ENSEMBLE_FILE);
        write_json_file(&path, &manifest)?;
        Ok(path)
    }

    /// Loads an ensemble from its manifest file or the directory holding it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(ENSEMBLE_FILE);
        }
        let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let m: EnsembleManifest =
            serde_json::from_str(&text).map_err(|e| CoreError::format("ensemble manifest", e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let distance = DistanceClassifier::new(Classifier::load(dir.join(&m.distance_model))?)?;
        if distance.distance_labels() != m.distance_labels_ft {
            return Err(CoreError::format(
                "ensemble manifest",
                "distance labels disagree with the distance model",
            ));
        }
        let devices = m
            .device_models
            .iter()
            .map(|d| DeviceClassifier::new(Classifier::load(dir.join(&d.model))?))
            .collect::<Result<Vec<_>>>()?;
        let mut e = EnsembleModel::new(distance, devices)?;
        e.combine = m.combine;
        Ok(e)
    }
}

/// On-disk description of an ensemble: |D| + 1 model cards and the label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub combine: CombineMode,
    pub distance_labels_ft: Vec<u32>,
    pub distance_model: String,
    pub device_models: Vec<EnsembleMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub distance_ft: u32,
    pub model: String,
}

/// Result of gating one window.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    /// Arg-max of the distance classifier.
    pub distance_index: usize,
    pub distance_ft: u32,
    /// Device index recovered from the masked vector.
    pub device: usize,
    /// Concatenated device outputs times the distance mask, length |D| * |M|.
    pub masked: Vec<f64>,
}

/// Runs every member on each window, concatenates the device outputs, masks
/// all but the predicted distance's segment and reads the device off the
/// surviving segment.
pub fn ensemble_predict(e: &EnsembleModel, batch: &Tensor<f32>) -> Result<Vec<EnsembleOutput>> {
    let m = e.n_devices();
    let d_logits = e.distance.model.net.infer(batch)?;
    let device_outputs: Vec<Vec<Vec<f64>>> = e
        .devices
        .iter()
        .map(|d| {
            let logits = d.model.net.infer(batch)?;
            Ok(match e.combine {
                CombineMode::Hard => (0..logits.batch())
                    .map(|r| one_hot(argmax(logits.row(r)), m))
                    .collect(),
                CombineMode::Soft => softmax(&logits),
            })
        })
        .collect::<Result<_>>()?;

    Ok((0..batch.batch())
        .map(|r| {
            let distance_index = argmax(d_logits.row(r));
            let mut masked = Vec::with_capacity(m * e.n_distances());
            for (k, outputs) in device_outputs.iter().enumerate() {
                let gate = if k == distance_index { 1.0 } else { 0.0 };
                masked.extend(outputs[r].iter().map(|v| v * gate));
            }
            let device = argmax(&masked) % m;
            EnsembleOutput {
                distance_index,
                distance_ft: e.distance.distance_labels()[distance_index],
                device,
                masked,
            }
        })
        .collect())
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
