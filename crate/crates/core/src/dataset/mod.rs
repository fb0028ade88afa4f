//! Windowing, normalization, labeling and splitting of recordings.

mod cache;
mod window;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rffp_nn::Tensor;
use serde::{Deserialize, Serialize};

pub use cache::{load_cache, save_cache, CACHE_MAGIC, CACHE_VERSION};
pub use window::{from_tensor, normalize_window, partition_windows, to_tensor, Source, Window};

use crate::error::{CoreError, Result};
use crate::seed::{derive, stream};
use crate::sim::Manifest;

/// Default window length in samples.
pub const DEFAULT_WINDOW: usize = 256;

/// What the labels mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Device identity, restricted to one distance (in feet).
    DeviceAtDistance(u32),
    /// Distance class over all devices.
    Distance,
    /// Device identity over all distances; used to train and score the ensemble.
    Device,
}

impl Task {
    /// Class names in label order.
    pub fn label_names(&self, manifest: &Manifest) -> Vec<String> {
        match self {
            Task::Distance => manifest
                .distances_ft
                .iter()
                .map(|d| format!("{d}ft"))
                .collect(),
            _ => manifest
                .devices
                .iter()
                .map(|d| format!("dev{d:02}"))
                .collect(),
        }
    }

    /// Label of a window, or `None` when the task does not use it.
    pub fn label_of(&self, manifest: &Manifest, source: &Source) -> Option<usize> {
        match self {
            Task::DeviceAtDistance(j) if source.distance_ft != *j => None,
            Task::Distance => manifest.distance_index(source.distance_ft),
            _ => manifest.devices.iter().position(|&d| d == source.device_id),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::DeviceAtDistance(j) => write!(f, "device@{j}"),
            Task::Distance => f.write_str("distance"),
            Task::Device => f.write_str("device"),
        }
    }
}

impl FromStr for Task {
    type Err = CoreError;

    /// Accepts `distance`, `device` and `device@<feet>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(Task::Distance),
            "device" => Ok(Task::Device),
            _ => s
                .strip_prefix("device@")
                .and_then(|d| d.parse().ok())
                .map(Task::DeviceAtDistance)
                .ok_or_else(|| CoreError::Argument(format!("unknown task {s:?}"))),
        }
    }
}

/// Which partition a dataset is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// How runs are assigned to partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SplitMode {
    /// Both runs mixed, split per class at window granularity.
    PooledRuns,
    /// Train on `train_run` only; validation and test come from the other runs.
    RunHoldout { train_run: u32 },
}

/// Partitioning rule. In run-holdout mode the train fraction is ignored and
/// the held-out windows are divided between val and test in proportion to
/// their fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn pooled(seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::PooledRuns,
            fractions: [0.8, 0.1, 0.1],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|&f| !(f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::Config(format!(
                "split fractions must be positive and sum to 1, got {:?}",
                self.fractions
            )));
        }
        Ok(())
    }
}

/// Windowing options for [`build_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowOptions {
    pub window: usize,
    /// Keep only the first N windows of each recording.
    pub max_windows_per_recording: Option<usize>,
    /// Scale each window to unit RMS.
    pub normalize: bool,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions {
            window: DEFAULT_WINDOW,
            max_windows_per_recording: None,
            normalize: true,
        }
    }
}

/// Labeled windows stored as one contiguous `[n, 2, W]` block.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub task: Task,
    pub label_names: Vec<String>,
    pub split: Split,
    pub window: usize,
    pub normalized: bool,
    pub labels: Vec<usize>,
    pub sources: Vec<Source>,
    data: Vec<f32>,
}

impl LabeledDataset {
    /// Assembles a dataset from parts; `data` holds `labels.len()` rows of `2 * window` values.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        task: Task,
        label_names: Vec<String>,
        split: Split,
        window: usize,
        normalized: bool,
        labels: Vec<usize>,
        sources: Vec<Source>,
        data: Vec<f32>,
    ) -> Result<Self> {
        if window == 0 || labels.len() != sources.len() || data.len() != labels.len() * 2 * window {
            return Err(CoreError::Data(format!(
                "inconsistent dataset parts: {} labels, {} sources, {} values for W={window}",
                labels.len(),
                sources.len(),
                data.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(CoreError::Data(format!(
                "label {bad} outside {} classes",
                label_names.len()
            )));
        }
        Ok(LabeledDataset {
            task,
            label_names,
            split,
            window,
            normalized,
            labels,
            sources,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Input shape of one example, `[2, W]`.
    pub fn example_shape(&self) -> [usize; 2] {
        [2, self.window]
    }

    /// Flat `[2 * W]` values of example `i`.
    pub fn example(&self, i: usize) -> &[f32] {
        let n = 2 * self.window;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn window_at(&self, i: usize) -> Window {
        let t = Tensor::new(&self.example_shape(), self.example(i).to_vec())
            .expect("example has 2*W values");
        from_tensor(&t, self.sources[i], self.normalized).expect("shape is [2, W]")
    }

    /// Stacks the listed examples into a `[b, 2, W]` batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let n = 2 * self.window;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.example(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let t =
            Tensor::new(&[indices.len(), 2, self.window], data).expect("batch must not be empty");
        (t, labels)
    }

    /// Copy restricted to the listed examples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let n = 2 * self.window;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.example(i));
        }
        LabeledDataset {
            task: self.task,
            label_names: self.label_names.clone(),
            split: self.split,
            window: self.window,
            normalized: self.normalized,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sources: indices.iter().map(|&i| self.sources[i]).collect(),
            data,
        }
    }

    /// Copy keeping examples whose source passes `keep`.
    pub fn filter(&self, keep: impl Fn(&Source) -> bool) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep(&self.sources[i]))
            .collect();
        self.subset(&idx)
    }

    /// Copy with the labels recomputed for another task over the same windows.
    pub fn relabel(&self, task: Task, manifest: &Manifest) -> Result<LabeledDataset> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| task.label_of(manifest, &self.sources[i]).is_some())
            .collect();
        let mut out = self.subset(&idx);
        out.labels = out
            .sources
            .iter()
            .map(|s| task.label_of(manifest, s).expect("filtered above"))
            .collect();
        out.task = task;
        out.label_names = task.label_names(manifest);
        Ok(out)
    }

    /// Window count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Concatenates datasets with the same task, classes and window length.
    pub fn concat(parts: &[&LabeledDataset], split: Split) -> Result<LabeledDataset> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::Argument("nothing to concatenate".into()))?;
        let mut out = first.subset(&[]);
        out.split = split;
        for p in parts {
            if p.window != first.window || p.label_names != first.label_names {
                return Err(CoreError::Data("cannot concatenate unlike datasets".into()));
            }
            out.labels.extend_from_slice(&p.labels);
            out.sources.extend_from_slice(&p.sources);
            out.data.extend_from_slice(&p.data);
        }
        Ok(out)
    }
}

/// Train, validation and test partitions of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetSplits {
    pub fn get(&self, split: Split) -> &LabeledDataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Windows, normalizes, labels and partitions every recording the task uses.
pub fn build_dataset(
    manifest: &Manifest,
    task: Task,
    split: &SplitSpec,
    options: &WindowOptions,
) -> Result<DatasetSplits> {
    split.validate()?;
    if options.window == 0 {
        return Err(CoreError::Argument(
            "window length must be at least 1".into(),
        ));
    }
    if let Task::DeviceAtDistance(j) = task {
        if manifest.distance_index(j).is_none() {
            return Err(CoreError::Config(format!(
                "distance {j} ft is not in the dataset ({:?})",
                manifest.distances_ft
            )));
        }
    }
    let label_names = task.label_names(manifest);
    let all = load_windows(manifest, task, options, label_names.clone())?;

    // Group example indices per (class, run) so both modes can draw from them.
    let mut groups: BTreeMap<(usize, u32), Vec<usize>> = BTreeMap::new();
    for i in 0..all.len() {
        groups
            .entry((all.labels[i], all.sources[i].run))
            .or_default()
            .push(i);
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    let [ft, fv, _] = split.fractions;
    for class in 0..label_names.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(split.seed, &[stream::SPLIT, class as u64]));
        match split.mode {
            SplitMode::PooledRuns => {
                let mut pool: Vec<usize> = groups
                    .range((class, 0)..=(class, u32::MAX))
                    .flat_map(|(_, v)| v.iter().copied())
                    .collect();
                pool.shuffle(&mut rng);
                let n = pool.len();
                let n_train = ((ft * n as f64).round() as usize).min(n);
                let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
                parts[0].extend_from_slice(&pool[..n_train]);
                parts[1].extend_from_slice(&pool[n_train..n_train + n_val]);
                parts[2].extend_from_slice(&pool[n_train + n_val..]);
            }
            SplitMode::RunHoldout { train_run } => {
                if !manifest.runs.contains(&train_run) {
                    return Err(CoreError::Config(format!(
                        "run {train_run} is not in the dataset"
                    )));
                }
                let mut held: Vec<usize> = Vec::new();
                for ((_, run), v) in groups.range((class, 0)..=(class, u32::MAX)) {
                    if *run == train_run {
                        parts[0].extend_from_slice(v);
                    } else {
                        held.extend_from_slice(v);
                    }
                }
                held.shuffle(&mut rng);
                let n_val = ((fv / (1.0 - ft)) * held.len() as f64).round() as usize;
                let n_val = n_val.min(held.len());
                parts[1].extend_from_slice(&held[..n_val]);
                parts[2].extend_from_slice(&held[n_val..]);
            }
        }
    }
    let mut train = all.subset(&parts[0]);
    let missing: Vec<&str> = train
        .class_counts()
        .iter()
        .zip(&label_names)
        .filter(|(c, _)| **c == 0)
        .map(|(_, n)| n.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CoreError::Config(format!(
            "classes missing from the train split: {}",
            missing.join(", ")
        )));
    }
    train.split = Split::Train;
    let mut val = all.subset(&parts[1]);
    val.split = Split::Val;
    let mut test = all.subset(&parts[2]);
    test.split = Split::Test;
    Ok(DatasetSplits { train, val, test })
}

fn load_windows(
    manifest: &Manifest,
    task: Task,
    options: &WindowOptions,
    label_names: Vec<String>,
) -> Result<LabeledDataset> {
    let mut labels = Vec::new();
    let mut sources = Vec::new();
    let mut data = Vec::new();
    for entry in &manifest.recordings {
        let probe = Source {
            device_id: entry.device_id,
            distance_ft: entry.distance_ft,
            run: entry.run,
            window_index: 0,
        };
        let Some(label) = task.label_of(manifest, &probe) else {
            continue;
        };
        let rec = manifest.read(entry)?;
        let mut windows = partition_windows(&rec, options.window)?;
        if let Some(cap) = options.max_windows_per_recording {
            windows.truncate(cap);
        }
        for w in windows {
            let w = if options.normalize {
                normalize_window(&w)?
            } else {
                w
            };
            window::write_channels(&w.iq, &mut data);
            labels.push(label);
            sources.push(w.source);
        }
    }
    LabeledDataset::from_parts(
        task,
        label_names,
        Split::Train,
        options.window,
        options.normalize,
        labels,
        sources,
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_strings_round_trip() {
        for t in [Task::Distance, Task::Device, Task::DeviceAtDistance(14)] {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert!("device@x".parse::<Task>().is_err());
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let mut s = SplitSpec::pooled(1);
        s.validate().unwrap();
        s.fractions = [0.8, 0.1, 0.2];
        assert!(s.validate().is_err());
        s.fractions = [1.0, 0.0, 0.0];
        assert!(s.validate().is_err());
    }
}
