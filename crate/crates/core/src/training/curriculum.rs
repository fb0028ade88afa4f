use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rffp_nn::Network;
use serde::{Deserialize, Serialize};

use super::fit::{fit, loss_and_accuracy, OptimizerConfig};
use super::policy::StoppingPolicy;
use super::report::TrainReport;
use crate::dataset::LabeledDataset;
use crate::error::{CoreError, Result};
use crate::seed::{derive, stream};

/// Two-stage schedule: a small subset first, then the larger pool it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumSpec {
    pub stage1_windows: usize,
    pub stage2_windows: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Learning rate for stage 2; the optimizer rate when absent.
    pub stage2_lr: Option<f64>,
    pub seed: u64,
}

impl Default for CurriculumSpec {
    fn default() -> Self {
        CurriculumSpec {
            stage1_windows: 8_000,
            stage2_windows: 64_000,
            stage1_epochs: 10,
            stage2_epochs: 20,
            stage2_lr: None,
            seed: 0,
        }
    }
}

impl CurriculumSpec {
    /// Window counts of the original full-scale schedule.
    pub const FULL_SCALE: (usize, usize) = (160_000, 1_250_400);

    pub fn validate(&self) -> Result<()> {
        if self.stage1_windows == 0 || self.stage1_windows >= self.stage2_windows {
            return Err(CoreError::Config(format!(
                "stage 1 must be a non-empty strict subset of stage 2 ({} vs {})",
                self.stage1_windows, self.stage2_windows
            )));
        }
        if self.stage1_epochs == 0 || self.stage2_epochs == 0 {
            return Err(CoreError::Config(
                "each stage needs at least one epoch".into(),
            ));
        }
        Ok(())
    }
}

/// Both stage reports plus the windows each stage used.
#[derive(Debug, Clone)]
pub struct CurriculumReport {
    pub stage1: TrainReport,
    pub stage2: TrainReport,
    /// Indices into the training pool, sorted.
    pub stage1_indices: Vec<usize>,
    pub stage2_indices: Vec<usize>,
    /// Validation accuracy of the stage-1 weights, i.e. where stage 2 starts.
    pub warm_start_val_acc: f64,
}

/// Picks `n` indices of `pool` (or of all of `data` when `pool` is `None`)
/// with per-class counts proportional to the class sizes, largest remainder
/// first. Result is sorted.
pub fn stratified_subset(
    data: &LabeledDataset,
    pool: Option<&[usize]>,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let all: Vec<usize> = pool
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| (0..data.len()).collect());
    if n > all.len() {
        return Err(CoreError::Config(format!(
            "asked for {n} windows but only {} are available",
            all.len()
        )));
    }
    let mut by_class = vec![Vec::new(); data.n_classes()];
    for &i in &all {
        by_class[data.labels[i]].push(i);
    }
    let total = all.len() as f64;
    let exact: Vec<f64> = by_class
        .iter()
        .map(|c| n as f64 * c.len() as f64 / total)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut missing = n - quota.iter().sum::<usize>();
    for c in order {
        if missing == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (c, members) in by_class.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[stream::SPLIT, c as u64]));
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..quota[c]]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Fits `net` on a small stratified subset, then continues from those weights
/// on the larger pool that contains it.
pub fn curriculum_fit(
    net: &mut Network<f32>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    spec: &CurriculumSpec,
    policy: &StoppingPolicy,
    optimizer: &OptimizerConfig,
) -> Result<CurriculumReport> {
    spec.validate()?;
    if train.len() < spec.stage2_windows {
        return Err(CoreError::Config(format!(
            "curriculum needs {} training windows, have {}",
            spec.stage2_windows,
            train.len()
        )));
    }
    let stage2_indices = if spec.stage2_windows == train.len() {
        (0..train.len()).collect()
    } else {
        stratified_subset(train, None, spec.stage2_windows, derive(spec.seed, &[2]))?
    };
    let stage1_indices = stratified_subset(
        train,
        Some(&stage2_indices),
        spec.stage1_windows,
        derive(spec.seed, &[1]),
    )?;

    let stage1 = fit(
        net,
        &train.subset(&stage1_indices),
        val,
        &StoppingPolicy {
            max_epochs: spec.stage1_epochs,
            ..policy.clone()
        },
        optimizer,
        derive(spec.seed, &[11]),
    )?;
    let (_, warm_start_val_acc) = loss_and_accuracy(net, val)?;
    let stage2 = fit(
        net,
        &train.subset(&stage2_indices),
        val,
        &StoppingPolicy {
            max_epochs: spec.stage2_epochs,
            ..policy.clone()
        },
        &OptimizerConfig {
            lr: spec.stage2_lr.unwrap_or(optimizer.lr),
            ..optimizer.clone()
        },
        derive(spec.seed, &[12]),
    )?;
    Ok(CurriculumReport {
        stage1,
        stage2,
        stage1_indices,
        stage2_indices,
        warm_start_val_acc,
    })
}

/// Curriculum training against a direct fit with the same total epoch budget,
/// from the same initial weights and on the same stage-2 pool.
#[derive(Debug, Clone)]
pub struct CurriculumComparison {
    pub threshold: f64,
    pub curriculum: CurriculumReport,
    pub direct: TrainReport,
    pub curriculum_test_acc: f64,
    pub direct_test_acc: f64,
}

impl CurriculumComparison {
    /// Epochs, counted across both stages, until validation accuracy first
    /// reaches the threshold.
    pub fn curriculum_epochs_to(&self) -> Option<usize> {
        let c = &self.curriculum;
        c.stage1.epochs_to(self.threshold).or_else(|| {
            c.stage2
                .epochs_to(self.threshold)
                .map(|e| e + c.stage1.epochs.len())
        })
    }

    pub fn to_csv(&self) -> String {
        let c = &self.curriculum;
        let fmt = |e: Option<usize>| e.map(|e| e.to_string()).unwrap_or_default();
        format!(
            "arm,epochs,best_val_acc,test_acc,epochs_to_threshold\n\
             curriculum,{},{},{},{}\n\
             direct,{},{},{},{}\n\
             # threshold={} stage1_windows={} stage2_windows={}\n",
            c.stage1.epochs.len() + c.stage2.epochs.len(),
            c.stage1.best_val_acc.max(c.stage2.best_val_acc),
            self.curriculum_test_acc,
            fmt(self.curriculum_epochs_to()),
            self.direct.epochs.len(),
            self.direct.best_val_acc,
            self.direct_test_acc,
            fmt(self.direct.epochs_to(self.threshold)),
            self.threshold,
            c.stage1_indices.len(),
            c.stage2_indices.len(),
        )
    }
}

/// Runs [`curriculum_fit`] and a direct [`fit`] on copies of `net`, leaving
/// `net` itself untouched.
#[allow(clippy::too_many_arguments)]
pub fn compare_curriculum(
    net: &Network<f32>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    test: &LabeledDataset,
    spec: &CurriculumSpec,
    policy: &StoppingPolicy,
    optimizer: &OptimizerConfig,
    threshold: f64,
) -> Result<CurriculumComparison> {
    let mut staged = net.clone();
    let curriculum = curriculum_fit(&mut staged, train, val, spec, policy, optimizer)?;
    let (_, curriculum_test_acc) = loss_and_accuracy(&staged, test)?;

    let mut direct_net = net.clone();
    let direct = fit(
        &mut direct_net,
        &train.subset(&curriculum.stage2_indices),
        val,
        &StoppingPolicy {
            max_epochs: spec.stage1_epochs + spec.stage2_epochs,
            ..policy.clone()
        },
        optimizer,
        derive(spec.seed, &[12]),
    )?;
    let (_, direct_test_acc) = loss_and_accuracy(&direct_net, test)?;
    Ok(CurriculumComparison {
        threshold,
        curriculum,
        direct,
        curriculum_test_acc,
        direct_test_acc,
    })
}
