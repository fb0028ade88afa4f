use std::fmt::Write as _;

use crate::classifiers::{ensemble_predict, Classifier, EnsembleModel, EVAL_BATCH};
use crate::dataset::LabeledDataset;
use crate::error::{CoreError, Result};

/// Confusion counts and per-class metrics of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub task: String,
    pub label_names: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    /// Zero where the class was never predicted; see `empty_columns`.
    pub precision: Vec<f64>,
    /// Zero where the class has no test examples.
    pub recall: Vec<f64>,
    pub empty_columns: Vec<bool>,
}

impl EvalResult {
    /// Tallies `(truth, prediction)` pairs over `label_names.len()` classes.
    pub fn from_predictions(
        task: impl Into<String>,
        label_names: Vec<String>,
        truth: &[usize],
        predicted: &[usize],
    ) -> Result<Self> {
        let n = label_names.len();
        if truth.is_empty() {
            return Err(CoreError::Argument(
                "cannot evaluate an empty test set".into(),
            ));
        }
        if truth.len() != predicted.len() {
            return Err(CoreError::Argument(
                "truth and predictions differ in length".into(),
            ));
        }
        let mut confusion = vec![vec![0u64; n]; n];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n || p >= n {
                return Err(CoreError::Argument(format!(
                    "label {} outside {n} classes",
                    t.max(p)
                )));
            }
            confusion[t][p] += 1;
        }
        Ok(Self::from_confusion(task, label_names, confusion))
    }

    pub fn from_confusion(
        task: impl Into<String>,
        label_names: Vec<String>,
        confusion: Vec<Vec<u64>>,
    ) -> Self {
        let n = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let diag: u64 = (0..n).map(|c| confusion[c][c]).sum();
        let col = |c: usize| confusion.iter().map(|r| r[c]).sum::<u64>();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        EvalResult {
            task: task.into(),
            label_names,
            accuracy: ratio(diag, total),
            precision: (0..n).map(|c| ratio(confusion[c][c], col(c))).collect(),
            recall: (0..n)
                .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
                .collect(),
            empty_columns: (0..n).map(|c| col(c) == 0).collect(),
            confusion,
        }
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Test examples per true class.
    pub fn support(&self) -> Vec<u64> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    /// `class,precision,recall,support,empty_column` rows plus an accuracy line.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,support,empty_column\n");
        let support = self.support();
        for (c, name) in self.label_names.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                name,
                self.precision[c],
                self.recall[c],
                support[c],
                u8::from(self.empty_columns[c])
            );
        }
        let _ = writeln!(
            out,
            "# task={} accuracy={} total={}",
            self.task,
            self.accuracy,
            self.total()
        );
        out
    }

    /// Confusion matrix with true classes as rows.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.label_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (name, row) in self.label_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Scores a single classifier on a test set in eval mode.
pub fn evaluate(model: &Classifier, test: &LabeledDataset) -> Result<EvalResult> {
    if test.is_empty() {
        return Err(CoreError::Argument(
            "cannot evaluate an empty test set".into(),
        ));
    }
    let predicted = model.predict_dataset(test)?;
    EvalResult::from_predictions(
        test.task.to_string(),
        test.label_names.clone(),
        &test.labels,
        &predicted,
    )
}

/// Per-window output of an ensemble evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEval {
    pub device: EvalResult,
    pub distance: EvalResult,
    /// Predicted device index per test example.
    pub predicted_devices: Vec<usize>,
    /// True distance index per test example.
    pub true_distances: Vec<usize>,
}

/// Runs the full masked ensemble over an all-distance device test set.
pub fn evaluate_ensemble(e: &EnsembleModel, test: &LabeledDataset) -> Result<EnsembleEval> {
    if test.is_empty() {
        return Err(CoreError::Argument(
            "cannot evaluate an empty test set".into(),
        ));
    }
    if test.n_classes() != e.n_devices() || test.window != e.window() {
        return Err(CoreError::Argument(format!(
            "test set has {} classes and W={}; ensemble expects {} and W={}",
            test.n_classes(),
            test.window,
            e.n_devices(),
            e.window()
        )));
    }
    let labels = e.distance.distance_labels();
    let true_distances = test
        .sources
        .iter()
        .map(|s| {
            labels
                .iter()
                .position(|&d| d == s.distance_ft)
                .ok_or_else(|| {
                    CoreError::Argument(format!(
                        "test window from unknown distance {} ft",
                        s.distance_ft
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut predicted_devices = Vec::with_capacity(test.len());
    let mut predicted_distances = Vec::with_capacity(test.len());
    let idx: Vec<usize> = (0..test.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = test.batch(chunk);
        for o in ensemble_predict(e, &x)? {
            predicted_devices.push(o.device);
            predicted_distances.push(o.distance_index);
        }
    }
    let distance_names = e.distance.model.label_names.clone();
    Ok(EnsembleEval {
        device: EvalResult::from_predictions(
            "ensemble",
            test.label_names.clone(),
            &test.labels,
            &predicted_devices,
        )?,
        distance: EvalResult::from_predictions(
            "distance",
            distance_names,
            &true_distances,
            &predicted_distances,
        )?,
        predicted_devices,
        true_distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn hand_built_confusion() {
        let r = EvalResult::from_confusion(
            "t",
            names(3),
            vec![vec![5, 0, 0], vec![1, 4, 0], vec![0, 0, 5]],
        );
        assert!((r.accuracy - 14.0 / 15.0).abs() < 1e-15);
        assert!((r.precision[0] - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.recall[1], 0.8);
        assert_eq!(r.support(), vec![5, 5, 5]);
    }

    #[test]
    fn perfect_predictions() {
        let truth = vec![0, 1, 2, 2, 1];
        let r = EvalResult::from_predictions("t", names(3), &truth, &truth).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v == 0, i != j || truth.iter().all(|&t| t != i));
            }
        }
    }

    #[test]
    fn empty_column_is_flagged_as_zero() {
        let r = EvalResult::from_predictions("t", names(3), &[0, 1, 2], &[0, 0, 2]).unwrap();
        assert_eq!(r.precision[1], 0.0);
        assert!(r.empty_columns[1]);
        assert!(!r.empty_columns[0]);
        assert!(r.metrics_csv().contains("c1,0,0,1,1\n"));
    }

    #[test]
    fn empty_or_mismatched_input_is_rejected() {
        assert!(EvalResult::from_predictions("t", names(2), &[], &[]).is_err());
        assert!(EvalResult::from_predictions("t", names(2), &[0], &[0, 1]).is_err());
        assert!(EvalResult::from_predictions("t", names(2), &[0], &[2]).is_err());
    }
}
