use std::fmt::Write as _;

use super::metrics::{evaluate_ensemble, EnsembleEval};
use crate::classifiers::EnsembleModel;
use crate::dataset::LabeledDataset;
use crate::error::{CoreError, Result};

/// Device precision within each true distance.
///
/// Cell `(d, m)` is the fraction of windows predicted as device `m`, among
/// windows whose true distance is `d`, that really came from device `m`.
/// A cell with no such predictions is 0 and flagged; row and column averages
/// skip flagged cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionGrid {
    pub distances_ft: Vec<u32>,
    pub device_names: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub flagged: Vec<Vec<bool>>,
}

impl PrecisionGrid {
    /// Builds the grid from per-window true device, predicted device and true distance index.
    pub fn from_predictions(
        distances_ft: Vec<u32>,
        device_names: Vec<String>,
        true_devices: &[usize],
        predicted_devices: &[usize],
        true_distances: &[usize],
    ) -> Result<Self> {
        let (n_d, n_m) = (distances_ft.len(), device_names.len());
        if true_devices.len() != predicted_devices.len()
            || true_devices.len() != true_distances.len()
        {
            return Err(CoreError::Argument(
                "prediction arrays differ in length".into(),
            ));
        }
        let mut hits = vec![vec![0u64; n_m]; n_d];
        let mut calls = vec![vec![0u64; n_m]; n_d];
        let mut present = vec![vec![false; n_m]; n_d];
        for ((&t, &p), &d) in true_devices
            .iter()
            .zip(predicted_devices)
            .zip(true_distances)
        {
            if d >= n_d || t >= n_m || p >= n_m {
                return Err(CoreError::Argument("index outside the grid".into()));
            }
            present[d][t] = true;
            calls[d][p] += 1;
            if t == p {
                hits[d][p] += 1;
            }
        }
        if let Some((d, m)) = (0..n_d)
            .flat_map(|d| (0..n_m).map(move |m| (d, m)))
            .find(|&(d, m)| !present[d][m])
        {
            return Err(CoreError::Argument(format!(
                "test set has no windows of {} at {} ft",
                device_names[m], distances_ft[d]
            )));
        }
        let cells = (0..n_d)
            .map(|d| {
                (0..n_m)
                    .map(|m| {
                        if calls[d][m] == 0 {
                            0.0
                        } else {
                            hits[d][m] as f64 / calls[d][m] as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let flagged = calls
            .iter()
            .map(|r| r.iter().map(|&c| c == 0).collect())
            .collect();
        Ok(PrecisionGrid {
            distances_ft,
            device_names,
            cells,
            flagged,
        })
    }

    fn mean_unflagged(values: impl Iterator<Item = (f64, bool)>) -> f64 {
        let (sum, n) = values
            .filter(|(_, f)| !f)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Mean precision of each distance row.
    pub fn row_averages(&self) -> Vec<f64> {
        self.cells
            .iter()
            .zip(&self.flagged)
            .map(|(r, f)| Self::mean_unflagged(r.iter().copied().zip(f.iter().copied())))
            .collect()
    }

    /// Mean precision of each device column.
    pub fn column_averages(&self) -> Vec<f64> {
        (0..self.device_names.len())
            .map(|m| {
                Self::mean_unflagged(
                    self.cells
                        .iter()
                        .zip(&self.flagged)
                        .map(|(r, f)| (r[m], f[m])),
                )
            })
            .collect()
    }

    /// Grid rows with a trailing row average, a column-average row, and one
    /// `#` line per flagged cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance_ft");
        for name in &self.device_names {
            let _ = write!(out, ",{name}");
        }
        out.push_str(",row_avg\n");
        let rows = self.row_averages();
        for (d, row) in self.cells.iter().enumerate() {
            let _ = write!(out, "{}", self.distances_ft[d]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", rows[d]);
        }
        out.push_str("col_avg");
        for v in self.column_averages() {
            let _ = write!(out, ",{v}");
        }
        out.push_str(",\n");
        for (d, row) in self.flagged.iter().enumerate() {
            for (m, &f) in row.iter().enumerate() {
                if f {
                    let _ = writeln!(
                        out,
                        "# empty_column distance_ft={} device={}",
                        self.distances_ft[d], self.device_names[m]
                    );
                }
            }
        }
        out
    }
}

/// Evaluates the ensemble and derives its precision grid.
pub fn ensemble_heatmap(
    e: &EnsembleModel,
    test: &LabeledDataset,
) -> Result<(PrecisionGrid, EnsembleEval)> {
    let eval = evaluate_ensemble(e, test)?;
    let grid = PrecisionGrid::from_predictions(
        e.distance.distance_labels().to_vec(),
        test.label_names.clone(),
        &test.labels,
        &eval.predicted_devices,
        &eval.true_distances,
    )?;
    Ok((grid, eval))
}
