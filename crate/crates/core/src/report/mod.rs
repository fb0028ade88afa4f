//! Evaluation metrics, report tables and their SVG views.

mod compare;
mod heatmap;
mod metrics;
mod svg;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::sim::write_json_file;
use crate::training::TrainConfig;

pub use compare::{compare_architectures, Arm, ComparisonTable, Series, COMPARISON_HEADER};
pub use heatmap::{ensemble_heatmap, PrecisionGrid};
pub use metrics::{evaluate, evaluate_ensemble, EnsembleEval, EvalResult};
pub use svg::{comparison_svg, heatmap_svg};

/// What a command ran on and where it wrote, saved beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub dataset: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub config: TrainConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunManifest {
    /// Fails on the first referenced input that does not exist.
    pub fn check_inputs(&self) -> Result<()> {
        for path in std::iter::once(&self.dataset).chain(&self.checkpoints) {
            if !path.exists() {
                return Err(CoreError::Argument(format!(
                    "{} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Path the manifest is saved to: `<out_dir>/runs/<command>.json`.
    pub fn path(&self) -> PathBuf {
        self.out_dir
            .join("runs")
            .join(format!("{}.json", self.command))
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.path();
        let dir = path.parent().expect("runs directory");
        std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        write_json_file(&path, self)?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CoreError::format("run manifest", e.to_string()))
    }
}
