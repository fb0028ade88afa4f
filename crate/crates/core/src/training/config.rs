use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curriculum::CurriculumSpec;
use super::finetune::FinetuneOptions;
use super::fit::OptimizerConfig;
use super::policy::StoppingPolicy;
use crate::classifiers::CombineMode;
use crate::dataset::{SplitMode, SplitSpec, WindowOptions};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    #[default]
    PooledRuns,
    RunHoldout,
}

/// Split settings as written in a config file; the seed comes from the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub mode: SplitKind,
    /// Run used for training in run-holdout mode.
    pub train_run: u32,
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            mode: SplitKind::PooledRuns,
            train_run: 0,
            fractions: [0.8, 0.1, 0.1],
        }
    }
}

impl SplitConfig {
    pub fn to_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            mode: match self.mode {
                SplitKind::PooledRuns => SplitMode::PooledRuns,
                SplitKind::RunHoldout => SplitMode::RunHoldout {
                    train_run: self.train_run,
                },
            },
            fractions: self.fractions,
            seed,
        }
    }
}

/// Every tunable of the training pipeline, read from a TOML file.
/// Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub architecture: String,
    pub combine: CombineMode,
    pub data: WindowOptions,
    pub split: SplitConfig,
    pub optimizer: OptimizerConfig,
    pub stopping: StoppingPolicy,
    pub curriculum: CurriculumSpec,
    pub finetune: FinetuneOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: "resnet".into(),
            combine: CombineMode::Hard,
            data: WindowOptions::default(),
            split: SplitConfig::default(),
            optimizer: OptimizerConfig::default(),
            stopping: StoppingPolicy::default(),
            curriculum: CurriculumSpec::default(),
            finetune: FinetuneOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| CoreError::format("training config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.stopping.validate()?;
        self.split.to_spec(0).validate()?;
        if self.data.window == 0 {
            return Err(CoreError::Config("window must be at least 1".into()));
        }
        Ok(())
    }
}
