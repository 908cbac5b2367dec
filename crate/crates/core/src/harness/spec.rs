//! Declarative sweep specification (TOML).
//!
//! ```toml
//! corpus = "data/spa.txt"
//! output_dir = "runs/screen"
//! seed = 42
//! max_pairs = 5000
//!
//! [grid]
//! d_model = [32, 64, 128]
//! n_heads = [4]
//! n_layers = [2]
//! dropout = [0.1, 0.5]
//!
//! [[grid.overrides]]
//! d_model = 128
//! epoch_cap = 400
//!
//! [budget]
//! epoch_cap = 30
//! wall_clock_hours = 8.0
//!
//! [train]
//! learning_rate = 1e-4
//! batch_size = 64
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::grid::{Budget, SweepGrid, DEFAULT_EPOCH_CAP, EXTENDED_EPOCH_CAP};
use super::prepare::{prepare_data, DataOptions, PreparedData};
use super::sweep::SweepPlan;
use crate::data::{load_corpus, synthetic_corpus, ParallelCorpus, DEFAULT_BATCH_SIZE, DEFAULT_MAX_LEN, DEFAULT_MIN_FREQ, DEFAULT_TRAIN_RATIO};
use crate::error::{Error, Result};
use crate::train::{AdamConfig, TrainConfig, DEFAULT_LEARNING_RATE, DIVERGENCE_PATIENCE, DIVERGENCE_THRESHOLD};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub epoch_cap: Option<usize>,
    /// Use the 400-epoch cap when `epoch_cap` is unset.
    #[serde(default)]
    pub extended: bool,
    pub wall_clock_hours: Option<f64>,
    pub per_run_minutes: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub grad_clip: Option<f64>,
    pub workers: Option<usize>,
    pub divergence_threshold: Option<f64>,
    pub divergence_patience: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub corpus: Option<PathBuf>,
    /// Generate this many synthetic pairs instead of reading `corpus`.
    pub synthetic_pairs: Option<usize>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub max_pairs: Option<usize>,
    pub split_ratio: Option<f64>,
    pub min_freq: Option<usize>,
    pub max_len: Option<usize>,
    pub grid: SweepGrid,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub train: TrainSpec,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("sweep spec: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("sweep spec serializes")
    }

    pub fn data_options(&self) -> DataOptions {
        DataOptions {
            max_pairs: self.max_pairs,
            split_ratio: self.split_ratio.unwrap_or(DEFAULT_TRAIN_RATIO),
            min_freq: self.min_freq.unwrap_or(DEFAULT_MIN_FREQ),
            max_len: self.max_len.unwrap_or(DEFAULT_MAX_LEN),
            seed: self.seed,
        }
    }

    pub fn budget(&self) -> Budget {
        let default_cap = if self.budget.extended { EXTENDED_EPOCH_CAP } else { DEFAULT_EPOCH_CAP };
        Budget {
            epoch_cap: self.budget.epoch_cap.unwrap_or(default_cap),
            wall_clock_cap_seconds: self.budget.wall_clock_hours.map_or(Budget::default().wall_clock_cap_seconds, |h| h * 3600.0),
            per_run_wall_cap_seconds: self.budget.per_run_minutes.map(|m| m * 60.0),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                learning_rate: self.train.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
                ..Default::default()
            },
            batch_size: self.train.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            grad_clip: self.train.grad_clip,
        }
    }

    /// Exactly one of `corpus` and `synthetic_pairs` must be set; synthetic
    /// pairs are generated from `seed`.
    pub fn load_corpus(&self) -> Result<ParallelCorpus> {
        match (&self.corpus, self.synthetic_pairs) {
            (Some(path), None) => load_corpus(path),
            (None, Some(n)) => Ok(synthetic_corpus(n, self.seed)),
            (Some(_), Some(_)) => Err(Error::Config("set either corpus or synthetic_pairs, not both".into())),
            (None, None) => Err(Error::Config("no corpus: set corpus or synthetic_pairs".into())),
        }
    }

    pub fn prepare(&self) -> Result<PreparedData> {
        prepare_data(&self.load_corpus()?, &self.data_options())
    }

    pub fn plan(&self) -> Result<SweepPlan> {
        let mut plan = SweepPlan::new(self.grid.clone(), self.budget(), self.train_config(), self.seed);
        plan.max_len = self.max_len.unwrap_or(DEFAULT_MAX_LEN);
        plan.workers = self.train.workers.unwrap_or(1);
        plan.divergence_threshold = self.train.divergence_threshold.unwrap_or(DIVERGENCE_THRESHOLD);
        plan.divergence_patience = self.train.divergence_patience.unwrap_or(DIVERGENCE_PATIENCE);
        plan.validate()?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
corpus = "spa.txt"
seed = 42
max_pairs = 5000

[grid]
d_model = [32, 64, 128]
n_heads = [4]
n_layers = [2]
dropout = [0.1, 0.5]

[[grid.overrides]]
d_model = 128
epoch_cap = 400

[budget]
epoch_cap = 30

[train]
learning_rate = 3e-4
"#;

    #[test]
    fn parses_with_defaults() {
        let spec = SweepSpec::from_toml_str(DOC).unwrap();
        let plan = spec.plan().unwrap();
        assert_eq!(plan.budget.epoch_cap, 30);
        assert_eq!(plan.budget.wall_clock_cap_seconds, 8.0 * 3600.0);
        assert_eq!(plan.train.batch_size, 64);
        assert_eq!(plan.train.adam.learning_rate, 3e-4);
        assert_eq!(plan.workers, 1);
        assert_eq!(spec.data_options().split_ratio, 0.7);
        assert_eq!(spec.grid.overrides[0].epoch_cap, Some(400));
        let again = SweepSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = DOC.replace("seed = 42", "seed = 42\nsede = 1");
        assert!(matches!(SweepSpec::from_toml_str(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn corpus_source_must_be_unique() {
        let mut spec = SweepSpec::from_toml_str(DOC).unwrap();
        spec.synthetic_pairs = Some(10);
        assert!(matches!(spec.load_corpus(), Err(Error::Config(_))));
        spec.corpus = None;
        assert_eq!(spec.load_corpus().unwrap().len(), 10);
        spec.synthetic_pairs = None;
        assert!(matches!(spec.load_corpus(), Err(Error::Config(_))));
    }
}
