//! Line-delimited run registry and per-epoch metric stream.
//!
//! Every state transition of a run appends one full [`RunRecord`]; replaying
//! the file and keeping the last record per run id gives the current state.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::append_line;
use crate::model::{count_params, ModelConfig};
use crate::train::metrics::opt_float_repr;
use crate::train::{EpochMetrics, TrainConfig};

pub const REGISTRY_FILE: &str = "registry.jsonl";
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Running,
    Completed,
    HaltedDivergent,
    HaltedBudget,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::HaltedDivergent | RunStatus::HaltedBudget)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Pending => "pending",
            RunStatus::Running => "running",
            RunStatus::Completed => "completed",
            RunStatus::HaltedDivergent => "halted_divergent",
            RunStatus::HaltedBudget => "halted_budget",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            RunStatus::Pending,
            RunStatus::Running,
            RunStatus::Completed,
            RunStatus::HaltedDivergent,
            RunStatus::HaltedBudget,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

/// Pure function of model config (seed included), training settings and data.
pub fn run_id(config: &ModelConfig, train: &TrainConfig, data_hash: &str) -> String {
    let mut h = Sha256::new();
    h.update(config.to_kv().as_bytes());
    h.update(serde_json::to_string(train).expect("train config serializes").as_bytes());
    h.update(data_hash.as_bytes());
    hex::encode(&h.finalize()[..12])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub label: String,
    pub config: ModelConfig,
    pub train: TrainConfig,
    pub data_hash: String,
    pub epoch_cap: usize,
    pub status: RunStatus,
    pub epochs_completed: usize,
    pub halt_epoch: Option<usize>,
    pub halt_reason: Option<String>,
    pub elapsed_minutes: f64,
    #[serde(with = "opt_float_repr")]
    pub train_loss: Option<f64>,
    #[serde(with = "opt_float_repr")]
    pub val_loss: Option<f64>,
    #[serde(with = "opt_float_repr")]
    pub val_perplexity: Option<f64>,
    pub param_count: u64,
}

impl RunRecord {
    pub fn pending(config: ModelConfig, train: TrainConfig, data_hash: &str, epoch_cap: usize) -> Self {
        RunRecord {
            run_id: run_id(&config, &train, data_hash),
            label: config.label(),
            param_count: count_params(&config),
            config,
            train,
            data_hash: data_hash.to_string(),
            epoch_cap,
            status: RunStatus::Pending,
            epochs_completed: 0,
            halt_epoch: None,
            halt_reason: None,
            elapsed_minutes: 0.0,
            train_loss: None,
            val_loss: None,
            val_perplexity: None,
        }
    }

    /// Copies progress and final metrics from a run's history.
    pub fn with_progress(&self, status: RunStatus, history: &[EpochMetrics]) -> Self {
        let last = history.last();
        RunRecord {
            status,
            epochs_completed: history.len(),
            elapsed_minutes: history.iter().map(|m| m.wall_seconds).sum::<f64>() / 60.0,
            train_loss: last.map(|m| m.train_loss),
            val_loss: last.map(|m| m.val_loss),
            val_perplexity: last.map(|m| m.val_perplexity),
            ..self.clone()
        }
    }
}

/// Append-only registry file.
#[derive(Clone, Debug)]
pub struct Registry {
    path: PathBuf,
}

impl Registry {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Registry { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &RunRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::Contract(e.to_string()))?;
        append_line(&self.path, &line)
    }

    /// Current state of every run, in order of first appearance. A missing
    /// file is an empty registry.
    pub fn replay(&self) -> Result<Vec<RunRecord>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        replay_lines(&text, &self.path)
    }
}

pub fn replay_lines(text: &str, origin: &Path) -> Result<Vec<RunRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut current: HashMap<String, RunRecord> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| Error::corrupt("registry", origin, format!("line {}: {reason}", i + 1));
        let rec: RunRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if rec.run_id != run_id(&rec.config, &rec.train, &rec.data_hash) {
            return Err(corrupt(format!("run id {} does not match its config", rec.run_id)));
        }
        if rec.param_count != count_params(&rec.config) {
            return Err(corrupt(format!("parameter count {} is wrong for {}", rec.param_count, rec.label)));
        }
        if rec.status.is_terminal() && rec.train_loss.is_none() && rec.epochs_completed > 0 {
            return Err(corrupt(format!("finished run {} lacks final metrics", rec.run_id)));
        }
        match current.get(&rec.run_id) {
            Some(prev) if prev.status.is_terminal() && *prev != rec => {
                return Err(corrupt(format!("finished run {} was modified", rec.run_id)));
            }
            Some(_) => {}
            None => order.push(rec.run_id.clone()),
        }
        current.insert(rec.run_id.clone(), rec);
    }
    Ok(order.into_iter().map(|id| current.remove(&id).unwrap()).collect())
}

/// One line of the metric stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    pub run_id: String,
    pub label: String,
    #[serde(flatten)]
    pub metrics: EpochMetrics,
}

pub fn append_metrics(path: &Path, line: &MetricLine) -> Result<()> {
    let text = serde_json::to_string(line).map_err(|e| Error::Contract(e.to_string()))?;
    append_line(path, &text)
}

/// Parsed metric stream. A repeated (run, epoch) keeps its last line, at the
/// position of its first.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricLine>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out: Vec<MetricLine> = Vec::new();
    let mut index: HashMap<(String, usize), usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: MetricLine = serde_json::from_str(line)
            .map_err(|e| Error::corrupt("metric stream", path, format!("line {}: {e}", i + 1)))?;
        let key = (m.run_id.clone(), m.metrics.epoch);
        match index.get(&key) {
            Some(&j) => out[j] = m,
            None => {
                index.insert(key, out.len());
                out.push(m);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> RunRecord {
        RunRecord::pending(ModelConfig::new(16, 4, 2, 0.1, 30, 40, 7), TrainConfig::default(), "abc", 3)
    }

    fn metrics(epoch: usize) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_loss: 2.0,
            val_loss: 2.5,
            train_acc: 0.3,
            val_acc: 0.2,
            val_perplexity: 2.5f64.exp(),
            wall_seconds: 30.0,
        }
    }

    #[test]
    fn run_id_is_pure() {
        let a = rec();
        let b = rec();
        assert_eq!(a.run_id, b.run_id);
        let other = RunRecord::pending(ModelConfig::new(16, 4, 2, 0.1, 30, 40, 8), TrainConfig::default(), "abc", 3);
        assert_ne!(a.run_id, other.run_id);
        assert_eq!(a.param_count, count_params(&a.config));
    }

    #[test]
    fn replay_keeps_last_state() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::new(dir.path().join(REGISTRY_FILE));
        let r = rec();
        reg.append(&r).unwrap();
        reg.append(&r.with_progress(RunStatus::Running, &[metrics(1)])).unwrap();
        reg.append(&r.with_progress(RunStatus::Completed, &[metrics(1), metrics(2)])).unwrap();
        let state = reg.replay().unwrap();
        assert_eq!(state.len(), 1);
        assert_eq!(state[0].status, RunStatus::Completed);
        assert_eq!(state[0].epochs_completed, 2);
        assert_eq!(state[0].elapsed_minutes, 1.0);
    }

    #[test]
    fn finished_records_are_immutable() {
        let r = rec();
        let done = r.with_progress(RunStatus::Completed, &[metrics(1)]);
        let text = [&done, &done.with_progress(RunStatus::Running, &[metrics(1)])]
            .iter()
            .map(|x| serde_json::to_string(x).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        let err = replay_lines(&text, Path::new("r")).unwrap_err();
        assert!(matches!(err, Error::Corruption { .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn garbage_and_tampering_are_reported() {
        assert!(matches!(replay_lines("{not json", Path::new("r")), Err(Error::Corruption { .. })));
        let mut r = rec();
        r.param_count += 1;
        let text = serde_json::to_string(&r).unwrap();
        assert!(matches!(replay_lines(&text, Path::new("r")), Err(Error::Corruption { .. })));
    }

    #[test]
    fn metric_stream_roundtrip_and_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let mut m = metrics(1);
        m.val_perplexity = f64::INFINITY;
        let line = MetricLine { run_id: "r".into(), label: "x".into(), metrics: m };
        append_metrics(&path, &line).unwrap();
        append_metrics(&path, &line).unwrap();
        append_metrics(&path, &MetricLine { metrics: metrics(2), ..line.clone() }).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].metrics.val_perplexity, f64::INFINITY);
        assert_eq!(back[1].metrics.epoch, 2);
    }

    #[test]
    fn status_names() {
        for s in ["pending", "running", "completed", "halted_divergent", "halted_budget"] {
            assert_eq!(RunStatus::parse(s).unwrap().as_str(), s);
            assert_eq!(serde_json::to_string(&RunStatus::parse(s).unwrap()).unwrap(), format!("\"{s}\""));
        }
    }
}
