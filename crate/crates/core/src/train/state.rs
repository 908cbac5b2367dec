//! Training-state checkpoints: model tensors, Adam moments, generator
//! positions and the metric history in one verified archive.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::{TrainConfig, TrainState};
use super::metrics::EpochMetrics;
use super::optimizer::OptimizerState;
use crate::error::{Error, Result};
use crate::model::checkpoint::CONFIG_FILE;
use crate::model::{read_archive, write_archive, ModelConfig, ModelParams};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

const STATE_FILE: &str = "state.json";

#[derive(Serialize, Deserialize)]
struct RngPos {
    seed: u64,
    stream: u64,
    /// Decimal; JSON numbers cannot hold 128 bits portably.
    word_pos: String,
}

impl RngPos {
    fn of(r: &Rng) -> Self {
        RngPos {
            seed: r.seed(),
            stream: r.stream(),
            word_pos: r.word_pos().to_string(),
        }
    }

    fn restore(&self) -> Option<Rng> {
        Some(Rng::restore(self.seed, self.stream, self.word_pos.parse().ok()?))
    }
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    epoch: usize,
    train: TrainConfig,
    optimizer_step: u64,
    dropout_rng: RngPos,
    shuffle_rng: RngPos,
    best_val_loss: Option<f64>,
    best_epoch: Option<usize>,
    history: Vec<EpochMetrics>,
}

pub fn save_state<T: Scalar>(state: &TrainState<T>, dir: &Path) -> Result<()> {
    let doc = StateDoc {
        epoch: state.epoch,
        train: state.train.clone(),
        optimizer_step: state.optimizer.step,
        dropout_rng: RngPos::of(&state.dropout_rng),
        shuffle_rng: RngPos::of(&state.shuffle_rng),
        best_val_loss: state.best_val_loss,
        best_epoch: state.best_epoch,
        history: state.history.clone(),
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Contract(e.to_string()))?;
    let config = state.params.config().to_kv();

    let names = state.params.names();
    let shapes: Vec<&[usize]> = state.params.tensors().iter().map(Tensor::shape).collect();
    let moment = |which: &Vec<Vec<T>>| -> Result<Vec<Tensor<T>>> {
        which
            .iter()
            .zip(&shapes)
            .map(|(d, s)| Tensor::new(s.to_vec(), d.clone()))
            .collect()
    };
    let m = moment(&state.optimizer.m)?;
    let v = moment(&state.optimizer.v)?;
    let m_names: Vec<String> = names.iter().map(|n| format!("adam.m.{n}")).collect();
    let v_names: Vec<String> = names.iter().map(|n| format!("adam.v.{n}")).collect();
    let mut tensors: Vec<(&str, &Tensor<T>)> = Vec::with_capacity(3 * names.len());
    tensors.extend(names.iter().map(String::as_str).zip(state.params.tensors()));
    tensors.extend(m_names.iter().map(String::as_str).zip(&m));
    tensors.extend(v_names.iter().map(String::as_str).zip(&v));
    write_archive(dir, &[(CONFIG_FILE, &config), (STATE_FILE, &json)], &tensors)
}

pub fn load_state<T: Scalar>(dir: &Path) -> Result<TrainState<T>> {
    let archive = read_archive::<T>(dir)?;
    let corrupt = |reason: String| Error::corrupt("training state", dir, reason);
    let config = ModelConfig::from_kv(archive.doc(CONFIG_FILE, dir)?)?;
    let doc: StateDoc = serde_json::from_str(archive.doc(STATE_FILE, dir)?)
        .map_err(|e| corrupt(format!("{STATE_FILE}: {e}")))?;

    let n = archive.tensors.len() / 3;
    if archive.tensors.len() != 3 * n {
        return Err(corrupt("tensor count is not a multiple of three".into()));
    }
    let mut tensors = archive.tensors;
    let v_part = tensors.split_off(2 * n);
    let m_part = tensors.split_off(n);
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for (i, (name, _)) in tensors.iter().enumerate() {
        if m_part[i].0 != format!("adam.m.{name}") || v_part[i].0 != format!("adam.v.{name}") {
            return Err(corrupt(format!("moments for {name} are missing or out of order")));
        }
    }
    for ((_, mt), (_, vt)) in m_part.into_iter().zip(v_part) {
        m.push(mt.into_data());
        v.push(vt.into_data());
    }
    let params = ModelParams::from_named(&config, tensors)?;
    let optimizer = OptimizerState {
        hyper: doc.train.adam.clone(),
        step: doc.optimizer_step,
        m,
        v,
    };
    let restore = |r: &RngPos| r.restore().ok_or_else(|| corrupt("bad generator position".into()));
    Ok(TrainState {
        params,
        optimizer,
        train: doc.train,
        epoch: doc.epoch,
        dropout_rng: restore(&doc.dropout_rng)?,
        shuffle_rng: restore(&doc.shuffle_rng)?,
        best_val_loss: doc.best_val_loss,
        best_epoch: doc.best_epoch,
        history: doc.history,
    })
}
