//! wasm-bindgen bindings for `www/index.html`.
//!
//! Build with
//! `cargo build --release --target wasm32-unknown-unknown -p nmt-web` and
//! `wasm-bindgen --target web --out-dir crates/web/www/pkg target/wasm32-unknown-unknown/release/nmt_web.wasm`.

use wasm_bindgen::prelude::*;

use nmt_core::data::{encode_source, Batch, ParallelCorpus, Provenance};
use nmt_core::harness::{prepare_data, DataOptions, PreparedData};
use nmt_core::model::{greedy_decode, sinusoidal_pe, ModelConfig};
use nmt_core::train::{eval_batches, fit_epoch, StepClock, TrainConfig, TrainState};
use nmt_core::Rng;

fn js(e: nmt_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Exact parameter count; an f64 holds every count a browser can train.
#[wasm_bindgen]
pub fn count_params(d_model: usize, heads: usize, layers: usize, src_vocab: usize, tgt_vocab: usize) -> Result<f64, JsValue> {
    let cfg = ModelConfig::new(d_model, heads, layers, 0.0, src_vocab, tgt_vocab, 0);
    cfg.validate().map_err(js)?;
    Ok(nmt_core::model::count_params(&cfg) as f64)
}

/// Parameters added by going from `layers` to `layers + 2` per side.
/// Independent of vocabulary and heads.
#[wasm_bindgen]
pub fn layer_delta(d_model: usize, layers: usize) -> Result<f64, JsValue> {
    let at = |l| count_params(d_model, 1, l, 8, 8);
    Ok(at(layers + 2)? - at(layers)?)
}

/// Row-major `[len, d_model]` sinusoidal table.
#[wasm_bindgen]
pub fn positional_encoding(len: usize, d_model: usize) -> Result<Vec<f32>, JsValue> {
    Ok(sinusoidal_pe::<f32>(len, d_model).map_err(js)?.data().to_vec())
}

const COPY_VOCAB: u64 = 20;
const COPY_MAX_LEN: usize = 16;

fn copy_corpus(n: usize, seed: u64) -> ParallelCorpus {
    let mut rng = Rng::new(seed);
    let mut text = String::new();
    for _ in 0..n {
        let len = 1 + rng.below(10);
        let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.below(COPY_VOCAB))).collect();
        let line = words.join(" ");
        text.push_str(&line);
        text.push('\t');
        text.push_str(&line);
        text.push('\n');
    }
    let provenance = Provenance {
        path: format!("copy:{n}:{seed}").into(),
        sha256: String::new(),
    };
    ParallelCorpus::from_tsv(&text, provenance)
}

/// Trains a small model to copy random `w0 … w19` sequences, one epoch
/// per call, so the page stays responsive.
#[wasm_bindgen]
pub struct CopyTrainer {
    data: PreparedData,
    val: Vec<Batch>,
    state: TrainState,
    clock: StepClock,
}

#[wasm_bindgen]
impl CopyTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(pairs: usize, d_model: usize, seed: u64, learning_rate: f64) -> Result<CopyTrainer, JsValue> {
        let opts = DataOptions {
            max_len: COPY_MAX_LEN,
            seed,
            ..Default::default()
        };
        let data = prepare_data(&copy_corpus(pairs, seed), &opts).map_err(js)?;
        let cfg = ModelConfig {
            max_len: COPY_MAX_LEN,
            ..ModelConfig::new(d_model, 4, 2, 0.1, data.src_vocab.len(), data.tgt_vocab.len(), seed)
        };
        let mut train = TrainConfig {
            batch_size: 16,
            ..Default::default()
        };
        train.adam.learning_rate = learning_rate;
        let state = TrainState::new(&cfg, train).map_err(js)?;
        let val = eval_batches(&data.val, 64).map_err(js)?;
        Ok(CopyTrainer {
            data,
            val,
            state,
            // Instant is unavailable in the browser; wall time is not reported.
            clock: StepClock::new(0.0),
        })
    }

    /// `[epoch, train_loss, val_loss, train_acc, val_acc, val_perplexity]`.
    pub fn epoch(&mut self) -> Result<Vec<f64>, JsValue> {
        let m = fit_epoch(&mut self.state, &self.data.train, &self.val, &self.clock).map_err(js)?;
        Ok(vec![
            m.epoch as f64,
            m.train_loss,
            m.val_loss,
            m.train_acc,
            m.val_acc,
            m.val_perplexity,
        ])
    }

    /// Greedy decoding of a space-separated `w` sequence.
    pub fn copy(&self, source: &str) -> Result<String, JsValue> {
        let src = encode_source(source, &self.data.src_vocab, COPY_MAX_LEN);
        let ids = greedy_decode(&self.state.params, &src, COPY_MAX_LEN).map_err(js)?;
        Ok(self.data.tgt_vocab.decode(&ids))
    }

    pub fn param_count(&self) -> f64 {
        self.state.params.numel() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heads_do_not_change_count() {
        let a = count_params(32, 4, 2, 100, 120).unwrap();
        let b = count_params(32, 8, 2, 100, 120).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delta_matches_two_counts() {
        let d = layer_delta(128, 2).unwrap();
        let c = count_params(128, 4, 4, 50, 60).unwrap() - count_params(128, 4, 2, 50, 60).unwrap();
        assert_eq!(d, c);
    }

    #[test]
    fn pe_has_len_times_width_values() {
        let pe = positional_encoding(10, 8).unwrap();
        assert_eq!(pe.len(), 80);
        assert_eq!(pe[0], 0.0);
        assert_eq!(pe[1], 1.0);
    }

    #[test]
    fn trainer_learns_and_decodes() {
        let mut t = CopyTrainer::new(300, 32, 1, 1e-3).unwrap();
        let first = t.epoch().unwrap();
        let mut last = first.clone();
        for _ in 0..4 {
            last = t.epoch().unwrap();
        }
        assert_eq!(last[0], 5.0);
        assert!(last[2] < first[2]);
        let out = t.copy("w1 w2 w3").unwrap();
        assert!(out.split_whitespace().count() <= COPY_MAX_LEN);
    }
}
