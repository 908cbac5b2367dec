use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feed-forward width as a multiple of `d_model`.
pub const FF_MULT: usize = 4;
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Additive logit for masked attention positions.
pub const MASK_VALUE: f64 = -1e9;

/// The ablation axes plus everything else a parameter collection depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    /// Encoder layers; the decoder has the same number.
    pub n_layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub d_ff: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(
        d_model: usize,
        n_heads: usize,
        n_layers: usize,
        dropout: f64,
        src_vocab_size: usize,
        tgt_vocab_size: usize,
        seed: u64,
    ) -> Self {
        ModelConfig {
            d_model,
            n_heads,
            n_layers,
            dropout,
            max_len: crate::data::DEFAULT_MAX_LEN,
            d_ff: FF_MULT * d_model,
            src_vocab_size,
            tgt_vocab_size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 {
            return fail(format!(
                "d_model, heads and layers must be positive (got {}, {}, {})",
                self.d_model, self.n_heads, self.n_layers
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "{} heads do not divide d_model {}",
                self.n_heads, self.d_model
            ));
        }
        if !self.d_model.is_multiple_of(2) {
            return fail(format!("d_model must be even for sinusoidal positions, got {}", self.d_model));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.d_ff != FF_MULT * self.d_model {
            return fail(format!("d_ff must be {FF_MULT}·d_model, got {}", self.d_ff));
        }
        if self.max_len < 2 {
            return fail(format!("max_len must be at least 2, got {}", self.max_len));
        }
        if self.src_vocab_size <= crate::data::UNK_ID as usize
            || self.tgt_vocab_size <= crate::data::UNK_ID as usize
        {
            return fail("vocabularies must include the four special tokens".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// `key=value` lines, one field per line, fixed order.
    pub fn to_kv(&self) -> String {
        format!(
            "d_model={}\nn_heads={}\nn_layers={}\ndropout={}\nmax_len={}\nd_ff={}\nsrc_vocab_size={}\ntgt_vocab_size={}\nseed={}\n",
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.dropout,
            self.max_len,
            self.d_ff,
            self.src_vocab_size,
            self.tgt_vocab_size,
            self.seed
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed config line {line:?}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: std::str::FromStr>(
            map: &std::collections::HashMap<String, String>,
            key: &str,
        ) -> Result<T> {
            map.get(key)
                .ok_or_else(|| Error::Config(format!("config is missing {key}")))?
                .parse()
                .map_err(|_| Error::Config(format!("config field {key} is not valid")))
        }
        let cfg = ModelConfig {
            d_model: get(&map, "d_model")?,
            n_heads: get(&map, "n_heads")?,
            n_layers: get(&map, "n_layers")?,
            dropout: get(&map, "dropout")?,
            max_len: get(&map, "max_len")?,
            d_ff: get(&map, "d_ff")?,
            src_vocab_size: get(&map, "src_vocab_size")?,
            tgt_vocab_size: get(&map, "tgt_vocab_size")?,
            seed: get(&map, "seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Legend label, e.g. `d128_h4_l4_p0.1`.
    pub fn label(&self) -> String {
        format!(
            "d{}_h{}_l{}_p{}",
            self.d_model, self.n_heads, self.n_layers, self.dropout
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heads_must_divide() {
        let c = ModelConfig::new(16, 32, 2, 0.1, 100, 100, 0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ModelConfig::new(16, 4, 2, 0.1, 100, 100, 0).validate().is_ok());
    }

    #[test]
    fn zero_dropout_allowed_one_rejected() {
        assert!(ModelConfig::new(16, 4, 2, 0.0, 100, 100, 0).validate().is_ok());
        assert!(ModelConfig::new(16, 4, 2, 1.0, 100, 100, 0).validate().is_err());
    }

    #[test]
    fn kv_roundtrip() {
        let c = ModelConfig::new(128, 4, 4, 0.1, 5000, 7000, 99);
        assert_eq!(ModelConfig::from_kv(&c.to_kv()).unwrap(), c);
        assert_eq!(c.label(), "d128_h4_l4_p0.1");
    }
}
