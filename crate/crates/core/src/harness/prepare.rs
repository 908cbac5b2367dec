use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{
    build_vocab, encode_pair, split_corpus, split_manifest, EncodedPair, ParallelCorpus, Side,
    Vocab, DEFAULT_MAX_LEN, DEFAULT_MIN_FREQ, DEFAULT_TRAIN_RATIO,
};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const SRC_VOCAB_FILE: &str = "vocab.src.tsv";
pub const TGT_VOCAB_FILE: &str = "vocab.tgt.tsv";
pub const SPLIT_FILE: &str = "split.tsv";

#[derive(Clone, Debug, PartialEq)]
pub struct DataOptions {
    /// Keep only the first `n` pairs of the corpus.
    pub max_pairs: Option<usize>,
    pub split_ratio: f64,
    pub min_freq: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions {
            max_pairs: None,
            split_ratio: DEFAULT_TRAIN_RATIO,
            min_freq: DEFAULT_MIN_FREQ,
            max_len: DEFAULT_MAX_LEN,
            seed: 0,
        }
    }
}

/// Split, vocabularies and encoded pairs derived from one corpus.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub train: Vec<EncodedPair>,
    pub val: Vec<EncodedPair>,
    pub split_manifest: String,
    /// Identifies corpus bytes, subset, split and vocabularies together.
    pub data_hash: String,
    pub corpus_sha256: String,
}

/// Vocabularies come from the training partition only.
pub fn prepare_data(corpus: &ParallelCorpus, opts: &DataOptions) -> Result<PreparedData> {
    let corpus = match opts.max_pairs {
        Some(n) if n < corpus.len() => corpus.truncated(n),
        _ => corpus.clone(),
    };
    if corpus.len() < 2 {
        return Err(Error::Data(format!("corpus has {} usable pairs, need at least 2", corpus.len())));
    }
    let (train, val) = split_corpus(&corpus, opts.split_ratio, opts.seed)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(format!(
            "split of {} pairs at ratio {} leaves an empty partition",
            corpus.len(),
            opts.split_ratio
        )));
    }
    let src_vocab = build_vocab(&train, Side::Source, opts.min_freq)?;
    let tgt_vocab = build_vocab(&train, Side::Target, opts.min_freq)?;
    let encode = |c: &ParallelCorpus| -> Vec<EncodedPair> {
        c.pairs
            .iter()
            .map(|p| encode_pair(p, &src_vocab, &tgt_vocab, opts.max_len))
            .collect()
    };
    let train_pairs = encode(&train);
    let val_pairs = encode(&val);
    let manifest = split_manifest(&train, &val, opts.seed, opts.split_ratio);

    let mut h = Sha256::new();
    h.update(corpus.data_hash().as_bytes());
    h.update(manifest.as_bytes());
    h.update(format!("min_freq={} max_len={}", opts.min_freq, opts.max_len).as_bytes());
    h.update(src_vocab.content_hash().as_bytes());
    h.update(tgt_vocab.content_hash().as_bytes());
    Ok(PreparedData {
        data_hash: hex::encode(h.finalize()),
        corpus_sha256: corpus.provenance.sha256.clone(),
        src_vocab,
        tgt_vocab,
        train: train_pairs,
        val: val_pairs,
        split_manifest: manifest,
    })
}

impl PreparedData {
    /// Writes both vocabularies and the split manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.src_vocab.save(&dir.join(SRC_VOCAB_FILE))?;
        self.tgt_vocab.save(&dir.join(TGT_VOCAB_FILE))?;
        write_atomic(&dir.join(SPLIT_FILE), self.split_manifest.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_corpus;

    #[test]
    fn deterministic_and_disjoint() {
        let corpus = synthetic_corpus(50, 1);
        let opts = DataOptions { seed: 4, min_freq: 1, ..Default::default() };
        let a = prepare_data(&corpus, &opts).unwrap();
        let b = prepare_data(&corpus, &opts).unwrap();
        assert_eq!(a.data_hash, b.data_hash);
        assert_eq!((a.train.len(), a.val.len()), (35, 15));
        let c = prepare_data(&corpus, &DataOptions { seed: 5, ..opts.clone() }).unwrap();
        assert_ne!(a.data_hash, c.data_hash);
        let d = prepare_data(&corpus, &DataOptions { max_pairs: Some(20), ..opts }).unwrap();
        assert_eq!(d.train.len() + d.val.len(), 20);
    }
}
