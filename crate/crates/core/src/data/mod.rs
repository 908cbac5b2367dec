//! Parallel-corpus loading, normalization, vocabularies, splitting and batching.

mod batch;
mod corpus;
mod encode;
mod normalize;
mod split;
pub mod synthetic;
mod vocab;

pub use batch::{make_batches, Batch, DEFAULT_BATCH_SIZE};
pub use corpus::{load_corpus, Pair, ParallelCorpus, Provenance};
pub use encode::{encode_pair, encode_source, encode_texts, EncodedPair, DEFAULT_MAX_LEN};
pub use normalize::{is_punct, normalize, tokenize};
pub use synthetic::{synthetic_corpus, synthetic_tsv};
pub use split::{split_corpus, split_manifest, DEFAULT_TRAIN_RATIO};
pub use vocab::{
    build_vocab, build_vocab_from_texts, Side, Vocab, BOS_ID, DEFAULT_MIN_FREQ, EOS_ID, PAD_ID,
    SPECIALS, UNK_ID,
};
