use super::corpus::Pair;
use super::normalize::normalize;
use super::vocab::{Vocab, BOS_ID, EOS_ID};

pub const DEFAULT_MAX_LEN: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    /// Source ids ending in eos.
    pub src: Vec<u32>,
    /// Decoder input, starting with bos.
    pub tgt_in: Vec<u32>,
    /// Decoder target, `tgt_in` shifted left and ending in eos.
    pub tgt_out: Vec<u32>,
}

/// Maps unknown tokens to unk and truncates each side to `max_len - 1`
/// content tokens, so every produced sequence has length at most `max_len`.
pub fn encode_pair(pair: &Pair, src_vocab: &Vocab, tgt_vocab: &Vocab, max_len: usize) -> EncodedPair {
    encode_texts(&pair.source, &pair.target, src_vocab, tgt_vocab, max_len)
}

pub fn encode_texts(
    source: &str,
    target: &str,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
    max_len: usize,
) -> EncodedPair {
    let cap = max_len.saturating_sub(1).max(1);
    let mut src = src_vocab.encode(&normalize(source));
    src.truncate(cap);
    src.push(EOS_ID);

    let mut tgt = tgt_vocab.encode(&normalize(target));
    tgt.truncate(cap);
    let mut tgt_in = Vec::with_capacity(tgt.len() + 1);
    tgt_in.push(BOS_ID);
    tgt_in.extend_from_slice(&tgt);
    let mut tgt_out = tgt;
    tgt_out.push(EOS_ID);
    EncodedPair { src, tgt_in, tgt_out }
}

pub fn encode_source(source: &str, src_vocab: &Vocab, max_len: usize) -> Vec<u32> {
    let mut src = src_vocab.encode(&normalize(source));
    src.truncate(max_len.saturating_sub(1).max(1));
    src.push(EOS_ID);
    src
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::{build_vocab_from_texts, UNK_ID};

    fn vocabs() -> (Vocab, Vocab) {
        (
            build_vocab_from_texts(["hi there"], 1).unwrap(),
            build_vocab_from_texts(["hola"], 1).unwrap(),
        )
    }

    #[test]
    fn construction_rule() {
        let (s, t) = vocabs();
        let e = encode_texts("hi", "hola", &s, &t, 512);
        let hi = s.id("hi");
        let hola = t.id("hola");
        assert_eq!(e.src, vec![hi, EOS_ID]);
        assert_eq!(e.tgt_in, vec![BOS_ID, hola]);
        assert_eq!(e.tgt_out, vec![hola, EOS_ID]);
    }

    #[test]
    fn unseen_word_is_unk() {
        let (s, t) = vocabs();
        let e = encode_texts("zebra", "hola", &s, &t, 512);
        assert_eq!(e.src[0], UNK_ID);
    }

    #[test]
    fn long_source_truncated() {
        let (s, t) = vocabs();
        let long = vec!["hi"; 600].join(" ");
        let e = encode_texts(&long, &long, &s, &t, 512);
        assert_eq!(e.src.len(), 512);
        assert_eq!(*e.src.last().unwrap(), EOS_ID);
        assert_eq!(e.src.iter().filter(|&&i| i != EOS_ID).count(), 511);
        assert!(e.tgt_in.len() <= 512 && e.tgt_out.len() == e.tgt_in.len());
    }

    #[test]
    fn shift_invariant() {
        let (s, t) = vocabs();
        let e = encode_texts("hi there hi", "hola hola x hola", &s, &t, 512);
        assert_eq!(e.tgt_in.len(), e.tgt_out.len());
        for i in 0..e.tgt_in.len() - 1 {
            assert_eq!(e.tgt_out[i], e.tgt_in[i + 1]);
        }
    }
}
