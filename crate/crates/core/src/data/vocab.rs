use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::corpus::ParallelCorpus;
use super::normalize::{normalize, tokenize};
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
pub const DEFAULT_MIN_FREQ: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    to_id: HashMap<String, u32>,
    tokens: Vec<String>,
    min_freq: usize,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> u32 {
        self.to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of a normalized sentence, with no special tokens added.
    pub fn encode(&self, normalized: &str) -> Vec<u32> {
        tokenize(normalized).map(|t| self.id(t)).collect()
    }

    /// Joins tokens, skipping pad/bos/eos.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD_ID | BOS_ID | EOS_ID))
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        let mut to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab {
            to_id,
            tokens,
            min_freq,
        })
    }

    fn body(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(t);
            s.push('\t');
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body().as_bytes()))
    }

    /// `# sha256=<hex> min_freq=<n>` header, then `token<TAB>id` per line.
    pub fn to_file_string(&self) -> String {
        format!(
            "# sha256={} min_freq={}\n{}",
            self.content_hash(),
            self.min_freq,
            self.body()
        )
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::corrupt("vocabulary", origin, reason);
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| corrupt("missing header line".into()))?;
        let mut hash = None;
        let mut min_freq = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("sha256", v)) => hash = Some(v.to_string()),
                Some(("min_freq", v)) => min_freq = v.parse().ok(),
                _ => {}
            }
        }
        let hash = hash.ok_or_else(|| corrupt("header has no sha256".into()))?;
        let actual = hex::encode(Sha256::digest(body.as_bytes()));
        if actual != hash {
            return Err(corrupt(format!("content hash {actual} does not match header {hash}")));
        }
        let mut tokens = Vec::new();
        for (n, line) in body.lines().enumerate() {
            let (tok, id) = line
                .split_once('\t')
                .ok_or_else(|| corrupt(format!("line {} lacks a tab", n + 2)))?;
            if id.parse::<usize>().ok() != Some(n) {
                return Err(corrupt(format!("line {} has id {id}, expected {n}", n + 2)));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(corrupt("special tokens missing from ids 0-3".into()));
        }
        Self::from_tokens(tokens, min_freq.unwrap_or(DEFAULT_MIN_FREQ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_file_string().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Specials first, then tokens seen at least `min_freq` times, ordered by
/// descending frequency and then lexicographically.
pub fn build_vocab(corpus: &ParallelCorpus, side: Side, min_freq: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
    }
    let texts = corpus.pairs.iter().map(|p| match side {
        Side::Source => p.source.as_str(),
        Side::Target => p.target.as_str(),
    });
    build_vocab_from_texts(texts, min_freq)
}

pub fn build_vocab_from_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    min_freq: usize,
) -> Result<Vocab> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in tokenize(&normalize(text)) {
            *counts.entry(tok.to_string()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && !SPECIALS.contains(&t.as_str()))
        .collect();
    if kept.is_empty() {
        return Err(Error::Config(format!(
            "no token occurs at least {min_freq} times; vocabulary would be empty"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Vocab::from_tokens(tokens, min_freq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_freq_threshold() {
        let v = build_vocab_from_texts(["a a b"], 2).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(4), Some("a"));
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn ordering_rule() {
        let v = build_vocab_from_texts(["a a b"], 1).unwrap();
        assert_eq!(&v.tokens()[4..], &["a".to_string(), "b".to_string()]);
        let v = build_vocab_from_texts(["c b a b c"], 1).unwrap();
        assert_eq!(&v.tokens()[4..], &["b", "c", "a"]);
    }

    #[test]
    fn specials_fixed() {
        let v = build_vocab_from_texts(["x"], 1).unwrap();
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.id(s), i as u32);
        }
    }

    #[test]
    fn empty_after_threshold_is_config_error() {
        assert!(matches!(build_vocab_from_texts(["a b c"], 2), Err(Error::Config(_))));
    }

    #[test]
    fn file_roundtrip_and_tamper_detection() {
        let v = build_vocab_from_texts(["¿ qué tal ? qué bien", "bien bien"], 1).unwrap();
        let s = v.to_file_string();
        assert!(s.starts_with("# sha256="));
        let back = Vocab::parse(&s, Path::new("mem")).unwrap();
        assert_eq!(back, v);
        let tampered = s.replace("bien\t", "mal\t");
        assert!(matches!(
            Vocab::parse(&tampered, Path::new("mem")),
            Err(Error::Corruption { .. })
        ));
    }

    #[test]
    fn decode_inverts_encode_in_vocab() {
        let v = build_vocab_from_texts(["hello ! how are you ?"], 1).unwrap();
        let n = normalize("Hello! How are you?");
        assert_eq!(v.decode(&v.encode(&n)), n);
    }
}
