use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::normalize::normalize;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub path: PathBuf,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
}

/// One sentence pair with its 0-based line index in the source file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub line: usize,
    pub source: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<Pair>,
    pub provenance: Provenance,
    /// Lines without a tab separator.
    pub skipped_malformed: usize,
    /// Lines where one side normalizes to nothing.
    pub skipped_empty: usize,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses in-memory tab-separated text.
    pub fn from_tsv(text: &str, provenance: Provenance) -> Self {
        let mut pairs = Vec::new();
        let mut skipped_malformed = 0;
        let mut skipped_empty = 0;
        for (line, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let mut cols = raw.split('\t');
            let (Some(src), Some(tgt)) = (cols.next(), cols.next()) else {
                skipped_malformed += 1;
                continue;
            };
            if normalize(src).is_empty() || normalize(tgt).is_empty() {
                skipped_empty += 1;
                continue;
            }
            pairs.push(Pair {
                line,
                source: src.to_string(),
                target: tgt.to_string(),
            });
        }
        ParallelCorpus {
            pairs,
            provenance,
            skipped_malformed,
            skipped_empty,
        }
    }

    /// The first `n` pairs, keeping provenance.
    pub fn truncated(&self, n: usize) -> Self {
        ParallelCorpus {
            pairs: self.pairs.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    /// Hash identifying exactly which pairs this corpus holds.
    pub fn data_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.provenance.sha256.as_bytes());
        for p in &self.pairs {
            h.update((p.line as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Reads an `English<TAB>Spanish[<TAB>...]` file; extra columns are ignored.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<ParallelCorpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| Error::Data(format!("{} is not UTF-8: {e}", path.display())))?;
    let provenance = Provenance {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let corpus = ParallelCorpus::from_tsv(&text, provenance);
    if corpus.skipped_malformed > 0 {
        log::warn!(
            "{}: skipped {} line(s) without a tab separator",
            path.display(),
            corpus.skipped_malformed
        );
    }
    log::info!("{}: loaded {} pairs", path.display(), corpus.len());
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            path: "mem".into(),
            sha256: "0".into(),
        }
    }

    #[test]
    fn two_lines() {
        let c = ParallelCorpus::from_tsv("hi\thola\ngo\tve\n", prov());
        assert_eq!(c.len(), 2);
        assert_eq!(c.pairs[1].source, "go");
        assert_eq!(c.pairs[1].target, "ve");
    }

    #[test]
    fn extra_columns_ignored_and_malformed_counted() {
        let c = ParallelCorpus::from_tsv("hi\thola\tCC-BY attribution\nno tab here\n\n", prov());
        assert_eq!(c.len(), 1);
        assert_eq!(c.pairs[0].target, "hola");
        assert_eq!(c.skipped_malformed, 1);
    }

    #[test]
    fn empty_sides_dropped() {
        let c = ParallelCorpus::from_tsv("hi\t  \n \tx\nok\tvale\n", prov());
        assert_eq!(c.len(), 1);
        assert_eq!(c.skipped_empty, 2);
        assert_eq!(c.pairs[0].line, 2);
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(load_corpus("/nonexistent/corpus.txt"), Err(Error::Io { .. })));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spa.txt");
        std::fs::write(&path, "Go.\tVe.\nHi.\tHola.\n").unwrap();
        let c = load_corpus(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.provenance.sha256.len(), 64);
    }
}
