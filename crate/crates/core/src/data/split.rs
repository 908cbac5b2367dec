use std::fmt::Write as _;

use super::corpus::ParallelCorpus;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

pub const DEFAULT_TRAIN_RATIO: f64 = 0.7;

/// Seeded shuffle, then the first `round(n * ratio)` pairs become training data.
pub fn split_corpus(
    corpus: &ParallelCorpus,
    ratio: f64,
    seed: u64,
) -> Result<(ParallelCorpus, ParallelCorpus)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    Rng::with_stream(seed, stream::SPLIT).shuffle(&mut order);
    let n_train = (corpus.len() as f64 * ratio).round() as usize;
    let pick = |idx: &[usize]| ParallelCorpus {
        pairs: idx.iter().map(|&i| corpus.pairs[i].clone()).collect(),
        ..corpus.clone()
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Auditable record of which corpus lines landed in each partition.
pub fn split_manifest(
    train: &ParallelCorpus,
    val: &ParallelCorpus,
    seed: u64,
    ratio: f64,
) -> String {
    let mut s = format!(
        "# seed={seed} ratio={ratio} corpus_sha256={} train={} val={}\n",
        train.provenance.sha256,
        train.len(),
        val.len()
    );
    for (name, part) in [("train", train), ("val", val)] {
        for p in &part.pairs {
            let _ = writeln!(s, "{name}\t{}", p.line);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::Provenance;

    fn corpus(n: usize) -> ParallelCorpus {
        let text: String = (0..n).map(|i| format!("s{i}\tt{i}\n")).collect();
        ParallelCorpus::from_tsv(
            &text,
            Provenance {
                path: "mem".into(),
                sha256: "x".into(),
            },
        )
    }

    #[test]
    fn ten_pairs_seven_three() {
        let c = corpus(10);
        let (tr, va) = split_corpus(&c, 0.7, 1).unwrap();
        assert_eq!((tr.len(), va.len()), (7, 3));
        let mut lines: Vec<usize> = tr.pairs.iter().chain(&va.pairs).map(|p| p.line).collect();
        lines.sort_unstable();
        assert_eq!(lines, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn hundred_thousand_split() {
        let c = corpus(100_000);
        let (tr, va) = split_corpus(&c, 0.7, 42).unwrap();
        assert_eq!((tr.len(), va.len()), (70_000, 30_000));
    }

    #[test]
    fn deterministic_per_seed() {
        let c = corpus(50);
        let a = split_corpus(&c, 0.7, 5).unwrap();
        let b = split_corpus(&c, 0.7, 5).unwrap();
        let other = split_corpus(&c, 0.7, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0.pairs, other.0.pairs);
    }

    #[test]
    fn bad_ratio() {
        let c = corpus(3);
        assert!(split_corpus(&c, 0.0, 1).is_err());
        assert!(split_corpus(&c, 1.0, 1).is_err());
    }

    #[test]
    fn manifest_lists_every_line() {
        let c = corpus(5);
        let (tr, va) = split_corpus(&c, 0.6, 3).unwrap();
        let m = split_manifest(&tr, &va, 3, 0.6);
        assert_eq!(m.lines().count(), 6);
        assert_eq!(m.lines().filter(|l| l.starts_with("train\t")).count(), 3);
    }
}
