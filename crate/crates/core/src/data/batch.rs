use super::encode::EncodedPair;
use super::vocab::PAD_ID;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::IdTensor;

pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub src: IdTensor,
    pub tgt_in: IdTensor,
    pub tgt_out: IdTensor,
    /// True where `src` holds the pad id.
    pub src_pad_mask: Vec<bool>,
    /// True where `tgt_in` holds the pad id.
    pub tgt_pad_mask: Vec<bool>,
}

impl Batch {
    pub fn from_pairs(pairs: &[&EncodedPair]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Contract("cannot build an empty batch".into()));
        }
        let b = pairs.len();
        let s = pairs.iter().map(|p| p.src.len()).max().unwrap();
        let t = pairs.iter().map(|p| p.tgt_in.len()).max().unwrap();
        let pad_to = |seq: &[u32], width: usize, out: &mut Vec<u32>| {
            out.extend_from_slice(seq);
            out.extend(std::iter::repeat_n(PAD_ID, width - seq.len()));
        };
        let (mut src, mut tin, mut tout) = (
            Vec::with_capacity(b * s),
            Vec::with_capacity(b * t),
            Vec::with_capacity(b * t),
        );
        for p in pairs {
            pad_to(&p.src, s, &mut src);
            pad_to(&p.tgt_in, t, &mut tin);
            pad_to(&p.tgt_out, t, &mut tout);
        }
        let src_pad_mask = src.iter().map(|&i| i == PAD_ID).collect();
        let tgt_pad_mask = tin.iter().map(|&i| i == PAD_ID).collect();
        Ok(Batch {
            src: IdTensor::new(b, s, src)?,
            tgt_in: IdTensor::new(b, t, tin)?,
            tgt_out: IdTensor::new(b, t, tout)?,
            src_pad_mask,
            tgt_pad_mask,
        })
    }

    pub fn size(&self) -> usize {
        self.src.rows
    }

    /// Positions that contribute to loss and accuracy.
    pub fn target_tokens(&self) -> usize {
        self.tgt_out.data.iter().filter(|&&i| i != PAD_ID).count()
    }
}

/// Groups pairs into batches padded to each batch's own longest sequences.
pub fn make_batches(
    pairs: &[EncodedPair],
    batch_size: usize,
    rng: &mut Rng,
    shuffle: bool,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&EncodedPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::{any, prop_assert_eq, proptest};

    fn pair(n: u32, len: usize) -> EncodedPair {
        let body: Vec<u32> = (0..len as u32).map(|i| 4 + (n + i) % 10).collect();
        let mut src = body.clone();
        src.push(2);
        let mut tgt_in = vec![1];
        tgt_in.extend(&body);
        let mut tgt_out = body;
        tgt_out.push(2);
        EncodedPair { src, tgt_in, tgt_out }
    }

    #[test]
    fn sizes_two_two_one() {
        let pairs: Vec<_> = (0..5).map(|i| pair(i, 3)).collect();
        let batches = make_batches(&pairs, 2, &mut Rng::new(0), false).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Batch::size).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn equal_lengths_need_no_padding() {
        let pairs: Vec<_> = (0..4).map(|i| pair(i, 5)).collect();
        let batches = make_batches(&pairs, 4, &mut Rng::new(0), true).unwrap();
        assert!(batches[0].src_pad_mask.iter().all(|&m| !m));
        assert!(batches[0].tgt_pad_mask.iter().all(|&m| !m));
    }

    #[test]
    fn masks_track_padding() {
        let pairs = vec![pair(0, 1), pair(1, 4)];
        let b = make_batches(&pairs, 2, &mut Rng::new(0), false).unwrap().remove(0);
        assert_eq!(b.src.shape(), [2, 5]);
        for (m, &id) in b.src_pad_mask.iter().zip(&b.src.data) {
            assert_eq!(*m, id == PAD_ID);
        }
        assert_eq!(b.target_tokens(), 2 + 5);
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(make_batches(&[pair(0, 1)], 0, &mut Rng::new(0), false).is_err());
    }

    proptest! {
        #[test]
        fn batches_cover_input_exactly_once(
            lens in proptest::collection::vec(1usize..8, 1..40),
            bs in 1usize..9,
            seed in any::<u64>(),
        ) {
            let pairs: Vec<_> = lens.iter().enumerate().map(|(i, &l)| pair(i as u32, l)).collect();
            let batches = make_batches(&pairs, bs, &mut Rng::new(seed), true).unwrap();
            let mut seen: Vec<Vec<u32>> = Vec::new();
            for b in &batches {
                for r in 0..b.size() {
                    seen.push(b.src.row(r).iter().copied().filter(|&i| i != PAD_ID).collect());
                }
            }
            let mut expected: Vec<Vec<u32>> = pairs.iter().map(|p| p.src.clone()).collect();
            seen.sort();
            expected.sort();
            prop_assert_eq!(seen, expected);
        }
    }
}
