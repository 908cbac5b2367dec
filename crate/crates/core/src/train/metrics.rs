use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{IdTensor, Scalar, Tensor};

pub const DIVERGENCE_THRESHOLD: f64 = 1e7;
pub const DIVERGENCE_PATIENCE: usize = 20;

pub fn perplexity(loss: f64) -> f64 {
    loss.exp()
}

/// JSON has no literal for NaN or infinities; they are written as the strings
/// `"NaN"`, `"inf"` and `"-inf"`.
pub mod float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

/// [`float_repr`] for optional values; `None` is `null`.
pub mod opt_float_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::float_repr")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// One epoch's curves. `epoch` counts from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(with = "float_repr")]
    pub train_loss: f64,
    #[serde(with = "float_repr")]
    pub val_loss: f64,
    #[serde(with = "float_repr")]
    pub train_acc: f64,
    #[serde(with = "float_repr")]
    pub val_acc: f64,
    #[serde(with = "float_repr")]
    pub val_perplexity: f64,
    pub wall_seconds: f64,
}

impl EpochMetrics {
    pub fn all_finite(&self) -> bool {
        [self.train_loss, self.val_loss, self.train_acc, self.val_acc, self.val_perplexity]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Correct and counted non-pad positions of `[rows, vocab]` logits.
pub fn accuracy_counts<T: Scalar>(logits: &[T], vocab: usize, targets: &[u32], pad_id: u32) -> Result<(usize, usize)> {
    if logits.len() != targets.len() * vocab {
        return Err(Error::Dimension {
            op: "masked_accuracy",
            lhs: vec![logits.len() / vocab.max(1), vocab],
            rhs: vec![targets.len()],
        });
    }
    let (mut correct, mut total) = (0, 0);
    for (r, &t) in targets.iter().enumerate() {
        if t == pad_id {
            continue;
        }
        total += 1;
        if crate::model::argmax(&logits[r * vocab..(r + 1) * vocab]) == t as usize {
            correct += 1;
        }
    }
    Ok((correct, total))
}

/// Teacher-forced token accuracy over non-pad targets.
pub fn masked_accuracy<T: Scalar>(logits: &Tensor<T>, tgt_out: &IdTensor, pad_id: u32) -> Result<f64> {
    let vocab = *logits.shape().last().unwrap();
    let (correct, total) = accuracy_counts(logits.data(), vocab, &tgt_out.data, pad_id)?;
    if total == 0 {
        return Err(Error::DegenerateBatch("every target position is padding".into()));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Divergence {
    Continue,
    /// `epoch` is the epoch at which the rule fired.
    Halt { epoch: usize, reason: String },
}

/// Halts on any non-finite metric, or once validation perplexity has exceeded
/// `threshold` for `patience` consecutive epochs.
pub fn detect_divergence(history: &[EpochMetrics], threshold: f64, patience: usize) -> Divergence {
    let mut run = 0;
    for m in history {
        if !m.all_finite() {
            return Divergence::Halt {
                epoch: m.epoch,
                reason: format!("non-finite metric at epoch {}", m.epoch),
            };
        }
        if m.val_perplexity > threshold {
            run += 1;
            if run >= patience {
                return Divergence::Halt {
                    epoch: m.epoch,
                    reason: format!(
                        "validation perplexity above {threshold:e} for {patience} consecutive epochs"
                    ),
                };
            }
        } else {
            run = 0;
        }
    }
    Divergence::Continue
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn row(epoch: usize, ppl: f64) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_loss: 1.0,
            val_loss: ppl.ln(),
            train_acc: 0.5,
            val_acc: 0.5,
            val_perplexity: ppl,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn perplexity_matches_printed_pairs() {
        assert!((perplexity(2.3684) - 10.6806).abs() < 1e-3);
        assert!((perplexity(0.8993) - 2.4579).abs() < 1e-3);
        assert_eq!(perplexity(0.0), 1.0);
    }

    #[test]
    fn accuracy_contract() {
        let logits = Tensor::<f32>::new(vec![1, 3, 4], vec![
            9.0, 0.0, 0.0, 0.0, //
            0.0, 9.0, 0.0, 0.0, //
            0.0, 0.0, 9.0, 0.0,
        ])
        .unwrap();
        let all = IdTensor::new(1, 3, vec![0, 1, 2]).unwrap();
        assert_eq!(masked_accuracy(&logits, &all, 3).unwrap(), 1.0);
        // Position 2 is padding: what the model predicts there does not count.
        let padded = IdTensor::new(1, 3, vec![0, 1, 3]).unwrap();
        let mut wrong = logits.clone();
        wrong.data_mut()[8..].copy_from_slice(&[0.0, 0.0, 0.0, 9.0]);
        assert_eq!(masked_accuracy(&logits, &padded, 3).unwrap(), 1.0);
        assert_eq!(masked_accuracy(&wrong, &padded, 3).unwrap(), 1.0);
        let half = IdTensor::new(1, 3, vec![0, 2, 3]).unwrap();
        assert_eq!(masked_accuracy(&logits, &half, 3).unwrap(), 0.5);
        let pads = IdTensor::new(1, 3, vec![3, 3, 3]).unwrap();
        assert!(matches!(masked_accuracy(&logits, &pads, 3), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn uniform_logits_score_near_chance() {
        // All-equal logits pick index 0, so accuracy is the share of targets equal to 0.
        let mut rng = Rng::new(17);
        let targets: Vec<u32> = (0..100).map(|_| rng.below(5) as u32).collect();
        let logits = Tensor::<f32>::zeros(vec![1, 100, 5]).unwrap();
        let acc = masked_accuracy(&logits, &IdTensor::new(1, 100, targets).unwrap(), 99).unwrap();
        assert!((acc - 0.2).abs() <= 0.12, "{acc}");
    }

    #[test]
    fn divergence_rules() {
        let high: Vec<_> = (1..=20).map(|e| row(e, 2e7)).collect();
        assert_eq!(
            detect_divergence(&high, DIVERGENCE_THRESHOLD, DIVERGENCE_PATIENCE),
            Divergence::Halt {
                epoch: 20,
                reason: "validation perplexity above 1e7 for 20 consecutive epochs".into()
            }
        );
        let mut broken: Vec<_> = (1..=19).map(|e| row(e, 2e7)).collect();
        broken.push(row(20, 5.0));
        assert_eq!(detect_divergence(&broken, 1e7, 20), Divergence::Continue);
        let mut nan = vec![row(1, 3.0), row(2, 3.0)];
        nan[1].train_loss = f64::NAN;
        assert!(matches!(detect_divergence(&nan, 1e7, 20), Divergence::Halt { epoch: 2, .. }));
    }

    #[test]
    fn non_finite_values_survive_json() {
        let mut m = row(3, f64::INFINITY);
        m.train_loss = f64::NAN;
        let text = serde_json::to_string(&m).unwrap();
        let back: EpochMetrics = serde_json::from_str(&text).unwrap();
        assert!(back.train_loss.is_nan());
        assert_eq!(back.val_perplexity, f64::INFINITY);
        assert_eq!(back.epoch, 3);
    }
}
