use serde::{Deserialize, Serialize};

use super::clock::Clock;
use super::metrics::{accuracy_counts, perplexity, EpochMetrics};
use super::optimizer::{adam_step, clip_grad_norm, AdamConfig, OptimizerState};
use crate::autodiff::Graph;
use crate::data::{make_batches, Batch, EncodedPair, DEFAULT_BATCH_SIZE, PAD_ID};
use crate::error::{Error, Result};
use crate::model::{bind, Model, ModelConfig, ModelParams};
use crate::rng::{stream, Rng};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Global gradient-norm cap; off unless set.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let lr = self.adam.learning_rate;
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be finite and nonnegative, got {lr}")));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("gradient clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Everything needed to continue training bit-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T: Scalar = f32> {
    pub params: ModelParams<T>,
    pub optimizer: OptimizerState<T>,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub dropout_rng: Rng,
    pub shuffle_rng: Rng,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochMetrics>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(config: &ModelConfig, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        let params = ModelParams::init(config)?;
        let optimizer = OptimizerState::new(params.tensors(), train.adam.clone());
        Ok(TrainState {
            params,
            optimizer,
            train,
            epoch: 0,
            dropout_rng: Rng::with_stream(config.seed, stream::DROPOUT),
            shuffle_rng: Rng::with_stream(config.seed, stream::SHUFFLE),
            best_val_loss: None,
            best_epoch: None,
            history: Vec::new(),
        })
    }
}

/// Token-weighted loss and accuracy over one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PassMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub tokens: usize,
    /// A batch produced a non-finite loss; the pass stopped there without updating.
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub perplexity: f64,
    pub tokens: usize,
}

struct StepResult {
    loss_sum: f64,
    correct: usize,
    tokens: usize,
}

/// Forward, backward and one optimizer update on a single batch.
/// Returns `None` without touching parameters when the loss is not finite.
fn train_step<T: Scalar>(state: &mut TrainState<T>, batch: &Batch) -> Result<Option<StepResult>> {
    let TrainState {
        params,
        optimizer,
        train,
        dropout_rng,
        ..
    } = state;
    let (loss_value, counts, grads) = {
        let mut g = Graph::new();
        let vars = bind(&mut g, params, true);
        let model = Model {
            params,
            vars: &vars,
            training: true,
        };
        let (loss, logits) = model.loss(&mut g, batch, dropout_rng)?;
        let value = g.value(loss).item().to_f64();
        let vocab = params.config().tgt_vocab_size;
        let counts = accuracy_counts(g.value(logits).data(), vocab, &batch.tgt_out.data, PAD_ID)?;
        if !value.is_finite() {
            return Ok(None);
        }
        g.backward(loss)?;
        let grads: Vec<_> = vars.iter().map(|&v| g.take_grad(v)).collect();
        (value, counts, grads)
    };
    for (t, grad) in params.tensors_mut().iter_mut().zip(grads) {
        let grad = grad.ok_or_else(|| Error::Contract("parameter received no gradient".into()))?;
        t.set_grad(grad)?;
    }
    if let Some(max_norm) = train.grad_clip {
        clip_grad_norm(params.tensors_mut(), max_norm)?;
    }
    adam_step(params.tensors_mut(), optimizer)?;
    Ok(Some(StepResult {
        loss_sum: loss_value * counts.1 as f64,
        correct: counts.0,
        tokens: counts.1,
    }))
}

/// One optimization pass over `batches` in order, with teacher forcing.
pub fn run_epoch<T: Scalar>(state: &mut TrainState<T>, batches: &[Batch]) -> Result<PassMetrics> {
    let (mut loss_sum, mut correct, mut tokens) = (0.0, 0, 0);
    for batch in batches {
        match train_step(state, batch)? {
            Some(s) => {
                loss_sum += s.loss_sum;
                correct += s.correct;
                tokens += s.tokens;
            }
            None => {
                log::warn!("non-finite training loss; stopping the pass");
                return Ok(PassMetrics {
                    loss: f64::NAN,
                    accuracy: f64::NAN,
                    tokens,
                    diverged: true,
                });
            }
        }
    }
    if tokens == 0 {
        return Err(Error::DegenerateBatch("training pass saw no target tokens".into()));
    }
    Ok(PassMetrics {
        loss: loss_sum / tokens as f64,
        accuracy: correct as f64 / tokens as f64,
        tokens,
        diverged: false,
    })
}

/// Evaluation-mode loss, accuracy and perplexity, token-weighted.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, batches: &[Batch]) -> Result<EvalMetrics> {
    if batches.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    // Evaluation never draws randomness.
    let mut rng = Rng::new(0);
    let (mut loss_sum, mut correct, mut tokens) = (0.0, 0, 0);
    for batch in batches {
        let mut g = Graph::new();
        let vars = bind(&mut g, params, false);
        let model = Model {
            params,
            vars: &vars,
            training: false,
        };
        let (loss, logits) = model.loss(&mut g, batch, &mut rng)?;
        let vocab = params.config().tgt_vocab_size;
        let (c, n) = accuracy_counts(g.value(logits).data(), vocab, &batch.tgt_out.data, PAD_ID)?;
        loss_sum += g.value(loss).item().to_f64() * n as f64;
        correct += c;
        tokens += n;
    }
    let loss = loss_sum / tokens as f64;
    Ok(EvalMetrics {
        loss,
        accuracy: correct as f64 / tokens as f64,
        perplexity: perplexity(loss),
        tokens,
    })
}

/// Validation batches in corpus order.
pub fn eval_batches(pairs: &[EncodedPair], batch_size: usize) -> Result<Vec<Batch>> {
    make_batches(pairs, batch_size, &mut Rng::new(0), false)
}

/// Shuffles, trains one epoch, evaluates, and appends the epoch to the history.
pub fn fit_epoch<T: Scalar>(
    state: &mut TrainState<T>,
    train_pairs: &[EncodedPair],
    val_batches: &[Batch],
    clock: &dyn Clock,
) -> Result<EpochMetrics> {
    let start = clock.now_seconds();
    let batches = make_batches(train_pairs, state.train.batch_size, &mut state.shuffle_rng, true)?;
    let pass = run_epoch(state, &batches)?;
    let val = evaluate(&state.params, val_batches)?;
    let wall_seconds = clock.now_seconds() - start;
    state.epoch += 1;
    let metrics = EpochMetrics {
        epoch: state.epoch,
        train_loss: pass.loss,
        val_loss: val.loss,
        train_acc: pass.accuracy,
        val_acc: val.accuracy,
        val_perplexity: val.perplexity,
        wall_seconds,
    };
    if val.loss.is_finite() && state.best_val_loss.is_none_or(|b| val.loss < b) {
        state.best_val_loss = Some(val.loss);
        state.best_epoch = Some(state.epoch);
    }
    state.history.push(metrics.clone());
    Ok(metrics)
}
