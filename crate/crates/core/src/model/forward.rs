//! Post-norm encoder–decoder forward pass.

use super::config::{LAYER_NORM_EPS, MASK_VALUE};
use super::params::{AttnIdx, FfIdx, ModelParams, NormIdx};
use super::pe::sinusoidal_pe;
use crate::autodiff::{Graph, Var};
use crate::data::{Batch, PAD_ID};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{IdTensor, Scalar, Tensor};

/// Leaves for every parameter. With `trainable` false they are constants and
/// the graph records no gradient bookkeeping for them.
pub fn bind<'a, T: Scalar>(g: &mut Graph<'a, T>, params: &'a ModelParams<T>, trainable: bool) -> Vec<Var> {
    params
        .tensors()
        .iter()
        .map(|t| if trainable { g.param(t) } else { g.constant_ref(t) })
        .collect()
}

/// Graph-building view of a parameter collection.
pub struct Model<'p, T: Scalar> {
    pub params: &'p ModelParams<T>,
    pub vars: &'p [Var],
    pub training: bool,
}

impl<T: Scalar> Model<'_, T> {
    fn dropout(&self, g: &mut Graph<'_, T>, x: Var, rng: &mut Rng) -> Result<Var> {
        g.dropout(x, self.params.config().dropout, self.training, rng)
    }

    fn linear(&self, g: &mut Graph<'_, T>, x: Var, w: usize, b: usize) -> Result<Var> {
        let y = g.matmul(x, self.vars[w])?;
        g.add_bias(y, self.vars[b])
    }

    fn norm(&self, g: &mut Graph<'_, T>, x: Var, n: NormIdx) -> Result<Var> {
        g.layer_norm(x, self.vars[n.gain], self.vars[n.bias], LAYER_NORM_EPS)
    }

    fn feed_forward(&self, g: &mut Graph<'_, T>, x: Var, ff: FfIdx) -> Result<Var> {
        let h = self.linear(g, x, ff.w1, ff.b1)?;
        let h = g.relu(h)?;
        self.linear(g, h, ff.w2, ff.b2)
    }

    /// Multi-head attention; `mask` is an additive `[batch·heads, tq, tk]` constant.
    #[allow(clippy::too_many_arguments)]
    fn attention(
        &self,
        g: &mut Graph<'_, T>,
        idx: AttnIdx,
        query: Var,
        memory: Var,
        batch: usize,
        tq: usize,
        tk: usize,
        mask: Var,
    ) -> Result<Var> {
        let heads = self.params.config().n_heads;
        let dk = self.params.config().head_dim();
        let q = self.linear(g, query, idx.wq, idx.bq)?;
        let k = self.linear(g, memory, idx.wk, idx.bk)?;
        let v = self.linear(g, memory, idx.wv, idx.bv)?;
        let q = g.split_heads(q, batch, tq, heads)?;
        let k = g.split_heads(k, batch, tk, heads)?;
        let v = g.split_heads(v, batch, tk, heads)?;
        let scores = g.matmul_nt(q, k)?;
        let scores = g.scale(scores, 1.0 / (dk as f64).sqrt())?;
        let scores = g.add(scores, mask)?;
        let weights = g.softmax(scores, 2)?;
        let ctx = g.matmul(weights, v)?;
        let ctx = g.merge_heads(ctx, batch, heads)?;
        self.linear(g, ctx, idx.wo, idx.bo)
    }

    /// Scaled token embedding plus positions, then dropout.
    fn embed(&self, g: &mut Graph<'_, T>, table: usize, ids: &IdTensor, rng: &mut Rng) -> Result<Var> {
        let d = self.params.config().d_model;
        let e = g.embedding(self.vars[table], &ids.data)?;
        let e = g.scale(e, (d as f64).sqrt())?;
        let pe = sinusoidal_pe::<T>(ids.cols, d)?;
        let mut tiled = Vec::with_capacity(ids.rows * ids.cols * d);
        for _ in 0..ids.rows {
            tiled.extend_from_slice(pe.data());
        }
        let pos = g.constant(Tensor::new(vec![ids.rows * ids.cols, d], tiled)?);
        let x = g.add(e, pos)?;
        self.dropout(g, x, rng)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        let max = self.params.config().max_len;
        if len > max {
            return Err(Error::Contract(format!("{what} length {len} exceeds max_len {max}")));
        }
        Ok(())
    }

    /// Encoder output `[batch·src_len, d_model]`.
    pub fn encode(&self, g: &mut Graph<'_, T>, src: &IdTensor, rng: &mut Rng) -> Result<Var> {
        self.check_len("source", src.cols)?;
        let heads = self.params.config().n_heads;
        let (b, s) = (src.rows, src.cols);
        let mask = g.constant(key_pad_mask::<T>(src, s, heads, false)?);
        let layout = self.params.layout();
        let mut x = self.embed(g, layout.src_embed, src, rng)?;
        for layer in &layout.encoder {
            let a = self.attention(g, layer.attn, x, x, b, s, s, mask)?;
            let a = self.dropout(g, a, rng)?;
            let r = g.add(x, a)?;
            x = self.norm(g, r, layer.ln1)?;
            let f = self.feed_forward(g, x, layer.ff)?;
            let f = self.dropout(g, f, rng)?;
            let r = g.add(x, f)?;
            x = self.norm(g, r, layer.ln2)?;
        }
        Ok(x)
    }

    /// Decoder logits `[batch·tgt_len, tgt_vocab]` given the encoder output.
    pub fn decode(
        &self,
        g: &mut Graph<'_, T>,
        memory: Var,
        src: &IdTensor,
        tgt_in: &IdTensor,
        rng: &mut Rng,
    ) -> Result<Var> {
        self.check_len("target", tgt_in.cols)?;
        if src.rows != tgt_in.rows {
            return Err(Error::Dimension {
                op: "decode",
                lhs: src.shape().to_vec(),
                rhs: tgt_in.shape().to_vec(),
            });
        }
        let heads = self.params.config().n_heads;
        let (b, s, t) = (src.rows, src.cols, tgt_in.cols);
        let self_mask = g.constant(key_pad_mask::<T>(tgt_in, t, heads, true)?);
        let cross_mask = g.constant(key_pad_mask::<T>(src, t, heads, false)?);
        let layout = self.params.layout();
        let mut y = self.embed(g, layout.tgt_embed, tgt_in, rng)?;
        for layer in &layout.decoder {
            let a = self.attention(g, layer.self_attn, y, y, b, t, t, self_mask)?;
            let a = self.dropout(g, a, rng)?;
            let r = g.add(y, a)?;
            y = self.norm(g, r, layer.ln1)?;
            let c = self.attention(g, layer.cross_attn, y, memory, b, t, s, cross_mask)?;
            let c = self.dropout(g, c, rng)?;
            let r = g.add(y, c)?;
            y = self.norm(g, r, layer.ln2)?;
            let f = self.feed_forward(g, y, layer.ff)?;
            let f = self.dropout(g, f, rng)?;
            let r = g.add(y, f)?;
            y = self.norm(g, r, layer.ln3)?;
        }
        self.linear(g, y, layout.out_weight, layout.out_bias)
    }

    /// Teacher-forced logits `[batch·tgt_len, tgt_vocab]`.
    pub fn logits(&self, g: &mut Graph<'_, T>, batch: &Batch, rng: &mut Rng) -> Result<Var> {
        let memory = self.encode(g, &batch.src, rng)?;
        self.decode(g, memory, &batch.src, &batch.tgt_in, rng)
    }

    /// Teacher-forced masked cross-entropy; returns `(loss, logits)`.
    pub fn loss(&self, g: &mut Graph<'_, T>, batch: &Batch, rng: &mut Rng) -> Result<(Var, Var)> {
        let logits = self.logits(g, batch, rng)?;
        let loss = g.cross_entropy_masked(logits, &batch.tgt_out.data, PAD_ID)?;
        Ok((loss, logits))
    }
}

/// Additive mask `[rows·heads, queries, keys]`: `MASK_VALUE` where the key is
/// padding or, with `causal`, lies after the query.
fn key_pad_mask<T: Scalar>(keys: &IdTensor, queries: usize, heads: usize, causal: bool) -> Result<Tensor<T>> {
    let k = keys.cols;
    let neg = T::from_f64(MASK_VALUE);
    let mut data = Vec::with_capacity(keys.rows * heads * queries * k);
    for r in 0..keys.rows {
        let row = keys.row(r);
        let mut block = Vec::with_capacity(queries * k);
        for q in 0..queries {
            for (j, &id) in row.iter().enumerate() {
                let masked = id == PAD_ID || (causal && j > q);
                block.push(if masked { neg } else { T::ZERO });
            }
        }
        for _ in 0..heads {
            data.extend_from_slice(&block);
        }
    }
    Tensor::new(vec![keys.rows * heads, queries, k], data)
}

/// Logits `[batch, tgt_len, tgt_vocab]` for a batch.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    batch: &Batch,
    training: bool,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let vars = bind(&mut g, params, false);
    let model = Model {
        params,
        vars: &vars,
        training,
    };
    let logits = model.logits(&mut g, batch, rng)?;
    let (b, t) = (batch.tgt_in.rows, batch.tgt_in.cols);
    g.value(logits)
        .clone()
        .reshape(vec![b, t, params.config().tgt_vocab_size])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EncodedPair, EOS_ID};
    use crate::gradcheck::grad_check;
    use crate::model::ModelConfig;

    fn pair(src: &[u32], tgt: &[u32]) -> EncodedPair {
        let mut s = src.to_vec();
        s.push(EOS_ID);
        let mut tin = vec![crate::data::BOS_ID];
        tin.extend(tgt);
        let mut tout = tgt.to_vec();
        tout.push(EOS_ID);
        EncodedPair { src: s, tgt_in: tin, tgt_out: tout }
    }

    fn batch(pairs: &[EncodedPair]) -> Batch {
        Batch::from_pairs(&pairs.iter().collect::<Vec<_>>()).unwrap()
    }

    fn params() -> ModelParams<f32> {
        ModelParams::init(&ModelConfig::new(16, 4, 2, 0.1, 13, 17, 21)).unwrap()
    }

    #[test]
    fn logits_shape() {
        let b = batch(&[pair(&[4, 5, 6], &[7, 8]), pair(&[9], &[10, 11, 12, 4])]);
        let out = forward(&params(), &b, false, &mut Rng::new(0)).unwrap();
        assert_eq!(out.shape(), &[2, 5, 17]);
    }

    #[test]
    fn decoder_is_causal() {
        let p = params();
        let a = batch(&[pair(&[4, 5, 6], &[7, 8, 9, 10])]);
        let mut b = a.clone();
        b.tgt_in.data[3] = 15;
        b.tgt_in.data[4] = 16;
        let la = forward(&p, &a, false, &mut Rng::new(0)).unwrap();
        let lb = forward(&p, &b, false, &mut Rng::new(0)).unwrap();
        let v = 17;
        for t in 0..5 {
            let diff = (0..v)
                .map(|k| (la.get(&[0, t, k]).unwrap() - lb.get(&[0, t, k]).unwrap()).abs())
                .fold(0.0f32, f32::max);
            if t < 3 {
                assert!(diff < 1e-5, "position {t} changed by {diff}");
            } else {
                assert!(diff > 0.0, "position {t} should see the edit");
            }
        }
    }

    #[test]
    fn source_padding_is_ignored() {
        let p = params();
        let a = batch(&[pair(&[4, 5, 6], &[7, 8, 9])]);
        let mut b = a.clone();
        let extra = 3;
        let cols = b.src.cols + extra;
        let mut data = b.src.data.clone();
        data.extend(std::iter::repeat_n(PAD_ID, extra));
        b.src = IdTensor::new(1, cols, data).unwrap();
        b.src_pad_mask = b.src.data.iter().map(|&i| i == PAD_ID).collect();
        let la = forward(&p, &a, false, &mut Rng::new(0)).unwrap();
        let lb = forward(&p, &b, false, &mut Rng::new(0)).unwrap();
        let max = la.data().iter().zip(lb.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(max < 1e-5, "{max}");
    }

    #[test]
    fn deterministic_in_both_modes() {
        let p = params();
        let b = batch(&[pair(&[4, 5], &[6, 7, 8]), pair(&[9, 10, 11], &[12])]);
        for training in [false, true] {
            let x = forward(&p, &b, training, &mut Rng::new(8)).unwrap();
            let y = forward(&p, &b, training, &mut Rng::new(8)).unwrap();
            assert_eq!(x, y);
        }
        let eval = forward(&p, &b, false, &mut Rng::new(1)).unwrap();
        let train = forward(&p, &b, true, &mut Rng::new(1)).unwrap();
        assert_ne!(eval, train);
    }

    #[test]
    fn oversize_sequence_is_contract_error() {
        let mut cfg = ModelConfig::new(16, 4, 1, 0.0, 13, 17, 0);
        cfg.max_len = 3;
        let p = ModelParams::<f32>::init(&cfg).unwrap();
        let b = batch(&[pair(&[4, 5, 6, 7], &[8])]);
        assert!(matches!(forward(&p, &b, false, &mut Rng::new(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let cfg = ModelConfig::new(8, 2, 1, 0.0, 10, 11, 2);
        let template = ModelParams::<f64>::init(&cfg).unwrap();
        let b = batch(&[pair(&[4, 5, 6], &[7, 8]), pair(&[9], &[4, 5, 10])]);
        // h = 1e-3 lets some perturbations cross a ReLU kink in the
        // feed-forward blocks, which spoils the difference quotient itself.
        let f = |g: &mut Graph<'_, f64>, vars: &[Var]| {
            let model = Model { params: &template, vars, training: false };
            Ok(model.loss(g, &b, &mut Rng::new(0))?.0)
        };
        let report = grad_check(f, template.tensors(), 1e-4, 1e-4).unwrap();
        assert!(report.passed, "max relative error {}", report.max_rel_error);
    }
}
