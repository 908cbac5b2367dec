use super::forward::{bind, Model};
use super::params::ModelParams;
use crate::autodiff::Graph;
use crate::data::{BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{IdTensor, Scalar};

/// Argmax decoding from `<bos>` until `<eos>` (not included) or `max_out_len` tokens.
pub fn greedy_decode<T: Scalar>(
    params: &ModelParams<T>,
    src_ids: &[u32],
    max_out_len: usize,
) -> Result<Vec<u32>> {
    if src_ids.is_empty() {
        return Err(Error::Contract("cannot decode an empty source".into()));
    }
    let cfg = params.config();
    let src = IdTensor::new(1, src_ids.len(), src_ids.to_vec())?;
    // Evaluation mode never draws from the generator.
    let mut rng = Rng::new(0);
    let memory = {
        let mut g = Graph::new();
        let vars = bind(&mut g, params, false);
        let model = Model { params, vars: &vars, training: false };
        let m = model.encode(&mut g, &src, &mut rng)?;
        g.value(m).clone()
    };
    let cap = max_out_len.min(cfg.max_len - 1);
    let mut out: Vec<u32> = Vec::new();
    while out.len() < cap {
        let mut prefix = Vec::with_capacity(out.len() + 1);
        prefix.push(BOS_ID);
        prefix.extend(&out);
        let tgt = IdTensor::new(1, prefix.len(), prefix)?;
        let mut g = Graph::new();
        let vars = bind(&mut g, params, false);
        let mem = g.constant_ref(&memory);
        let model = Model { params, vars: &vars, training: false };
        let logits = model.decode(&mut g, mem, &src, &tgt, &mut rng)?;
        let v = cfg.tgt_vocab_size;
        let data = g.value(logits).data();
        let last = &data[data.len() - v..];
        let next = argmax(last) as u32;
        if next == EOS_ID {
            break;
        }
        out.push(next);
    }
    Ok(out)
}

/// Index of the first maximum.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
