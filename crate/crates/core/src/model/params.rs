use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Symmetric uniform with half-width `1/sqrt(fan_in)`.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnIdx {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FfIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderIdx {
    pub attn: AttnIdx,
    pub ff: FfIdx,
    pub ln1: NormIdx,
    pub ln2: NormIdx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderIdx {
    pub self_attn: AttnIdx,
    pub cross_attn: AttnIdx,
    pub ff: FfIdx,
    pub ln1: NormIdx,
    pub ln2: NormIdx,
    pub ln3: NormIdx,
}

/// Positions of every weight inside [`ModelParams::tensors`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub src_embed: usize,
    pub tgt_embed: usize,
    pub encoder: Vec<EncoderIdx>,
    pub decoder: Vec<DecoderIdx>,
    pub out_weight: usize,
    pub out_bias: usize,
}

struct SpecBuilder {
    specs: Vec<ParamSpec>,
}

impl SpecBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, init });
        self.specs.len() - 1
    }

    fn linear(&mut self, prefix: &str, w: &str, b: &str, fan_in: usize, out: usize) -> (usize, usize) {
        let wi = self.add(format!("{prefix}.{w}"), vec![fan_in, out], Init::Uniform { fan_in });
        let bi = self.add(format!("{prefix}.{b}"), vec![out], Init::Zeros);
        (wi, bi)
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        let (wq, bq) = self.linear(prefix, "wq", "bq", d, d);
        let (wk, bk) = self.linear(prefix, "wk", "bk", d, d);
        let (wv, bv) = self.linear(prefix, "wv", "bv", d, d);
        let (wo, bo) = self.linear(prefix, "wo", "bo", d, d);
        AttnIdx { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    fn ff(&mut self, prefix: &str, d: usize, d_ff: usize) -> FfIdx {
        let (w1, b1) = self.linear(prefix, "w1", "b1", d, d_ff);
        let (w2, b2) = self.linear(prefix, "w2", "b2", d_ff, d);
        FfIdx { w1, b1, w2, b2 }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.add(format!("{prefix}.gain"), vec![d], Init::Ones),
            bias: self.add(format!("{prefix}.bias"), vec![d], Init::Zeros),
        }
    }
}

/// Every parameter tensor a config induces, in canonical order.
pub fn param_specs(config: &ModelConfig) -> (Vec<ParamSpec>, Layout) {
    let d = config.d_model;
    let mut b = SpecBuilder { specs: Vec::new() };
    let src_embed = b.add("src_embed".into(), vec![config.src_vocab_size, d], Init::Uniform { fan_in: d });
    let tgt_embed = b.add("tgt_embed".into(), vec![config.tgt_vocab_size, d], Init::Uniform { fan_in: d });
    let encoder = (0..config.n_layers)
        .map(|l| {
            let p = format!("enc.{l}");
            EncoderIdx {
                attn: b.attn(&format!("{p}.self_attn"), d),
                ff: b.ff(&format!("{p}.ff"), d, config.d_ff),
                ln1: b.norm(&format!("{p}.ln1"), d),
                ln2: b.norm(&format!("{p}.ln2"), d),
            }
        })
        .collect();
    let decoder = (0..config.n_layers)
        .map(|l| {
            let p = format!("dec.{l}");
            DecoderIdx {
                self_attn: b.attn(&format!("{p}.self_attn"), d),
                cross_attn: b.attn(&format!("{p}.cross_attn"), d),
                ff: b.ff(&format!("{p}.ff"), d, config.d_ff),
                ln1: b.norm(&format!("{p}.ln1"), d),
                ln2: b.norm(&format!("{p}.ln2"), d),
                ln3: b.norm(&format!("{p}.ln3"), d),
            }
        })
        .collect();
    let (out_weight, out_bias) = b.linear("out", "weight", "bias", d, config.tgt_vocab_size);
    let layout = Layout {
        src_embed,
        tgt_embed,
        encoder,
        decoder,
        out_weight,
        out_bias,
    };
    (b.specs, layout)
}

/// Exact parameter count in closed form.
///
/// Heads never appear: splitting `d_model` into heads re-partitions the same
/// projection matrices.
pub fn count_params(config: &ModelConfig) -> u64 {
    let d = config.d_model as u64;
    let ff = config.d_ff as u64;
    let (vs, vt) = (config.src_vocab_size as u64, config.tgt_vocab_size as u64);
    let layers = config.n_layers as u64;
    let attn = 4 * (d * d + d);
    let feed_forward = (d * ff + ff) + (ff * d + d);
    let norm = 2 * d;
    let encoder_layer = attn + feed_forward + 2 * norm;
    let decoder_layer = 2 * attn + feed_forward + 3 * norm;
    let embeddings = (vs + vt) * d;
    let output = d * vt + vt;
    embeddings + output + layers * (encoder_layer + decoder_layer)
}

/// Materialized weights for one [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Scalar = f32> {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    layout: Layout,
}

impl<T: Scalar> ModelParams<T> {
    /// Uniform matrices, zero biases, unit norm gains; deterministic in `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = param_specs(config);
        let mut rng = Rng::with_stream(config.seed, stream::INIT);
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in specs {
            let numel: usize = spec.shape.iter().product();
            let data: Vec<T> = match spec.init {
                Init::Uniform { fan_in } => {
                    let a = 1.0 / (fan_in as f64).sqrt();
                    (0..numel).map(|_| T::from_f64(rng.uniform(-a, a))).collect()
                }
                Init::Zeros => vec![T::ZERO; numel],
                Init::Ones => vec![T::ONE; numel],
            };
            names.push(spec.name);
            tensors.push(Tensor::new(spec.shape, data)?.with_requires_grad(true));
        }
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
            layout,
        })
    }

    /// Reassembles parameters loaded from storage, checking names and shapes.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = param_specs(config);
        if specs.len() != named.len() {
            return Err(Error::Integrity(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, t)) in specs.into_iter().zip(named) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::Integrity(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
            names.push(name);
            tensors.push(t.with_requires_grad(true));
        }
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    /// Element count by enumeration.
    pub fn numel(&self) -> u64 {
        self.tensors.iter().map(|t| t.numel() as u64).sum()
    }

    pub fn clear_grads(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            layout: self.layout.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, h: usize, l: usize) -> ModelConfig {
        ModelConfig::new(d, h, l, 0.1, 37, 41, 5)
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for (d, h, l) in [(8, 2, 1), (16, 4, 2), (32, 8, 3), (64, 16, 2)] {
            let c = cfg(d, h, l);
            let p = ModelParams::<f32>::init(&c).unwrap();
            assert_eq!(p.numel(), count_params(&c), "{c:?}");
            let (specs, _) = param_specs(&c);
            let by_spec: u64 = specs.iter().map(|s| s.shape.iter().product::<usize>() as u64).sum();
            assert_eq!(by_spec, count_params(&c));
        }
    }

    #[test]
    fn heads_do_not_change_count() {
        for d in [16usize, 32, 64, 128, 256, 512] {
            let counts: Vec<u64> = [4usize, 8, 16]
                .iter()
                .map(|&h| count_params(&ModelConfig::new(d, h, 2, 0.1, 1000, 1200, 0)))
                .collect();
            assert!(counts.windows(2).all(|w| w[0] == w[1]), "d={d}");
        }
    }

    #[test]
    fn init_conventions() {
        let p = ModelParams::<f32>::init(&cfg(8, 2, 2)).unwrap();
        for (name, t) in p.names().iter().zip(p.tensors()) {
            if name.ends_with(".gain") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            } else if name.ends_with(".bias") || name.contains(".b") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            } else {
                let a = 1.0 / (t.shape()[if name.ends_with("embed") { 1 } else { 0 }] as f32).sqrt();
                assert!(t.data().iter().all(|&v| v.abs() <= a), "{name}");
                assert!(t.data().iter().any(|&v| v != 0.0), "{name}");
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::<f32>::init(&cfg(16, 4, 2)).unwrap();
        let b = ModelParams::<f32>::init(&cfg(16, 4, 2)).unwrap();
        assert_eq!(a, b);
        let mut other = cfg(16, 4, 2);
        other.seed = 6;
        assert_ne!(a, ModelParams::<f32>::init(&other).unwrap());
    }

    #[test]
    fn bad_heads_rejected_at_init() {
        assert!(matches!(
            ModelParams::<f32>::init(&cfg(16, 3, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn from_named_checks_shapes() {
        let c = cfg(8, 2, 1);
        let p = ModelParams::<f32>::init(&c).unwrap();
        let mut named: Vec<_> = p.names().iter().cloned().zip(p.tensors().iter().cloned()).collect();
        assert_eq!(ModelParams::from_named(&c, named.clone()).unwrap(), p);
        named[0].1 = Tensor::zeros(vec![2, 2]).unwrap();
        assert!(ModelParams::from_named(&c, named).is_err());
    }
}
