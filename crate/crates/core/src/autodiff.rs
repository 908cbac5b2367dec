//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] records every operation as a node holding its forward value and
//! whatever it needs for the backward pass. Leaves can borrow tensors (model
//! parameters) so building a graph never copies weights. [`Graph::backward`]
//! walks the tape once in reverse; running it a second time is an error.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'a, T: Scalar> {
    Borrowed(&'a Tensor<T>),
    Owned(Tensor<T>),
}

impl<T: Scalar> Value<'_, T> {
    fn tensor(&self) -> &Tensor<T> {
        match self {
            Value::Borrowed(t) => t,
            Value::Owned(t) => t,
        }
    }
}

#[derive(Clone, Copy)]
struct MatMulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    trans_b: bool,
    a_batched: bool,
    b_batched: bool,
}

enum Op<T: Scalar> {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        dims: MatMulDims,
    },
    Add {
        a: usize,
        b: usize,
    },
    AddBias {
        x: usize,
        bias: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: T,
    },
    Relu {
        x: usize,
    },
    Sin {
        x: usize,
    },
    Sum {
        x: usize,
    },
    Reshape {
        x: usize,
    },
    Gather {
        x: usize,
        index: Vec<usize>,
    },
    Softmax {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Dropout {
        x: usize,
        mask: Vec<T>,
    },
    Embedding {
        table: usize,
        ids: Vec<u32>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<u32>,
        pad_id: u32,
        probs: Vec<T>,
        count: usize,
    },
}

struct Node<'a, T: Scalar> {
    value: Value<'a, T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'a, T: Scalar = f32> {
    nodes: Vec<Node<'a, T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<'a, T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.push(Value::Owned(value), op, needs_grad)
    }

    /// Borrowed leaf that receives a gradient.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Value::Borrowed(t), Op::Leaf, true)
    }

    /// Borrowed leaf; receives a gradient only if the tensor requires one.
    pub fn input(&mut self, t: &'a Tensor<T>) -> Var {
        let needs = t.requires_grad();
        self.push(Value::Borrowed(t), Op::Leaf, needs)
    }

    /// Borrowed leaf that never receives a gradient.
    pub fn constant_ref(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Value::Borrowed(t), Op::Leaf, false)
    }

    /// Owned leaf; receives a gradient only if the tensor requires one.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let needs = t.requires_grad();
        self.push_owned(t, Op::Leaf, needs)
    }

    /// Owned leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_owned(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.nodes[v.0].value.tensor()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn data(&self, i: usize) -> &[T] {
        self.nodes[i].value.tensor().data()
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v.0)
    }

    // ---- linear algebra ----

    /// Matrix product of rank-2 or rank-3 operands; a rank-2 operand is
    /// broadcast across the batch extent of a rank-3 one.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a × bᵀ`, transposing the last two extents of `b`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || Error::Dimension {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        let (a_batch, m, k) = match sa.len() {
            2 => (None, sa[0], sa[1]),
            3 => (Some(sa[0]), sa[1], sa[2]),
            _ => return Err(mismatch()),
        };
        let (b_batch, kb, n) = match (sb.len(), trans_b) {
            (2, false) => (None, sb[0], sb[1]),
            (2, true) => (None, sb[1], sb[0]),
            (3, false) => (Some(sb[0]), sb[1], sb[2]),
            (3, true) => (Some(sb[0]), sb[2], sb[1]),
            _ => return Err(mismatch()),
        };
        if k != kb {
            return Err(mismatch());
        }
        let batch = match (a_batch, b_batch) {
            (Some(x), Some(y)) if x != y => return Err(mismatch()),
            (Some(x), _) | (None, Some(x)) => x,
            (None, None) => 1,
        };
        let dims = MatMulDims {
            batch,
            m,
            k,
            n,
            trans_b,
            a_batched: a_batch.is_some(),
            b_batched: b_batch.is_some(),
        };
        let mut out = vec![T::ZERO; batch * m * n];
        {
            let ad = self.data(a.0);
            let bd = self.data(b.0);
            let (rsb, csb) = b_strides(&dims);
            for bi in 0..batch {
                let a_off = if dims.a_batched { bi * m * k } else { 0 };
                let b_off = if dims.b_batched { bi * k * n } else { 0 };
                // SAFETY: offsets and strides stay within the operand buffers
                // whose extents were validated above.
                unsafe {
                    T::gemm(
                        m,
                        k,
                        n,
                        T::ONE,
                        ad.as_ptr().add(a_off),
                        k as isize,
                        1,
                        bd.as_ptr().add(b_off),
                        rsb,
                        csb,
                        T::ZERO,
                        out.as_mut_ptr().add(bi * m * n),
                        n as isize,
                        1,
                    );
                }
            }
        }
        let shape = if a_batch.is_some() || b_batch.is_some() {
            vec![batch, m, n]
        } else {
            vec![m, n]
        };
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push_owned(
            Tensor::new(shape, out)?,
            Op::MatMul {
                a: a.0,
                b: b.0,
                dims,
            },
            needs,
        ))
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out: Vec<T> = self
            .data(a.0)
            .iter()
            .zip(self.data(b.0))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push_owned(Tensor::new(shape, out)?, Op::Add { a: a.0, b: b.0 }, needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out: Vec<T> = self
            .data(a.0)
            .iter()
            .zip(self.data(b.0))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push_owned(Tensor::new(shape, out)?, Op::Mul { a: a.0, b: b.0 }, needs))
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let width = *self.shape(x).last().unwrap();
        if self.shape(bias) != [width] {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let bd = self.data(bias.0);
        let out: Vec<T> = self
            .data(x.0)
            .chunks_exact(width)
            .flat_map(|row| row.iter().zip(bd).map(|(&v, &b)| v + b))
            .collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x.0) || self.needs(bias.0);
        Ok(self.push_owned(
            Tensor::new(shape, out)?,
            Op::AddBias {
                x: x.0,
                bias: bias.0,
            },
            needs,
        ))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::from_f64(c);
        let out: Vec<T> = self.data(x.0).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x.0);
        Ok(self.push_owned(Tensor::new(shape, out)?, Op::Scale { x: x.0, c }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out: Vec<T> = self
            .data(x.0)
            .iter()
            .map(|&v| if v > T::ZERO { v } else { T::ZERO })
            .collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x.0);
        Ok(self.push_owned(Tensor::new(shape, out)?, Op::Relu { x: x.0 }, needs))
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        let out: Vec<T> = self.data(x.0).iter().map(|&v| v.sin()).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x.0);
        Ok(self.push_owned(Tensor::new(shape, out)?, Op::Sin { x: x.0 }, needs))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let mut acc = 0.0f64;
        for &v in self.data(x.0) {
            acc += v.to_f64();
        }
        let needs = self.needs(x.0);
        Ok(self.push_owned(Tensor::scalar(T::from_f64(acc)), Op::Sum { x: x.0 }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().with_requires_grad(false).reshape(shape)?;
        let needs = self.needs(x.0);
        Ok(self.push_owned(t, Op::Reshape { x: x.0 }, needs))
    }

    /// `[batch·seq, heads·dk]` → `[batch·heads, seq, dk]`.
    pub fn split_heads(&mut self, x: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || shape[0] != batch * seq || !shape[1].is_multiple_of(heads) {
            return Err(Error::Dimension {
                op: "split_heads",
                lhs: shape,
                rhs: vec![batch, seq, heads],
            });
        }
        let d = shape[1];
        let dk = d / heads;
        let mut index = Vec::with_capacity(batch * seq * d);
        for b in 0..batch {
            for h in 0..heads {
                for t in 0..seq {
                    let base = (b * seq + t) * d + h * dk;
                    index.extend(base..base + dk);
                }
            }
        }
        self.gather(x, index, vec![batch * heads, seq, dk])
    }

    /// Inverse of [`Graph::split_heads`].
    pub fn merge_heads(&mut self, x: Var, batch: usize, heads: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || shape[0] != batch * heads {
            return Err(Error::Dimension {
                op: "merge_heads",
                lhs: shape,
                rhs: vec![batch, heads],
            });
        }
        let (seq, dk) = (shape[1], shape[2]);
        let d = heads * dk;
        let mut index = Vec::with_capacity(batch * seq * d);
        for b in 0..batch {
            for t in 0..seq {
                for h in 0..heads {
                    let base = ((b * heads + h) * seq + t) * dk;
                    index.extend(base..base + dk);
                }
            }
        }
        self.gather(x, index, vec![batch * seq, d])
    }

    fn gather(&mut self, x: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let src = self.data(x.0);
        let out: Vec<T> = index.iter().map(|&i| src[i]).collect();
        let needs = self.needs(x.0);
        Ok(self.push_owned(Tensor::new(shape, out)?, Op::Gather { x: x.0, index }, needs))
    }

    // ---- normalization ----

    /// Softmax along `axis`, with the axis maximum subtracted first.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Shape(format!(
                "softmax axis {axis} out of range for {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.data(x.0);
        let mut out = vec![T::ZERO; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut max = src[at(0)];
                for j in 1..len {
                    max = max.max_val(src[at(j)]);
                }
                let mut total = T::ZERO;
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[at(j)] = out[at(j)] / total;
                }
            }
        }
        let needs = self.needs(x.0);
        Ok(self.push_owned(
            Tensor::new(shape, out)?,
            Op::Softmax {
                x: x.0,
                outer,
                len,
                inner,
            },
            needs,
        ))
    }

    /// Normalizes each last-axis slice to zero mean and unit variance, then
    /// applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let width = *shape.last().unwrap();
        for p in [gain, bias] {
            if self.shape(p) != [width] {
                return Err(Error::Dimension {
                    op: "layer_norm",
                    lhs: shape.clone(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Parameter(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let src = self.data(x.0);
        let g = self.data(gain.0);
        let b = self.data(bias.0);
        let rows = src.len() / width;
        let inv_w = T::from_f64(1.0 / width as f64);
        let eps = T::from_f64(eps);
        let mut out = vec![T::ZERO; src.len()];
        let mut xhat = vec![T::ZERO; src.len()];
        let mut rstd = vec![T::ZERO; rows];
        for r in 0..rows {
            let row = &src[r * width..(r + 1) * width];
            let mut mean = T::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_w;
            let mut var = T::ZERO;
            for &v in row {
                let c = v - mean;
                var += c * c;
            }
            var *= inv_w;
            let rs = T::ONE / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..width {
                let h = (row[j] - mean) * rs;
                xhat[r * width + j] = h;
                out[r * width + j] = h * g[j] + b[j];
            }
        }
        let needs = self.needs(x.0) || self.needs(gain.0) || self.needs(bias.0);
        Ok(self.push_owned(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                rstd,
            },
            needs,
        ))
    }

    /// Inverted dropout. Evaluation mode and `p = 0` return `x` itself.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability must be in [0, 1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - p));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| if rng.next_f64() < p { T::ZERO } else { keep_scale })
            .collect();
        let out: Vec<T> = self
            .data(x.0)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x.0);
        Ok(self.push_owned(Tensor::new(shape, out)?, Op::Dropout { x: x.0, mask }, needs))
    }

    // ---- lookup and loss ----

    /// Rows of `table` (`[vocab, width]`) selected by `ids`; output `[ids.len(), width]`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(Error::Shape(format!("embedding table must be rank 2, got {shape:?}")));
        }
        let (vocab, width) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= vocab) {
            return Err(Error::Parameter(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        if ids.is_empty() {
            return Err(Error::Shape("embedding lookup with no ids".into()));
        }
        let src = self.data(table.0);
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            let id = id as usize;
            out.extend_from_slice(&src[id * width..(id + 1) * width]);
        }
        let needs = self.needs(table.0);
        Ok(self.push_owned(
            Tensor::new(vec![ids.len(), width], out)?,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Mean negative log-likelihood over positions whose target is not `pad_id`.
    ///
    /// `logits` may have any rank; its last extent is the vocabulary and the
    /// remaining extents flatten to one position per entry of `targets`.
    pub fn cross_entropy_masked(&mut self, logits: Var, targets: &[u32], pad_id: u32) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let vocab = *shape.last().unwrap();
        let rows = self.value(logits).numel() / vocab;
        if rows != targets.len() {
            return Err(Error::Dimension {
                op: "cross_entropy_masked",
                lhs: shape,
                rhs: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::Parameter(format!("target id {bad} outside vocabulary of {vocab}")));
        }
        let src = self.data(logits.0);
        let mut probs = vec![T::ZERO; src.len()];
        let mut total = 0.0f64;
        let mut count = 0usize;
        for (r, &t) in targets.iter().enumerate() {
            if t == pad_id {
                continue;
            }
            let row = &src[r * vocab..(r + 1) * vocab];
            let mut max = row[0];
            for &v in &row[1..] {
                max = max.max_val(v);
            }
            let mut z = T::ZERO;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[r * vocab + j] = e;
                z += e;
            }
            for p in &mut probs[r * vocab..(r + 1) * vocab] {
                *p = *p / z;
            }
            // -log softmax(target) = log z - (x_t - max)
            total += z.ln().to_f64() - (row[t as usize] - max).to_f64();
            count += 1;
        }
        if count == 0 {
            return Err(Error::DegenerateBatch("every target position is padding".into()));
        }
        let value = Tensor::scalar(T::from_f64(total / count as f64));
        let needs = self.needs(logits.0);
        Ok(self.push_owned(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                pad_id,
                probs,
                count,
            },
            needs,
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    // ---- backward ----

    /// Propagates d(loss)/d(node) to every node that needs a gradient.
    ///
    /// Fails on a non-scalar loss, a loss not connected to any gradient leaf,
    /// and on a second call for the same graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this graph; build a new graph for another pass".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.needs(loss.0) {
            return Err(Error::Contract(
                "loss is not connected to any tensor that requires a gradient".into(),
            ));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::ONE]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(gy) = self.grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &gy);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, gy: &[T]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let needs = |j: usize| nodes[j].needs_grad;
        let data = |j: usize| nodes[j].value.tensor().data();
        let y = nodes[i].value.tensor().data();

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b, dims } => {
                let (a, b, d) = (*a, *b, *dims);
                let (rsb, csb) = b_strides(&d);
                let (m, k, n) = (d.m, d.k, d.n);
                if needs(a) {
                    let ga = acc(grads, a, data(a).len());
                    let bd = data(b);
                    for bi in 0..d.batch {
                        let a_off = if d.a_batched { bi * m * k } else { 0 };
                        let b_off = if d.b_batched { bi * k * n } else { 0 };
                        // dA = dC · op(B)ᵀ
                        unsafe {
                            T::gemm(
                                m,
                                n,
                                k,
                                T::ONE,
                                gy.as_ptr().add(bi * m * n),
                                n as isize,
                                1,
                                bd.as_ptr().add(b_off),
                                csb,
                                rsb,
                                T::ONE,
                                ga.as_mut_ptr().add(a_off),
                                k as isize,
                                1,
                            );
                        }
                    }
                }
                if needs(b) {
                    let gb = acc(grads, b, data(b).len());
                    let ad = data(a);
                    for bi in 0..d.batch {
                        let a_off = if d.a_batched { bi * m * k } else { 0 };
                        let b_off = if d.b_batched { bi * k * n } else { 0 };
                        // d op(B) = Aᵀ · dC, written through op(B)'s strides
                        unsafe {
                            T::gemm(
                                k,
                                m,
                                n,
                                T::ONE,
                                ad.as_ptr().add(a_off),
                                1,
                                k as isize,
                                gy.as_ptr().add(bi * m * n),
                                n as isize,
                                1,
                                T::ONE,
                                gb.as_mut_ptr().add(b_off),
                                rsb,
                                csb,
                            );
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for &j in [a, b].iter() {
                    if needs(*j) {
                        let g = acc(grads, *j, gy.len());
                        for (g, &d) in g.iter_mut().zip(gy) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                if needs(a) {
                    let bd = data(b);
                    let g = acc(grads, a, gy.len());
                    for ((g, &d), &o) in g.iter_mut().zip(gy).zip(bd) {
                        *g += d * o;
                    }
                }
                if needs(b) {
                    let ad = data(a);
                    let g = acc(grads, b, gy.len());
                    for ((g, &d), &o) in g.iter_mut().zip(gy).zip(ad) {
                        *g += d * o;
                    }
                }
            }
            Op::AddBias { x, bias } => {
                let (x, bias) = (*x, *bias);
                let width = data(bias).len();
                if needs(x) {
                    let g = acc(grads, x, gy.len());
                    for (g, &d) in g.iter_mut().zip(gy) {
                        *g += d;
                    }
                }
                if needs(bias) {
                    let g = acc(grads, bias, width);
                    for row in gy.chunks_exact(width) {
                        for (g, &d) in g.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Scale { x, c } => {
                let g = acc(grads, *x, gy.len());
                for (g, &d) in g.iter_mut().zip(gy) {
                    *g += d * *c;
                }
            }
            Op::Relu { x } => {
                let g = acc(grads, *x, gy.len());
                for ((g, &d), &o) in g.iter_mut().zip(gy).zip(y) {
                    if o > T::ZERO {
                        *g += d;
                    }
                }
            }
            Op::Sin { x } => {
                let xd = data(*x);
                let g = acc(grads, *x, gy.len());
                for ((g, &d), &v) in g.iter_mut().zip(gy).zip(xd) {
                    *g += d * v.cos();
                }
            }
            Op::Sum { x } => {
                let g = acc(grads, *x, data(*x).len());
                for g in g.iter_mut() {
                    *g += gy[0];
                }
            }
            Op::Reshape { x } => {
                let g = acc(grads, *x, gy.len());
                for (g, &d) in g.iter_mut().zip(gy) {
                    *g += d;
                }
            }
            Op::Gather { x, index } => {
                let g = acc(grads, *x, data(*x).len());
                for (&src, &d) in index.iter().zip(gy) {
                    g[src] += d;
                }
            }
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                let g = acc(grads, *x, gy.len());
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let mut dot = T::ZERO;
                        for j in 0..len {
                            dot += gy[at(j)] * y[at(j)];
                        }
                        for j in 0..len {
                            g[at(j)] += y[at(j)] * (gy[at(j)] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let gd = data(gain);
                let width = gd.len();
                let rows = gy.len() / width;
                if needs(gain) {
                    let g = acc(grads, gain, width);
                    for r in 0..rows {
                        for j in 0..width {
                            g[j] += gy[r * width + j] * xhat[r * width + j];
                        }
                    }
                }
                if needs(bias) {
                    let g = acc(grads, bias, width);
                    for row in gy.chunks_exact(width) {
                        for (g, &d) in g.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
                if needs(x) {
                    let inv_w = T::from_f64(1.0 / width as f64);
                    let g = acc(grads, x, gy.len());
                    for r in 0..rows {
                        let mut mean_d = T::ZERO;
                        let mut mean_dx = T::ZERO;
                        for j in 0..width {
                            let dh = gy[r * width + j] * gd[j];
                            mean_d += dh;
                            mean_dx += dh * xhat[r * width + j];
                        }
                        mean_d *= inv_w;
                        mean_dx *= inv_w;
                        for j in 0..width {
                            let dh = gy[r * width + j] * gd[j];
                            g[r * width + j] +=
                                rstd[r] * (dh - mean_d - xhat[r * width + j] * mean_dx);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let g = acc(grads, *x, gy.len());
                for ((g, &d), &m) in g.iter_mut().zip(gy).zip(mask) {
                    *g += d * m;
                }
            }
            Op::Embedding { table, ids } => {
                let t = *table;
                let width = nodes[t].value.tensor().shape()[1];
                let g = acc(grads, t, data(t).len());
                for (r, &id) in ids.iter().enumerate() {
                    let id = id as usize;
                    for j in 0..width {
                        g[id * width + j] += gy[r * width + j];
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                pad_id,
                probs,
                count,
            } => {
                let vocab = probs.len() / targets.len();
                let scale = gy[0] / T::from_f64(*count as f64);
                let g = acc(grads, *logits, probs.len());
                for (r, &t) in targets.iter().enumerate() {
                    if t == *pad_id {
                        continue;
                    }
                    for j in 0..vocab {
                        g[r * vocab + j] += probs[r * vocab + j] * scale;
                    }
                    g[r * vocab + t as usize] -= scale;
                }
            }
        }
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn b_strides(d: &MatMulDims) -> (isize, isize) {
    if d.trans_b {
        // stored [n, k]
        (1, d.k as isize)
    } else {
        (d.n as isize, 1)
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], i: usize, len: usize) -> &mut Vec<T> {
    grads[i].get_or_insert_with(|| vec![T::ZERO; len])
}
