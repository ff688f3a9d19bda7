//! Tape of recorded operations and its reverse sweep.
//!
//! Shape mismatches between operands are programming errors and panic with a
//! message naming the operation; only misuse of the tape itself (a second
//! backward pass, a non-scalar loss) is reported through `Result`.

use crate::tensor::{ParamId, ParamStore, Tensor};
use crate::{NnError, Result, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Dropout is the identity.
    Eval,
    /// Dropout zeroes each value with probability `dropout`, drawing from a
    /// generator seeded with `seed`.
    Train { dropout: f64, seed: u64 },
}

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, T),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    Dropout {
        x: NodeId,
        keep: Vec<T>,
    },
    Gather(Vec<(NodeId, usize)>),
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        shape: AttentionShape,
        probs: Vec<T>,
    },
    BceSum {
        logits: NodeId,
        targets: Vec<T>,
    },
    Sum(NodeId),
}

#[derive(Debug, Clone, Copy)]
struct AttentionShape {
    batch: usize,
    heads: usize,
    queries: usize,
    keys: usize,
    width: usize,
}

struct Node<T> {
    op: Op<T>,
    // `None` for parameters, whose values live in the store.
    value: Option<Tensor<T>>,
}

/// Gradients of a scalar loss with respect to each parameter reached by it.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.index()).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    /// Euclidean norm over all gradient values.
    pub fn norm(&self) -> f64 {
        self.iter()
            .flat_map(|(_, g)| g.data().iter())
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

pub struct Graph<'a, T> {
    store: &'a ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
    dropout: Option<(T, ChaCha8Rng)>,
    consumed: bool,
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new(store: &'a ParamStore<T>, mode: Mode) -> Self {
        let dropout = match mode {
            Mode::Train { dropout, seed } if dropout > 0.0 => {
                assert!(dropout < 1.0, "dropout probability must be below 1, got {dropout}");
                Some((T::lit(dropout), ChaCha8Rng::seed_from_u64(seed)))
            }
            _ => None,
        };
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
            dropout,
            consumed: false,
        }
    }

    pub fn store(&self) -> &'a ParamStore<T> {
        self.store
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.store.get(*p),
            (_, Some(v)) => v,
            (_, None) => unreachable!("non-parameter nodes always carry a value"),
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, tensor: Tensor<T>) -> NodeId {
        self.push(Op::Input, tensor)
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.index()] {
            return node;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.index()] = Some(node);
        node
    }

    /// `[r, k] x [k, c] -> [r, c]` over the two-dimensional views.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let (r, k, c) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(bv.rows(), k, "matmul: inner dimensions {k} and {} differ", bv.rows());
        let mut out = vec![T::zero(); r * c];
        matmul_acc(av.data(), bv.data(), &mut out, r, k, c);
        let value = Tensor::from_vec(&[r, c], out).expect("shape built from operands");
        self.push(Op::MatMul(a, b), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add: shapes differ");
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_vec(av.shape(), data).expect("same shape");
        self.push(Op::Add(a, b), value)
    }

    /// Adds the vector `bias` to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (xv, bv) = (self.value(x), self.value(bias));
        let c = xv.cols();
        assert_eq!(bv.len(), c, "add_row: bias length {} for {c} columns", bv.len());
        let b = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % c])
            .collect();
        let value = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push(Op::AddRow(x, bias), value)
    }

    pub fn scale(&mut self, x: NodeId, factor: T) -> NodeId {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * factor).collect();
        let value = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push(Op::Scale(x, factor), value)
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| gelu(v)).collect();
        let value = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push(Op::Gelu(x), value)
    }

    /// Normalizes each row to zero mean and unit variance, then applies the
    /// per-column affine map `gain * x + bias`.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        assert!(g.len() == c && b.len() == c, "layer_norm: affine width differs from {c}");
        let n = T::lit(c as f64);
        let eps = T::lit(LAYER_NORM_EPS);
        let mut normalized = vec![T::zero(); r * c];
        let mut inv_std = vec![T::zero(); r];
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let s = T::one() / (var + eps).sqrt();
            inv_std[i] = s;
            for j in 0..c {
                let h = (row[j] - mean) * s;
                normalized[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        let value = Tensor::from_vec(xv.shape(), out).expect("same shape");
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            value,
        )
    }

    /// Inverted dropout in training mode; the identity otherwise.
    pub fn dropout(&mut self, x: NodeId) -> NodeId {
        let Some((p, rng)) = self.dropout.as_mut() else {
            return x;
        };
        let p = *p;
        let len = match (&self.nodes[x.0].op, &self.nodes[x.0].value) {
            (Op::Param(id), _) => self.store.get(*id).len(),
            (_, Some(v)) => v.len(),
            _ => unreachable!(),
        };
        let scale = T::one() / (T::one() - p);
        let p64 = p.as_f64();
        let keep: Vec<T> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < p64 {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&keep).map(|(&v, &m)| v * m).collect();
        let value = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push(Op::Dropout { x, keep }, value)
    }

    /// Builds a matrix whose row `i` is row `parts[i].1` of node `parts[i].0`.
    /// Covers row selection, concatenation and interleaving.
    pub fn gather(&mut self, parts: &[(NodeId, usize)]) -> NodeId {
        assert!(!parts.is_empty(), "gather: no rows requested");
        let c = self.value(parts[0].0).cols();
        let mut out = Vec::with_capacity(parts.len() * c);
        for &(node, row) in parts {
            let v = self.value(node);
            assert_eq!(v.cols(), c, "gather: column counts differ");
            assert!(row < v.rows(), "gather: row {row} out of {}", v.rows());
            out.extend_from_slice(v.row(row));
        }
        let value = Tensor::from_vec(&[parts.len(), c], out).expect("shape built from parts");
        self.push(Op::Gather(parts.to_vec()), value)
    }

    pub fn rows(&mut self, x: NodeId, rows: &[usize]) -> NodeId {
        let parts: Vec<_> = rows.iter().map(|&r| (x, r)).collect();
        self.gather(&parts)
    }

    /// Scaled dot-product attention over `heads` column blocks, for `batch`
    /// independent sequences stacked along the rows. `q` is
    /// `[batch * queries, width]`; `k` and `v` are `[batch * keys, width]`;
    /// `mask` is an additive `[queries, keys]` matrix shared by the batch.
    /// A query row whose mask is `-inf` everywhere attends to nothing and
    /// yields zeros.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        batch: usize,
        mask: Option<&Tensor<T>>,
    ) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let width = qv.cols();
        assert!(heads > 0 && width % heads == 0, "attention: {heads} heads do not divide width {width}");
        assert!(kv.cols() == width && vv.cols() == width, "attention: widths differ");
        assert_eq!(kv.rows(), vv.rows(), "attention: key and value counts differ");
        assert!(batch > 0 && qv.rows() % batch == 0 && kv.rows() % batch == 0, "attention: rows not divisible by batch {batch}");
        let shape = AttentionShape {
            batch,
            heads,
            queries: qv.rows() / batch,
            keys: kv.rows() / batch,
            width,
        };
        if let Some(m) = mask {
            assert_eq!(
                (m.rows(), m.cols()),
                (shape.queries, shape.keys),
                "attention: mask shape"
            );
        }
        let (out, probs) = attention_forward(qv.data(), kv.data(), vv.data(), mask.map(|m| m.data()), shape);
        let value = Tensor::from_vec(&[batch * shape.queries, width], out).expect("shape built from operands");
        self.push(
            Op::Attention {
                q,
                k,
                v,
                shape,
                probs,
            },
            value,
        )
    }

    /// Attention probabilities recorded by an attention node, indexed
    /// `[batch][head][query][key]`.
    pub fn attention_probs(&self, node: NodeId) -> Option<&[T]> {
        match &self.nodes[node.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Sum of binary cross-entropies between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits_sum(&mut self, logits: NodeId, targets: &[T]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.len(), targets.len(), "bce: {} logits for {} targets", lv.len(), targets.len());
        let total = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| z.max(T::zero()) - t * z + (-z.abs()).exp().ln_1p())
            .sum();
        self.push(
            Op::BceSum {
                logits,
                targets: targets.to_vec(),
            },
            Tensor::scalar(total),
        )
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Op::Sum(x), Tensor::scalar(total))
    }

    /// Reverse sweep from a single-valued `loss`. The tape can be swept once.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(NnError::BackwardConsumed);
        }
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(NnError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut param_grads: Vec<Option<Tensor<T>>> = vec![None; self.store.len()];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(p) => {
                    let shape = self.store.get(*p).shape();
                    param_grads[p.index()] = Some(Tensor::from_vec(shape, g).expect("gradient matches parameter"));
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (r, k, c) = (av.rows(), av.cols(), bv.cols());
                    let mut da = vec![T::zero(); r * k];
                    matmul_a_bt_acc(&g, bv.data(), &mut da, r, c, k);
                    let mut db = vec![T::zero(); k * c];
                    matmul_at_b_acc(av.data(), &g, &mut db, r, k, c);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(x, bias) => {
                    let c = self.value(*bias).len();
                    let mut db = vec![T::zero(); c];
                    for (j, &v) in g.iter().enumerate() {
                        db[j % c] = db[j % c] + v;
                    }
                    accumulate(&mut grads, *x, g);
                    accumulate(&mut grads, *bias, db);
                }
                Op::Scale(x, factor) => {
                    let dx = g.iter().map(|&v| v * *factor).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x).data();
                    let dx = g.iter().zip(xv).map(|(&d, &v)| d * gelu_derivative(v)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let gv = self.value(*gain).data();
                    let c = gv.len();
                    let r = inv_std.len();
                    let n = T::lit(c as f64);
                    let mut dx = vec![T::zero(); r * c];
                    let mut dgain = vec![T::zero(); c];
                    let mut dbias = vec![T::zero(); c];
                    for row in 0..r {
                        let base = row * c;
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..c {
                            let dy = g[base + j];
                            let h = normalized[base + j];
                            dgain[j] = dgain[j] + dy * h;
                            dbias[j] = dbias[j] + dy;
                            let dh = dy * gv[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * h;
                        }
                        mean_dh = mean_dh / n;
                        mean_dh_h = mean_dh_h / n;
                        for j in 0..c {
                            let dh = g[base + j] * gv[j];
                            let h = normalized[base + j];
                            dx[base + j] = inv_std[row] * (dh - mean_dh - h * mean_dh_h);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *bias, dbias);
                }
                Op::Dropout { x, keep } => {
                    let dx = g.iter().zip(keep).map(|(&d, &m)| d * m).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gather(parts) => {
                    let c = g.len() / parts.len();
                    for (i, &(node, row)) in parts.iter().enumerate() {
                        let len = self.value(node).len();
                        let slot = grads[node.0].get_or_insert_with(|| vec![T::zero(); len]);
                        for j in 0..c {
                            slot[row * c + j] = slot[row * c + j] + g[i * c + j];
                        }
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    shape,
                    probs,
                } => {
                    let (dq, dk, dv) = attention_backward(
                        self.value(*q).data(),
                        self.value(*k).data(),
                        self.value(*v).data(),
                        probs,
                        &g,
                        *shape,
                    );
                    accumulate(&mut grads, *q, dq);
                    accumulate(&mut grads, *k, dk);
                    accumulate(&mut grads, *v, dv);
                }
                Op::BceSum { logits, targets } => {
                    let zv = self.value(*logits).data();
                    let dz = zv
                        .iter()
                        .zip(targets)
                        .map(|(&z, &t)| g[0] * (sigmoid(z) - t))
                        .collect();
                    accumulate(&mut grads, *logits, dz);
                }
                Op::Sum(x) => {
                    let len = self.value(*x).len();
                    accumulate(&mut grads, *x, vec![g[0]; len]);
                }
            }
        }
        Ok(Gradients { grads: param_grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], node: NodeId, delta: Vec<T>) {
    match &mut grads[node.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e = *e + d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    half * x * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_derivative<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let cdf = half * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-half * x * x).exp() * T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    cdf + x * pdf
}

// out[r,c] += a[r,k] * b[k,c]
fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[p * c..(p + 1) * c]) {
                *o = *o + aip * bv;
            }
        }
    }
}

// out[r,k] += g[r,c] * b[k,c]^T
fn matmul_a_bt_acc<T: Scalar>(g: &[T], b: &[T], out: &mut [T], r: usize, c: usize, k: usize) {
    for i in 0..r {
        let grow = &g[i * c..(i + 1) * c];
        for p in 0..k {
            let brow = &b[p * c..(p + 1) * c];
            let dot: T = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
            out[i * k + p] = out[i * k + p] + dot;
        }
    }
}

// out[k,c] += a[r,k]^T * g[r,c]
fn matmul_at_b_acc<T: Scalar>(a: &[T], g: &[T], out: &mut [T], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let grow = &g[i * c..(i + 1) * c];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            for (o, &gv) in out[p * c..(p + 1) * c].iter_mut().zip(grow) {
                *o = *o + aip * gv;
            }
        }
    }
}

fn attention_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    mask: Option<&[T]>,
    s: AttentionShape,
) -> (Vec<T>, Vec<T>) {
    let dh = s.width / s.heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut out = vec![T::zero(); s.batch * s.queries * s.width];
    let mut probs = vec![T::zero(); s.batch * s.heads * s.queries * s.keys];
    let mut scores = vec![T::zero(); s.keys];
    for b in 0..s.batch {
        for h in 0..s.heads {
            let col = h * dh;
            for i in 0..s.queries {
                let qrow = &q[(b * s.queries + i) * s.width + col..][..dh];
                let mut max = T::neg_infinity();
                for (j, score) in scores.iter_mut().enumerate() {
                    let extra = mask.map_or(T::zero(), |m| m[i * s.keys + j]);
                    *score = if extra == T::neg_infinity() {
                        T::neg_infinity()
                    } else {
                        let krow = &k[(b * s.keys + j) * s.width + col..][..dh];
                        qrow.iter().zip(krow).map(|(&x, &y)| x * y).sum::<T>() * scale + extra
                    };
                    max = max.max(*score);
                }
                if max == T::neg_infinity() {
                    continue;
                }
                let p = &mut probs[((b * s.heads + h) * s.queries + i) * s.keys..][..s.keys];
                let mut total = T::zero();
                for (pj, &score) in p.iter_mut().zip(&scores) {
                    *pj = (score - max).exp();
                    total = total + *pj;
                }
                let orow = &mut out[(b * s.queries + i) * s.width + col..][..dh];
                for (j, pj) in p.iter_mut().enumerate() {
                    *pj = *pj / total;
                    if *pj == T::zero() {
                        continue;
                    }
                    let vrow = &v[(b * s.keys + j) * s.width + col..][..dh];
                    for (o, &vv) in orow.iter_mut().zip(vrow) {
                        *o = *o + *pj * vv;
                    }
                }
            }
        }
    }
    (out, probs)
}

fn attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    s: AttentionShape,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let dh = s.width / s.heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut dq = vec![T::zero(); q.len()];
    let mut dk = vec![T::zero(); k.len()];
    let mut dv = vec![T::zero(); v.len()];
    let mut dprob = vec![T::zero(); s.keys];
    for b in 0..s.batch {
        for h in 0..s.heads {
            let col = h * dh;
            for i in 0..s.queries {
                let p = &probs[((b * s.heads + h) * s.queries + i) * s.keys..][..s.keys];
                let qoff = (b * s.queries + i) * s.width + col;
                let drow = &dout[qoff..qoff + dh];
                let mut weighted = T::zero();
                for j in 0..s.keys {
                    if p[j] == T::zero() {
                        dprob[j] = T::zero();
                        continue;
                    }
                    let voff = (b * s.keys + j) * s.width + col;
                    let dot: T = drow.iter().zip(&v[voff..voff + dh]).map(|(&x, &y)| x * y).sum();
                    dprob[j] = dot;
                    weighted = weighted + p[j] * dot;
                    for (dvv, &d) in dv[voff..voff + dh].iter_mut().zip(drow) {
                        *dvv = *dvv + p[j] * d;
                    }
                }
                for j in 0..s.keys {
                    if p[j] == T::zero() {
                        continue;
                    }
                    let dscore = p[j] * (dprob[j] - weighted) * scale;
                    let koff = (b * s.keys + j) * s.width + col;
                    for t in 0..dh {
                        dq[qoff + t] = dq[qoff + t] + dscore * k[koff + t];
                        dk[koff + t] = dk[koff + t] + dscore * q[qoff + t];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, GradCheckOptions};
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn store_with(shapes: &[(&str, &[usize])]) -> ParamStore<f64> {
        let mut r = rng();
        let mut store = ParamStore::new();
        for (name, shape) in shapes {
            store.add(*name, Tensor::normal(shape, 0.7, &mut r)).unwrap();
        }
        store
    }

    fn assert_gradcheck(store: &ParamStore<f64>, build: impl Fn(&mut Graph<f64>) -> NodeId) {
        let report = check_gradients(store, build, &GradCheckOptions::default()).unwrap();
        assert!(report.checked > 0);
        assert!(
            report.max_relative_error < 1e-5,
            "max relative error {} at {:?}",
            report.max_relative_error,
            report.worst
        );
    }

    #[test]
    fn sum_of_weighted_inputs_has_input_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_vec(&[3, 1], vec![0.5, -1.0, 2.0]).unwrap()).unwrap();
        let mut g = Graph::new(&store, Mode::Eval);
        let x = g.input(Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let wn = g.param(w);
        let y = g.matmul(x, wn);
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn second_backward_is_rejected() {
        let store = store_with(&[("w", &[2, 2])]);
        let mut g = Graph::new(&store, Mode::Eval);
        let w = g.param(ParamId(0));
        let loss = g.sum(w);
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(NnError::BackwardConsumed)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = store_with(&[("w", &[2, 2])]);
        let mut g = Graph::new(&store, Mode::Eval);
        let w = g.param(ParamId(0));
        assert!(matches!(g.backward(w), Err(NnError::NonScalarLoss(_))));
    }

    #[test]
    fn gradcheck_matmul_add_scale() {
        let store = store_with(&[("a", &[3, 4]), ("b", &[4, 2]), ("c", &[3, 2]), ("bias", &[2])]);
        assert_gradcheck(&store, |g| {
            let a = g.param(ParamId(0));
            let b = g.param(ParamId(1));
            let c = g.param(ParamId(2));
            let bias = g.param(ParamId(3));
            let ab = g.matmul(a, b);
            let sum = g.add(ab, c);
            let shifted = g.add_row(sum, bias);
            let scaled = g.scale(shifted, 0.3);
            let y = g.gelu(scaled);
            g.sum(y)
        });
    }

    #[test]
    fn gradcheck_gelu_and_layer_norm() {
        let store = store_with(&[("x", &[4, 6]), ("gain", &[6]), ("bias", &[6]), ("w", &[6, 1])]);
        assert_gradcheck(&store, |g| {
            let x = g.param(ParamId(0));
            let gain = g.param(ParamId(1));
            let bias = g.param(ParamId(2));
            let w = g.param(ParamId(3));
            let h = g.gelu(x);
            let n = g.layer_norm(h, gain, bias);
            let y = g.matmul(n, w);
            let y = g.gelu(y);
            g.sum(y)
        });
    }

    #[test]
    fn gradcheck_gather_and_bce() {
        let store = store_with(&[("table", &[4, 3]), ("w", &[3, 1])]);
        assert_gradcheck(&store, |g| {
            let t = g.param(ParamId(0));
            let w = g.param(ParamId(1));
            let e = g.rows(t, &[2, 0, 2, 3, 1]);
            let z = g.matmul(e, w);
            g.bce_with_logits_sum(z, &[1.0, 0.0, 1.0, 1.0, 0.0])
        });
    }

    #[test]
    fn gradcheck_attention_with_mask_and_batch() {
        let store = store_with(&[("q", &[6, 4]), ("k", &[8, 4]), ("v", &[8, 4]), ("w", &[4, 1])]);
        let mut mask = Tensor::<f64>::zeros(&[3, 4]);
        mask.data_mut()[1] = f64::NEG_INFINITY;
        mask.data_mut()[6] = 0.7;
        mask.data_mut()[11] = f64::NEG_INFINITY;
        assert_gradcheck(&store, |g| {
            let q = g.param(ParamId(0));
            let k = g.param(ParamId(1));
            let v = g.param(ParamId(2));
            let w = g.param(ParamId(3));
            let a = g.attention(q, k, v, 2, 2, Some(&mask));
            let z = g.matmul(a, w);
            g.bce_with_logits_sum(z, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0])
        });
    }

    #[test]
    fn gradcheck_through_dropout_with_fixed_seed() {
        let store = store_with(&[("x", &[5, 4])]);
        let options = GradCheckOptions {
            mode: Mode::Train { dropout: 0.3, seed: 5 },
            ..GradCheckOptions::default()
        };
        let report = check_gradients(
            &store,
            |g| {
                let x = g.param(ParamId(0));
                let y = g.gelu(x);
                let d = g.dropout(y);
                let d = g.gelu(d);
                g.sum(d)
            },
            &options,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-5);
    }

    fn reference_attention(q: &[f64], k: &[f64], v: &[f64], mask: &[f64], nq: usize, nk: usize, d: usize, heads: usize) -> Vec<f64> {
        let dh = d / heads;
        let mut out = vec![0.0; nq * d];
        for h in 0..heads {
            for i in 0..nq {
                let mut beta = vec![0.0; nk];
                for j in 0..nk {
                    let mut dot = 0.0;
                    for t in 0..dh {
                        dot += q[i * d + h * dh + t] * k[j * d + h * dh + t];
                    }
                    beta[j] = dot / (dh as f64).sqrt() + mask[i * nk + j];
                }
                let denom: f64 = beta.iter().map(|b| b.exp()).sum();
                for j in 0..nk {
                    let alpha = beta[j].exp() / denom;
                    for t in 0..dh {
                        out[i * d + h * dh + t] += alpha * v[j * d + h * dh + t];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn attention_matches_double_loop_reference() {
        let mut r = rng();
        let store = ParamStore::<f64>::new();
        let q = Tensor::<f64>::normal(&[3, 4], 1.0, &mut r);
        let k = Tensor::<f64>::normal(&[4, 4], 1.0, &mut r);
        let v = Tensor::<f64>::normal(&[4, 4], 1.0, &mut r);
        let mask = Tensor::<f64>::normal(&[3, 4], 1.0, &mut r);
        let mut g = Graph::new(&store, Mode::Eval);
        let (qn, kn, vn) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
        let out = g.attention(qn, kn, vn, 2, 1, Some(&mask));
        let reference = reference_attention(q.data(), k.data(), v.data(), mask.data(), 3, 4, 4, 2);
        for (a, b) in g.value(out).data().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn diagonal_only_mask_gives_identity_attention() {
        let mut r = rng();
        let store = ParamStore::<f64>::new();
        let x = Tensor::<f64>::normal(&[3, 4], 1.0, &mut r);
        let mut mask = Tensor::full(&[3, 3], f64::NEG_INFINITY);
        for i in 0..3 {
            mask.data_mut()[i * 3 + i] = 0.0;
        }
        let mut g = Graph::new(&store, Mode::Eval);
        let xn = g.input(x.clone());
        let out = g.attention(xn, xn, xn, 2, 1, Some(&mask));
        assert_eq!(g.value(out), &x);
        let probs = g.attention_probs(out).unwrap();
        for h in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_eq!(probs[(h * 3 + i) * 3 + j], expected);
                }
            }
        }
    }

    #[test]
    fn equal_inputs_give_uniform_rows() {
        let store = ParamStore::<f32>::new();
        let x = Tensor::<f32>::full(&[5, 4], 0.3);
        let mut g = Graph::new(&store, Mode::Eval);
        let xn = g.input(x);
        let out = g.attention(xn, xn, xn, 1, 1, None);
        for &p in g.attention_probs(out).unwrap() {
            assert!((p - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_matches_reference_and_normalizes() {
        let mut r = rng();
        let store = ParamStore::<f64>::new();
        let x = Tensor::<f64>::normal(&[8, 16], 2.0, &mut r);
        let gain = Tensor::<f64>::normal(&[16], 1.0, &mut r);
        let bias = Tensor::<f64>::normal(&[16], 1.0, &mut r);
        let mut g = Graph::new(&store, Mode::Eval);
        let (xn, gn, bn) = (g.input(x.clone()), g.input(gain.clone()), g.input(bias.clone()));
        let out = g.layer_norm(xn, gn, bn);
        let ones = g.input(Tensor::full(&[16], 1.0));
        let zeros = g.input(Tensor::zeros(&[16]));
        let plain = g.layer_norm(xn, ones, zeros);
        for i in 0..8 {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            for j in 0..16 {
                let expected = (row[j] - mean) / (var + 1e-5).sqrt() * gain.data()[j] + bias.data()[j];
                assert!((g.value(out).row(i)[j] - expected).abs() < 1e-6);
            }
            let p = g.value(plain).row(i);
            let m = p.iter().sum::<f64>() / 16.0;
            let v = p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 16.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store, Mode::Eval);
        let x = g.input(Tensor::full(&[1, 5], 3.25));
        let ones = g.input(Tensor::full(&[5], 1.0));
        let zeros = g.input(Tensor::zeros(&[5]));
        let y = g.layer_norm(x, ones, zeros);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gelu_asymptotes() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(10.0f64) - 10.0).abs() < 1e-12);
        assert!(gelu(-10.0f64).abs() < 1e-12);
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_identity_in_eval_and_seeded_in_training() {
        let store = ParamStore::<f32>::new();
        let x = Tensor::<f32>::full(&[10, 10], 1.0);
        let mut eval = Graph::new(&store, Mode::Eval);
        let xn = eval.input(x.clone());
        assert_eq!(eval.dropout(xn), xn);

        let run = |seed| {
            let mut g = Graph::new(&store, Mode::Train { dropout: 0.1, seed });
            let xn = g.input(x.clone());
            let d = g.dropout(xn);
            g.value(d).clone()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        let out = run(1);
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 0 && zeros < 30);
        assert!(out.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.9).abs() < 1e-6));
    }

    #[test]
    fn repeated_backward_passes_are_bit_identical() {
        let store = store_with(&[("q", &[4, 4]), ("w", &[4, 1])]);
        let run = || {
            let mut g = Graph::new(&store, Mode::Eval);
            let q = g.param(ParamId(0));
            let w = g.param(ParamId(1));
            let a = g.attention(q, q, q, 2, 1, None);
            let z = g.matmul(a, w);
            let loss = g.bce_with_logits_sum(z, &[1.0, 0.0, 1.0, 0.0]);
            g.backward(loss).unwrap()
        };
        assert_eq!(run(), run());
    }
}
