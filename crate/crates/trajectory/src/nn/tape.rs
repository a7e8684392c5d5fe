//! Reverse-mode autodiff over a flat operation tape.
//!
//! A tape is built per batch: parameters enter once (deduplicated by id),
//! inputs are constants, every op computes its value eagerly so shape errors
//! surface at the line that made them. `backward` walks the tape once in
//! reverse and returns one gradient per touched parameter. `refresh`
//! recomputes all values from current parameter values without rebuilding
//! the graph, which is what finite-difference checking needs: dropout masks
//! and targets are frozen inside their nodes.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Scalar, Tensor2D};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
/// Probability clamp for the cross-entropy, as a guard against saturated
/// sigmoids.
pub const BCE_EPS: f64 = 1e-7;

/// Numerically stable softplus.
pub fn softplus<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// mish(x) = x * tanh(softplus(x)); mish(0) = 0 exactly.
pub fn mish<F: Scalar>(x: F) -> F {
    x * softplus(x).tanh()
}

fn mish_grad<F: Scalar>(x: F) -> F {
    let t = softplus(x).tanh();
    t + x * (F::one() - t * t) * sigmoid(x)
}

/// Mean binary cross-entropy over all entries, probabilities clamped to
/// [BCE_EPS, 1 - BCE_EPS].
pub fn bce_mean<F: Scalar>(p: &[F], y: &[F]) -> F {
    assert_eq!(p.len(), y.len(), "bce length mismatch");
    assert!(!p.is_empty(), "bce over empty input");
    let lo = F::from_f64(BCE_EPS);
    let hi = F::one() - lo;
    let mut acc = F::zero();
    for (&pi, &yi) in p.iter().zip(y) {
        let pc = pi.max(lo).min(hi);
        acc = acc - (yi * pc.ln() + (F::one() - yi) * (F::one() - pc).ln());
    }
    acc / F::from_f64(p.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<F> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// x [m x n] plus bias [1 x n] broadcast over rows.
    AddBias(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Mish(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        shift: NodeId,
    },
    /// Inverted dropout; mask entries are 0 or 1/(1-p).
    Dropout {
        x: NodeId,
        mask: Tensor2D<F>,
    },
    /// mask [m x 1] broadcast over columns: mask*on + (1-mask)*off.
    MaskSelect {
        on: NodeId,
        off: NodeId,
        mask: Tensor2D<F>,
    },
    ConcatCols(Vec<NodeId>),
    /// x has mask.rows * mask.cols rows; row block b is averaged with the
    /// weights of mask row b. Groups with zero weight produce zeros.
    GroupMeanRows {
        x: NodeId,
        mask: Tensor2D<F>,
    },
    BceLoss {
        probs: NodeId,
        targets: Tensor2D<F>,
    },
}

#[derive(Debug)]
struct Node<F> {
    op: Op<F>,
    value: Tensor2D<F>,
}

pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
    param_nodes: HashMap<usize, NodeId>,
    train: bool,
}

impl<F: Scalar> Tape<F> {
    pub fn new(train: bool) -> Self {
        Tape {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            train,
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2D<F> {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op<F>, value: Tensor2D<F>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor2D<F>) -> NodeId {
        self.push(Op::Input, value)
    }

    /// One node per parameter per tape; repeated calls return the same node
    /// so gradients from all uses accumulate in one place.
    pub fn param(&mut self, store: &ParamStore<F>, pid: ParamId) -> NodeId {
        if let Some(&id) = self.param_nodes.get(&pid.0) {
            return id;
        }
        let value = store.get(pid).clone();
        let id = self.push(Op::Param(pid), value);
        self.param_nodes.insert(pid.0, id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = compute_matmul(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(Op::MatMul(a, b), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = zip_tensors(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = zip_tensors(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = zip_tensors(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        self.push(Op::Mul(a, b), value)
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert_eq!(self.shape(bias), (1, cols), "bias must be 1 x cols");
        let value = compute_add_bias(&self.nodes[x.0].value, &self.nodes[bias.0].value);
        let _ = rows;
        self.push(Op::AddBias(x, bias), value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.map(sigmoid);
        self.push(Op::Sigmoid(x), value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.map(|v| v.tanh());
        self.push(Op::Tanh(x), value)
    }

    pub fn mish(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.map(mish);
        self.push(Op::Mish(x), value)
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, shift: NodeId) -> NodeId {
        let (_, cols) = self.shape(x);
        assert_eq!(self.shape(gain), (1, cols), "layer_norm gain shape");
        assert_eq!(self.shape(shift), (1, cols), "layer_norm shift shape");
        let value = compute_layer_norm(
            &self.nodes[x.0].value,
            &self.nodes[gain.0].value,
            &self.nodes[shift.0].value,
        );
        self.push(Op::LayerNorm { x, gain, shift }, value)
    }

    /// Identity in eval mode or when rate is zero.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut ChaCha8Rng) -> NodeId {
        if !self.train || rate <= 0.0 {
            return x;
        }
        assert!(rate < 1.0, "dropout rate must be < 1");
        let (rows, cols) = self.shape(x);
        let keep = 1.0 - rate;
        let scale = F::from_f64(1.0 / keep);
        let mut mask = Tensor2D::zeros(rows, cols);
        for v in mask.data_mut() {
            if rng.gen::<f64>() < keep {
                *v = scale;
            }
        }
        let value = zip_tensors(&self.nodes[x.0].value, &mask, |x, m| x * m);
        self.push(Op::Dropout { x, mask }, value)
    }

    /// Per-row blend: rows with mask 1 take `on`, rows with mask 0 keep `off`.
    pub fn mask_select(&mut self, on: NodeId, off: NodeId, mask: Tensor2D<F>) -> NodeId {
        assert_eq!(self.shape(on), self.shape(off), "mask_select shape mismatch");
        let (rows, _) = self.shape(on);
        assert_eq!(mask.shape(), (rows, 1), "mask must be rows x 1");
        let value = compute_mask_select(&self.nodes[on.0].value, &self.nodes[off.0].value, &mask);
        self.push(Op::MaskSelect { on, off, mask }, value)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.shape(parts[0]).0;
        for &p in parts {
            assert_eq!(self.shape(p).0, rows, "concat row mismatch");
        }
        let values: Vec<&Tensor2D<F>> = parts.iter().map(|&p| &self.nodes[p.0].value).collect();
        let value = compute_concat_cols(&values);
        self.push(Op::ConcatCols(parts.to_vec()), value)
    }

    /// Masked mean over row groups: x is [groups * group_len x n], mask is
    /// [groups x group_len], output is [groups x n].
    pub fn group_mean_rows(&mut self, x: NodeId, mask: Tensor2D<F>) -> NodeId {
        let (rows, _) = self.shape(x);
        assert_eq!(
            rows,
            mask.rows * mask.cols,
            "group_mean_rows: x rows {} != {} groups * {} len",
            rows,
            mask.rows,
            mask.cols
        );
        let value = compute_group_mean(&self.nodes[x.0].value, &mask);
        self.push(Op::GroupMeanRows { x, mask }, value)
    }

    /// Mean binary cross-entropy against fixed targets; output is 1 x 1.
    pub fn bce_loss(&mut self, probs: NodeId, targets: Tensor2D<F>) -> NodeId {
        assert_eq!(self.shape(probs), targets.shape(), "bce target shape");
        let value = Tensor2D::scalar(bce_mean(
            self.nodes[probs.0].value.data(),
            targets.data(),
        ));
        self.push(Op::BceLoss { probs, targets }, value)
    }

    /// Recomputes every node value from the store. Graph structure, dropout
    /// masks and targets stay fixed.
    pub fn refresh(&mut self, store: &ParamStore<F>) {
        for i in 0..self.nodes.len() {
            let (done, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let value = match &node.op {
                Op::Input => continue,
                Op::Param(pid) => store.get(*pid).clone(),
                Op::MatMul(a, b) => compute_matmul(&done[a.0].value, &done[b.0].value),
                Op::Add(a, b) => zip_tensors(&done[a.0].value, &done[b.0].value, |x, y| x + y),
                Op::Sub(a, b) => zip_tensors(&done[a.0].value, &done[b.0].value, |x, y| x - y),
                Op::Mul(a, b) => zip_tensors(&done[a.0].value, &done[b.0].value, |x, y| x * y),
                Op::AddBias(x, b) => compute_add_bias(&done[x.0].value, &done[b.0].value),
                Op::Sigmoid(x) => done[x.0].value.map(sigmoid),
                Op::Tanh(x) => done[x.0].value.map(|v| v.tanh()),
                Op::Mish(x) => done[x.0].value.map(mish),
                Op::LayerNorm { x, gain, shift } => compute_layer_norm(
                    &done[x.0].value,
                    &done[gain.0].value,
                    &done[shift.0].value,
                ),
                Op::Dropout { x, mask } => zip_tensors(&done[x.0].value, mask, |x, m| x * m),
                Op::MaskSelect { on, off, mask } => {
                    compute_mask_select(&done[on.0].value, &done[off.0].value, mask)
                }
                Op::ConcatCols(parts) => {
                    let values: Vec<&Tensor2D<F>> =
                        parts.iter().map(|p| &done[p.0].value).collect();
                    compute_concat_cols(&values)
                }
                Op::GroupMeanRows { x, mask } => compute_group_mean(&done[x.0].value, mask),
                Op::BceLoss { probs, targets } => {
                    Tensor2D::scalar(bce_mean(done[probs.0].value.data(), targets.data()))
                }
            };
            node.value = value;
        }
    }

    /// Backpropagates from a scalar loss node. Returns per-parameter
    /// gradients; errors if the loss is not finite.
    pub fn backward(&self, store: &ParamStore<F>, loss: NodeId) -> Result<Grads<F>> {
        assert_eq!(self.shape(loss), (1, 1), "loss must be scalar");
        let loss_val = self.nodes[loss.0].value.get(0, 0);
        if !loss_val.is_finite() {
            return Err(Error::Numerics(format!("loss is {loss_val}")));
        }
        let mut grads: Vec<Option<Tensor2D<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2D::scalar(F::one()));
        let mut out = Grads::empty(store.len());

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(pid) => {
                    out.by_param[pid.0] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    matmul_nt_acc(&g, bv, slot(&mut grads, a.0, av.shape()));
                    matmul_tn_acc(av, &g, slot(&mut grads, b.0, bv.shape()));
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, a.0, g.shape()), g.data(), F::one());
                    add_into(slot(&mut grads, b.0, g.shape()), g.data(), F::one());
                }
                Op::Sub(a, b) => {
                    add_into(slot(&mut grads, a.0, g.shape()), g.data(), F::one());
                    add_into(slot(&mut grads, b.0, g.shape()), g.data(), -F::one());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    mul_add_into(slot(&mut grads, a.0, av.shape()), g.data(), bv.data());
                    mul_add_into(slot(&mut grads, b.0, bv.shape()), g.data(), av.data());
                }
                Op::AddBias(x, b) => {
                    add_into(slot(&mut grads, x.0, g.shape()), g.data(), F::one());
                    let db = slot(&mut grads, b.0, (1, g.cols));
                    for r in 0..g.rows {
                        let grow = g.row(r);
                        let drow = db.row_mut(0);
                        for j in 0..g.cols {
                            drow[j] = drow[j] + grow[j];
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[i].value;
                    let dx = slot(&mut grads, x.0, y.shape());
                    for ((d, &gv), &yv) in dx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d = *d + gv * yv * (F::one() - yv);
                    }
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[i].value;
                    let dx = slot(&mut grads, x.0, y.shape());
                    for ((d, &gv), &yv) in dx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d = *d + gv * (F::one() - yv * yv);
                    }
                }
                Op::Mish(x) => {
                    let xv = &self.nodes[x.0].value;
                    let dx = slot(&mut grads, x.0, xv.shape());
                    for ((d, &gv), &x0) in dx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *d = *d + gv * mish_grad(x0);
                    }
                }
                Op::LayerNorm { x, gain, shift } => {
                    backward_layer_norm(
                        &self.nodes[x.0].value,
                        &self.nodes[gain.0].value,
                        &g,
                        &mut grads,
                        (x.0, gain.0, shift.0),
                    );
                }
                Op::Dropout { x, mask } => {
                    let dx = slot(&mut grads, x.0, g.shape());
                    mul_add_into(dx, g.data(), mask.data());
                }
                Op::MaskSelect { on, off, mask } => {
                    let shape = g.shape();
                    {
                        let don = slot(&mut grads, on.0, shape);
                        for r in 0..g.rows {
                            let m = mask.get(r, 0);
                            let grow = g.row(r);
                            let drow = don.row_mut(r);
                            for j in 0..g.cols {
                                drow[j] = drow[j] + grow[j] * m;
                            }
                        }
                    }
                    let doff = slot(&mut grads, off.0, shape);
                    for r in 0..g.rows {
                        let m = F::one() - mask.get(r, 0);
                        let grow = g.row(r);
                        let drow = doff.row_mut(r);
                        for j in 0..g.cols {
                            drow[j] = drow[j] + grow[j] * m;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0usize;
                    for &p in parts {
                        let (rows, cols) = self.nodes[p.0].value.shape();
                        let dp = slot(&mut grads, p.0, (rows, cols));
                        for r in 0..rows {
                            let grow = &g.row(r)[offset..offset + cols];
                            let drow = dp.row_mut(r);
                            for j in 0..cols {
                                drow[j] = drow[j] + grow[j];
                            }
                        }
                        offset += cols;
                    }
                }
                Op::GroupMeanRows { x, mask } => {
                    let xv_shape = self.nodes[x.0].value.shape();
                    let dx = slot(&mut grads, x.0, xv_shape);
                    let group_len = mask.cols;
                    for b in 0..mask.rows {
                        let mut count = F::zero();
                        for l in 0..group_len {
                            count = count + mask.get(b, l);
                        }
                        if count <= F::zero() {
                            continue;
                        }
                        let inv = F::one() / count;
                        let grow = g.row(b);
                        for l in 0..group_len {
                            let w = mask.get(b, l) * inv;
                            if w == F::zero() {
                                continue;
                            }
                            let drow = dx.row_mut(b * group_len + l);
                            for j in 0..g.cols {
                                drow[j] = drow[j] + grow[j] * w;
                            }
                        }
                    }
                }
                Op::BceLoss { probs, targets } => {
                    let pv = &self.nodes[probs.0].value;
                    let gs = g.get(0, 0);
                    let n = F::from_f64(pv.len() as f64);
                    let lo = F::from_f64(BCE_EPS);
                    let hi = F::one() - lo;
                    let dp = slot(&mut grads, probs.0, pv.shape());
                    for ((d, &p), &y) in dp.data_mut().iter_mut().zip(pv.data()).zip(targets.data())
                    {
                        // Outside the clamp the loss is locally constant in p.
                        if p > lo && p < hi {
                            *d = *d + gs * (p - y) / (p * (F::one() - p) * n);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot<F: Scalar>(
    grads: &mut [Option<Tensor2D<F>>],
    idx: usize,
    shape: (usize, usize),
) -> &mut Tensor2D<F> {
    grads[idx].get_or_insert_with(|| Tensor2D::zeros(shape.0, shape.1))
}

fn add_into<F: Scalar>(dst: &mut Tensor2D<F>, src: &[F], sign: F) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src) {
        *d = *d + sign * s;
    }
}

fn mul_add_into<F: Scalar>(dst: &mut Tensor2D<F>, a: &[F], b: &[F]) {
    for ((d, &x), &y) in dst.data_mut().iter_mut().zip(a).zip(b) {
        *d = *d + x * y;
    }
}

fn zip_tensors<F: Scalar>(a: &Tensor2D<F>, b: &Tensor2D<F>, f: impl Fn(F, F) -> F) -> Tensor2D<F> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor2D::from_flat(a.rows, a.cols, data)
}

fn compute_matmul<F: Scalar>(a: &Tensor2D<F>, b: &Tensor2D<F>) -> Tensor2D<F> {
    let mut out = Tensor2D::zeros(a.rows, b.cols);
    matmul_acc(a, b, &mut out);
    out
}

fn compute_add_bias<F: Scalar>(x: &Tensor2D<F>, bias: &Tensor2D<F>) -> Tensor2D<F> {
    let mut out = x.clone();
    let brow = bias.row(0);
    for r in 0..out.rows {
        let row = out.row_mut(r);
        for j in 0..row.len() {
            row[j] = row[j] + brow[j];
        }
    }
    out
}

fn compute_layer_norm<F: Scalar>(
    x: &Tensor2D<F>,
    gain: &Tensor2D<F>,
    shift: &Tensor2D<F>,
) -> Tensor2D<F> {
    let n = F::from_f64(x.cols as f64);
    let eps = F::from_f64(LN_EPS);
    let mut out = Tensor2D::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let row = x.row(r);
        let mut mean = F::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean / n;
        let mut var = F::zero();
        for &v in row {
            let d = v - mean;
            var = var + d * d;
        }
        var = var / n;
        let inv_std = F::one() / (var + eps).sqrt();
        let orow = out.row_mut(r);
        let (grow, srow) = (gain.row(0), shift.row(0));
        for j in 0..row.len() {
            orow[j] = (row[j] - mean) * inv_std * grow[j] + srow[j];
        }
    }
    out
}

fn backward_layer_norm<F: Scalar>(
    x: &Tensor2D<F>,
    gain: &Tensor2D<F>,
    g: &Tensor2D<F>,
    grads: &mut [Option<Tensor2D<F>>],
    (xi, gi, si): (usize, usize, usize),
) {
    let n = x.cols;
    let nf = F::from_f64(n as f64);
    let eps = F::from_f64(LN_EPS);
    let mut xhat = vec![F::zero(); n];
    let mut dxhat = vec![F::zero(); n];
    for r in 0..x.rows {
        let row = x.row(r);
        let mut mean = F::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean / nf;
        let mut var = F::zero();
        for &v in row {
            let d = v - mean;
            var = var + d * d;
        }
        var = var / nf;
        let inv_std = F::one() / (var + eps).sqrt();
        let grow = g.row(r);
        let gainrow = gain.row(0);
        let mut m1 = F::zero();
        let mut m2 = F::zero();
        for j in 0..n {
            xhat[j] = (row[j] - mean) * inv_std;
            dxhat[j] = grow[j] * gainrow[j];
            m1 = m1 + dxhat[j];
            m2 = m2 + dxhat[j] * xhat[j];
        }
        m1 = m1 / nf;
        m2 = m2 / nf;
        {
            let dx = slot(grads, xi, x.shape());
            let dxrow = dx.row_mut(r);
            for j in 0..n {
                dxrow[j] = dxrow[j] + inv_std * (dxhat[j] - m1 - xhat[j] * m2);
            }
        }
        {
            let dg = slot(grads, gi, (1, n));
            let dgrow = dg.row_mut(0);
            for j in 0..n {
                dgrow[j] = dgrow[j] + grow[j] * xhat[j];
            }
        }
        {
            let ds = slot(grads, si, (1, n));
            let dsrow = ds.row_mut(0);
            for j in 0..n {
                dsrow[j] = dsrow[j] + grow[j];
            }
        }
    }
}

fn compute_mask_select<F: Scalar>(
    on: &Tensor2D<F>,
    off: &Tensor2D<F>,
    mask: &Tensor2D<F>,
) -> Tensor2D<F> {
    let mut out = Tensor2D::zeros(on.rows, on.cols);
    for r in 0..on.rows {
        let m = mask.get(r, 0);
        let one_m = F::one() - m;
        let onrow = on.row(r);
        let offrow = off.row(r);
        let orow = out.row_mut(r);
        for j in 0..onrow.len() {
            orow[j] = m * onrow[j] + one_m * offrow[j];
        }
    }
    out
}

fn compute_concat_cols<F: Scalar>(parts: &[&Tensor2D<F>]) -> Tensor2D<F> {
    let rows = parts[0].rows;
    let total: usize = parts.iter().map(|p| p.cols).sum();
    let mut out = Tensor2D::zeros(rows, total);
    for r in 0..rows {
        let orow = out.row_mut(r);
        let mut offset = 0;
        for p in parts {
            orow[offset..offset + p.cols].copy_from_slice(p.row(r));
            offset += p.cols;
        }
    }
    out
}

fn compute_group_mean<F: Scalar>(x: &Tensor2D<F>, mask: &Tensor2D<F>) -> Tensor2D<F> {
    let group_len = mask.cols;
    let mut out = Tensor2D::zeros(mask.rows, x.cols);
    for b in 0..mask.rows {
        let mut count = F::zero();
        for l in 0..group_len {
            count = count + mask.get(b, l);
        }
        if count <= F::zero() {
            continue;
        }
        let inv = F::one() / count;
        let orow = out.row_mut(b);
        for l in 0..group_len {
            let w = mask.get(b, l) * inv;
            if w == F::zero() {
                continue;
            }
            let xrow = x.row(b * group_len + l);
            for j in 0..xrow.len() {
                orow[j] = orow[j] + w * xrow[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mish_reference_values() {
        // Frozen from a 40-digit arbitrary precision evaluation.
        assert_eq!(mish(0.0f64), 0.0);
        let cases: [(f64, f64); 5] = [
            (1.0, 0.8650983882673103461162334492563123868864),
            (0.5, 0.3752452113048951048185624133992798825679),
            (-1.0, -0.3034014613741089180743892753783652296743),
            (2.0, 1.943958959533994520318481324792746470969),
            (-3.0, -0.1456474612756245873146171857946990377353),
        ];
        for (x, want) in cases {
            assert!((mish(x) - want).abs() < 1e-14, "mish({x})");
            let got32 = mish(x as f32) as f64;
            assert!((got32 - want).abs() < 1e-6, "mish32({x})");
        }
    }

    #[test]
    fn mish_extreme_inputs_stay_finite() {
        for x in [-60.0f64, -30.0, 30.0, 60.0, 500.0, -500.0] {
            assert!(mish(x).is_finite(), "mish({x})");
        }
        // Far negative: x * tanh(~0) -> ~0; far positive: ~x.
        assert!(mish(500.0f64) > 499.0);
        assert!(mish(-500.0f64).abs() < 1e-10);
    }

    #[test]
    fn bce_uniform_pair_is_ln2() {
        let p = [0.5f64, 0.5];
        let y = [0.0f64, 1.0];
        let got = bce_mean(&p, &y);
        assert!((got - 0.6931471805599453).abs() < 1e-12);
    }

    #[test]
    fn bce_clamps_saturated_probabilities() {
        let p = [0.0f64, 1.0];
        let y = [1.0f64, 0.0];
        let got = bce_mean(&p, &y);
        assert!(got.is_finite());
        assert!((got - (-(BCE_EPS.ln()))).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_matches_closed_form() {
        for x in [-5.0f64, -0.5, 0.0, 0.5, 5.0] {
            let want = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - want).abs() < 1e-15);
        }
        assert!(sigmoid(-1000.0f64) >= 0.0);
        assert!(sigmoid(1000.0f64) <= 1.0);
    }

    #[test]
    fn forward_shapes_and_values() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let w = store.add("w", Tensor2D::from_flat(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let b = store.add("b", Tensor2D::from_flat(1, 2, vec![0.5, -0.5]));
        let mut tape = Tape::new(false);
        let x = tape.input(Tensor2D::from_flat(1, 2, vec![2.0, 3.0]));
        let wn = tape.param(&store, w);
        let bn = tape.param(&store, b);
        let xw = tape.matmul(x, wn);
        let z = tape.add_bias(xw, bn);
        assert_eq!(tape.value(z).data(), &[2.5, 2.5]);
    }

    #[test]
    fn group_mean_ignores_masked_rows() {
        let mut tape: Tape<f64> = Tape::new(false);
        let x = tape.input(Tensor2D::from_flat(
            4,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 100.0, 100.0, 5.0, 6.0],
        ));
        let mask = Tensor2D::from_flat(2, 2, vec![1.0, 1.0, 0.0, 1.0]);
        let out = tape.group_mean_rows(x, mask);
        assert_eq!(tape.value(out).data(), &[2.0, 3.0, 5.0, 6.0]);
    }

    #[test]
    fn group_mean_empty_group_is_zero() {
        let mut tape: Tape<f64> = Tape::new(false);
        let x = tape.input(Tensor2D::from_flat(2, 2, vec![7.0, 8.0, 9.0, 10.0]));
        let mask = Tensor2D::from_flat(1, 2, vec![0.0, 0.0]);
        let out = tape.group_mean_rows(x, mask);
        assert_eq!(tape.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_of_simple_chain_matches_hand_derivation() {
        // loss = bce(sigmoid(x*w), y) with x=1, w free, y=1:
        // dL/dw = (p - 1) * x
        let mut store: ParamStore<f64> = ParamStore::new();
        let w = store.add("w", Tensor2D::scalar(0.3));
        let mut tape = Tape::new(false);
        let x = tape.input(Tensor2D::scalar(1.0));
        let wn = tape.param(&store, w);
        let z = tape.mul(x, wn);
        let p = tape.sigmoid(z);
        let loss = tape.bce_loss(p, Tensor2D::scalar(1.0));
        let grads = tape.backward(&store, loss).unwrap();
        let got = grads.get(w).unwrap().get(0, 0);
        let p_val = sigmoid(0.3);
        assert!((got - (p_val - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn mask_select_blends_rows() {
        let mut tape: Tape<f64> = Tape::new(false);
        let on = tape.input(Tensor2D::from_flat(2, 2, vec![1.0, 1.0, 2.0, 2.0]));
        let off = tape.input(Tensor2D::from_flat(2, 2, vec![9.0, 9.0, 8.0, 8.0]));
        let mask = Tensor2D::from_flat(2, 1, vec![1.0, 0.0]);
        let out = tape.mask_select(on, off, mask);
        assert_eq!(tape.value(out).data(), &[1.0, 1.0, 8.0, 8.0]);
    }
}
