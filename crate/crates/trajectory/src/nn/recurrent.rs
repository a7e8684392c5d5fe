//! GRU and LSTM stacks over fixed-length windows with per-step validity
//! masks. A masked step passes hidden (and cell) state through unchanged, so
//! front padding never influences the final state. The prediction feature is
//! the final state of each direction: for the backward direction that is its
//! state after the earliest valid step.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::tensor::{Scalar, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Gru,
    Lstm,
}

#[derive(Debug, Clone)]
struct GruParams {
    w_ir: ParamId,
    w_hr: ParamId,
    b_r: ParamId,
    w_iz: ParamId,
    w_hz: ParamId,
    b_z: ParamId,
    w_in: ParamId,
    b_in: ParamId,
    w_hn: ParamId,
    b_hn: ParamId,
}

#[derive(Debug, Clone)]
struct LstmParams {
    w_ii: ParamId,
    w_hi: ParamId,
    b_i: ParamId,
    w_if: ParamId,
    w_hf: ParamId,
    b_f: ParamId,
    w_ig: ParamId,
    w_hg: ParamId,
    b_g: ParamId,
    w_io: ParamId,
    w_ho: ParamId,
    b_o: ParamId,
}

#[derive(Debug, Clone)]
enum CellParams {
    Gru(GruParams),
    Lstm(LstmParams),
}

impl CellParams {
    fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        cell: CellType,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        let w = |store: &mut ParamStore<F>, rng: &mut ChaCha8Rng, name: &str, i: usize| {
            store.add_weight(format!("{prefix}.{name}"), i, hidden, rng)
        };
        match cell {
            CellType::Gru => CellParams::Gru(GruParams {
                w_ir: w(store, rng, "w_ir", in_dim),
                w_hr: w(store, rng, "w_hr", hidden),
                b_r: store.add_zeros(format!("{prefix}.b_r"), 1, hidden),
                w_iz: w(store, rng, "w_iz", in_dim),
                w_hz: w(store, rng, "w_hz", hidden),
                b_z: store.add_zeros(format!("{prefix}.b_z"), 1, hidden),
                w_in: w(store, rng, "w_in", in_dim),
                b_in: store.add_zeros(format!("{prefix}.b_in"), 1, hidden),
                w_hn: w(store, rng, "w_hn", hidden),
                b_hn: store.add_zeros(format!("{prefix}.b_hn"), 1, hidden),
            }),
            CellType::Lstm => CellParams::Lstm(LstmParams {
                w_ii: w(store, rng, "w_ii", in_dim),
                w_hi: w(store, rng, "w_hi", hidden),
                b_i: store.add_zeros(format!("{prefix}.b_i"), 1, hidden),
                w_if: w(store, rng, "w_if", in_dim),
                w_hf: w(store, rng, "w_hf", hidden),
                b_f: store.add_zeros(format!("{prefix}.b_f"), 1, hidden),
                w_ig: w(store, rng, "w_ig", in_dim),
                w_hg: w(store, rng, "w_hg", hidden),
                b_g: store.add_zeros(format!("{prefix}.b_g"), 1, hidden),
                w_io: w(store, rng, "w_io", in_dim),
                w_ho: w(store, rng, "w_ho", hidden),
                b_o: store.add_zeros(format!("{prefix}.b_o"), 1, hidden),
            }),
        }
    }
}

/// Gate preactivation: x @ w_x + h @ w_h + b.
fn gate<F: Scalar>(
    tape: &mut Tape<F>,
    store: &ParamStore<F>,
    x: NodeId,
    h: NodeId,
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
) -> NodeId {
    let wx = tape.param(store, w_x);
    let wh = tape.param(store, w_h);
    let bn = tape.param(store, b);
    let xs = tape.matmul(x, wx);
    let hs = tape.matmul(h, wh);
    let sum = tape.add(xs, hs);
    tape.add_bias(sum, bn)
}

#[derive(Debug, Clone)]
pub struct RecurrentStack {
    pub cell: CellType,
    pub input_dim: usize,
    pub hidden: usize,
    pub n_layers: usize,
    pub bidirectional: bool,
    /// Applied between layers only, matching the usual stacked-RNN scheme.
    pub dropout: f64,
    layers: Vec<Vec<CellParams>>,
}

impl RecurrentStack {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        cell: CellType,
        input_dim: usize,
        hidden: usize,
        n_layers: usize,
        bidirectional: bool,
        dropout: f64,
    ) -> Self {
        assert!(n_layers >= 1);
        let n_dirs = if bidirectional { 2 } else { 1 };
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let in_dim = if l == 0 { input_dim } else { hidden * n_dirs };
            let mut dirs = Vec::with_capacity(n_dirs);
            for d in 0..n_dirs {
                let tag = if d == 0 { "fwd" } else { "bwd" };
                dirs.push(CellParams::init(
                    store,
                    rng,
                    &format!("{prefix}.l{l}.{tag}"),
                    cell,
                    in_dim,
                    hidden,
                ));
            }
            layers.push(dirs);
        }
        RecurrentStack {
            cell,
            input_dim,
            hidden,
            n_layers,
            bidirectional,
            dropout,
            layers,
        }
    }

    /// Width of the feature this stack feeds into the output head.
    pub fn output_dim(&self) -> usize {
        if self.bidirectional {
            self.hidden * 2
        } else {
            self.hidden
        }
    }

    /// Runs the stack over `steps` (each [batch x dim]) with per-step
    /// validity masks ([batch x 1]). Returns the final feature for the head.
    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        steps: &[NodeId],
        masks: &[Tensor2D<F>],
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        assert_eq!(steps.len(), masks.len(), "one mask per step");
        assert!(!steps.is_empty(), "empty window");
        let batch = tape.value(steps[0]).rows;
        let k = steps.len();

        let mut layer_inputs: Vec<NodeId> = steps.to_vec();
        let mut final_feature = None;
        for (l, dirs) in self.layers.iter().enumerate() {
            let fwd = self.scan(
                tape,
                store,
                &dirs[0],
                &layer_inputs,
                masks,
                batch,
                (0..k).collect::<Vec<_>>(),
            );
            let mut step_outputs: Vec<NodeId>;
            let final_state;
            if self.bidirectional {
                let bwd = self.scan(
                    tape,
                    store,
                    &dirs[1],
                    &layer_inputs,
                    masks,
                    batch,
                    (0..k).rev().collect::<Vec<_>>(),
                );
                step_outputs = Vec::with_capacity(k);
                for t in 0..k {
                    step_outputs.push(tape.concat_cols(&[fwd.per_step[t], bwd.per_step[t]]));
                }
                final_state = tape.concat_cols(&[fwd.final_state, bwd.final_state]);
            } else {
                step_outputs = fwd.per_step.clone();
                final_state = fwd.final_state;
            }
            if l + 1 < self.n_layers && self.dropout > 0.0 {
                for out in step_outputs.iter_mut() {
                    *out = tape.dropout(*out, self.dropout, rng);
                }
            }
            layer_inputs = step_outputs;
            final_feature = Some(final_state);
        }
        final_feature.expect("at least one layer")
    }

    fn scan<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        params: &CellParams,
        inputs: &[NodeId],
        masks: &[Tensor2D<F>],
        batch: usize,
        order: Vec<usize>,
    ) -> ScanResult {
        let mut h = tape.input(Tensor2D::zeros(batch, self.hidden));
        let mut c = tape.input(Tensor2D::zeros(batch, self.hidden));
        let mut per_step = vec![h; inputs.len()];
        for &t in &order {
            let x = inputs[t];
            match params {
                CellParams::Gru(p) => {
                    let r_pre = gate(tape, store, x, h, p.w_ir, p.w_hr, p.b_r);
                    let r = tape.sigmoid(r_pre);
                    let z_pre = gate(tape, store, x, h, p.w_iz, p.w_hz, p.b_z);
                    let z = tape.sigmoid(z_pre);
                    let w_in = tape.param(store, p.w_in);
                    let b_in = tape.param(store, p.b_in);
                    let w_hn = tape.param(store, p.w_hn);
                    let b_hn = tape.param(store, p.b_hn);
                    let xn = tape.matmul(x, w_in);
                    let xn = tape.add_bias(xn, b_in);
                    let hn = tape.matmul(h, w_hn);
                    let hn = tape.add_bias(hn, b_hn);
                    let rh = tape.mul(r, hn);
                    let n_pre = tape.add(xn, rh);
                    let n = tape.tanh(n_pre);
                    // h' = (1 - z) * n + z * h = n + z * (h - n)
                    let h_minus_n = tape.sub(h, n);
                    let z_gated = tape.mul(z, h_minus_n);
                    let h_new = tape.add(n, z_gated);
                    h = tape.mask_select(h_new, h, masks[t].clone());
                }
                CellParams::Lstm(p) => {
                    let i_pre = gate(tape, store, x, h, p.w_ii, p.w_hi, p.b_i);
                    let i = tape.sigmoid(i_pre);
                    let f_pre = gate(tape, store, x, h, p.w_if, p.w_hf, p.b_f);
                    let f = tape.sigmoid(f_pre);
                    let g_pre = gate(tape, store, x, h, p.w_ig, p.w_hg, p.b_g);
                    let g = tape.tanh(g_pre);
                    let o_pre = gate(tape, store, x, h, p.w_io, p.w_ho, p.b_o);
                    let o = tape.sigmoid(o_pre);
                    let fc = tape.mul(f, c);
                    let ig = tape.mul(i, g);
                    let c_new = tape.add(fc, ig);
                    let c_tanh = tape.tanh(c_new);
                    let h_new = tape.mul(o, c_tanh);
                    h = tape.mask_select(h_new, h, masks[t].clone());
                    c = tape.mask_select(c_new, c, masks[t].clone());
                }
            }
            per_step[t] = h;
        }
        ScanResult {
            per_step,
            final_state: h,
        }
    }
}

struct ScanResult {
    per_step: Vec<NodeId>,
    final_state: NodeId,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ones_mask(batch: usize) -> Tensor2D<f64> {
        let mut m = Tensor2D::zeros(batch, 1);
        m.fill(1.0);
        m
    }

    fn zeros_mask(batch: usize) -> Tensor2D<f64> {
        Tensor2D::zeros(batch, 1)
    }

    fn random_steps(
        tape: &mut Tape<f64>,
        rng: &mut ChaCha8Rng,
        k: usize,
        batch: usize,
        dim: usize,
    ) -> Vec<NodeId> {
        use rand::Rng;
        (0..k)
            .map(|_| {
                tape.input(Tensor2D::from_fn(batch, dim, |_, _| rng.gen_range(-1.0..1.0)))
            })
            .collect()
    }

    #[test]
    fn masked_prefix_does_not_change_final_state() {
        for cell in [CellType::Gru, CellType::Lstm] {
            for bidir in [false, true] {
                let mut store: ParamStore<f64> = ParamStore::new();
                let mut r = rng::stream(5, "recurrent-pad", 0);
                let stack = RecurrentStack::init(
                    &mut store, &mut r, "s", cell, 3, 4, 2, bidir, 0.0,
                );

                let mut data_rng = rng::stream(6, "recurrent-pad-data", 1);
                let mut tape = Tape::new(false);
                let real = random_steps(&mut tape, &mut data_rng, 2, 2, 3);
                let short = stack.forward(
                    &mut tape,
                    &store,
                    &real,
                    &[ones_mask(2), ones_mask(2)],
                    &mut r,
                );
                let short_val = tape.value(short).clone();

                // Same inputs with two dummy steps in front.
                let mut tape2 = Tape::new(false);
                let pad0 = tape2.input(Tensor2D::zeros(2, 3));
                let pad1 = tape2.input(Tensor2D::zeros(2, 3));
                let r0 = tape2.input(tape.value(real[0]).clone());
                let r1 = tape2.input(tape.value(real[1]).clone());
                let padded = stack.forward(
                    &mut tape2,
                    &store,
                    &[pad0, pad1, r0, r1],
                    &[zeros_mask(2), zeros_mask(2), ones_mask(2), ones_mask(2)],
                    &mut r,
                );
                let padded_val = tape2.value(padded).clone();

                assert_eq!(short_val.shape(), padded_val.shape());
                for (a, b) in short_val.data().iter().zip(padded_val.data()) {
                    assert!((a - b).abs() < 1e-12, "{cell:?} bidir={bidir}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn bidirectional_doubles_output_width() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng::stream(5, "recurrent-width", 0);
        let stack =
            RecurrentStack::init(&mut store, &mut r, "s", CellType::Gru, 3, 5, 1, true, 0.0);
        assert_eq!(stack.output_dim(), 10);
        let mut tape = Tape::new(false);
        let steps = random_steps(&mut tape, &mut r, 3, 2, 3);
        let masks = vec![ones_mask(2), ones_mask(2), ones_mask(2)];
        let out = stack.forward(&mut tape, &store, &steps, &masks, &mut r);
        assert_eq!(tape.value(out).shape(), (2, 10));
    }

    #[test]
    fn per_row_masking_is_independent() {
        // Row 0 has a real first step, row 1 a padded one. Row 1's state
        // after step 0 must still be the initial zero state.
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng::stream(9, "recurrent-rowmask", 0);
        let stack =
            RecurrentStack::init(&mut store, &mut r, "s", CellType::Gru, 2, 3, 1, false, 0.0);
        let mut tape = Tape::new(false);
        let step = tape.input(Tensor2D::from_flat(2, 2, vec![0.7, -0.3, 0.7, -0.3]));
        let mut mask = Tensor2D::zeros(2, 1);
        mask.set(0, 0, 1.0);
        let out = stack.forward(&mut tape, &store, &[step], &[mask], &mut r);
        let v = tape.value(out);
        assert!(v.row(0).iter().any(|x| x.abs() > 1e-9));
        assert!(v.row(1).iter().all(|x| *x == 0.0));
    }
}
