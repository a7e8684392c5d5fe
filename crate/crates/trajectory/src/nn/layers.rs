//! Composite blocks on top of the tape: the dense block used everywhere in
//! the admission encoder and the frozen embedding lookup for code features.

use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::tensor::{Scalar, Tensor2D};
use crate::codes::CodeVocabulary;
use crate::error::{Error, Result};
use crate::store::VectorStore;

/// linear -> layer norm -> mish -> dropout.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub w: ParamId,
    pub b: ParamId,
    pub gain: ParamId,
    pub shift: ParamId,
    pub dropout: f64,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseBlock {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        dropout: f64,
    ) -> Self {
        DenseBlock {
            w: store.add_weight(format!("{prefix}.w"), in_dim, out_dim, rng),
            b: store.add_zeros(format!("{prefix}.b"), 1, out_dim),
            gain: store.add_ones(format!("{prefix}.gain"), 1, out_dim),
            shift: store.add_zeros(format!("{prefix}.shift"), 1, out_dim),
            dropout,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        x: NodeId,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let gain = tape.param(store, self.gain);
        let shift = tape.param(store, self.shift);
        let z = tape.matmul(x, w);
        let z = tape.add_bias(z, b);
        let z = tape.layer_norm(z, gain, shift);
        let z = tape.mish(z);
        tape.dropout(z, self.dropout, rng)
    }
}

/// Lookup table of precomputed code vectors. Row 0 is the pad row and stays
/// all zero; no row ever receives gradient updates.
#[derive(Debug, Clone)]
pub struct FrozenEmbedding<F> {
    table: Tensor2D<F>,
}

impl<F: Scalar> FrozenEmbedding<F> {
    /// Table rows follow vocabulary indices: row 0 pad, row i the vector of
    /// `vocab.code_at(i)`. Vectors come from a store keyed by code text.
    pub fn from_store(store: &VectorStore, vocab: &CodeVocabulary) -> Result<Self> {
        let dim = store.dim();
        let mut table = Tensor2D::zeros(vocab.size(), dim);
        for (i, code) in vocab.entries().iter().enumerate() {
            let vec = store.get(code).ok_or_else(|| {
                Error::Integrity(format!("embedding store has no vector for code {code}"))
            })?;
            for (j, &v) in vec.iter().enumerate() {
                table.set(i + 1, j, F::from_f64(v as f64));
            }
        }
        Ok(FrozenEmbedding { table })
    }

    pub fn from_table(table: Tensor2D<F>) -> Self {
        for &v in table.row(0) {
            assert!(v == F::zero(), "pad row must be zero");
        }
        FrozenEmbedding { table }
    }

    pub fn dim(&self) -> usize {
        self.table.cols
    }

    pub fn n_rows(&self) -> usize {
        self.table.rows
    }

    pub fn table(&self) -> &Tensor2D<F> {
        &self.table
    }

    /// Gathers a batch of padded index lists into a stacked tensor of
    /// [batch * width x dim] plus a [batch x width] validity mask. Width is
    /// the longest list in the batch, never below one; pad slots map to the
    /// zero row with mask 0.
    pub fn lookup_batch(&self, index_lists: &[&[usize]]) -> (Tensor2D<F>, Tensor2D<F>, usize) {
        let width = index_lists.iter().map(|l| l.len()).max().unwrap_or(0).max(1);
        let batch = index_lists.len();
        let mut stacked = Tensor2D::zeros(batch * width, self.dim());
        let mut mask = Tensor2D::zeros(batch, width);
        for (b, list) in index_lists.iter().enumerate() {
            for (l, &idx) in list.iter().enumerate() {
                assert!(idx < self.table.rows, "code index {idx} out of table");
                if idx == 0 {
                    continue;
                }
                stacked.row_mut(b * width + l).copy_from_slice(self.table.row(idx));
                mask.set(b, l, F::one());
            }
        }
        (stacked, mask, width)
    }
}
