//! Named trainable parameters. The store owns the live weights; tapes
//! reference them by id and gradients come back as a parallel vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Tensor2D<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor2D<F>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Weight matrix with scaled-uniform fan-in init: U(-1/sqrt(in), 1/sqrt(in)).
    /// Layout is input x output, matching `x @ w`.
    pub fn add_weight(
        &mut self,
        name: impl Into<String>,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut t = Tensor2D::zeros(in_dim, out_dim);
        for v in t.data_mut() {
            *v = F::from_f64(rng.gen_range(-bound..bound));
        }
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Tensor2D::zeros(rows, cols))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        let mut t = Tensor2D::zeros(rows, cols);
        t.fill(F::one());
        self.add(name, t)
    }

    pub fn get(&self, id: ParamId) -> &Tensor2D<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2D<F> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients for one backward pass; slot i belongs to ParamId(i). Params
/// that did not participate stay None.
#[derive(Debug)]
pub struct Grads<F> {
    pub by_param: Vec<Option<Tensor2D<F>>>,
}

impl<F: Scalar> Grads<F> {
    pub fn empty(n_params: usize) -> Self {
        Grads {
            by_param: (0..n_params).map(|_| None).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor2D<F>> {
        self.by_param.get(id.0).and_then(|g| g.as_ref())
    }
}
