//! Adam with bias correction, optionally wrapped in lookahead (slow weights
//! synchronised every few steps). Lookahead is off by default.

use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};
use super::tensor::{Scalar, Tensor2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lookahead: bool,
    pub lookahead_interval: u64,
    pub lookahead_alpha: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lookahead: false,
            lookahead_interval: 6,
            lookahead_alpha: 0.5,
        }
    }
}

#[derive(Debug)]
pub struct Optimizer<F> {
    pub cfg: OptimizerConfig,
    pub step_count: u64,
    m: Vec<Tensor2D<F>>,
    v: Vec<Tensor2D<F>>,
    slow: Option<Vec<Tensor2D<F>>>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(store: &ParamStore<F>, cfg: OptimizerConfig) -> Self {
        let m = store
            .ids()
            .map(|id| {
                let (r, c) = store.get(id).shape();
                Tensor2D::zeros(r, c)
            })
            .collect::<Vec<_>>();
        let v = m.clone();
        let slow = cfg
            .lookahead
            .then(|| store.ids().map(|id| store.get(id).clone()).collect());
        Optimizer {
            cfg,
            step_count: 0,
            m,
            v,
            slow,
        }
    }

    /// One update over every parameter that received a gradient. Refuses to
    /// write non-finite values into the store.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Grads<F>) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        let lr = self.cfg.learning_rate;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        let eps = F::from_f64(self.cfg.eps);
        let b1f = F::from_f64(b1);
        let b2f = F::from_f64(b2);
        let one_m_b1 = F::from_f64(1.0 - b1);
        let one_m_b2 = F::from_f64(1.0 - b2);
        let step_size = F::from_f64(lr / bc1);
        let bc2_sqrt = F::from_f64(bc2.sqrt());

        for id in store.ids() {
            let Some(g) = grads.get(id) else { continue };
            let i = id.0;
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let w = store.get_mut(id);
            for (((wv, gv), mv), vv) in w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1f * *mv + one_m_b1 * *gv;
                *vv = b2f * *vv + one_m_b2 * *gv * *gv;
                let denom = (*vv).sqrt() / bc2_sqrt + eps;
                *wv = *wv - step_size * *mv / denom;
                if !wv.is_finite() {
                    return Err(Error::Numerics(format!(
                        "parameter {} became {wv} at step {t}",
                        store_name_placeholder(i)
                    )));
                }
            }
        }

        if let Some(slow) = &mut self.slow {
            if t % self.cfg.lookahead_interval == 0 {
                let alpha = F::from_f64(self.cfg.lookahead_alpha);
                for id in store.ids() {
                    let s = &mut slow[id.0];
                    let w = store.get_mut(id);
                    for (sv, wv) in s.data_mut().iter_mut().zip(w.data_mut()) {
                        *sv = *sv + alpha * (*wv - *sv);
                        *wv = *sv;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn moments(&self) -> (&[Tensor2D<F>], &[Tensor2D<F>]) {
        (&self.m, &self.v)
    }

    pub fn slow_weights(&self) -> Option<&[Tensor2D<F>]> {
        self.slow.as_deref()
    }

    /// Restores serialized state; shapes must match the store.
    pub fn restore(
        &mut self,
        step_count: u64,
        m: Vec<Tensor2D<F>>,
        v: Vec<Tensor2D<F>>,
        slow: Option<Vec<Tensor2D<F>>>,
    ) {
        self.step_count = step_count;
        self.m = m;
        self.v = v;
        self.slow = slow;
    }
}

// Param name is not reachable from here without borrowing store twice; the
// index is enough to locate the tensor.
fn store_name_placeholder(i: usize) -> String {
    format!("#{i}")
}
