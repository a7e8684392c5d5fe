//! Central finite-difference verification of tape gradients.
//!
//! The builder constructs a scalar loss once; the checker then perturbs each
//! parameter entry by +-h, refreshes the tape (masks and targets stay
//! frozen), and compares the numeric slope against the analytic gradient.
//! Relative error uses a floored denominator so near-zero gradients are
//! checked absolutely at floor * tolerance instead of amplifying roundoff.

use super::params::ParamStore;
use super::tape::{NodeId, Tape};
use super::tensor::{Scalar, Tensor2D};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    /// Finite-difference step. 1e-3 for f32 runs, 1e-5 for f64 verification.
    pub h: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
}

impl GradCheckSettings {
    pub fn for_f32() -> Self {
        GradCheckSettings { h: 1e-3, floor: 0.1 }
    }

    pub fn for_f64() -> Self {
        GradCheckSettings {
            h: 1e-5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub entries_checked: usize,
    pub worst_param: Option<String>,
}

/// Checks d(loss)/d(param) for every parameter entry in the store.
///
/// `build` must create the loss node on the given tape; it runs once, so any
/// stochastic choices it makes (dropout masks) are fixed for the whole check.
pub fn grad_check<F: Scalar>(
    store: &mut ParamStore<F>,
    settings: GradCheckSettings,
    build: impl FnOnce(&mut Tape<F>, &ParamStore<F>) -> NodeId,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new(true);
    let loss = build(&mut tape, store);
    let grads = tape.backward(store, loss)?;

    let h = F::from_f64(settings.h);
    let mut max_rel_err = 0.0f64;
    let mut worst_param = None;
    let mut entries_checked = 0usize;

    for pid in store.ids() {
        let Some(analytic) = grads.get(pid) else {
            continue;
        };
        let analytic: Tensor2D<F> = analytic.clone();
        for idx in 0..analytic.len() {
            let orig = store.get(pid).data()[idx];

            store.get_mut(pid).data_mut()[idx] = orig + h;
            tape.refresh(store);
            let plus = tape.value(loss).get(0, 0).to_f64();

            store.get_mut(pid).data_mut()[idx] = orig - h;
            tape.refresh(store);
            let minus = tape.value(loss).get(0, 0).to_f64();

            store.get_mut(pid).data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * settings.h);
            let ana = analytic.data()[idx].to_f64();
            let denom = numeric.abs().max(ana.abs()).max(settings.floor);
            let rel = (numeric - ana).abs() / denom;
            entries_checked += 1;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_param = Some(format!("{}[{}]", store.name(pid), idx));
            }
        }
    }
    tape.refresh(store);
    Ok(GradCheckReport {
        max_rel_err,
        entries_checked,
        worst_param,
    })
}
