//! Finite-difference verification of analytic gradients.
//!
//! The loss closure must be a deterministic function of the parameter values
//! (dropout off, fixed batch-norm statistics). Analytic gradients are taken
//! from the store's gradient buffers as populated by a prior backward pass;
//! this module never runs backward itself, so it stays independent of the
//! code it is checking.

use super::param::ParamStore;
use super::rng::Rng;
use super::tensor::Tensor2;

/// Default central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares the stored analytic gradients against central finite differences
/// of `loss_fn` and returns the maximum relative error
/// `|g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8)`.
///
/// At most `max_samples` entries are probed, spread evenly across parameters
/// and chosen by `rng` for tensors too large to cover exhaustively. Parameter
/// values are restored bit-exactly afterwards. An empty store returns 0.
pub fn grad_check(
    store: &mut ParamStore,
    step: f64,
    max_samples: usize,
    rng: &mut Rng,
    mut loss_fn: impl FnMut(&ParamStore) -> f64,
) -> f64 {
    let analytic: Vec<Tensor2> = store.iter().map(|(_, p)| p.grad.clone()).collect();
    let ids: Vec<_> = store.ids().collect();
    if ids.is_empty() || max_samples == 0 {
        return 0.0;
    }
    let quota = (max_samples / ids.len()).max(1);
    let mut max_rel = 0.0f64;
    for (pi, id) in ids.iter().enumerate() {
        let len = store.value(*id).values().len();
        let entries: Vec<usize> = if len <= quota {
            (0..len).collect()
        } else {
            // Random distinct sample; duplicates are dropped, which only
            // shrinks the probe set, never biases it.
            let mut picked: Vec<usize> = (0..quota).map(|_| rng.below(len)).collect();
            picked.sort_unstable();
            picked.dedup();
            picked
        };
        for e in entries {
            let original = store.value(*id).values()[e];
            store.value_mut(*id).values_mut()[e] = original + step;
            let loss_plus = loss_fn(store);
            store.value_mut(*id).values_mut()[e] = original - step;
            let loss_minus = loss_fn(store);
            store.value_mut(*id).values_mut()[e] = original;
            let g_fd = (loss_plus - loss_minus) / (2.0 * step);
            let g_a = analytic[pi].values()[e];
            let rel = (g_a - g_fd).abs() / g_a.abs().max(g_fd.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}
