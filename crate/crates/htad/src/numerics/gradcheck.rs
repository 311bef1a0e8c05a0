//! Central-difference verification of recorded gradients.

use crate::error::{Error, Result};
use crate::numerics::store::ParameterStore;
use crate::numerics::tape::{GradContext, VarId};

/// Compare the tape gradient of a scalar loss against central differences.
///
/// `build` records the loss on a fresh tape from the current parameter values;
/// it is re-evaluated with every coordinate of every parameter perturbed by
/// `+h` and `-h`. Returns the maximum relative error over all coordinates,
/// with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(store: &mut ParameterStore, h: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&ParameterStore, &mut GradContext) -> Result<VarId>,
{
    if h <= 0.0 {
        return Err(Error::InvalidInput("grad_check: h must be > 0".into()));
    }

    let eval = |store: &ParameterStore,
                build: &mut F|
     -> Result<f64> {
        let mut tape = GradContext::new();
        let root = build(store, &mut tape)?;
        let v = tape.scalar(root);
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check loss value".into()));
        }
        Ok(v)
    };

    // Analytic pass.
    let mut tape = GradContext::new();
    let root = build(store, &mut tape)?;
    if !tape.scalar(root).is_finite() {
        return Err(Error::NonFinite("grad_check loss value".into()));
    }
    store.zero_grads();
    tape.backward(root, store)?;
    let ids: Vec<_> = store.ids().collect();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|id| store.grad(*id).to_vec()).collect();
    store.zero_grads();

    let mut max_rel: f64 = 0.0;
    for (pi, id) in ids.iter().enumerate() {
        for i in 0..store.value(*id).len() {
            let orig = store.value(*id).data()[i];
            store.value_mut(*id).data_mut()[i] = orig + h;
            let f_plus = eval(store, &mut build)?;
            store.value_mut(*id).data_mut()[i] = orig - h;
            let f_minus = eval(store, &mut build)?;
            store.value_mut(*id).data_mut()[i] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let ana = analytic[pi][i];
            let denom = ana.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((ana - numeric).abs() / denom);
        }
    }
    Ok(max_rel)
}
