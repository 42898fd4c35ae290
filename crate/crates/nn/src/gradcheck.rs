//! Central finite-difference gradient checking at 64-bit precision.

use crate::error::Result;
use crate::graph::{Graph, NodeId, ParamStore};

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / (|numeric| + 1e-8)` over checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
    /// (parameter name, flat index, analytic, numeric) of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

fn sample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|i| i * len / max + (i * 7919) % (len / max).max(1)).collect()
    }
}

fn loss_value<F>(store: &ParamStore<f64>, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let mut g = Graph::new(store);
    let l = f(&mut g)?;
    Ok(g.value(l)[0])
}

/// Compares analytic parameter gradients of the scalar built by `f` against
/// central differences with step `h`, on up to `max_per_tensor` entries of
/// every parameter tensor. `f` must be deterministic (re-seed any RNG inside).
pub fn check_param_grads<F>(store: &mut ParamStore<f64>, h: f64, max_per_tensor: usize, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let grads = {
        let mut g = Graph::new(&*store);
        let l = f(&mut g)?;
        g.backward(l)?
    };
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let analytic = grads.param(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; store.get(id).len()]);
        for i in sample_indices(store.get(id).len(), max_per_tensor) {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + h;
            let lp = loss_value(store, &f)?;
            store.get_mut(id).data_mut()[i] = orig - h;
            let lm = loss_value(store, &f)?;
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / (numeric.abs() + 1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((store.name(id).to_string(), i, analytic[i], numeric));
                }
            }
        }
    }
    Ok(report)
}
