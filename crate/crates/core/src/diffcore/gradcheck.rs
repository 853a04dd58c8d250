use super::{Graph, ParamId, ParameterStore, Var};
use crate::error::Result;

/// Outcome of comparing backward gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks every entry of every parameter in `store` (or only `only`, when
/// given) against `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// `f` must build a scalar loss deterministically from the store. The store's
/// gradient buffers are overwritten; parameter values are left as found.
pub fn grad_check<F>(store: &mut ParameterStore, eps: f64, only: Option<&[ParamId]>, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<Var>,
{
    let mut graph = Graph::new();
    let root = f(&mut graph, store)?;
    graph.backward(root)?;
    store.zero_grad();
    graph.accumulate_param_grads(store, 1.0);

    let eval = |store: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new();
        let root = f(&mut g, store)?;
        Ok(g.scalar(root))
    };

    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => store.ids().collect(),
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for id in ids {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = store.grad(id).data()[k];
            let err = relative_error(analytic, numeric);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}
