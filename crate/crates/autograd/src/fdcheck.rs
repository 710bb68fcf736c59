//! Central-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::optim::ParamSet;

/// Outcome of a finite-difference sweep over every trainable coordinate.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub coords_checked: usize,
}

/// Compares the analytic gradient of `f` against central differences at
/// every trainable coordinate of `params`.
///
/// `f` must rebuild its graph from the parameter values alone; it is invoked
/// twice on identical inputs first, and any bitwise difference in the loss is
/// reported as [`Error::NonDeterministic`]. Relative error uses
/// `|a - n| / max(|a|, |n|, 1e-3)`, so absolute noise below `1e-3 * tol` is
/// ignored; callers should construct losses whose interesting gradients are
/// comfortably above that floor.
pub fn finite_diff_check<F>(params: &mut ParamSet<f64>, eps: f64, mut f: F) -> Result<FdReport>
where
    F: FnMut(&ParamSet<f64>) -> Result<(Graph<f64>, NodeId)>,
{
    assert!(eps > 0.0, "finite difference step must be positive");

    let (graph, loss) = f(params)?;
    let l0 = graph.try_scalar(loss)?;
    let analytic = graph.backward(loss)?;

    let (graph2, loss2) = f(params)?;
    let l1 = graph2.try_scalar(loss2)?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::NonDeterministic);
    }

    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        coords_checked: 0,
    };

    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if !params.get(id).trainable {
            continue;
        }
        let name = params.get(id).name.clone();
        let n = params.value(id).numel();
        for j in 0..n {
            let orig = params.value(id).data()[j];

            params.value_mut(id).data_mut()[j] = orig + eps;
            let (gp, lp) = f(params)?;
            let fp = gp.try_scalar(lp)?;

            params.value_mut(id).data_mut()[j] = orig - eps;
            let (gm, lm) = f(params)?;
            let fm = gm.try_scalar(lm)?;

            params.value_mut(id).data_mut()[j] = orig;

            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.get(id).map(|t| t.data()[j]).unwrap_or(0.0);
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            let rel = (a - numeric).abs() / denom;
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = j;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
