use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Var};

/// Outcome of comparing reverse-mode gradients to central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks every element of every parameter.
pub fn grad_check<L>(loss: L, params: &ParamStore<f64>, h: f64) -> Result<GradCheckReport>
where
    L: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    grad_check_where(loss, params, h, |_| true)
}

/// Checks the parameters whose names satisfy `select`.
///
/// The numeric derivative is a Richardson-extrapolated central difference
/// from steps `h` and `h/2`, so no parameter moves by more than `h`.
pub fn grad_check_where<L, S>(
    mut loss: L,
    params: &ParamStore<f64>,
    h: f64,
    select: S,
) -> Result<GradCheckReport>
where
    L: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
    S: Fn(&str) -> bool,
{
    let mut graph = Graph::new();
    let out = loss(&mut graph, params)?;
    if !graph.scalar(out).is_finite() {
        return Err(Error::NonFiniteLoss { batch: None });
    }
    graph.backward(out)?;
    let analytic: BTreeMap<String, Vec<f64>> = graph.param_grads().into_iter().collect();

    let mut eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = loss(&mut g, store)?;
        let value = g.scalar(v);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { batch: None });
        }
        Ok(value)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let names: Vec<String> = params.names().filter(|n| select(n)).map(String::from).collect();
    let mut probe = params.clone();
    for name in names {
        let len = params.get(&name)?.len();
        for i in 0..len {
            let orig = params.get(&name)?.data()[i];
            let mut central = |step: f64| -> Result<f64> {
                probe.get_mut(&name)?.data_mut()[i] = orig + step;
                let plus = eval(&probe)?;
                probe.get_mut(&name)?.data_mut()[i] = orig - step;
                let minus = eval(&probe)?;
                probe.get_mut(&name)?.data_mut()[i] = orig;
                Ok((plus - minus) / (2.0 * step))
            };
            let wide = central(h)?;
            let narrow = central(h / 2.0)?;
            let numeric = (4.0 * narrow - wide) / 3.0;
            let a = analytic.get(&name).map_or(0.0, |g| g[i]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
