//! Differentiable TMOE kernels registered on the autodiff tape.

use crate::attention::scoring::pool_columns;
use crate::attention::trace::{Expert, HeadTrace, QueryTrace};
use crate::error::{Error, Result};
use crate::numerics::kernels::{dot, sigmoid, softplus, stable_softmax};
use crate::numerics::{top_k_indices, Function, Graph, Rng, Scalar, Tensor, Var};

/// How each query picks its local experts.
pub enum Selection<'a> {
    /// Highest combined scores, ties to the smaller index.
    TopK(usize),
    /// Uniform without replacement; scores are plain similarities.
    Random { k: usize, rng: &'a mut Rng },
}

struct QueryCache<F> {
    selected: Vec<usize>,
    sims: Vec<F>,
    psis: Vec<F>,
    /// Gates for `selected`, then the global expert if present.
    gates: Vec<F>,
}

struct SparseAggregate<F: Scalar> {
    scale: F,
    n_ctx: usize,
    has_lambda: bool,
    global_rows: Option<usize>,
    queries: Vec<QueryCache<F>>,
}

/// Sparse expert attention for one head.
///
/// `q`, `k`, `v` are `[N x d_k]`. `lambda` is the `[1]` decay parameter
/// (absent means relevance fixed at 1). `global` is the shared expert key
/// (= value): `[1 x d_k]`, or `[N x d_k]` with one row per query when the
/// pooling is causal.
pub fn sparse_expert_attention<F: Scalar>(
    g: &mut Graph<F>,
    q: Var,
    k: Var,
    v: Var,
    lambda: Option<Var>,
    global: Option<Var>,
    mut selection: Selection<'_>,
    causal: bool,
) -> Result<(Var, HeadTrace)> {
    let (qv, kv, vv) = (g.value(q), g.value(k), g.value(v));
    let n = qv.rows();
    let d = qv.cols();
    if n == 0 || kv.rows() != n || vv.rows() != n || kv.cols() != d || vv.cols() != d {
        return Err(Error::InvalidShape(format!(
            "sparse attention q {:?}, k {:?}, v {:?}",
            qv.shape(),
            kv.shape(),
            vv.shape()
        )));
    }
    let lam = lambda.map(|l| g.value(l).data()[0]);
    let gv = global.map(|gl| g.value(gl));
    if let Some(gt) = gv {
        if gt.cols() != d || !(gt.rows() == 1 || gt.rows() == n) {
            return Err(Error::InvalidShape(format!("global expert {:?}", gt.shape())));
        }
    }
    let scale = F::one() / F::of(d as f64).sqrt();
    let rate = lam.map(softplus);

    let mut out = vec![F::zero(); n * d];
    let mut caches = Vec::with_capacity(n);
    let mut trace = HeadTrace::default();
    for t in 0..n {
        let qt = qv.row(t);
        let end = if causal { t + 1 } else { n };
        let sims: Vec<F> = (0..end).map(|s| dot(qt, kv.row(s)) * scale).collect();
        let psis: Vec<F> = (0..end)
            .map(|s| match rate {
                Some(r) => (-r * F::of(t.abs_diff(s) as f64) / F::of(n as f64)).exp(),
                None => F::one(),
            })
            .collect();
        let scores: Vec<F> = sims.iter().zip(&psis).map(|(&a, &b)| a * b).collect();
        let selected = match &mut selection {
            Selection::TopK(kk) => top_k_indices(&scores, *kk)?,
            Selection::Random { k: kk, rng } => {
                if *kk == 0 {
                    return Err(Error::InvalidArgument("k must be at least 1".into()));
                }
                rng.sample_indices(end, *kk)
            }
        };
        let mut logits: Vec<F> = selected.iter().map(|&s| scores[s]).collect();
        let grow = gv.map(|gt| if gt.rows() == 1 { gt.row(0) } else { gt.row(t) });
        if let Some(gr) = grow {
            logits.push(dot(qt, gr) * scale);
        }
        let gates = stable_softmax(&logits)?;

        let yt = &mut out[t * d..(t + 1) * d];
        for (&s, &gate) in selected.iter().zip(&gates) {
            for (o, &x) in yt.iter_mut().zip(vv.row(s)) {
                *o += gate * x;
            }
        }
        if let Some(gr) = grow {
            let gate = gates[gates.len() - 1];
            for (o, &x) in yt.iter_mut().zip(gr) {
                *o += gate * x;
            }
        }

        let mut experts: Vec<Expert> = selected.iter().map(|&s| Expert::Local(s)).collect();
        if grow.is_some() {
            experts.push(Expert::Global);
        }
        trace.queries.push(QueryTrace {
            candidate_scores: scores.iter().map(|s| s.as_f64()).collect(),
            selected: experts,
            gates: gates.iter().map(|g| g.as_f64()).collect(),
        });
        caches.push(QueryCache {
            selected,
            sims,
            psis,
            gates,
        });
    }

    let global_rows = gv.map(Tensor::rows);
    let mut inputs = vec![q, k, v];
    inputs.extend(lambda);
    inputs.extend(global);
    let value = Tensor::new(vec![n, d], out)?;
    let op = SparseAggregate {
        scale,
        n_ctx: n,
        has_lambda: lambda.is_some(),
        global_rows,
        queries: caches,
    };
    let y = g.custom(&inputs, value, Box::new(op))?;
    Ok((y, trace))
}

impl<F: Scalar> Function<F> for SparseAggregate<F> {
    fn name(&self) -> &'static str {
        "tmoe_aggregate"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad_out: &[F]) -> Vec<Vec<F>> {
        let (q, k, v) = (inputs[0], inputs[1], inputs[2]);
        let d = q.cols();
        let mut idx = 3;
        let lambda = if self.has_lambda {
            idx += 1;
            Some(inputs[idx - 1].data()[0])
        } else {
            None
        };
        let global = self.global_rows.map(|_| inputs[idx]);

        let mut dq = vec![F::zero(); q.len()];
        let mut dk = vec![F::zero(); k.len()];
        let mut dv = vec![F::zero(); v.len()];
        let mut dlam = F::zero();
        let mut dglob = global.map(|gt| vec![F::zero(); gt.len()]);
        let lam_factor = lambda.map(sigmoid).unwrap_or(F::zero());

        for (t, cache) in self.queries.iter().enumerate() {
            let dy = &grad_out[t * d..(t + 1) * d];
            let qt = q.row(t);
            let grow_idx = match self.global_rows {
                Some(1) => Some(0),
                Some(_) => Some(t),
                None => None,
            };

            let mut dgate: Vec<F> = cache.selected.iter().map(|&s| dot(dy, v.row(s))).collect();
            if let (Some(gt), Some(r)) = (global, grow_idx) {
                dgate.push(dot(dy, gt.row(r)));
            }
            let mean: F = cache.gates.iter().zip(&dgate).map(|(&a, &b)| a * b).sum();

            for (j, &s) in cache.selected.iter().enumerate() {
                let gate = cache.gates[j];
                for c in 0..d {
                    dv[s * d + c] += gate * dy[c];
                }
                let dscore = gate * (dgate[j] - mean);
                let dsim = dscore * cache.psis[s];
                for c in 0..d {
                    dq[t * d + c] += dsim * self.scale * k.data()[s * d + c];
                    dk[s * d + c] += dsim * self.scale * qt[c];
                }
                if lambda.is_some() {
                    let dist = F::of(t.abs_diff(s) as f64) / F::of(self.n_ctx as f64);
                    dlam += dscore * cache.sims[s] * cache.psis[s] * (-dist) * lam_factor;
                }
            }
            if let (Some(gt), Some(r), Some(dg)) = (global, grow_idx, dglob.as_mut()) {
                let j = cache.selected.len();
                let gate = cache.gates[j];
                let dscore = gate * (dgate[j] - mean);
                let grow = gt.row(r);
                for c in 0..d {
                    dg[r * d + c] += gate * dy[c] + dscore * self.scale * qt[c];
                    dq[t * d + c] += dscore * self.scale * grow[c];
                }
            }
        }

        let mut grads = vec![dq, dk, dv];
        if self.has_lambda {
            grads.push(vec![dlam]);
        }
        grads.extend(dglob);
        grads
    }
}

struct SoftmaxPool {
    causal: bool,
}

/// Per-column softmax-weighted pooling of a token matrix `[N x D]`.
/// Returns `[1 x D]`, or `[N x D]` whose row `t` pools tokens `0..=t`
/// when `causal`.
pub fn softmax_pool<F: Scalar>(g: &mut Graph<F>, x: Var, causal: bool) -> Result<Var> {
    let xv = g.value(x);
    let n = xv.rows();
    if n == 0 {
        return Err(Error::InvalidShape("pooling over zero tokens".into()));
    }
    let value = if causal {
        let mut data = Vec::with_capacity(xv.len());
        for t in 0..n {
            data.extend(pool_columns(xv, t + 1));
        }
        Tensor::new(vec![n, xv.cols()], data)?
    } else {
        Tensor::new(vec![1, xv.cols()], pool_columns(xv, n))?
    };
    g.custom(&[x], value, Box::new(SoftmaxPool { causal }))
}

impl<F: Scalar> Function<F> for SoftmaxPool {
    fn name(&self) -> &'static str {
        "softmax_pool"
    }

    fn backward(&self, inputs: &[&Tensor<F>], output: &Tensor<F>, grad_out: &[F]) -> Vec<Vec<F>> {
        let x = inputs[0];
        let (n, cols) = (x.rows(), x.cols());
        let mut dx = vec![F::zero(); x.len()];
        for r in 0..output.rows() {
            let rows = if self.causal { r + 1 } else { n };
            for c in 0..cols {
                let gout = grad_out[r * cols + c];
                if gout == F::zero() {
                    continue;
                }
                let pooled = output.at(r, c);
                let max = (0..rows).map(|t| x.at(t, c)).fold(F::neg_infinity(), F::max);
                let total: F = (0..rows).map(|t| (x.at(t, c) - max).exp()).sum();
                for t in 0..rows {
                    let xt = x.at(t, c);
                    let w = (xt - max).exp() / total;
                    // d/dx_t sum_j w_j x_j = w_t (1 + x_t - pooled)
                    dx[t * cols + c] += gout * w * (F::one() + xt - pooled);
                }
            }
        }
        vec![dx]
    }
}
