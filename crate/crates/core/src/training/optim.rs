use std::collections::BTreeMap;

use crate::numerics::{ParamStore, Scalar};

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam<F: Scalar = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<F>>,
    v: BTreeMap<String, Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<F>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let one = F::one();
        let c1 = F::of(1.0 - self.beta1.powi(t));
        let c2 = F::of(1.0 - self.beta2.powi(t));
        let (lr, eps) = (F::of(self.lr), F::of(self.eps));
        for (name, value, grad) in store.pairs_mut() {
            let n = value.len();
            let m = self.m.entry(name.to_string()).or_insert_with(|| vec![F::zero(); n]);
            let v = self.v.entry(name.to_string()).or_insert_with(|| vec![F::zero(); n]);
            for (((p, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
