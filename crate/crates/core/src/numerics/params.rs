use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Rng, Scalar, Tensor};

/// Named parameters with co-located gradient buffers. Keys are
/// dot-separated paths (`layers.0.attn.head1.w_q`); iteration order is
/// lexicographic and defines the on-disk order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F: Scalar = f32> {
    values: BTreeMap<String, Tensor<F>>,
    grads: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            values: BTreeMap::new(),
            grads: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) {
        let name = name.into();
        self.grads
            .insert(name.clone(), Tensor::zeros(value.shape()));
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<F>> {
        self.values
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<F>> {
        self.values
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor<F>> {
        self.grads
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_elements(&self) -> usize {
        self.values.values().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &[F]) -> Result<()> {
        let buf = self
            .grads
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if buf.len() != grad.len() {
            return Err(Error::InvalidShape(format!(
                "gradient for `{name}` has {} elements, expected {}",
                grad.len(),
                buf.len()
            )));
        }
        for (b, &g) in buf.data_mut().iter_mut().zip(grad) {
            *b += g;
        }
        Ok(())
    }

    pub fn scale_grads(&mut self, factor: F) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Mutable access to a value together with its gradient.
    pub fn pairs_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<F>, &Tensor<F>)> {
        self.values
            .iter_mut()
            .zip(self.grads.values())
            .map(|((k, v), g)| (k.as_str(), v, g))
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            values: self.values.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            grads: self.grads.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.values().all(Tensor::is_finite)
    }

    /// Inserts an `[fan_in x fan_out]` weight drawn from
    /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) and, if `bias`, a zero bias.
    pub fn init_linear(
        &mut self,
        rng: &mut Rng,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.init_uniform(rng, &format!("{prefix}.w"), &[fan_in, fan_out], bound);
        if bias {
            self.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
        }
    }

    pub fn init_uniform(&mut self, rng: &mut Rng, name: &str, shape: &[usize], bound: f64) {
        let n = shape.iter().product();
        let data = (0..n).map(|_| F::of(rng.uniform_in(-bound, bound))).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).expect("shape matches"));
    }
}
