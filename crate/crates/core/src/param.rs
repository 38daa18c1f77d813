//! Named trainable parameters with same-shape gradient accumulators.

use crate::tensor::{Tensor1, Tensor2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Range of the uniform weight initializer.
pub const INIT_RANGE: f64 = 0.08;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub enum Value {
    Vec(Tensor1),
    Mat(Tensor2),
}

impl Value {
    pub fn elem_count(&self) -> usize {
        match self {
            Value::Vec(v) => v.len(),
            Value::Mat(m) => m.rows() * m.cols(),
        }
    }

    pub fn as_flat(&self) -> &[f64] {
        match self {
            Value::Vec(v) => v.as_slice(),
            Value::Mat(m) => m.as_slice(),
        }
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Vec(v) => v.as_mut_slice(),
            Value::Mat(m) => m.as_mut_slice(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Value,
    pub grad: Value,
}

/// Flat, index-addressed parameter storage. Iteration order is the insertion
/// order, which the model builders keep fixed, so everything downstream
/// (Adam, checkpoints, gradient checks) is deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn add_vec(&mut self, name: &str, value: Tensor1) -> ParamId {
        let grad = Value::Vec(Tensor1::zeros(value.len()));
        self.push(name, Value::Vec(value), grad)
    }

    pub fn add_mat(&mut self, name: &str, value: Tensor2) -> ParamId {
        let grad = Value::Mat(Tensor2::zeros(value.rows(), value.cols()));
        self.push(name, Value::Mat(value), grad)
    }

    /// Bias vector initialized to zero.
    pub fn add_zero_vec(&mut self, name: &str, len: usize) -> ParamId {
        self.add_vec(name, Tensor1::zeros(len))
    }

    /// Weight matrix initialized uniformly in (-INIT_RANGE, INIT_RANGE).
    pub fn add_uniform_mat(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let mut m = Tensor2::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = rng.gen_range(-INIT_RANGE..INIT_RANGE);
        }
        self.add_mat(name, m)
    }

    fn push(&mut self, name: &str, value: Value, grad: Value) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.to_string(), id);
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad,
        });
        id
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn vec(&self, id: ParamId) -> &Tensor1 {
        match &self.params[id.0].value {
            Value::Vec(v) => v,
            Value::Mat(m) => panic!(
                "parameter {} is a {}x{} matrix, not a vector",
                self.params[id.0].name,
                m.rows(),
                m.cols()
            ),
        }
    }

    pub fn mat(&self, id: ParamId) -> &Tensor2 {
        match &self.params[id.0].value {
            Value::Mat(m) => m,
            Value::Vec(v) => panic!(
                "parameter {} is a vector of len {}, not a matrix",
                self.params[id.0].name,
                v.len()
            ),
        }
    }

    pub fn value(&self, id: ParamId) -> &Value {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Value {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Value {
        &self.params[id.0].grad
    }

    pub fn grad_vec_mut(&mut self, id: ParamId) -> &mut Tensor1 {
        let p = &mut self.params[id.0];
        match &mut p.grad {
            Value::Vec(v) => v,
            Value::Mat(_) => panic!("gradient of {} is not a vector", p.name),
        }
    }

    pub fn grad_mat_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        let p = &mut self.params[id.0];
        match &mut p.grad {
            Value::Mat(m) => m,
            Value::Vec(_) => panic!("gradient of {} is not a matrix", p.name),
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.as_flat_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Ids whose gradient has at least one entry with |g| > `tol`.
    pub fn nonzero_grad_ids(&self, tol: f64) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.grad.as_flat().iter().any(|g| g.abs() > tol))
            .map(|(id, _)| id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn grads_match_value_shapes_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let w = store.add_uniform_mat("w", 3, 2, &mut rng);
        let b = store.add_zero_vec("b", 3);
        assert_eq!(store.grad(w).elem_count(), 6);
        assert_eq!(store.grad(b).elem_count(), 3);

        store.grad_mat_mut(w).set(1, 1, 4.0);
        store.grad_vec_mut(b).as_mut_slice()[0] = -1.0;
        store.zero_grads();
        assert!(store.grad(w).as_flat().iter().all(|v| *v == 0.0));
        assert!(store.grad(b).as_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn init_is_seeded_and_in_range() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let mut ra = ChaCha8Rng::seed_from_u64(42);
        let mut rb = ChaCha8Rng::seed_from_u64(42);
        let ia = a.add_uniform_mat("w", 4, 4, &mut ra);
        let ib = b.add_uniform_mat("w", 4, 4, &mut rb);
        assert_eq!(a.mat(ia).as_slice(), b.mat(ib).as_slice());
        assert!(a
            .mat(ia)
            .as_slice()
            .iter()
            .all(|v| v.abs() < INIT_RANGE));
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add_zero_vec("b", 1);
        store.add_zero_vec("b", 1);
    }
}
