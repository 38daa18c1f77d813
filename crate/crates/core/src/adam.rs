//! Adam optimizer with bias correction, applied to explicit parameter
//! subsets so personal blocks only ever move on their own user's data.

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter moment estimates. Each parameter keeps its own step counter
/// so bias correction stays exact for blocks that are updated intermittently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamSlot {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub slots: Vec<AdamSlot>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let slots = store
            .iter()
            .map(|(_, p)| AdamSlot {
                m: vec![0.0; p.value.elem_count()],
                v: vec![0.0; p.value.elem_count()],
                t: 0,
            })
            .collect();
        AdamState { config, slots }
    }
}

/// One bias-corrected Adam step over `subset`, consuming the gradients
/// currently held in the store. Gradients are left untouched; the caller
/// zeroes them.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, subset: &[ParamId]) -> Result<()> {
    if state.slots.len() != store.len() {
        return Err(Error::OptimizerStateMismatch {
            expected: state.slots.len(),
            actual: store.len(),
        });
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    for &id in subset {
        let slot = &mut state.slots[id.0];
        slot.t += 1;
        let bc1 = 1.0 - beta1.powi(slot.t as i32);
        let bc2 = 1.0 - beta2.powi(slot.t as i32);
        // Split borrow: the gradient is read through a raw copy of the slice
        // made before the value borrow, which the layout makes safe because
        // value and grad are distinct fields.
        let grad: Vec<f64> = store.grad(id).as_flat().to_vec();
        let value = store.value_mut(id).as_flat_mut();
        for i in 0..value.len() {
            let g = grad[i];
            slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
            slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
            let m_hat = slot.m[i] / bc1;
            let v_hat = slot.v[i] / bc2;
            value[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor1;

    fn one_param_store(values: &[f64]) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add_vec("theta", Tensor1(values.to_vec()));
        (store, id)
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let (mut store, id) = one_param_store(&[10.0, -3.0]);
        let mut state = AdamState::new(AdamConfig::default(), &store);
        store.grad_vec_mut(id).0.copy_from_slice(&[2.5, -0.8]);
        adam_step(&mut store, &mut state, &[id]).unwrap();
        // Bias-corrected first step reduces to lr * g / (|g| + eps').
        let v = store.vec(id);
        assert!((v.0[0] - (10.0 - 1e-3)).abs() < 1e-9);
        assert!((v.0[1] - (-3.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_grad_fresh_state_is_identity() {
        let (mut store, id) = one_param_store(&[0.4, -1.1, 7.0]);
        let before = store.vec(id).clone();
        let mut state = AdamState::new(AdamConfig::default(), &store);
        adam_step(&mut store, &mut state, &[id]).unwrap();
        assert_eq!(store.vec(id).0, before.0);
    }

    #[test]
    fn two_identical_steps_move_monotonically() {
        // Hand-unrolled two-step Adam with constant gradient g: both steps
        // move by exactly lr * g/(|g| + scaled eps) in the -sign(g) direction.
        let (mut store, id) = one_param_store(&[1.0]);
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(cfg, &store);
        let g = 0.37;

        store.grad_vec_mut(id).0[0] = g;
        adam_step(&mut store, &mut state, &[id]).unwrap();
        let after_one = store.vec(id).0[0];
        adam_step(&mut store, &mut state, &[id]).unwrap();
        let after_two = store.vec(id).0[0];

        assert!(after_one < 1.0);
        assert!(after_two < after_one);

        let step = |t: i32| {
            let m_hat = g; // constant gradient: m = g after bias correction
            let v_hat = g * g;
            let _ = t;
            cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon)
        };
        assert!((1.0 - after_one - step(1)).abs() < 1e-12);
        assert!((after_one - after_two - step(2)).abs() < 1e-12);
    }

    #[test]
    fn subset_update_leaves_other_params_alone() {
        let mut store = ParamStore::new();
        let a = store.add_vec("a", Tensor1(vec![1.0]));
        let b = store.add_vec("b", Tensor1(vec![1.0]));
        let mut state = AdamState::new(AdamConfig::default(), &store);
        store.grad_vec_mut(a).0[0] = 1.0;
        store.grad_vec_mut(b).0[0] = 1.0;
        adam_step(&mut store, &mut state, &[a]).unwrap();
        assert!(store.vec(a).0[0] < 1.0);
        assert_eq!(store.vec(b).0[0], 1.0);
        assert_eq!(state.slots[b.0].t, 0);
    }

    #[test]
    fn mismatched_state_is_an_error() {
        let (mut store, id) = one_param_store(&[1.0]);
        let mut state = AdamState::new(AdamConfig::default(), &store);
        store.add_vec("extra", Tensor1(vec![0.0]));
        assert!(adam_step(&mut store, &mut state, &[id]).is_err());
    }
}
