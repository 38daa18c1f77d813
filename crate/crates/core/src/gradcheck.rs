//! Finite-difference gradient oracle. Every trainable path in the repo is
//! required to agree with central differences to < 1e-4 relative error; this
//! module is the instrument that enforces it.

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// (param name, flat index) of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compare the analytic gradients already accumulated in `store` against
/// central finite differences of `loss_fn`.
///
/// `loss_fn` must be a pure function of the parameter values; it is invoked
/// twice up front and a mismatch is reported as a non-determinism error.
/// `max_coords_per_param` limits the sampled coordinates per parameter
/// (None = all coordinates).
pub fn finite_difference_check(
    store: &mut ParamStore,
    loss_fn: impl Fn(&ParamStore) -> f64,
    eps: f64,
    subset: &[ParamId],
    max_coords_per_param: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    assert!(
        (1e-7..=1e-4).contains(&eps),
        "finite_difference_check: eps {eps} outside [1e-7, 1e-4]"
    );

    let a = loss_fn(store);
    let b = loss_fn(store);
    if a.to_bits() != b.to_bits() {
        return Err(Error::NonDeterministicLoss(a, b));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
    };

    for &id in subset {
        let n = store.value(id).elem_count();
        let coords: Vec<usize> = match max_coords_per_param {
            Some(k) if k < n => {
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(rng);
                all.truncate(k);
                all
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = store.value(id).as_flat()[i];
            store.value_mut(id).as_flat_mut()[i] = orig + eps;
            let lp = loss_fn(store);
            store.value_mut(id).as_flat_mut()[i] = orig - eps;
            let lm = loss_fn(store);
            store.value_mut(id).as_flat_mut()[i] = orig;

            let fd = (lp - lm) / (2.0 * eps);
            let an = store.grad(id).as_flat()[i];
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-6);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name_of(id).to_string(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::Tensor1;
    use std::cell::Cell;

    #[test]
    fn quadratic_loss_checks_to_high_precision() {
        let mut store = ParamStore::new();
        let id = store.add_vec("theta", Tensor1(vec![1.0, 2.0]));
        // L = 0.5 * ||theta||^2, grad = theta.
        store.grad_vec_mut(id).0.copy_from_slice(&[1.0, 2.0]);
        let report = finite_difference_check(
            &mut store,
            |s| 0.5 * s.vec(id).0.iter().map(|v| v * v).sum::<f64>(),
            1e-5,
            &[id],
            None,
            &mut seeded(0),
        )
        .unwrap();
        assert_eq!(report.coords_checked, 2);
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut store = ParamStore::new();
        let id = store.add_vec("theta", Tensor1(vec![0.3]));
        let report =
            finite_difference_check(&mut store, |_| 4.2, 1e-5, &[id], None, &mut seeded(0))
                .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn nondeterministic_loss_is_detected() {
        let mut store = ParamStore::new();
        let id = store.add_vec("theta", Tensor1(vec![0.0]));
        let calls = Cell::new(0u32);
        let err = finite_difference_check(
            &mut store,
            |_| {
                calls.set(calls.get() + 1);
                calls.get() as f64
            },
            1e-5,
            &[id],
            None,
            &mut seeded(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministicLoss(..)));
    }
}
