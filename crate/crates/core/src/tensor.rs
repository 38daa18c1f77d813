//! Dense double-precision vectors and matrices plus the elementwise
//! nonlinearities and the softmax used throughout the models.
//!
//! Shapes are fixed at construction. Shape mismatches are bugs, so the ops
//! panic with both shapes in the message rather than returning errors.

use serde::{Deserialize, Serialize};

/// Owned 1-d tensor (column vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor1(pub Vec<f64>);

/// Owned 2-d tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor1 {
    pub fn zeros(len: usize) -> Self {
        Tensor1(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn fill(&mut self, v: f64) {
        self.0.iter_mut().for_each(|x| *x = v);
    }

    pub fn assert_finite(&self, what: &str) {
        debug_assert!(
            self.0.iter().all(|v| v.is_finite()),
            "{what}: non-finite entry in vector of len {}",
            self.len()
        );
    }
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows_data: &[&[f64]]) -> Self {
        let rows = rows_data.len();
        let cols = rows_data.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows * cols);
        for r in rows_data {
            assert_eq!(r.len(), cols, "from_rows: ragged row lengths");
            data.extend_from_slice(r);
        }
        Tensor2 { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        assert!(
            i < self.rows,
            "row index {i} out of range for {}x{} matrix",
            self.rows,
            self.cols
        );
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        assert!(
            i < self.rows,
            "row index {i} out of range for {}x{} matrix",
            self.rows,
            self.cols
        );
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)[j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.row_mut(i)[j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// W·x (+ b). Panics on shape mismatch, quoting both shapes.
pub fn affine(w: &Tensor2, x: &Tensor1, b: Option<&Tensor1>) -> Tensor1 {
    assert_eq!(
        w.cols,
        x.len(),
        "affine: shape mismatch, W is {}x{} but x has len {}",
        w.rows,
        w.cols,
        x.len()
    );
    if let Some(b) = b {
        assert_eq!(
            b.len(),
            w.rows,
            "affine: shape mismatch, W is {}x{} but b has len {}",
            w.rows,
            w.cols,
            b.len()
        );
    }
    let mut out = Vec::with_capacity(w.rows);
    for i in 0..w.rows {
        let mut acc = 0.0;
        for (wv, xv) in w.row(i).iter().zip(x.as_slice()) {
            acc += wv * xv;
        }
        if let Some(b) = b {
            acc += b.0[i];
        }
        out.push(acc);
    }
    let out = Tensor1(out);
    out.assert_finite("affine");
    out
}

pub fn tanh_vec(x: &Tensor1) -> Tensor1 {
    Tensor1(x.0.iter().map(|v| v.tanh()).collect())
}

pub fn sigmoid_vec(x: &Tensor1) -> Tensor1 {
    Tensor1(x.0.iter().map(|v| sigmoid(*v)).collect())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stabilized softmax: subtracts the max logit, so the result is
/// invariant to adding a constant to every logit and the entries sum to 1.
pub fn softmax(logits: &Tensor1) -> Tensor1 {
    assert!(!logits.is_empty(), "softmax: empty logit vector");
    let max = logits.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = logits.0.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter_mut().for_each(|v| *v /= sum);
    let out = Tensor1(exps);
    out.assert_finite("softmax");
    out
}

/// log softmax(logits)[target], stabilized the same way as `softmax`.
pub fn log_softmax_at(logits: &Tensor1, target: usize) -> f64 {
    assert!(
        target < logits.len(),
        "log_softmax_at: target {target} out of range for {} logits",
        logits.len()
    );
    let max = logits.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.0.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    (logits.0[target] - max) - log_sum
}
