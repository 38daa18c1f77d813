//! Eager reverse-mode autodiff over [`Tensor1`] values.
//!
//! Forward values are computed as nodes are pushed, so the same code path
//! serves plain inference (ignore the tape afterwards) and training
//! (call [`Tape::backward`]). Scalars are length-1 vectors. Matrix parameters
//! enter only through `matvec` and `embed_row`; their gradients accumulate
//! directly into the owning [`ParamStore`].

use crate::param::{ParamId, ParamStore};
use crate::tensor::{softmax, Tensor1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    /// Vector parameter leaf.
    Leaf(ParamId),
    /// W·x with W a matrix parameter.
    MatVec { w: ParamId, x: usize },
    /// Row lookup into a matrix parameter (embedding table).
    EmbedRow { table: ParamId, row: usize },
    Add(usize, usize),
    Mul(usize, usize),
    OneMinus(usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    /// -log softmax(logits)[target]; aux caches the softmax for backward.
    PickNll { logits: usize, target: usize },
    /// Bernoulli negative log-likelihood from a scalar logit.
    BceLogit { logit: usize, label: f64 },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor1,
    aux: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor1 {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "scalar() on a vector of len {}", val.len());
        val.0[0]
    }

    fn push(&mut self, op: Op, value: Tensor1, aux: Option<Vec<f64>>) -> Var {
        value.assert_finite("tape node");
        self.nodes.push(Node { op, value, aux });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor1) -> Var {
        self.push(Op::Const, value, None)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.constant(Tensor1::zeros(len))
    }

    pub fn param_vec(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.vec(id).clone();
        self.push(Op::Leaf(id), value, None)
    }

    pub fn matvec(&mut self, store: &ParamStore, w: ParamId, x: Var) -> Var {
        let value = crate::tensor::affine(store.mat(w), self.value(x), None);
        self.push(Op::MatVec { w, x: x.0 }, value, None)
    }

    pub fn embed_row(&mut self, store: &ParamStore, table: ParamId, row: usize) -> Var {
        let m = store.mat(table);
        assert!(
            row < m.rows(),
            "embed_row: row {row} out of range for {}x{} table",
            m.rows(),
            m.cols()
        );
        let value = Tensor1(m.row(row).to_vec());
        self.push(Op::EmbedRow { table, row }, value, None)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.len(),
            vb.len(),
            "add: length mismatch {} vs {}",
            va.len(),
            vb.len()
        );
        let value = Tensor1(va.0.iter().zip(&vb.0).map(|(x, y)| x + y).collect());
        self.push(Op::Add(a.0, b.0), value, None)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.len(),
            vb.len(),
            "mul: length mismatch {} vs {}",
            va.len(),
            vb.len()
        );
        let value = Tensor1(va.0.iter().zip(&vb.0).map(|(x, y)| x * y).collect());
        self.push(Op::Mul(a.0, b.0), value, None)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = Tensor1(self.value(a).0.iter().map(|x| 1.0 - x).collect());
        self.push(Op::OneMinus(a.0), value, None)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = Tensor1(self.value(a).0.iter().map(|x| c * x).collect());
        self.push(Op::Scale(a.0, c), value, None)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = crate::tensor::tanh_vec(self.value(a));
        self.push(Op::Tanh(a.0), value, None)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = crate::tensor::sigmoid_vec(self.value(a));
        self.push(Op::Sigmoid(a.0), value, None)
    }

    /// Negative log-likelihood of `target` under softmax(logits).
    pub fn pick_nll(&mut self, logits: Var, target: usize) -> Var {
        let probs = softmax(self.value(logits));
        assert!(
            target < probs.len(),
            "pick_nll: target {target} out of range for {} logits",
            probs.len()
        );
        let nll = -probs.0[target].max(f64::MIN_POSITIVE).ln();
        self.push(
            Op::PickNll {
                logits: logits.0,
                target,
            },
            Tensor1(vec![nll]),
            Some(probs.0),
        )
    }

    /// Stable Bernoulli negative log-likelihood, label in {0, 1}.
    pub fn bce_logit(&mut self, logit: Var, label: f64) -> Var {
        debug_assert!(label == 0.0 || label == 1.0, "bce label must be binary");
        let z = self.scalar(logit);
        let loss = z.max(0.0) - z * label + (-z.abs()).exp().ln_1p();
        self.push(
            Op::BceLogit {
                logit: logit.0,
                label,
            },
            Tensor1(vec![loss]),
            None,
        )
    }

    /// Accumulate d(loss)/d(param) into the store's gradient buffers.
    /// `loss` must be a scalar node.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) {
        assert_eq!(self.value(loss).len(), 1, "backward: loss must be scalar");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Leaf(id) => {
                    let grad = store.grad_vec_mut(*id);
                    for (gv, gi) in grad.0.iter_mut().zip(&g) {
                        *gv += gi;
                    }
                }
                Op::MatVec { w, x } => {
                    // dL/dx = W^T g
                    let dx: Vec<f64> = {
                        let wm = store.mat(*w);
                        let mut dx = vec![0.0; wm.cols()];
                        for (r, gr) in g.iter().enumerate() {
                            for (c, wv) in wm.row(r).iter().enumerate() {
                                dx[c] += wv * gr;
                            }
                        }
                        dx
                    };
                    accumulate(&mut adj[*x], &dx);
                    // dL/dW = g x^T
                    let xv = &self.nodes[*x].value;
                    let grad = store.grad_mat_mut(*w);
                    for (r, gr) in g.iter().enumerate() {
                        for (c, xc) in xv.0.iter().enumerate() {
                            grad.row_mut(r)[c] += gr * xc;
                        }
                    }
                }
                Op::EmbedRow { table, row } => {
                    let grad = store.grad_mat_mut(*table);
                    for (gv, gi) in grad.row_mut(*row).iter_mut().zip(&g) {
                        *gv += gi;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[*a], &g);
                    accumulate(&mut adj[*b], &g);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = self.nodes[*b]
                        .value
                        .0
                        .iter()
                        .zip(&g)
                        .map(|(bv, gv)| bv * gv)
                        .collect();
                    let db: Vec<f64> = self.nodes[*a]
                        .value
                        .0
                        .iter()
                        .zip(&g)
                        .map(|(av, gv)| av * gv)
                        .collect();
                    accumulate(&mut adj[*a], &da);
                    accumulate(&mut adj[*b], &db);
                }
                Op::OneMinus(a) => {
                    let da: Vec<f64> = g.iter().map(|gv| -gv).collect();
                    accumulate(&mut adj[*a], &da);
                }
                Op::Scale(a, c) => {
                    let da: Vec<f64> = g.iter().map(|gv| c * gv).collect();
                    accumulate(&mut adj[*a], &da);
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> = self.nodes[i]
                        .value
                        .0
                        .iter()
                        .zip(&g)
                        .map(|(y, gv)| (1.0 - y * y) * gv)
                        .collect();
                    accumulate(&mut adj[*a], &da);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> = self.nodes[i]
                        .value
                        .0
                        .iter()
                        .zip(&g)
                        .map(|(y, gv)| y * (1.0 - y) * gv)
                        .collect();
                    accumulate(&mut adj[*a], &da);
                }
                Op::PickNll { logits, target } => {
                    // d(nll)/d(logit_v) = softmax_v - [v == target]
                    let probs = self.nodes[i].aux.as_ref().expect("softmax cache");
                    let gs = g[0];
                    let mut dl: Vec<f64> = probs.iter().map(|p| p * gs).collect();
                    dl[*target] -= gs;
                    accumulate(&mut adj[*logits], &dl);
                }
                Op::BceLogit { logit, label } => {
                    let z = self.nodes[*logit].value.0[0];
                    let dz = (crate::tensor::sigmoid(z) - label) * g[0];
                    accumulate(&mut adj[*logit], &[dz]);
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}
