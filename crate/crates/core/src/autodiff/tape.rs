//! The Wengert-list tape: forward ops record nodes, backward walks them once
//! in reverse index order (which is a reverse topological order, since every
//! operation only references earlier nodes).

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::kernels;
use super::{AutodiffError, Tensor};
use crate::sparse::CsrMatrix;

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul {
        a: usize,
        b: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: f64,
    },
    AddBias {
        x: usize,
        bias: usize,
    },
    Relu {
        x: usize,
    },
    Spmm {
        s: Rc<CsrMatrix>,
        x: usize,
    },
    ConcatRows {
        a: usize,
        b: usize,
    },
    /// Fused Chebyshev graph convolution: y = sum_k T_k(L) x W_k + bias with
    /// the recurrence T_0 = I, T_1 = L, T_k = 2 L T_{k-1} - T_{k-2}. The
    /// propagated features Z_k = T_k(L) x are saved for the weight
    /// gradients.
    ChebConv {
        x: usize,
        weights: Vec<usize>,
        bias: usize,
        lap: Rc<CsrMatrix>,
        saved: Vec<Tensor>,
    },
    Mse {
        pred: usize,
        target: Tensor,
        mask: Option<Vec<bool>>,
        count: usize,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`]. Only leaf
/// nodes with `requires_grad` retain gradients.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Constant input; no gradient is tracked or propagated into it.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Learnable input; `backward` populates its gradient.
    pub fn param(&self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    fn push(&self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a.0].value.shape().to_vec(),
                nodes[b.0].value.shape().to_vec(),
            )
        };
        if va.len() != 2 || vb.len() != 2 || va[1] != vb[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: va,
                rhs: vb,
            });
        }
        let (m, k, n) = (va[0], va[1], vb[1]);
        let mut out = Tensor::zeros(vec![m, n]);
        {
            let nodes = self.nodes.borrow();
            kernels::mm_nn(
                nodes[a.0].value.data(),
                m,
                k,
                nodes[b.0].value.data(),
                n,
                out.data_mut(),
            );
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, Op::Matmul { a: a.0, b: b.0 }))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_elementwise(a, b, "add", |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_elementwise(a, b, "sub", |x, y| x - y, Op::Sub { a: a.0, b: b.0 })
    }

    fn zip_elementwise(
        &self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let out = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.shape() != tb.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: name,
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, op))
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x.0].value;
            Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| c * v).collect())
        };
        let rg = self.requires(x);
        self.push(out, rg, Op::Scale { x: x.0, c })
    }

    /// x + bias broadcast across rows; x is [m,n], bias is [n].
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var, AutodiffError> {
        let out = {
            let nodes = self.nodes.borrow();
            let (tx, tb) = (&nodes[x.0].value, &nodes[bias.0].value);
            if tx.shape().len() != 2 || tb.shape() != [tx.shape()[1]] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "add_bias",
                    lhs: tx.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let n = tx.shape()[1];
            let mut data = tx.data().to_vec();
            for row in data.chunks_exact_mut(n) {
                for (v, &bv) in row.iter_mut().zip(tb.data()) {
                    *v += bv;
                }
            }
            Tensor::new(tx.shape().to_vec(), data)
        };
        let rg = self.requires(x) || self.requires(bias);
        Ok(self.push(out, rg, Op::AddBias { x: x.0, bias: bias.0 }))
    }

    /// Elementwise max(x, 0). The subgradient at exactly 0 is 0.
    pub fn relu(&self, x: Var) -> Var {
        let out = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x.0].value;
            Tensor::new(
                t.shape().to_vec(),
                t.data().iter().map(|&v| v.max(0.0)).collect(),
            )
        };
        let rg = self.requires(x);
        self.push(out, rg, Op::Relu { x: x.0 })
    }

    /// Sparse-dense product S x. The sparse matrix is a constant
    /// (non-differentiable) operand.
    pub fn spmm(&self, s: &Rc<CsrMatrix>, x: Var) -> Result<Var, AutodiffError> {
        let out = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x.0].value;
            if t.shape().len() != 2 || s.n_cols() != t.shape()[0] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "spmm",
                    lhs: vec![s.n_rows(), s.n_cols()],
                    rhs: t.shape().to_vec(),
                });
            }
            let cols = t.shape()[1];
            let mut out = Tensor::zeros(vec![s.n_rows(), cols]);
            s.mul_dense(t.data(), cols, out.data_mut());
            out
        };
        let rg = self.requires(x);
        Ok(self.push(out, rg, Op::Spmm { s: Rc::clone(s), x: x.0 }))
    }

    /// Stack two matrices with equal column counts on top of each other.
    pub fn concat_rows(&self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[1] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let mut data = Vec::with_capacity(ta.len() + tb.len());
            data.extend_from_slice(ta.data());
            data.extend_from_slice(tb.data());
            Tensor::new(vec![ta.shape()[0] + tb.shape()[0], ta.shape()[1]], data)
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, Op::ConcatRows { a: a.0, b: b.0 }))
    }

    /// Fused Chebyshev spectral convolution (see [`Op::ChebConv`]). The K
    /// polynomial terms are evaluated with K-1 sparse-dense products; the
    /// dense polynomial matrices T_k(L) are never materialized.
    pub fn cheb_conv(
        &self,
        x: Var,
        lap: &Rc<CsrMatrix>,
        weights: &[Var],
        bias: Var,
    ) -> Result<Var, AutodiffError> {
        let (out, saved) = {
            let nodes = self.nodes.borrow();
            let tx = &nodes[x.0].value;
            if tx.shape().len() != 2 || lap.n_rows() != tx.shape()[0] || lap.n_cols() != tx.shape()[0]
            {
                return Err(AutodiffError::ShapeMismatch {
                    op: "cheb_conv",
                    lhs: vec![lap.n_rows(), lap.n_cols()],
                    rhs: tx.shape().to_vec(),
                });
            }
            let (n, in_dim) = (tx.shape()[0], tx.shape()[1]);
            let first_w = &nodes[weights[0].0].value;
            if first_w.shape().len() != 2 || first_w.shape()[0] != in_dim {
                return Err(AutodiffError::ShapeMismatch {
                    op: "cheb_conv",
                    lhs: tx.shape().to_vec(),
                    rhs: first_w.shape().to_vec(),
                });
            }
            let out_dim = first_w.shape()[1];
            for w in weights {
                let tw = &nodes[w.0].value;
                if tw.shape() != [in_dim, out_dim] {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "cheb_conv",
                        lhs: vec![in_dim, out_dim],
                        rhs: tw.shape().to_vec(),
                    });
                }
            }
            let tb = &nodes[bias.0].value;
            if tb.shape() != [out_dim] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "cheb_conv",
                    lhs: vec![out_dim],
                    rhs: tb.shape().to_vec(),
                });
            }

            // Z_0 = x, Z_1 = L x, Z_k = 2 L Z_{k-1} - Z_{k-2}
            let mut saved: Vec<Tensor> = Vec::with_capacity(weights.len());
            saved.push(tx.clone());
            for k in 1..weights.len() {
                let prev = saved[k - 1].data();
                let mut z = Tensor::zeros(vec![n, in_dim]);
                lap.mul_dense(prev, in_dim, z.data_mut());
                if k >= 2 {
                    let prev2 = saved[k - 2].data();
                    for (zv, &p2) in z.data_mut().iter_mut().zip(prev2) {
                        *zv = 2.0 * *zv - p2;
                    }
                }
                saved.push(z);
            }

            let mut out = Tensor::zeros(vec![n, out_dim]);
            let mut term = vec![0.0; n * out_dim];
            for (k, w) in weights.iter().enumerate() {
                kernels::mm_nn(
                    saved[k].data(),
                    n,
                    in_dim,
                    nodes[w.0].value.data(),
                    out_dim,
                    &mut term,
                );
                for (o, &t) in out.data_mut().iter_mut().zip(&term) {
                    *o += t;
                }
            }
            for row in out.data_mut().chunks_exact_mut(out_dim) {
                for (v, &bv) in row.iter_mut().zip(tb.data()) {
                    *v += bv;
                }
            }
            (out, saved)
        };
        let rg = self.requires(x) || weights.iter().any(|&w| self.requires(w)) || self.requires(bias);
        Ok(self.push(
            out,
            rg,
            Op::ChebConv {
                x: x.0,
                weights: weights.iter().map(|w| w.0).collect(),
                bias: bias.0,
                lap: Rc::clone(lap),
                saved,
            },
        ))
    }

    /// Mean squared error over all unmasked row*column entries. `mask`, when
    /// given, selects rows (nodes) that contribute.
    pub fn mse(
        &self,
        pred: Var,
        target: &Tensor,
        mask: Option<&[bool]>,
    ) -> Result<Var, AutodiffError> {
        let (out, mask_vec, count) = {
            let nodes = self.nodes.borrow();
            let tp = &nodes[pred.0].value;
            if tp.shape() != target.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "mse",
                    lhs: tp.shape().to_vec(),
                    rhs: target.shape().to_vec(),
                });
            }
            let cols = tp.cols();
            let rows = tp.rows();
            if let Some(m) = mask {
                if m.len() != rows {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "mse mask",
                        lhs: vec![rows],
                        rhs: vec![m.len()],
                    });
                }
            }
            let active_rows = mask.map_or(rows, |m| m.iter().filter(|&&b| b).count());
            let count = active_rows * cols;
            let mut acc = 0.0;
            for r in 0..rows {
                if mask.is_some_and(|m| !m[r]) {
                    continue;
                }
                for c in 0..cols {
                    let d = tp.data()[r * cols + c] - target.data()[r * cols + c];
                    acc += d * d;
                }
            }
            let v = if count == 0 { 0.0 } else { acc / count as f64 };
            (Tensor::scalar(v), mask.map(|m| m.to_vec()), count)
        };
        let rg = self.requires(pred);
        Ok(self.push(
            out,
            rg,
            Op::Mse {
                pred: pred.0,
                target: target.clone(),
                mask: mask_vec,
                count,
            },
        ))
    }

    /// Populate gradients of all `requires_grad` leaves reachable from
    /// `loss`. Consumes the tape: a second call without re-running the
    /// forward pass is an error.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.consumed.get() {
            return Err(AutodiffError::TapeConsumed);
        }
        self.consumed.set(true);
        let mut nodes = self.nodes.borrow_mut();
        if !nodes[loss.0].value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(
                nodes[loss.0].value.shape().to_vec(),
            ));
        }

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Matmul { a, b } => {
                    let (a, b) = (*a, *b);
                    let (m, n) = (g.rows(), g.cols());
                    let k = nodes[a].value.cols();
                    if nodes[a].requires_grad {
                        let mut da = Tensor::zeros(vec![m, k]);
                        kernels::mm_nt(g.data(), m, n, nodes[b].value.data(), k, da.data_mut());
                        accumulate(&mut grads, a, da);
                    }
                    if nodes[b].requires_grad {
                        let mut db = Tensor::zeros(vec![k, n]);
                        kernels::mm_tn(nodes[a].value.data(), m, k, g.data(), n, db.data_mut());
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if nodes[a].requires_grad {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if nodes[b].requires_grad {
                        accumulate(&mut grads, b, g.clone());
                    }
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    if nodes[a].requires_grad {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if nodes[b].requires_grad {
                        let neg = Tensor::new(
                            g.shape().to_vec(),
                            g.data().iter().map(|&v| -v).collect(),
                        );
                        accumulate(&mut grads, b, neg);
                    }
                }
                Op::Scale { x, c } => {
                    let (x, c) = (*x, *c);
                    if nodes[x].requires_grad {
                        let dx = Tensor::new(
                            g.shape().to_vec(),
                            g.data().iter().map(|&v| c * v).collect(),
                        );
                        accumulate(&mut grads, x, dx);
                    }
                }
                Op::AddBias { x, bias } => {
                    let (x, bias) = (*x, *bias);
                    if nodes[x].requires_grad {
                        accumulate(&mut grads, x, g.clone());
                    }
                    if nodes[bias].requires_grad {
                        let n = g.cols();
                        let mut db = Tensor::zeros(vec![n]);
                        kernels::col_sums(g.data(), n, db.data_mut());
                        accumulate(&mut grads, bias, db);
                    }
                }
                Op::Relu { x } => {
                    let x = *x;
                    if nodes[x].requires_grad {
                        let out = nodes[i].value.data();
                        let dx = Tensor::new(
                            g.shape().to_vec(),
                            g.data()
                                .iter()
                                .zip(out)
                                .map(|(&gv, &ov)| if ov > 0.0 { gv } else { 0.0 })
                                .collect(),
                        );
                        accumulate(&mut grads, x, dx);
                    }
                }
                Op::Spmm { s, x } => {
                    let x = *x;
                    if nodes[x].requires_grad {
                        let st = s.transpose();
                        let cols = g.cols();
                        let mut dx = Tensor::zeros(vec![st.n_rows(), cols]);
                        st.mul_dense(g.data(), cols, dx.data_mut());
                        accumulate(&mut grads, x, dx);
                    }
                }
                Op::ConcatRows { a, b } => {
                    let (a, b) = (*a, *b);
                    let cols = g.cols();
                    let rows_a = nodes[a].value.rows();
                    if nodes[a].requires_grad {
                        let da = Tensor::matrix(
                            rows_a,
                            cols,
                            g.data()[..rows_a * cols].to_vec(),
                        );
                        accumulate(&mut grads, a, da);
                    }
                    if nodes[b].requires_grad {
                        let rows_b = nodes[b].value.rows();
                        let db = Tensor::matrix(
                            rows_b,
                            cols,
                            g.data()[rows_a * cols..].to_vec(),
                        );
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::ChebConv {
                    x,
                    weights,
                    bias,
                    lap,
                    saved,
                } => {
                    let (x, bias) = (*x, *bias);
                    let weights = weights.clone();
                    let kk = weights.len();
                    let (n, out_dim) = (g.rows(), g.cols());
                    let in_dim = saved[0].cols();

                    for (k, &w) in weights.iter().enumerate() {
                        if nodes[w].requires_grad {
                            let mut dw = Tensor::zeros(vec![in_dim, out_dim]);
                            kernels::mm_tn(
                                saved[k].data(),
                                n,
                                in_dim,
                                g.data(),
                                out_dim,
                                dw.data_mut(),
                            );
                            accumulate(&mut grads, w, dw);
                        }
                    }
                    if nodes[bias].requires_grad {
                        let mut db = Tensor::zeros(vec![out_dim]);
                        kernels::col_sums(g.data(), out_dim, db.data_mut());
                        accumulate(&mut grads, bias, db);
                    }
                    if nodes[x].requires_grad {
                        // Adjoints of the recurrence, travelled backwards:
                        // d_k starts as g W_k^T, then
                        //   d_{k-1} += 2 L^T d_k, d_{k-2} -= d_k (k >= 2)
                        //   d_0 += L^T d_1.
                        let lt = lap.transpose();
                        let mut adj: Vec<Tensor> = (0..kk)
                            .map(|k| {
                                let mut d = Tensor::zeros(vec![n, in_dim]);
                                kernels::mm_nt(
                                    g.data(),
                                    n,
                                    out_dim,
                                    nodes[weights[k]].value.data(),
                                    in_dim,
                                    d.data_mut(),
                                );
                                d
                            })
                            .collect();
                        let mut scratch = vec![0.0; n * in_dim];
                        for k in (2..kk).rev() {
                            lt.mul_dense(adj[k].data(), in_dim, &mut scratch);
                            let (head, tail) = adj.split_at_mut(k);
                            let _ = &tail;
                            for (dv, &sv) in head[k - 1].data_mut().iter_mut().zip(&scratch) {
                                *dv += 2.0 * sv;
                            }
                            let dk = adj[k].clone();
                            for (dv, &gv) in adj[k - 2].data_mut().iter_mut().zip(dk.data()) {
                                *dv -= gv;
                            }
                        }
                        if kk >= 2 {
                            lt.mul_dense(adj[1].data(), in_dim, &mut scratch);
                            for (dv, &sv) in adj[0].data_mut().iter_mut().zip(&scratch) {
                                *dv += sv;
                            }
                        }
                        accumulate(&mut grads, x, adj.swap_remove(0));
                    }
                }
                Op::Mse {
                    pred,
                    target,
                    mask,
                    count,
                } => {
                    let pred = *pred;
                    if nodes[pred].requires_grad && *count > 0 {
                        let upstream = g.scalar_value();
                        let tp = &nodes[pred].value;
                        let cols = tp.cols();
                        let scale = 2.0 * upstream / *count as f64;
                        let mut data = vec![0.0; tp.len()];
                        for r in 0..tp.rows() {
                            if mask.as_ref().is_some_and(|m| !m[r]) {
                                continue;
                            }
                            for c in 0..cols {
                                let idx = r * cols + c;
                                data[idx] = scale * (tp.data()[idx] - target.data()[idx]);
                            }
                        }
                        accumulate(&mut grads, pred, Tensor::new(tp.shape().to_vec(), data));
                    }
                }
            }
            // Intermediate values are dead once their node has been
            // processed; free them to keep the peak footprint low.
            nodes[i].value = Tensor::zeros(vec![0]);
        }

        // Drop gradients of non-leaf nodes; callers only read leaves.
        for (i, node) in nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
    match &mut grads[idx] {
        Some(existing) => {
            for (e, &v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
