//! Gradient correctness: every tape operation against central finite
//! differences on randomized shapes, and the sparse-product backward rule
//! against a dense oracle.

mod common;

use std::rc::Rc;

use fieldop::autodiff::{Tape, Tensor, Var};
use fieldop::CsrMatrix;

fn lcg(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (*state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn rand_vec(len: usize, state: &mut u64) -> Vec<f64> {
    (0..len).map(|_| lcg(state)).collect()
}

fn rand_csr(rows: usize, cols: usize, state: &mut u64) -> CsrMatrix {
    let mut triplets = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if lcg(state) > 0.2 {
                continue;
            }
            triplets.push((r, c, lcg(state)));
        }
    }
    CsrMatrix::from_triplets(rows, cols, &triplets)
}

/// Check d(scalar loss)/d(param) against finite differences, where the loss
/// is built by `graph` from a parameter tensor of the given shape.
fn check_param_gradient<F>(shape: Vec<usize>, data: Vec<f64>, graph: F) -> f64
where
    F: Fn(&Tape, Var) -> Var,
{
    let tape = Tape::new();
    let p = tape.param(Tensor::new(shape.clone(), data.clone()));
    let loss = graph(&tape, p);
    let mut grads = tape.backward(loss).unwrap();
    let g = grads.take(p).unwrap();

    common::finite_diff_max_rel_err(&data, g.data(), |x| {
        let tape = Tape::new();
        let p = tape.param(Tensor::new(shape.clone(), x.to_vec()));
        let loss = graph(&tape, p);
        tape.value(loss).scalar_value()
    })
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut state = 7u64;
    for case in 0..20 {
        let (m, k, n) = (1 + case % 4, 1 + (case / 2) % 5, 1 + (case / 3) % 4);
        let b_const = Tensor::matrix(k, n, rand_vec(k * n, &mut state));
        let target = Tensor::matrix(m, n, rand_vec(m * n, &mut state));
        let a_data = rand_vec(m * k, &mut state);
        let b2 = b_const.clone();
        let t2 = target.clone();
        let err = check_param_gradient(vec![m, k], a_data, move |tape, p| {
            let b = tape.leaf(b2.clone());
            let y = tape.matmul(p, b).unwrap();
            tape.mse(y, &t2, None).unwrap()
        });
        assert!(err < 1e-5, "case {case}: dA error {err:.2e}");

        // Gradient w.r.t. the right operand.
        let a_const = Tensor::matrix(m, k, rand_vec(m * k, &mut state));
        let b_data = rand_vec(k * n, &mut state);
        let t3 = target.clone();
        let err = check_param_gradient(vec![k, n], b_data, move |tape, p| {
            let a = tape.leaf(a_const.clone());
            let y = tape.matmul(a, p).unwrap();
            tape.mse(y, &t3, None).unwrap()
        });
        assert!(err < 1e-5, "case {case}: dB error {err:.2e}");
    }
}

#[test]
fn elementwise_op_gradients_match_finite_differences() {
    let mut state = 99u64;
    for case in 0..20 {
        let (m, n) = (1 + case % 5, 1 + (case / 2) % 6);
        let other = Tensor::matrix(m, n, rand_vec(m * n, &mut state));
        let target = Tensor::matrix(m, n, rand_vec(m * n, &mut state));
        let data = rand_vec(m * n, &mut state);

        for op in ["add", "sub", "scale", "relu", "concat"] {
            let o = other.clone();
            let t = target.clone();
            let err = check_param_gradient(vec![m, n], data.clone(), move |tape, p| {
                let q = tape.leaf(o.clone());
                let y = match op {
                    "add" => tape.add(p, q).unwrap(),
                    "sub" => tape.sub(p, q).unwrap(),
                    "scale" => tape.scale(p, -1.7),
                    "relu" => tape.relu(p),
                    "concat" => {
                        let both = tape.concat_rows(p, q).unwrap();
                        // Keep the loss scalar by comparing to a stacked target.
                        let stacked = Tensor::matrix(
                            2 * t.rows(),
                            t.cols(),
                            t.data().iter().chain(t.data()).copied().collect(),
                        );
                        return tape.mse(both, &stacked, None).unwrap();
                    }
                    _ => unreachable!(),
                };
                tape.mse(y, &t, None).unwrap()
            });
            assert!(err < 1e-5, "case {case} op {op}: error {err:.2e}");
        }

        // Bias broadcast.
        let x_const = Tensor::matrix(m, n, rand_vec(m * n, &mut state));
        let t = target.clone();
        let err = check_param_gradient(vec![n], rand_vec(n, &mut state), move |tape, p| {
            let x = tape.leaf(x_const.clone());
            let y = tape.add_bias(x, p).unwrap();
            tape.mse(y, &t, None).unwrap()
        });
        assert!(err < 1e-5, "case {case} add_bias: error {err:.2e}");
    }
}

#[test]
fn mse_mask_gradient_matches_finite_differences() {
    let mut state = 11u64;
    let (m, n) = (6, 3);
    let target = Tensor::matrix(m, n, rand_vec(m * n, &mut state));
    let mask: Vec<bool> = (0..m).map(|i| i % 2 == 0).collect();
    let t = target.clone();
    let mk = mask.clone();
    let err = check_param_gradient(vec![m, n], rand_vec(m * n, &mut state), move |tape, p| {
        tape.mse(p, &t, Some(&mk)).unwrap()
    });
    assert!(err < 1e-5, "masked mse error {err:.2e}");

    // Masked rows receive exactly zero gradient.
    let tape = Tape::new();
    let p = tape.param(Tensor::matrix(m, n, rand_vec(m * n, &mut state)));
    let loss = tape.mse(p, &target, Some(&mask)).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    let g = grads.take(p).unwrap();
    for r in 0..m {
        if !mask[r] {
            assert!(g.data()[r * n..(r + 1) * n].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn spmm_gradient_is_transpose_times_upstream() {
    let mut state = 5u64;
    for case in 0..10 {
        let rows = 3 + case % 7;
        let cols = 2 + case % 5;
        let feat = 1 + case % 4;
        let s = Rc::new(rand_csr(rows, cols, &mut state));
        let target = Tensor::matrix(rows, feat, rand_vec(rows * feat, &mut state));
        let x_data = rand_vec(cols * feat, &mut state);

        // Finite differences.
        let s2 = Rc::clone(&s);
        let t2 = target.clone();
        let err = check_param_gradient(vec![cols, feat], x_data.clone(), move |tape, p| {
            let y = tape.spmm(&s2, p).unwrap();
            tape.mse(y, &t2, None).unwrap()
        });
        assert!(err < 1e-5, "case {case}: spmm fd error {err:.2e}");

        // Dense oracle: dX = S^T dY with dY = 2 (S X - T) / count.
        let tape = Tape::new();
        let x = tape.param(Tensor::matrix(cols, feat, x_data.clone()));
        let y = tape.spmm(&s, x).unwrap();
        let y_val = tape.value(y);
        let loss = tape.mse(y, &target, None).unwrap();
        let mut grads = tape.backward(loss).unwrap();
        let gx = grads.take(x).unwrap();

        let count = (rows * feat) as f64;
        let dy: Vec<f64> = y_val
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| 2.0 * (p - t) / count)
            .collect();
        let st_dense = s.transpose().to_dense();
        let expected = common::dense_matmul(&st_dense, cols, rows, &dy, feat);
        for (a, b) in gx.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn cheb_conv_gradients_match_finite_differences() {
    let mut state = 31u64;
    let n = 6;
    let in_dim = 3;
    let out_dim = 2;
    let kk = 4;
    // Symmetric Laplacian-like sparse matrix.
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if lcg(&mut state) < -0.1 {
                let w = lcg(&mut state);
                triplets.push((i, j, w));
                triplets.push((j, i, w));
            }
        }
    }
    let lap = Rc::new(CsrMatrix::from_triplets(n, n, &triplets));
    let target = Tensor::matrix(n, out_dim, rand_vec(n * out_dim, &mut state));
    let w_data: Vec<Vec<f64>> = (0..kk).map(|_| rand_vec(in_dim * out_dim, &mut state)).collect();
    let bias_data = rand_vec(out_dim, &mut state);
    let x_data = rand_vec(n * in_dim, &mut state);

    // d/dX
    {
        let (lap, target, w_data, bias_data) =
            (Rc::clone(&lap), target.clone(), w_data.clone(), bias_data.clone());
        let err = check_param_gradient(vec![n, in_dim], x_data.clone(), move |tape, p| {
            let ws: Vec<Var> = w_data
                .iter()
                .map(|w| tape.leaf(Tensor::matrix(in_dim, out_dim, w.clone())))
                .collect();
            let b = tape.leaf(Tensor::vector(bias_data.clone()));
            let y = tape.cheb_conv(p, &lap, &ws, b).unwrap();
            tape.mse(y, &target, None).unwrap()
        });
        assert!(err < 1e-5, "cheb dX error {err:.2e}");
    }
    // d/dW_k for every k
    for k_check in 0..kk {
        let (lap, target, w_data, bias_data, x_data) = (
            Rc::clone(&lap),
            target.clone(),
            w_data.clone(),
            bias_data.clone(),
            x_data.clone(),
        );
        let err = check_param_gradient(
            vec![in_dim, out_dim],
            w_data[k_check].clone(),
            move |tape, p| {
                let x = tape.leaf(Tensor::matrix(n, in_dim, x_data.clone()));
                let ws: Vec<Var> = (0..kk)
                    .map(|k| {
                        if k == k_check {
                            p
                        } else {
                            tape.leaf(Tensor::matrix(in_dim, out_dim, w_data[k].clone()))
                        }
                    })
                    .collect();
                let b = tape.leaf(Tensor::vector(bias_data.clone()));
                let y = tape.cheb_conv(x, &lap, &ws, b).unwrap();
                tape.mse(y, &target, None).unwrap()
            },
        );
        assert!(err < 1e-5, "cheb dW_{k_check} error {err:.2e}");
    }
    // d/dBias
    {
        let x_data = x_data.clone();
        let err = check_param_gradient(vec![out_dim], bias_data.clone(), move |tape, p| {
            let x = tape.leaf(Tensor::matrix(n, in_dim, x_data.clone()));
            let ws: Vec<Var> = w_data
                .iter()
                .map(|w| tape.leaf(Tensor::matrix(in_dim, out_dim, w.clone())))
                .collect();
            let y = tape.cheb_conv(x, &lap, &ws, p).unwrap();
            tape.mse(y, &target, None).unwrap()
        });
        assert!(err < 1e-5, "cheb dBias error {err:.2e}");
    }
}
