//! Shared test oracles, independent of the library's solver paths: dense
//! LU, dense matrix products, a Jacobi eigensolver, dense Chebyshev
//! polynomial materialization, and central finite differences.

#![allow(dead_code)]

use fieldop::CsrMatrix;

/// Dense LU solve with partial pivoting.
pub fn lu_solve(a_dense: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    assert_eq!(a_dense.len(), n * n);
    assert_eq!(b.len(), n);
    let mut a = a_dense.to_vec();
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
            perm.swap(col, pivot);
        }
        let d = a[col * n + col];
        assert!(d.abs() > 1e-14, "singular matrix in LU oracle");
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= a[col * n + col];
        for row in 0..col {
            x[row] -= a[row * n + col] * x[col];
        }
    }
    x
}

pub fn dense_matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for kk in 0..k {
            let av = a[i * k + kk];
            for j in 0..n {
                c[i * n + j] += av * b[kk * n + j];
            }
        }
    }
    c
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a_dense: &[f64], n: usize) -> Vec<f64> {
    let mut a = a_dense.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Dense evaluation of sum_k T_k(L) X W_k + bias, materializing the
/// Chebyshev polynomial matrices T_k(L).
pub fn dense_cheb_conv(
    lap: &CsrMatrix,
    x: &[f64],
    n: usize,
    in_dim: usize,
    weights: &[Vec<f64>],
    out_dim: usize,
    bias: &[f64],
) -> Vec<f64> {
    let l = lap.to_dense();
    let eye: Vec<f64> = {
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 1.0;
        }
        e
    };
    let mut t_prev = eye;
    let mut t_cur = l.clone();
    let mut out = vec![0.0; n * out_dim];
    for (k, w) in weights.iter().enumerate() {
        let t_k = match k {
            0 => &t_prev,
            1 => &t_cur,
            _ => {
                let two_l_t = dense_matmul(&l, n, n, &t_cur, n);
                let next: Vec<f64> = two_l_t
                    .iter()
                    .zip(&t_prev)
                    .map(|(&a, &b)| 2.0 * a - b)
                    .collect();
                t_prev = std::mem::replace(&mut t_cur, next);
                let _ = &t_prev;
                &t_cur
            }
        };
        let tx = dense_matmul(t_k, n, n, x, in_dim);
        let txw = dense_matmul(&tx, n, in_dim, w, out_dim);
        for (o, v) in out.iter_mut().zip(&txw) {
            *o += v;
        }
    }
    for row in out.chunks_exact_mut(out_dim) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    out
}

/// Relative error between an analytic gradient and central finite
/// differences of `f` at `x`, maximized over all coordinates.
pub fn finite_diff_max_rel_err<F>(x: &[f64], grad: &[f64], mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + eps;
        let fp = f(&xp);
        xp[i] = x[i] - eps;
        let fm = f(&xp);
        xp[i] = x[i];
        let numeric = (fp - fm) / (2.0 * eps);
        let denom = numeric.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max((numeric - grad[i]).abs() / denom);
    }
    worst
}
