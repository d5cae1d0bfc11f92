//! Dense kernels behind the tape operations.
//!
//! The matrix products are register-blocked 4x4 so the weight operand is
//! re-read from cache once per four output rows instead of once per row.
//! Everything is deterministic under the `parallel` feature: work is split
//! into fixed-size chunks and any cross-chunk reduction happens in chunk
//! order, so thread scheduling cannot change the floating-point result.

use crate::parallel;

/// Rows of A processed per partial product in [`mm_tn`]. Fixed so the
/// partial-sum order does not depend on thread count.
const TN_CHUNK: usize = 512;

#[inline]
fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// One output row accumulated against the full B panel (tail path).
#[inline]
fn nn_single_row(a_row: &[f64], k: usize, b: &[f64], n: usize, c_row: &mut [f64]) {
    c_row.fill(0.0);
    let mut kk = 0;
    while kk + 4 <= k {
        let (a0, a1, a2, a3) = (a_row[kk], a_row[kk + 1], a_row[kk + 2], a_row[kk + 3]);
        if a0 != 0.0 || a1 != 0.0 || a2 != 0.0 || a3 != 0.0 {
            let b0 = &b[kk * n..(kk + 1) * n];
            let b1 = &b[(kk + 1) * n..(kk + 2) * n];
            let b2 = &b[(kk + 2) * n..(kk + 3) * n];
            let b3 = &b[(kk + 3) * n..(kk + 4) * n];
            for j in 0..n {
                c_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        kk += 4;
    }
    while kk < k {
        if a_row[kk] != 0.0 {
            axpy(c_row, &b[kk * n..(kk + 1) * n], a_row[kk]);
        }
        kk += 1;
    }
}

/// C[m,n] = A[m,k] * B[k,n]. Row-parallel over fixed chunks; within a chunk,
/// 4 output rows x 4 reduction steps per pass.
pub fn mm_nn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    parallel::for_each_chunk_mut(c, parallel::ROW_CHUNK * n, |start, chunk| {
        let row0 = start / n;
        let rows = chunk.len() / n;
        let mut r = 0;
        while r + 4 <= rows {
            let (c01, c23) = chunk[r * n..(r + 4) * n].split_at_mut(2 * n);
            let (c0, c1) = c01.split_at_mut(n);
            let (c2, c3) = c23.split_at_mut(n);
            c0.fill(0.0);
            c1.fill(0.0);
            c2.fill(0.0);
            c3.fill(0.0);
            let ar0 = &a[(row0 + r) * k..(row0 + r + 1) * k];
            let ar1 = &a[(row0 + r + 1) * k..(row0 + r + 2) * k];
            let ar2 = &a[(row0 + r + 2) * k..(row0 + r + 3) * k];
            let ar3 = &a[(row0 + r + 3) * k..(row0 + r + 4) * k];
            let mut kk = 0;
            while kk + 4 <= k {
                let b0 = &b[kk * n..(kk + 1) * n];
                let b1 = &b[(kk + 1) * n..(kk + 2) * n];
                let b2 = &b[(kk + 2) * n..(kk + 3) * n];
                let b3 = &b[(kk + 3) * n..(kk + 4) * n];
                for j in 0..n {
                    let (v0, v1, v2, v3) = (b0[j], b1[j], b2[j], b3[j]);
                    c0[j] += ar0[kk] * v0 + ar0[kk + 1] * v1 + ar0[kk + 2] * v2 + ar0[kk + 3] * v3;
                    c1[j] += ar1[kk] * v0 + ar1[kk + 1] * v1 + ar1[kk + 2] * v2 + ar1[kk + 3] * v3;
                    c2[j] += ar2[kk] * v0 + ar2[kk + 1] * v1 + ar2[kk + 2] * v2 + ar2[kk + 3] * v3;
                    c3[j] += ar3[kk] * v0 + ar3[kk + 1] * v1 + ar3[kk + 2] * v2 + ar3[kk + 3] * v3;
                }
                kk += 4;
            }
            while kk < k {
                let b0 = &b[kk * n..(kk + 1) * n];
                for j in 0..n {
                    let v0 = b0[j];
                    c0[j] += ar0[kk] * v0;
                    c1[j] += ar1[kk] * v0;
                    c2[j] += ar2[kk] * v0;
                    c3[j] += ar3[kk] * v0;
                }
                kk += 1;
            }
            r += 4;
        }
        while r < rows {
            let a_row = &a[(row0 + r) * k..(row0 + r + 1) * k];
            nn_single_row(a_row, k, b, n, &mut chunk[r * n..(r + 1) * n]);
            r += 1;
        }
    });
}

/// C[m,n] = A[m,k] * B[n,k]^T. B (a weight matrix in every call site) is
/// transposed into a scratch buffer so the product runs through the
/// vectorization-friendly [`mm_nn`] path; strict-FP dot products would
/// otherwise stay scalar.
pub fn mm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let mut bt = vec![0.0; k * n];
    for j in 0..n {
        for kk in 0..k {
            bt[kk * n + j] = b[j * k + kk];
        }
    }
    mm_nn(a, m, k, &bt, n, c);
}

/// C[k,n] = A[m,k]^T * B[m,n]. The reduction over m runs as fixed-size chunk
/// partials summed in chunk order; within a chunk, 8 A/B rows per pass so
/// each partial C row is touched once per eight updates.
pub fn mm_tn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    let n_chunks = m.div_ceil(TN_CHUNK).max(1);
    let partials = parallel::map_indexed(n_chunks, |ci| {
        let lo = ci * TN_CHUNK;
        let hi = (lo + TN_CHUNK).min(m);
        let mut part = vec![0.0; k * n];
        let mut i = lo;
        while i + 8 <= hi {
            let brows: [&[f64]; 8] = std::array::from_fn(|r| &b[(i + r) * n..(i + r + 1) * n]);
            for kk in 0..k {
                let av: [f64; 8] = std::array::from_fn(|r| a[(i + r) * k + kk]);
                if av.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let p_row = &mut part[kk * n..(kk + 1) * n];
                for j in 0..n {
                    let s01 = av[0] * brows[0][j] + av[1] * brows[1][j];
                    let s23 = av[2] * brows[2][j] + av[3] * brows[3][j];
                    let s45 = av[4] * brows[4][j] + av[5] * brows[5][j];
                    let s67 = av[6] * brows[6][j] + av[7] * brows[7][j];
                    p_row[j] += (s01 + s23) + (s45 + s67);
                }
            }
            i += 8;
        }
        while i < hi {
            let b_row = &b[i * n..(i + 1) * n];
            for kk in 0..k {
                let w = a[i * k + kk];
                if w != 0.0 {
                    axpy(&mut part[kk * n..(kk + 1) * n], b_row, w);
                }
            }
            i += 1;
        }
        part
    });
    c.fill(0.0);
    for part in partials {
        for (cv, pv) in c.iter_mut().zip(&part) {
            *cv += pv;
        }
    }
}

/// Column sums of a row-major [m,n] matrix, accumulated in row order.
pub fn col_sums(a: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n);
    out.fill(0.0);
    for row in a.chunks_exact(n) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}
