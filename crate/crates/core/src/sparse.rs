//! Compressed sparse row matrices.
//!
//! Used for FEM stiffness operators and the scaled graph Laplacians consumed
//! by the spectral convolutions. Construction goes through sorted triplets so
//! that duplicate entries are accumulated in a deterministic order.

use serde::{Deserialize, Serialize};

use crate::parallel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets. Duplicates are summed in their
    /// original insertion order (stable sort), which keeps assembly bitwise
    /// reproducible.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (r, c, v) = triplets[t];
            assert!(r < n_rows && c < n_cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_offsets[r + 1] += 1;
                col_indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Diagonal entries (zero where the diagonal is not stored).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows.min(self.n_cols)];
        for r in 0..d.len() {
            let (cols, vals) = self.row(r);
            if let Ok(k) = cols.binary_search(&r) {
                d[r] = vals[k];
            }
        }
        d
    }

    /// y = A x (sequential; the solver paths that call this need a fixed
    /// accumulation order).
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    /// Y = A X for row-major dense X with `x_cols` columns. Rows of Y are
    /// independent, so this is chunk-parallel with identical results to the
    /// sequential path.
    pub fn mul_dense(&self, x: &[f64], x_cols: usize, out: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols * x_cols);
        assert_eq!(out.len(), self.n_rows * x_cols);
        let offsets = &self.row_offsets;
        let cols = &self.col_indices;
        let vals = &self.values;
        parallel::for_each_chunk_mut(out, parallel::ROW_CHUNK * x_cols, |start, chunk| {
            let row0 = start / x_cols;
            for (ri, y_row) in chunk.chunks_mut(x_cols).enumerate() {
                let r = row0 + ri;
                y_row.fill(0.0);
                for k in offsets[r]..offsets[r + 1] {
                    let w = vals[k];
                    let x_row = &x[cols[k] * x_cols..(cols[k] + 1) * x_cols];
                    for (y, &xv) in y_row.iter_mut().zip(x_row) {
                        *y += w * xv;
                    }
                }
            }
        });
    }

    /// Transpose with deterministic (counting-sort) entry order.
    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut row_offsets = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut cursor = counts;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = cursor[c];
                cursor[c] += 1;
                col_indices[dst] = r;
                values[dst] = v;
            }
        }
        row_offsets.truncate(self.n_cols + 1);
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Block-diagonal concatenation; blocks keep their internal entry order.
    pub fn block_diag(blocks: &[&CsrMatrix]) -> CsrMatrix {
        let n_rows: usize = blocks.iter().map(|b| b.n_rows).sum();
        let n_cols: usize = blocks.iter().map(|b| b.n_cols).sum();
        let nnz: usize = blocks.iter().map(|b| b.nnz()).sum();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        let mut col_base = 0;
        for b in blocks {
            let nnz_base = values.len();
            for r in 0..b.n_rows {
                row_offsets.push(nnz_base + b.row_offsets[r + 1]);
            }
            col_indices.extend(b.col_indices.iter().map(|&c| c + col_base));
            values.extend_from_slice(&b.values);
            col_base += b.n_cols;
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d[r * self.n_cols + c] = v;
            }
        }
        d
    }

    /// Structural invariants from the type contract; used by debug assertions
    /// and tests.
    pub fn check_invariants(&self) -> bool {
        if self.row_offsets.len() != self.n_rows + 1 || self.row_offsets[0] != 0 {
            return false;
        }
        if *self.row_offsets.last().unwrap() != self.values.len() {
            return false;
        }
        for r in 0..self.n_rows {
            if self.row_offsets[r] > self.row_offsets[r + 1] {
                return false;
            }
            let (cols, _) = self.row(r);
            if !cols.windows(2).all(|w| w[0] < w[1]) {
                return false;
            }
            if cols.iter().any(|&c| c >= self.n_cols) {
                return false;
            }
        }
        true
    }
}
