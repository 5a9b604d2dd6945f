//! Compressed sparse row storage for measurement matrices and their Gram
//! products.

use alloc::vec;
use alloc::vec::Vec;

use super::dense::DenseMatrix;

/// Real sparse matrix in CSR layout with sorted, duplicate-free columns per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros produced by cancellation are kept.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from one `(columns, values)` list per row.
    pub fn from_rows(cols: usize, rows: &[(Vec<usize>, Vec<f64>)]) -> Self {
        let mut triplets = Vec::new();
        for (i, (c, v)) in rows.iter().enumerate() {
            for (&cj, &vj) in c.iter().zip(v) {
                triplets.push((i, cj, vj));
            }
        }
        Self::from_triplets(rows.len(), cols, triplets)
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(p) => v[p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension");
        (0..self.rows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `selfᵀ · y`.
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "tmul_vec dimension");
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                out[j] += a * yi;
            }
        }
        out
    }

    /// Gram matrix `selfᵀ · self` (symmetric, both triangles stored).
    pub fn gram(&self) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&a, &va) in c.iter().zip(v) {
                for (&b, &vb) in c.iter().zip(v) {
                    t.push((a, b, va * vb));
                }
            }
        }
        // Keep every column on the diagonal so factorizations see the full
        // index set even for columns no row touches.
        for j in 0..self.cols {
            t.push((j, j, 0.0));
        }
        SparseMatrix::from_triplets(self.cols, self.cols, t)
    }

    /// Adds `d[j]` to each diagonal entry; the diagonal must be stored.
    pub fn add_diagonal(&mut self, d: &[f64]) {
        assert_eq!(self.rows, self.cols);
        assert_eq!(d.len(), self.rows);
        for (i, &di) in d.iter().enumerate() {
            if di == 0.0 {
                continue;
            }
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let p = self.col_idx[r.clone()]
                .binary_search(&i)
                .expect("diagonal entry must be stored");
            self.values[r.start + p] += di;
        }
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in rows {
            let (c, v) = self.row(i);
            col_idx.extend_from_slice(c);
            values.extend_from_slice(v);
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            rows: rows.len(),
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Re-indexes columns through `map`; entries in unmapped columns are dropped.
    pub fn remap_columns(&self, map: &[Option<usize>], new_cols: usize) -> SparseMatrix {
        assert_eq!(map.len(), self.cols);
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if let Some(nj) = map[j] {
                    t.push((i, nj, a));
                }
            }
        }
        SparseMatrix::from_triplets(self.rows, new_cols, t)
    }

    /// Multiplies row `i` by `scale[i]`.
    pub fn scale_rows(&mut self, scale: &[f64]) {
        assert_eq!(scale.len(), self.rows);
        for (i, &s) in scale.iter().enumerate() {
            for v in &mut self.values[self.row_ptr[i]..self.row_ptr[i + 1]] {
                *v *= s;
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                m[(i, j)] += a;
            }
        }
        m
    }

    /// Maximum absolute difference to another matrix of equal shape.
    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let a = self.to_dense();
        let b = other.to_dense();
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max(libm::fabs(a[(i, j)] - b[(i, j)]));
            }
        }
        worst
    }
}
