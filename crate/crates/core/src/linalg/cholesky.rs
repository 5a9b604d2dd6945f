//! Up-looking sparse Cholesky with a minimum-degree fill-reducing ordering.
//!
//! The factor is `P A Pᵀ = L Lᵀ`, `L` stored column-compressed with the
//! diagonal first in each column.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::sparse::SparseMatrix;

const NONE: usize = usize::MAX;

/// Minimum-degree elimination order of the symmetric pattern of `a`.
/// Ties break on the lower index so the order is deterministic.
pub fn minimum_degree_order(a: &SparseMatrix) -> Vec<usize> {
    let n = a.rows();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        let (cols, _) = a.row(i);
        for &j in cols {
            if j != i {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = core::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            adj[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    adj[u].insert(w);
                }
            }
        }
        for &u in &nbrs {
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    order
}

#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[k]` = original index eliminated at step k.
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Upper triangle of `P A Pᵀ` in compressed-column form.
struct UpperCsc {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn permuted_upper(a: &SparseMatrix, inv_perm: &[usize]) -> UpperCsc {
    let n = a.rows();
    let mut counts = vec![0usize; n + 1];
    let mut entries = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let (pi, pj) = (inv_perm[i], inv_perm[j]);
            if pi <= pj {
                entries.push((pj, pi, v));
                counts[pj + 1] += 1;
            }
        }
    }
    for k in 0..n {
        counts[k + 1] += counts[k];
    }
    let mut next = counts.clone();
    let mut row_idx = vec![0; entries.len()];
    let mut values = vec![0.0; entries.len()];
    for (col, row, v) in entries {
        let p = next[col];
        row_idx[p] = row;
        values[p] = v;
        next[col] += 1;
    }
    UpperCsc {
        col_ptr: counts,
        row_idx,
        values,
    }
}

fn elimination_tree(c: &UpperCsc, n: usize) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in c.col_ptr[k]..c.col_ptr[k + 1] {
            let mut i = c.row_idx[p];
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row `k` of `L` (excluding the diagonal), written to
/// `stack[top..]`; returns `top`.
fn ereach(
    c: &UpperCsc,
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for p in c.col_ptr[k]..c.col_ptr[k + 1] {
        let mut i = c.row_idx[p];
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

impl SparseCholesky {
    /// Factors a symmetric matrix given with both triangles stored. Returns
    /// `None` when a pivot drops to `pivot_tol * max|a_ii|` or below.
    pub fn factor(a: &SparseMatrix, pivot_tol: f64) -> Option<Self> {
        let perm = minimum_degree_order(a);
        Self::factor_with_order(a, perm, pivot_tol)
    }

    pub fn factor_with_order(a: &SparseMatrix, perm: Vec<usize>, pivot_tol: f64) -> Option<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "cholesky needs a square matrix");
        assert_eq!(perm.len(), n);
        let mut inv_perm = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            inv_perm[i] = k;
        }
        let c = permuted_upper(a, &inv_perm);
        let parent = elimination_tree(&c, n);

        // Column counts from the row patterns.
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(&c, k, &parent, &mut stack, &mut mark);
            for &i in &stack[top..n] {
                counts[i] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = col_ptr.clone();

        let mut max_diag = 0.0f64;
        for i in 0..n {
            max_diag = max_diag.max(libm::fabs(a.get(i, i)));
        }
        let floor = pivot_tol * max_diag;

        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = NONE);
        for k in 0..n {
            let top = ereach(&c, k, &parent, &mut stack, &mut mark);
            x[k] = 0.0;
            for p in c.col_ptr[k]..c.col_ptr[k + 1] {
                let i = c.row_idx[p];
                if i <= k {
                    x[i] += c.values[p];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..fill[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = fill[i];
                fill[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > floor) {
                return None;
            }
            let p = fill[k];
            fill[k] += 1;
            row_idx[p] = k;
            values[p] = libm::sqrt(d);
        }
        Some(Self {
            n,
            perm,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in `L`.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        self.lower_solve(&mut y);
        self.upper_solve(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    /// `bᵀ A⁻¹ b`, via `‖L⁻¹ P b‖²`.
    pub fn inverse_quadratic_form(&self, b: &[f64]) -> f64 {
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        self.lower_solve(&mut y);
        y.iter().map(|v| v * v).sum()
    }

    fn lower_solve(&self, y: &mut [f64]) {
        for j in 0..self.n {
            let start = self.col_ptr[j];
            y[j] /= self.values[start];
            let yj = y[j];
            if yj == 0.0 {
                continue;
            }
            for p in start + 1..self.col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
    }

    fn upper_solve(&self, y: &mut [f64]) {
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut s = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = s / self.values[start];
        }
    }
}
