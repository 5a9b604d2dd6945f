//! Small dense kernels: row-major matrices, Cholesky, and a Jacobi
//! eigensolver used for minimum-norm least squares on singular systems.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "dense matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| libm::fabs(self[(i, i)]))
            .fold(0.0, f64::max)
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    lower: Vec<f64>,
}

impl DenseCholesky {
    /// Factors `a`; returns `None` when a pivot falls below
    /// `pivot_tol * max|a_ii|`.
    pub fn factor(a: &DenseMatrix, pivot_tol: f64) -> Option<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "cholesky needs a square matrix");
        let floor = pivot_tol * a.max_abs_diagonal();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return None;
            }
            let djj = libm::sqrt(d);
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * b[k];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * b[k];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }
}

/// Eigen-decomposition `A = V diag(λ) Vᵀ` of a symmetric matrix by cyclic
/// Jacobi rotations. Columns of `vectors` are the eigenvectors.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn new(a: &DenseMatrix) -> Self {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut m = a.clone();
        let mut v = DenseMatrix::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0;
            let mut diag = 0.0;
            for i in 0..n {
                diag += m[(i, i)] * m[(i, i)];
                for j in i + 1..n {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
            if off <= 1e-30 * diag || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                    let t = libm::copysign(1.0, theta)
                        / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let values = (0..n).map(|i| m[(i, i)]).collect();
        Self { values, vectors: v }
    }
}

/// Moore–Penrose inverse of a symmetric positive semi-definite matrix,
/// applied through its eigen-decomposition.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    eigen: SymmetricEigen,
    inv_values: Vec<f64>,
    rank: usize,
}

impl PseudoInverse {
    /// Eigenvalues at or below `rel_tol * λ_max` are treated as zero.
    pub fn new(a: &DenseMatrix, rel_tol: f64) -> Self {
        let eigen = SymmetricEigen::new(a);
        let top = eigen.values.iter().copied().fold(0.0, f64::max);
        let cut = rel_tol * top;
        let inv_values: Vec<f64> = eigen
            .values
            .iter()
            .map(|&l| if l > cut { 1.0 / l } else { 0.0 })
            .collect();
        let rank = inv_values.iter().filter(|&&w| w != 0.0).count();
        Self {
            eigen,
            inv_values,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let v = &self.eigen.vectors;
        let mut out = vec![0.0; n];
        for j in 0..n {
            let w = self.inv_values[j];
            if w == 0.0 {
                continue;
            }
            let proj: f64 = (0..n).map(|i| v[(i, j)] * b[i]).sum::<f64>() * w;
            for i in 0..n {
                out[i] += v[(i, j)] * proj;
            }
        }
        out
    }
}
