//! Linear algebra for the normal equations `(HᵀH + Λ) x = b`.

pub mod cholesky;
pub mod dense;
pub mod sparse;

use alloc::vec::Vec;

pub use cholesky::SparseCholesky;
pub use dense::{DenseCholesky, DenseMatrix, PseudoInverse};
pub use sparse::SparseMatrix;

/// Relative pivot floor below which a Cholesky factorization is declared
/// rank deficient.
pub const PIVOT_TOL: f64 = 1e-11;

/// Relative eigenvalue cut for the minimum-norm fallback.
pub const EIGEN_TOL: f64 = 1e-10;

/// Systems up to this size are factored densely.
const DENSE_LIMIT: usize = 96;

#[derive(Debug, Clone)]
enum Factor {
    Dense(DenseCholesky),
    Sparse(SparseCholesky),
    MinNorm(PseudoInverse),
}

/// Cached factorization of a symmetric positive semi-definite matrix.
///
/// Positive-definite inputs get a Cholesky factor (dense for small systems,
/// sparse with a minimum-degree ordering otherwise). Singular inputs fall
/// back to an eigen-decomposition whose solves return the minimum-norm
/// solution; [`NormalSolver::is_rank_deficient`] reports which path was taken.
#[derive(Debug, Clone)]
pub struct NormalSolver {
    factor: Factor,
    dim: usize,
}

impl NormalSolver {
    pub fn new(a: &SparseMatrix) -> Self {
        let n = a.rows();
        let chol = if n <= DENSE_LIMIT {
            DenseCholesky::factor(&a.to_dense(), PIVOT_TOL).map(Factor::Dense)
        } else {
            SparseCholesky::factor(a, PIVOT_TOL).map(Factor::Sparse)
        };
        let factor =
            chol.unwrap_or_else(|| Factor::MinNorm(PseudoInverse::new(&a.to_dense(), EIGEN_TOL)));
        Self { factor, dim: n }
    }

    /// Factors `HᵀH + diag(extra)`.
    pub fn normal_equations(h: &SparseMatrix, extra_diagonal: Option<&[f64]>) -> Self {
        let mut g = h.gram();
        if let Some(d) = extra_diagonal {
            g.add_diagonal(d);
        }
        Self::new(&g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_rank_deficient(&self) -> bool {
        matches!(self.factor, Factor::MinNorm(_))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.factor {
            Factor::Dense(c) => {
                let mut x = b.to_vec();
                c.solve_in_place(&mut x);
                x
            }
            Factor::Sparse(c) => c.solve(b),
            Factor::MinNorm(p) => p.solve(b),
        }
    }

    /// `bᵀ A⁺ b`.
    pub fn inverse_quadratic_form(&self, b: &[f64]) -> f64 {
        match &self.factor {
            Factor::Dense(c) => {
                let mut y = b.to_vec();
                c.forward(&mut y);
                y.iter().map(|v| v * v).sum()
            }
            Factor::Sparse(c) => c.inverse_quadratic_form(b),
            Factor::MinNorm(p) => p.solve(b).iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| libm::fabs(x - y))
        .fold(0.0, f64::max)
}
