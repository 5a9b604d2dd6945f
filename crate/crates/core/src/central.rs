//! Centralized estimators on whitened data: least squares, residual tests,
//! largest-normalized-residual removal, Huber, genie-aided LS, and an
//! exhaustive ℓ0 search for tiny instances.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::EstimationError;
use crate::linalg::{dot, NormalSolver, SparseMatrix};

/// Rows with `P(i,i)` at or below this are critical.
pub const CRITICAL_TOL: f64 = 1e-8;

/// Upper bound on subset solves in [`l0_identify`].
pub const L0_BUDGET: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub x: Vec<f64>,
    /// Minimum-norm solution of a singular normal matrix.
    pub rank_deficient: bool,
}

pub fn solve_wls(h: &SparseMatrix, z: &[f64]) -> WlsSolution {
    let solver = NormalSolver::normal_equations(h, None);
    WlsSolution { x: solver.solve(&h.tmul_vec(z)), rank_deficient: solver.is_rank_deficient() }
}

fn residual(h: &SparseMatrix, z: &[f64], x: &[f64]) -> Vec<f64> {
    h.mul_vec(x).iter().zip(z).map(|(hx, z)| z - hx).collect()
}

fn dense_row(h: &SparseMatrix, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; h.cols()];
    let (c, a) = h.row(i);
    for (&j, &x) in c.iter().zip(a) {
        v[j] = x;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualAnalysis {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub p_diag: Vec<f64>,
    /// `|r(i)| / sqrt(P(i,i))`, zero on critical rows.
    pub normalized: Vec<f64>,
    pub critical: Vec<bool>,
    pub max_normalized: f64,
    /// `None` when every row is critical.
    pub argmax: Option<usize>,
}

impl ResidualAnalysis {
    pub fn residual_norm_sq(&self) -> f64 {
        dot(&self.residual, &self.residual)
    }
}

pub fn residual_analysis(h: &SparseMatrix, z: &[f64]) -> Result<ResidualAnalysis, EstimationError> {
    if z.len() != h.rows() {
        return Err(EstimationError::Dimension { expected: h.rows(), got: z.len() });
    }
    let solver = NormalSolver::normal_equations(h, None);
    if solver.is_rank_deficient() {
        return Err(EstimationError::Unobservable);
    }
    let x = solver.solve(&h.tmul_vec(z));
    let r = residual(h, z, &x);
    let mut p_diag = Vec::with_capacity(h.rows());
    let mut normalized = Vec::with_capacity(h.rows());
    let mut critical = Vec::with_capacity(h.rows());
    let mut best: Option<(usize, f64)> = None;
    for i in 0..h.rows() {
        let p = 1.0 - solver.inverse_quadratic_form(&dense_row(h, i));
        let crit = p <= CRITICAL_TOL;
        let nr = if crit { 0.0 } else { libm::fabs(r[i]) / libm::sqrt(p) };
        if !crit && best.is_none_or(|(_, b)| nr > b) {
            best = Some((i, nr));
        }
        p_diag.push(p);
        normalized.push(nr);
        critical.push(crit);
    }
    Ok(ResidualAnalysis {
        x,
        residual: r,
        p_diag,
        normalized,
        critical,
        max_normalized: best.map_or(0.0, |b| b.1),
        argmax: best.map(|b| b.0),
    })
}

/// Standard normal quantile: rational initial guess refined by one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < LOW {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - LOW {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
    x
}

/// χ² quantile with `dof` degrees of freedom (Wilson–Hilferty).
pub fn chi2_quantile(p: f64, dof: usize) -> f64 {
    let k = dof as f64;
    let a = 2.0 / (9.0 * k);
    let c = 1.0 - a + normal_quantile(p) * libm::sqrt(a);
    k * c * c * c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chi2Verdict {
    Clean,
    Suspect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Outcome {
    pub statistic: f64,
    pub threshold: f64,
    pub verdict: Chi2Verdict,
}

pub fn chi2_test(
    analysis: &ResidualAnalysis,
    m: usize,
    n: usize,
    confidence: f64,
) -> Result<Chi2Outcome, EstimationError> {
    if m <= n {
        return Err(EstimationError::DegreesOfFreedom { m, n });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EstimationError::Confidence(confidence));
    }
    let statistic = analysis.residual_norm_sq();
    let threshold = chi2_quantile(confidence, m - n);
    let verdict = if statistic > threshold { Chi2Verdict::Suspect } else { Chi2Verdict::Clean };
    Ok(Chi2Outcome { statistic, threshold, verdict })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustEstimate {
    pub x: Vec<f64>,
    /// Estimated bad-data vector over all rows.
    pub o: Vec<f64>,
    pub iterations: usize,
    /// Rows with nonzero `o`, ascending.
    pub identified: Vec<usize>,
    /// Set when the run ended on a rank-deficient system.
    pub rank_deficient: bool,
}

fn support(o: &[f64]) -> Vec<usize> {
    (0..o.len()).filter(|&i| o[i] != 0.0).collect()
}

/// Repeated LNR test, dropping the single worst row per pass.
pub fn lnrt_estimate(h: &SparseMatrix, z: &[f64], threshold: f64) -> Result<RobustEstimate, EstimationError> {
    let mut active: Vec<usize> = (0..h.rows()).collect();
    let mut removed = Vec::new();
    let mut analysis = residual_analysis(h, z)?;
    let mut passes = 1;
    let mut rank_deficient = false;
    while analysis.max_normalized > threshold {
        let Some(worst) = analysis.argmax else { break };
        let mut next = active.clone();
        next.remove(worst);
        let sub = h.select_rows(&next);
        let zs: Vec<f64> = next.iter().map(|&i| z[i]).collect();
        match residual_analysis(&sub, &zs) {
            Ok(a) => {
                removed.push(active[worst]);
                active = next;
                analysis = a;
                passes += 1;
            }
            Err(EstimationError::Unobservable) => {
                rank_deficient = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let x = analysis.x;
    let mut o = vec![0.0; h.rows()];
    let r = residual(h, z, &x);
    for &i in &removed {
        o[i] = r[i];
    }
    removed.sort_unstable();
    Ok(RobustEstimate { x, o, iterations: passes, identified: removed, rank_deficient })
}

/// Entry-wise shrinkage toward zero; ties at `|x| = λ` map to zero.
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Huber regression by alternating `x ← (HᵀH)⁻¹Hᵀ(z − o)` and
/// `o ← soft(z − Hx, λ)` from `o = 0` until consecutive `x` differ by less
/// than `tol`. The support and signs of `o` are then used for an exact
/// solve of the piecewise-quadratic optimum, accepted only when it is
/// self-consistent.
pub fn huber_estimate(
    h: &SparseMatrix,
    z: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RobustEstimate, EstimationError> {
    if z.len() != h.rows() {
        return Err(EstimationError::Dimension { expected: h.rows(), got: z.len() });
    }
    let solver = NormalSolver::normal_equations(h, None);
    let mut o = vec![0.0; h.rows()];
    let mut x_prev: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut x = Vec::new();
    while iterations < max_iter {
        let zc: Vec<f64> = z.iter().zip(&o).map(|(a, b)| a - b).collect();
        x = solver.solve(&h.tmul_vec(&zc));
        iterations += 1;
        let r = residual(h, z, &x);
        for (oi, ri) in o.iter_mut().zip(&r) {
            *oi = soft_threshold(*ri, lambda);
        }
        if let Some(prev) = &x_prev {
            if crate::linalg::distance(prev, &x) < tol {
                break;
            }
        }
        x_prev = Some(x.clone());
    }
    if !solver.is_rank_deficient() {
        let (xa, oa) = accelerate(h, z, lambda, &solver, o);
        match refine(h, z, lambda, &xa) {
            Some((xp, op)) => {
                x = xp;
                o = op;
            }
            None => {
                x = xa;
                o = oa;
            }
        }
    }
    Ok(RobustEstimate {
        identified: support(&o),
        x,
        o,
        iterations,
        rank_deficient: solver.is_rank_deficient(),
    })
}

/// Step-size floor and iteration cap of the accelerated finish.
pub const FINISH_TOL: f64 = 1e-13;
pub const FINISH_MAX_ITER: usize = 100_000;

/// The alternation is a unit-step proximal gradient on `o`; this runs its
/// accelerated form (with adaptive restart) to tight tolerance.
fn accelerate(
    h: &SparseMatrix,
    z: &[f64],
    lambda: f64,
    solver: &NormalSolver,
    mut o: Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let x_of = |o: &[f64]| {
        let zc: Vec<f64> = z.iter().zip(o).map(|(a, b)| a - b).collect();
        solver.solve(&h.tmul_vec(&zc))
    };
    let mut x = x_of(&o);
    let mut prev = o.clone();
    let mut t = 1.0_f64;
    for _ in 0..FINISH_MAX_ITER {
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        let beta = (t - 1.0) / t_next;
        let y: Vec<f64> = o.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let xy = x_of(&y);
        let r = residual(h, z, &xy);
        let next: Vec<f64> = r.iter().map(|&ri| soft_threshold(ri, lambda)).collect();
        let uphill: f64 = y.iter().zip(&next).zip(&o).map(|((yi, ni), oi)| (yi - ni) * (ni - oi)).sum();
        t = if uphill > 0.0 { 1.0 } else { t_next };
        prev = core::mem::replace(&mut o, next);
        let x_new = x_of(&o);
        let step = crate::linalg::distance(&x, &x_new);
        x = x_new;
        if step < FINISH_TOL * (1.0 + crate::linalg::norm2(&x)) {
            break;
        }
    }
    let r = residual(h, z, &x);
    let o = r.iter().map(|&ri| soft_threshold(ri, lambda)).collect();
    (x, o)
}

/// Rounds of support re-estimation tried after the alternations.
pub const REFINE_ROUNDS: usize = 50;

/// Active-set finish: guess the outlier support and signs from the
/// residuals at `x`, solve exactly, and accept once the guess reproduces
/// itself. Non-final steps are damped by backtracking on the Huber loss.
fn refine(h: &SparseMatrix, z: &[f64], lambda: f64, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut x = x.to_vec();
    let mut loss = huber_loss(&residual(h, z, &x), lambda);
    for _ in 0..REFINE_ROUNDS {
        let signs = support_signs(&residual(h, z, &x), lambda);
        let target = solve_on_support(h, z, lambda, &signs)?;
        let r = residual(h, z, &target);
        if support_signs(&r, lambda) == signs {
            let o = r.iter().map(|&ri| soft_threshold(ri, lambda)).collect();
            return Some((target, o));
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a + t * (b - a)).collect();
            let trial_loss = huber_loss(&residual(h, z, &trial), lambda);
            if trial_loss < loss {
                x = trial;
                loss = trial_loss;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return None;
            }
        }
    }
    None
}

fn huber_loss(r: &[f64], lambda: f64) -> f64 {
    r.iter()
        .map(|&ri| {
            let a = libm::fabs(ri);
            if a <= lambda { 0.5 * a * a } else { lambda * a - 0.5 * lambda * lambda }
        })
        .sum()
}

fn support_signs(r: &[f64], lambda: f64) -> Vec<i8> {
    r.iter().map(|&ri| if ri > lambda { 1 } else if ri < -lambda { -1 } else { 0 }).collect()
}

/// Exact Huber optimum for support `S` with signs `s`:
/// `H_cᵀH_c x = H_cᵀz_c + λ H_Sᵀ s` over the complement rows `c`.
fn solve_on_support(h: &SparseMatrix, z: &[f64], lambda: f64, signs: &[i8]) -> Option<Vec<f64>> {
    let inliers: Vec<usize> = (0..signs.len()).filter(|&i| signs[i] == 0).collect();
    let hc = h.select_rows(&inliers);
    let solver = NormalSolver::normal_equations(&hc, None);
    if solver.is_rank_deficient() {
        return None;
    }
    let signed: Vec<f64> = signs.iter().map(|&s| lambda * f64::from(s)).collect();
    let mut rhs = h.tmul_vec(&signed);
    let zc: Vec<f64> = inliers.iter().map(|&i| z[i]).collect();
    for (a, b) in rhs.iter_mut().zip(hc.tmul_vec(&zc)) {
        *a += b;
    }
    Some(solver.solve(&rhs))
}

/// Least squares on the rows not flagged in `bad_mask`.
pub fn genie_lse(h: &SparseMatrix, z: &[f64], bad_mask: &[bool]) -> Result<Vec<f64>, EstimationError> {
    if bad_mask.len() != h.rows() {
        return Err(EstimationError::Dimension { expected: h.rows(), got: bad_mask.len() });
    }
    let keep: Vec<usize> = (0..h.rows()).filter(|&i| !bad_mask[i]).collect();
    let zs: Vec<f64> = keep.iter().map(|&i| z[i]).collect();
    let sol = solve_wls(&h.select_rows(&keep), &zs);
    if sol.rank_deficient {
        return Err(EstimationError::Unobservable);
    }
    Ok(sol.x)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Row subset of size at most `tau0` whose removal minimizes the remaining
/// least-squares cost. Ties keep the first subset in enumeration order.
pub fn l0_identify(h: &SparseMatrix, z: &[f64], tau0: usize) -> Result<Vec<usize>, EstimationError> {
    let (m, n) = (h.rows(), h.cols());
    if tau0 > 2 {
        return Err(EstimationError::Tau0TooLarge(tau0));
    }
    if m < n + tau0 {
        return Err(EstimationError::TooFewRows { m, n, tau0 });
    }
    let needed = (0..=tau0).map(|k| binomial(m, k)).fold(0usize, usize::saturating_add);
    if needed > L0_BUDGET {
        return Err(EstimationError::CombinatorialBudget { needed, budget: L0_BUDGET });
    }
    let cost = |drop: &[usize]| {
        let keep: Vec<usize> = (0..m).filter(|i| !drop.contains(i)).collect();
        let zs: Vec<f64> = keep.iter().map(|&i| z[i]).collect();
        let hs = h.select_rows(&keep);
        let sol = solve_wls(&hs, &zs);
        let r = residual(&hs, &zs, &sol.x);
        0.5 * dot(&r, &r)
    };
    let mut best = (cost(&[]), Vec::new());
    let mut consider = |drop: Vec<usize>| {
        let c = cost(&drop);
        if c < best.0 {
            best = (c, drop);
        }
    };
    if tau0 >= 1 {
        for i in 0..m {
            consider(vec![i]);
        }
    }
    if tau0 >= 2 {
        for i in 0..m {
            for j in i + 1..m {
                consider(vec![i, j]);
            }
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn matrix(rows: usize, cols: usize, seed: u64) -> SparseMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let data = (0..rows * cols).map(|_| next()).collect();
        SparseMatrix::from_dense(&DenseMatrix::from_row_major(rows, cols, data))
    }

    #[test]
    fn identity_wls_returns_z() {
        let h = SparseMatrix::from_dense(&DenseMatrix::identity(3));
        let sol = solve_wls(&h, &[1.0, -2.0, 0.5]);
        assert_eq!(sol.x, vec![1.0, -2.0, 0.5]);
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn square_system_has_only_critical_rows() {
        let h = matrix(4, 4, 3);
        let a = residual_analysis(&h, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(a.critical.iter().all(|&c| c));
        assert_eq!(a.argmax, None);
    }

    #[test]
    fn consistent_data_has_zero_residual() {
        let h = matrix(8, 3, 9);
        let z = h.mul_vec(&[0.3, -1.0, 2.0]);
        let a = residual_analysis(&h, &z).unwrap();
        assert!(a.max_normalized < 1e-10);
        let chi = chi2_test(&a, 8, 3, 0.99).unwrap();
        assert_eq!(chi.verdict, Chi2Verdict::Clean);
        assert_eq!(chi2_test(&a, 3, 3, 0.99).unwrap_err(), EstimationError::DegreesOfFreedom { m: 3, n: 3 });
    }

    #[test]
    fn quantiles_match_tables() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.01) + 2.326347874040841).abs() < 1e-12);
        // Exact value is 23.209; the cube-root approximation gives 23.239.
        assert!((chi2_quantile(0.99, 10) - 23.2394).abs() < 1e-3);
    }

    #[test]
    fn soft_threshold_branches() {
        assert_eq!(soft_threshold(0.5, 1.34), 0.0);
        assert!((soft_threshold(2.0, 1.34) - 0.66).abs() < 1e-15);
        assert!((soft_threshold(-3.0, 1.34) + 1.66).abs() < 1e-15);
        assert_eq!(soft_threshold(1.34, 1.34), 0.0);
    }

    #[test]
    fn huber_with_huge_lambda_is_wls() {
        let h = matrix(12, 4, 5);
        let z: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let wls = solve_wls(&h, &z);
        let hub = huber_estimate(&h, &z, 1e9, 1e-10, 100).unwrap();
        assert!(hub.identified.is_empty());
        for (a, b) in wls.x.iter().zip(&hub.x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn huber_output_is_optimal() {
        let h = matrix(20, 4, 11);
        let mut z = h.mul_vec(&[1.0, 0.5, -0.5, 0.2]);
        z[3] += 8.0;
        z[7] -= 6.0;
        let est = huber_estimate(&h, &z, 0.5, 1e-4, 200).unwrap();
        let r: Vec<f64> = residual(&h, &z, &est.x).iter().zip(&est.o).map(|(a, b)| a - b).collect();
        assert!(h.tmul_vec(&r).iter().all(|g| g.abs() < 1e-9));
        assert!(est.identified.contains(&3) && est.identified.contains(&7));
    }

    #[test]
    fn lnrt_removes_gross_error() {
        let h = matrix(20, 4, 17);
        let mut z = h.mul_vec(&[1.0, 0.5, -0.5, 0.2]);
        z[5] += 50.0;
        let est = lnrt_estimate(&h, &z, 3.0).unwrap();
        assert_eq!(est.identified, vec![5]);
        assert!((est.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn genie_with_empty_mask_is_wls() {
        let h = matrix(10, 3, 2);
        let z: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(genie_lse(&h, &z, &[false; 10]).unwrap(), solve_wls(&h, &z).x);
    }

    #[test]
    fn l0_limits() {
        let h = matrix(6, 4, 1);
        let z = [0.0; 6];
        assert_eq!(l0_identify(&h, &z, 0).unwrap(), Vec::<usize>::new());
        assert_eq!(l0_identify(&h, &z, 3), Err(EstimationError::Tau0TooLarge(3)));
        assert_eq!(l0_identify(&matrix(4, 4, 1), &[0.0; 4], 1), Err(EstimationError::TooFewRows { m: 4, n: 4, tau0: 1 }));
    }
}
