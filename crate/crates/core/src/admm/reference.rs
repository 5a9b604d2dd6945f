//! Three-step consensus ADMM with explicit auxiliary variables and
//! multipliers, kept as a test oracle for the simplified engine.
//!
//! Per iteration:
//! - `x_k ← argmin ½‖z_k − H_k x‖² + Σ_l v_klᵀ(x[l] − x_kl) + c/2 ‖x[l] − x_kl‖²`
//! - `x_kl ← (x_k[l] + x_l[k])/2 + (v_kl + v_lk)/(2c)`
//! - `v_kl ← v_kl + c (x_k[l] − x_kl)`
//!
//! Linear systems use a dense LU with partial pivoting, independent of the
//! engine's Cholesky path.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::AreaProblem;
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone)]
struct DenseLu {
    lu: DenseMatrix,
    piv: Vec<usize>,
}

impl DenseLu {
    fn factor(mut a: DenseMatrix) -> Self {
        let n = a.rows();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| libm::fabs(a[(i, k)]).total_cmp(&libm::fabs(a[(j, k)])))
                .unwrap();
            if p != k {
                piv.swap(p, k);
                for j in 0..n {
                    let t = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = t;
                }
            }
            let d = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / d;
                a[(i, k)] = f;
                for j in k + 1..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        Self { lu: a, piv }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.piv.len();
        let mut y: Vec<f64> = self.piv.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[(i, j)] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu[(i, j)] * y[j];
            }
            y[i] /= self.lu[(i, i)];
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceAdmm {
    c: f64,
    /// `(local positions, neighbor)` per area.
    links: Vec<Vec<(usize, Vec<usize>)>>,
    hz: Vec<Vec<f64>>,
    lu: Vec<DenseLu>,
    pub x: Vec<Vec<f64>>,
    /// Auxiliary shared variables keyed by `(k, l)` with `k < l`.
    pub aux: BTreeMap<(usize, usize), Vec<f64>>,
    /// Multipliers keyed by ordered pair `(k, l)`.
    pub v: BTreeMap<(usize, usize), Vec<f64>>,
}

fn pick(x: &[f64], local: &[usize]) -> Vec<f64> {
    local.iter().flat_map(|&p| [x[2 * p], x[2 * p + 1]]).collect()
}

impl ReferenceAdmm {
    /// Starts from local states `x0`, `x_kl` at the midpoint of the two
    /// copies and zero multipliers.
    pub fn new(problems: &[AreaProblem], c: f64, x0: Vec<Vec<f64>>) -> Self {
        let mut links = Vec::with_capacity(problems.len());
        let mut hz = Vec::with_capacity(problems.len());
        let mut lu = Vec::with_capacity(problems.len());
        for pr in problems {
            let n = pr.view.state_dim();
            let hd = pr.h.to_dense();
            let mut a = DenseMatrix::zeros(n, n);
            for r in 0..hd.rows() {
                for i in 0..n {
                    let hi = hd[(r, i)];
                    if hi != 0.0 {
                        for j in 0..n {
                            a[(i, j)] += hi * hd[(r, j)];
                        }
                    }
                }
            }
            let mut b = vec![0.0; n];
            for r in 0..hd.rows() {
                for i in 0..n {
                    b[i] += hd[(r, i)] * pr.z[r];
                }
            }
            let mut mine = Vec::new();
            for link in &pr.view.neighbors {
                for &p in &link.local {
                    a[(2 * p, 2 * p)] += c;
                    a[(2 * p + 1, 2 * p + 1)] += c;
                }
                mine.push((link.area, link.local.clone()));
            }
            links.push(mine);
            hz.push(b);
            lu.push(DenseLu::factor(a));
        }
        let mut aux = BTreeMap::new();
        let mut v = BTreeMap::new();
        for k in 0..problems.len() {
            for (l, local) in &links[k] {
                let l = *l;
                v.insert((k, l), vec![0.0; 2 * local.len()]);
                if k < l {
                    let back = &links[l].iter().find(|(a, _)| *a == k).expect("symmetric links").1;
                    let mid = pick(&x0[k], local)
                        .iter()
                        .zip(pick(&x0[l], back))
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    aux.insert((k, l), mid);
                }
            }
        }
        Self { c, links, hz, lu, x: x0, aux, v }
    }

    fn aux_of(&self, k: usize, l: usize) -> &Vec<f64> {
        &self.aux[&(k.min(l), k.max(l))]
    }

    fn local_links(&self, k: usize, l: usize) -> &[usize] {
        &self.links[k].iter().find(|(a, _)| *a == l).expect("link").1
    }

    pub fn step(&mut self) {
        let c = self.c;
        let mut x_new = Vec::with_capacity(self.x.len());
        for k in 0..self.x.len() {
            let mut rhs = self.hz[k].clone();
            for (l, local) in &self.links[k] {
                let a = self.aux_of(k, *l);
                let v = &self.v[&(k, *l)];
                for (j, &p) in local.iter().enumerate() {
                    for comp in 0..2 {
                        rhs[2 * p + comp] += c * a[2 * j + comp] - v[2 * j + comp];
                    }
                }
            }
            x_new.push(self.lu[k].solve(&rhs));
        }
        self.x = x_new;

        let pairs: Vec<(usize, usize)> = self.aux.keys().copied().collect();
        for (k, l) in pairs {
            let xk = pick(&self.x[k], self.local_links(k, l));
            let xl = pick(&self.x[l], self.local_links(l, k));
            let vkl = &self.v[&(k, l)];
            let vlk = &self.v[&(l, k)];
            let aux: Vec<f64> = (0..xk.len())
                .map(|i| 0.5 * (xk[i] + xl[i]) + (vkl[i] + vlk[i]) / (2.0 * c))
                .collect();
            // v_kl + c (x_k − x_kl) with x_kl substituted from the line above.
            let mean = |i: usize| 0.5 * (vkl[i] + vlk[i]);
            let vkl_new: Vec<f64> = (0..xk.len()).map(|i| vkl[i] - mean(i) + 0.5 * c * (xk[i] - xl[i])).collect();
            let vlk_new: Vec<f64> = (0..xk.len()).map(|i| vlk[i] - mean(i) + 0.5 * c * (xl[i] - xk[i])).collect();
            self.v.insert((k, l), vkl_new);
            self.v.insert((l, k), vlk_new);
            self.aux.insert((k, l), aux);
        }
    }

    /// Largest `|v_kl + v_lk|`.
    pub fn multiplier_imbalance(&self) -> f64 {
        let mut worst = 0.0f64;
        for (&(k, l), v) in &self.v {
            if k < l {
                for (a, b) in v.iter().zip(&self.v[&(l, k)]) {
                    worst = worst.max(libm::fabs(a + b));
                }
            }
        }
        worst
    }

    /// Consensus target implied by the multipliers:
    /// `p(i) = Σ_l (x_kl(i) − v_kl(i)/c) / |N_k^i|`, zero on unshared entries.
    pub fn implied_target(&self, k: usize) -> Vec<f64> {
        let n = self.x[k].len();
        let mut p = vec![0.0; n];
        let mut deg = vec![0usize; n];
        for (l, local) in &self.links[k] {
            let a = self.aux_of(k, *l);
            let v = &self.v[&(k, *l)];
            for (j, &pos) in local.iter().enumerate() {
                for comp in 0..2 {
                    p[2 * pos + comp] += a[2 * j + comp] - v[2 * j + comp] / self.c;
                    deg[2 * pos + comp] += 1;
                }
            }
        }
        for (pi, d) in p.iter_mut().zip(deg) {
            if d > 0 {
                *pi /= d as f64;
            }
        }
        p
    }
}
