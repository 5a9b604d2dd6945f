//! Consensus ADMM over control areas.
//!
//! Each area keeps its local state `x`, the average `s` of its neighbors'
//! copies of shared buses, a consensus target `p`, and in robust mode a
//! bad-data vector `o` over its own rows. One iteration is
//!
//! 1. `x ← (HᵀH + cD)⁻¹ (Hᵀ(z − o) + cD p)`
//! 2. exchange shared entries of `x` with neighbors
//! 3. `s ← mean of neighbor copies`
//! 4. `p ← p + s_new − (x_old + s_old)/2`
//! 5. robust mode: `o ← soft(z − Hx, λ)`
//!
//! starting from `p = (x + s)/2` and `o = 0`.

pub mod reference;
pub mod transport;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::central::soft_threshold;
use crate::error::AdmmError;
use crate::linalg::{NormalSolver, SparseMatrix};
use crate::partition::{AreaView, LocalModel};

pub use transport::{
    ExchangePayload, Inbox, LossyTransport, MissingPolicy, SharedStates, StrictTransport, Transport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lse,
    Robust,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `e = 1, f = 0` everywhere.
    Flat,
    /// Global state vector, gathered per area.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    pub c: f64,
    pub lambda: f64,
    pub mode: Mode,
    pub max_iter: usize,
    /// Stop once the shared-state disagreement and the per-iteration state
    /// change both drop below this.
    pub tol: f64,
    pub init: Init,
    /// Error curves are recorded every this many iterations (and at the end).
    pub record_every: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            c: 1e4,
            lambda: 1.34,
            mode: Mode::Lse,
            max_iter: 2000,
            tol: 1e-6,
            init: Init::Flat,
            record_every: 1,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<(), AdmmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(AdmmError::Config("c must be positive and finite"));
        }
        if !(self.lambda >= 0.0) {
            return Err(AdmmError::Config("lambda must be non-negative"));
        }
        if self.record_every == 0 {
            return Err(AdmmError::Config("record_every must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(AdmmError::Config("tol must be non-negative"));
        }
        Ok(())
    }
}

/// One area's data and cached factorization of `HᵀH + cD`.
#[derive(Debug, Clone)]
pub struct AreaProblem {
    pub view: AreaView,
    pub h: SparseMatrix,
    pub z: Vec<f64>,
    /// Global row of each local row.
    pub rows: Vec<usize>,
    cd: Vec<f64>,
    solver: NormalSolver,
}

impl AreaProblem {
    pub fn new(view: AreaView, local: LocalModel, z_global: &[f64], c: f64) -> Result<Self, AdmmError> {
        if local.h.cols() != view.state_dim() || local.rows != view.rows {
            return Err(AdmmError::Inconsistent("local model does not match its view"));
        }
        let z = local.select(z_global);
        let cd: Vec<f64> = view.overlap_diagonal().iter().map(|d| c * d).collect();
        let solver = NormalSolver::normal_equations(&local.h, Some(&cd));
        Ok(Self { view, h: local.h, z, rows: local.rows, cd, solver })
    }

    /// The local system was singular; solves return minimum-norm results.
    pub fn is_rank_deficient(&self) -> bool {
        self.solver.is_rank_deficient()
    }

    /// `(HᵀH + cD)⁻¹ (Hᵀ(z − o) + cD p)`.
    pub fn local_solve(&self, p: &[f64], o: &[f64]) -> Vec<f64> {
        let zc: Vec<f64> = self.z.iter().zip(o).map(|(a, b)| a - b).collect();
        let mut rhs = self.h.tmul_vec(&zc);
        for ((r, d), pi) in rhs.iter_mut().zip(&self.cd).zip(p) {
            *r += d * pi;
        }
        self.solver.solve(&rhs)
    }

    /// `soft(z − Hx, λ)` entry-wise.
    pub fn bad_data_update(&self, x: &[f64], lambda: f64) -> Vec<f64> {
        let hx = self.h.mul_vec(x);
        self.z.iter().zip(hx).map(|(z, v)| soft_threshold(z - v, lambda)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaState {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub o: Vec<f64>,
}

/// Averages of neighbor copies on shared entries, summed in ascending
/// neighbor order; zero elsewhere. `copy(l)` yields neighbor `l`'s values
/// for the buses of the link.
pub fn consensus_update<'a>(
    view: &AreaView,
    mut copy: impl FnMut(usize) -> &'a [[f64; 2]],
) -> Vec<f64> {
    let mut s = vec![0.0; view.state_dim()];
    for link in &view.neighbors {
        let values = copy(link.area);
        for (&pos, v) in link.local.iter().zip(values) {
            s[2 * pos] += v[0];
            s[2 * pos + 1] += v[1];
        }
    }
    for (pos, &d) in view.overlap.iter().enumerate() {
        if d > 0 {
            s[2 * pos] /= d as f64;
            s[2 * pos + 1] /= d as f64;
        }
    }
    s
}

/// `s + mean_l w_kl` on shared entries, where `w_kl` accumulates
/// `(x_l − x_k)/2` over past rounds; non-shared entries stay zero. Equal to
/// the recursion `p + s_new − (x_old + s_old)/2` while every message arrives.
pub fn dual_target<'a>(
    view: &AreaView,
    s: &[f64],
    mut multiplier: impl FnMut(usize) -> &'a [[f64; 2]],
) -> Vec<f64> {
    let mut w = vec![0.0; s.len()];
    for link in &view.neighbors {
        for (&pos, v) in link.local.iter().zip(multiplier(link.area)) {
            w[2 * pos] += v[0];
            w[2 * pos + 1] += v[1];
        }
    }
    let mut out = vec![0.0; s.len()];
    for (pos, &d) in view.overlap.iter().enumerate() {
        if d > 0 {
            for i in [2 * pos, 2 * pos + 1] {
                out[i] = s[i] + w[i] / d as f64;
            }
        }
    }
    out
}

fn accumulate(w: &mut [[f64; 2]], seen: &[[f64; 2]], x: &[f64], local: &[usize]) {
    for ((wi, v), &pos) in w.iter_mut().zip(seen).zip(local) {
        wi[0] += 0.5 * (v[0] - x[2 * pos]);
        wi[1] += 0.5 * (v[1] - x[2 * pos + 1]);
    }
}

fn initial_target(view: &AreaView, x: &[f64], s: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; x.len()];
    for (pos, &d) in view.overlap.iter().enumerate() {
        if d > 0 {
            for i in [2 * pos, 2 * pos + 1] {
                p[i] = 0.5 * (x[i] + s[i]);
            }
        }
    }
    p
}

fn link_values(x: &[f64], local: &[usize]) -> Vec<[f64; 2]> {
    local.iter().map(|&p| [x[2 * p], x[2 * p + 1]]).collect()
}

/// Reference solutions used for the error curves, as global state vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct References<'a> {
    pub central: Option<&'a [f64]>,
    pub truth: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub area: usize,
    pub e_kc: Option<f64>,
    pub e_ko: Option<f64>,
    pub disagreement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub iterations: usize,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
    /// Final local state per area.
    pub estimates: Vec<Vec<f64>>,
    /// Final bad-data vector per area (zero in LSE mode).
    pub bad_data: Vec<Vec<f64>>,
    /// Global rows with nonzero bad data, per area.
    pub identified: Vec<Vec<usize>>,
    /// Areas whose local system was singular.
    pub rank_deficient_areas: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortedRun {
    pub error: AdmmError,
    pub partial: RunReport,
}

/// `(‖x_c − x‖/N, ‖x_true − x‖/N)` with `N` the local state dimension.
pub fn error_metrics(x: &[f64], central: &[f64], truth: &[f64], n: usize) -> Result<(f64, f64), AdmmError> {
    if x.len() != central.len() || x.len() != truth.len() || n == 0 {
        return Err(AdmmError::Inconsistent("metric vectors differ in length"));
    }
    let nf = n as f64;
    Ok((crate::linalg::distance(central, x) / nf, crate::linalg::distance(truth, x) / nf))
}

/// Single-vector form of [`error_metrics`].
pub fn scaled_error(x: &[f64], reference: &[f64]) -> f64 {
    crate::linalg::distance(reference, x) / x.len() as f64
}

/// Global estimate from local ones: every bus takes the mean over the
/// areas holding it, summed in ascending area order.
pub fn stitch(views: &[AreaView], estimates: &[Vec<f64>], bus_count: usize) -> Vec<f64> {
    let mut sum = vec![0.0; 2 * bus_count];
    let mut count = vec![0usize; bus_count];
    for (view, x) in views.iter().zip(estimates) {
        for (pos, &b) in view.local_buses.iter().enumerate() {
            sum[2 * b] += x[2 * pos];
            sum[2 * b + 1] += x[2 * pos + 1];
            count[b] += 1;
        }
    }
    for b in 0..bus_count {
        if count[b] > 0 {
            sum[2 * b] /= count[b] as f64;
            sum[2 * b + 1] /= count[b] as f64;
        }
    }
    sum
}

/// One [`AreaProblem`] per view.
pub fn build_problems(
    model: &crate::measurement::MeasurementModel,
    views: &[AreaView],
    z: &[f64],
    c: f64,
) -> Result<Vec<AreaProblem>, AdmmError> {
    views
        .iter()
        .map(|v| AreaProblem::new(v.clone(), crate::partition::restrict_model(model, v), z, c))
        .collect()
}

/// Stepwise engine; [`run`] drives it to completion.
#[derive(Debug, Clone)]
pub struct Engine {
    problems: Vec<AreaProblem>,
    config: AdmmConfig,
    states: Vec<AreaState>,
    last_seen: BTreeMap<(usize, usize), Vec<[f64; 2]>>,
    /// `(k, l)` → area `k`'s multiplier on its link to `l`, per shared bus.
    duals: BTreeMap<(usize, usize), Vec<[f64; 2]>>,
    iteration: usize,
    last_change: f64,
}

impl Engine {
    pub fn new(problems: Vec<AreaProblem>, config: AdmmConfig) -> Result<Self, AdmmError> {
        config.validate()?;
        for (k, pr) in problems.iter().enumerate() {
            if pr.view.k != k {
                return Err(AdmmError::Inconsistent("areas must be ordered by index"));
            }
            for link in &pr.view.neighbors {
                let back = problems
                    .get(link.area)
                    .and_then(|q| q.view.neighbor(k))
                    .ok_or(AdmmError::Inconsistent("neighbor relation is not symmetric"))?;
                if back.buses != link.buses {
                    return Err(AdmmError::Inconsistent("shared bus lists differ between neighbors"));
                }
            }
        }
        let x0: Vec<Vec<f64>> = problems
            .iter()
            .map(|pr| match &config.init {
                Init::Flat => (0..pr.view.state_dim()).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
                Init::Vector(g) => pr.view.gather(g),
            })
            .collect();
        // The initial exchange follows from the common initialization.
        let mut last_seen = BTreeMap::new();
        let mut duals = BTreeMap::new();
        for (k, pr) in problems.iter().enumerate() {
            for link in &pr.view.neighbors {
                last_seen.insert((k, link.area), link_values(&x0[k], &link.local));
                duals.insert((k, link.area), vec![[0.0; 2]; link.local.len()]);
            }
        }
        let states = problems
            .iter()
            .enumerate()
            .map(|(k, pr)| {
                let x = x0[k].clone();
                let s = consensus_update(&pr.view, |l| &last_seen[&(l, k)]);
                let p = initial_target(&pr.view, &x, &s);
                AreaState { x, s, p, o: vec![0.0; pr.z.len()] }
            })
            .collect();
        Ok(Self { problems, config, states, last_seen, duals, iteration: 0, last_change: f64::INFINITY })
    }

    pub fn problems(&self) -> &[AreaProblem] {
        &self.problems
    }

    pub fn states(&self) -> &[AreaState] {
        &self.states
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.config
    }

    pub fn estimates(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }

    /// Largest `|x_k[i] − x_l[i]|` over neighbor pairs and shared entries.
    pub fn disagreement(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, pr) in self.problems.iter().enumerate() {
            for link in &pr.view.neighbors {
                if link.area < k {
                    continue;
                }
                let other = &self.problems[link.area].view.neighbor(k).expect("symmetric").local;
                for (&a, &b) in link.local.iter().zip(other) {
                    for c in 0..2 {
                        let d = self.states[k].x[2 * a + c] - self.states[link.area].x[2 * b + c];
                        worst = worst.max(libm::fabs(d));
                    }
                }
            }
        }
        worst
    }

    /// Largest `|x_k^t − x_k^{t−1}|` entry of the latest step.
    pub fn last_change(&self) -> f64 {
        self.last_change
    }

    /// One full iteration.
    pub fn step<T: Transport + ?Sized>(&mut self, transport: &mut T) -> Result<(), AdmmError> {
        let t = self.iteration + 1;
        let x_new: Vec<Vec<f64>> = self
            .problems
            .iter()
            .zip(&self.states)
            .map(|(pr, st)| pr.local_solve(&st.p, &st.o))
            .collect();

        let outgoing = self
            .problems
            .iter()
            .enumerate()
            .map(|(k, pr)| ExchangePayload {
                sender: k,
                links: pr
                    .view
                    .neighbors
                    .iter()
                    .map(|link| {
                        let states = SharedStates {
                            buses: link.buses.clone(),
                            values: link_values(&x_new[k], &link.local),
                            multiplier: (k < link.area).then(|| self.duals[&(k, link.area)].clone()),
                        };
                        (link.area, states)
                    })
                    .collect(),
            })
            .collect();
        let mut inbox = transport.exchange(t, outgoing);
        for (k, pr) in self.problems.iter().enumerate() {
            for link in &pr.view.neighbors {
                match inbox.remove(&(link.area, k)) {
                    Some(msg) => {
                        if msg.buses != link.buses {
                            return Err(AdmmError::Inconsistent("payload buses do not match the link"));
                        }
                        if let Some(w) = msg.multiplier.filter(|_| link.area < k) {
                            if w.len() != link.local.len() {
                                return Err(AdmmError::Inconsistent("payload multiplier does not match the link"));
                            }
                            self.duals.insert((k, link.area), w.iter().map(|v| [-v[0], -v[1]]).collect());
                        }
                        self.last_seen.insert((link.area, k), msg.values);
                    }
                    None if transport.policy() == MissingPolicy::Fail => {
                        return Err(AdmmError::Synchronization { iteration: t, sender: link.area, receiver: k });
                    }
                    None => {}
                }
            }
        }

        let mut change = 0.0f64;
        for (k, (pr, x)) in self.problems.iter().zip(x_new).enumerate() {
            let st = &mut self.states[k];
            change = change.max(crate::linalg::max_abs_diff(&st.x, &x));
            let seen = &self.last_seen;
            let s_new = consensus_update(&pr.view, |l| &seen[&(l, k)]);
            st.p = dual_target(&pr.view, &s_new, |l| &self.duals[&(k, l)]);
            for link in &pr.view.neighbors {
                let w = self.duals.get_mut(&(k, link.area)).expect("every link has a multiplier");
                accumulate(w, &seen[&(link.area, k)], &x, &link.local);
            }
            st.s = s_new;
            st.x = x;
            if self.config.mode == Mode::Robust {
                st.o = pr.bad_data_update(&st.x, self.config.lambda);
            }
        }
        self.iteration = t;
        self.last_change = change;
        Ok(())
    }

    fn record(&self, refs: &References, disagreement: f64, out: &mut Vec<IterationRecord>) {
        for (k, (pr, st)) in self.problems.iter().zip(&self.states).enumerate() {
            let err = |g: Option<&[f64]>| g.map(|g| scaled_error(&st.x, &pr.view.gather(g)));
            out.push(IterationRecord {
                iteration: self.iteration,
                area: k,
                e_kc: err(refs.central),
                e_ko: err(refs.truth),
                disagreement,
            });
        }
    }

    fn report(&self, records: Vec<IterationRecord>, converged: bool) -> RunReport {
        RunReport {
            iterations: self.iteration,
            converged,
            records,
            estimates: self.estimates(),
            bad_data: self.states.iter().map(|s| s.o.clone()).collect(),
            identified: self
                .problems
                .iter()
                .zip(&self.states)
                .map(|(pr, st)| (0..st.o.len()).filter(|&i| st.o[i] != 0.0).map(|i| pr.rows[i]).collect())
                .collect(),
            rank_deficient_areas: (0..self.problems.len())
                .filter(|&k| self.problems[k].is_rank_deficient())
                .collect(),
        }
    }
}

/// Iterates until both the shared-state disagreement and the latest state
/// change fall below `config.tol`, or `config.max_iter` iterations have run.
pub fn run<T: Transport + ?Sized>(
    problems: Vec<AreaProblem>,
    config: AdmmConfig,
    transport: &mut T,
    refs: References,
) -> Result<RunReport, AbortedRun> {
    let mut engine = Engine::new(problems, config).map_err(|error| AbortedRun {
        error,
        partial: RunReport {
            iterations: 0,
            converged: false,
            records: Vec::new(),
            estimates: Vec::new(),
            bad_data: Vec::new(),
            identified: Vec::new(),
            rank_deficient_areas: Vec::new(),
        },
    })?;
    let mut records = Vec::new();
    engine.record(&refs, engine.disagreement(), &mut records);
    let every = engine.config.record_every;
    let mut converged = false;
    while engine.iteration < engine.config.max_iter {
        if let Err(error) = engine.step(transport) {
            let partial = engine.report(records, false);
            return Err(AbortedRun { error, partial });
        }
        let dis = engine.disagreement();
        converged = dis < engine.config.tol && engine.last_change < engine.config.tol;
        let last = converged || engine.iteration == engine.config.max_iter;
        if last || engine.iteration % every == 0 {
            engine.record(&refs, dis, &mut records);
        }
        if converged {
            break;
        }
    }
    Ok(engine.report(records, converged))
}
