//! Linear PMU measurement model in rectangular coordinates.
//!
//! Every meter yields a phasor, i.e. two real rows (real part first). A
//! voltage meter selects `(e_i, f_i)` of its bus; a current meter on a branch
//! end expands `I = a·V_from + b·V_to` with `(g + jb)(e + jf) =
//! (g·e − b·f) + j(b·e + g·f)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::MeasurementError;
use crate::grid::{BranchAdmittance, GridCase};
use crate::linalg::SparseMatrix;

/// Default noise standard deviation per real component of a voltage phasor.
pub const VOLTAGE_SIGMA: f64 = 0.01;
/// Default noise standard deviation per real component of a current phasor.
pub const CURRENT_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Terminal {
    From,
    To,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeterKind {
    VoltagePhasor { bus: usize },
    CurrentPhasor { branch: usize, end: Terminal },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meter {
    pub kind: MeterKind,
    /// Noise standard deviation per real component.
    pub sigma: f64,
}

impl Meter {
    pub fn voltage(bus: usize) -> Self {
        Self { kind: MeterKind::VoltagePhasor { bus }, sigma: VOLTAGE_SIGMA }
    }

    pub fn current(branch: usize, end: Terminal) -> Self {
        Self { kind: MeterKind::CurrentPhasor { branch, end }, sigma: CURRENT_SIGMA }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Internal index of the bus where the meter sits.
    pub fn site_bus(&self, case: &GridCase) -> usize {
        match self.kind {
            MeterKind::VoltagePhasor { bus } => bus,
            MeterKind::CurrentPhasor { branch, end } => {
                let (f, t) = case.branch_terminals(branch);
                match end {
                    Terminal::From => f,
                    Terminal::To => t,
                }
            }
        }
    }
}

/// Ordered meter list with no duplicate sites.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterPlan {
    meters: Vec<Meter>,
}

impl MeterPlan {
    pub fn new(meters: Vec<Meter>) -> Result<Self, MeasurementError> {
        let mut seen = alloc::collections::BTreeMap::new();
        for (i, m) in meters.iter().enumerate() {
            if !(m.sigma > 0.0) || !m.sigma.is_finite() {
                return Err(MeasurementError::InvalidSigma { meter: i });
            }
            if let Some(&first) = seen.get(&m.kind) {
                return Err(MeasurementError::DuplicateMeter { meter: i, first });
            }
            seen.insert(m.kind, i);
        }
        Ok(Self { meters })
    }

    pub fn meters(&self) -> &[Meter] {
        &self.meters
    }

    pub fn len(&self) -> usize {
        self.meters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meters.is_empty()
    }

    /// Copy without the given meter indices.
    pub fn without(&self, drop: &[usize]) -> Self {
        let meters = self
            .meters
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, m)| *m)
            .collect();
        Self { meters }
    }

    pub fn position(&self, kind: MeterKind) -> Option<usize> {
        self.meters.iter().position(|m| m.kind == kind)
    }

    pub fn validate_for(&self, case: &GridCase) -> Result<(), MeasurementError> {
        for (i, m) in self.meters.iter().enumerate() {
            match m.kind {
                MeterKind::VoltagePhasor { bus } if bus >= case.bus_count() => {
                    return Err(MeasurementError::UnknownBus { meter: i, bus });
                }
                MeterKind::CurrentPhasor { branch, .. } if branch >= case.branches().len() => {
                    return Err(MeasurementError::UnknownBranch { meter: i, branch });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Real,
    Imag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowMeta {
    pub meter: usize,
    pub component: Component,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    h: SparseMatrix,
    rows: Vec<RowMeta>,
    whitened: bool,
}

impl MeasurementModel {
    pub fn h(&self) -> &SparseMatrix {
        &self.h
    }

    pub fn row_meta(&self) -> &[RowMeta] {
        &self.rows
    }

    pub fn is_whitened(&self) -> bool {
        self.whitened
    }

    pub fn row_count(&self) -> usize {
        self.h.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.cols()
    }

    /// The real and imaginary rows of a meter.
    pub fn meter_rows(&self, meter: usize) -> [usize; 2] {
        [2 * meter, 2 * meter + 1]
    }

    pub fn meter_count(&self) -> usize {
        self.rows.len() / 2
    }
}

fn expand(coeffs: &[(usize, num_complex::Complex64)]) -> [(Vec<usize>, Vec<f64>); 2] {
    let mut re = (Vec::new(), Vec::new());
    let mut im = (Vec::new(), Vec::new());
    for &(bus, y) in coeffs {
        re.0.extend([2 * bus, 2 * bus + 1]);
        re.1.extend([y.re, -y.im]);
        im.0.extend([2 * bus, 2 * bus + 1]);
        im.1.extend([y.im, y.re]);
    }
    [re, im]
}

/// Unwhitened model `z = H x` for the plan.
pub fn build_model(
    case: &GridCase,
    admittances: &[BranchAdmittance],
    plan: &MeterPlan,
) -> Result<MeasurementModel, MeasurementError> {
    plan.validate_for(case)?;
    let mut rows = Vec::with_capacity(2 * plan.len());
    let mut meta = Vec::with_capacity(2 * plan.len());
    for (i, m) in plan.meters().iter().enumerate() {
        let coeffs: Vec<(usize, num_complex::Complex64)> = match m.kind {
            MeterKind::VoltagePhasor { bus } => vec![(bus, num_complex::Complex64::new(1.0, 0.0))],
            MeterKind::CurrentPhasor { branch, end } => {
                let (f, t) = case.branch_terminals(branch);
                let y = &admittances[branch];
                let (a, b) = match end {
                    Terminal::From => y.from_end_coefficients(),
                    Terminal::To => y.to_end_coefficients(),
                };
                vec![(f, a), (t, b)]
            }
        };
        let [re, im] = expand(&coeffs);
        rows.push(re);
        rows.push(im);
        meta.push(RowMeta { meter: i, component: Component::Real });
        meta.push(RowMeta { meter: i, component: Component::Imag });
    }
    Ok(MeasurementModel {
        h: SparseMatrix::from_rows(case.state_dim(), &rows),
        rows: meta,
        whitened: false,
    })
}

fn row_scales(model: &MeasurementModel, plan: &MeterPlan) -> Result<Vec<f64>, MeasurementError> {
    if plan.len() != model.meter_count() {
        return Err(MeasurementError::Dimension { expected: model.meter_count(), got: plan.len() });
    }
    Ok(model
        .rows
        .iter()
        .map(|r| 1.0 / plan.meters()[r.meter].sigma)
        .collect())
}

/// Divides every row by its meter's sigma.
pub fn whiten(model: &MeasurementModel, plan: &MeterPlan) -> Result<MeasurementModel, MeasurementError> {
    if model.whitened {
        return Err(MeasurementError::AlreadyWhitened);
    }
    let scale = row_scales(model, plan)?;
    let mut h = model.h.clone();
    h.scale_rows(&scale);
    Ok(MeasurementModel { h, rows: model.rows.clone(), whitened: true })
}

/// Whitens a raw measurement vector laid out like `model`'s rows.
pub fn whiten_vector(
    z: &[f64],
    model: &MeasurementModel,
    plan: &MeterPlan,
) -> Result<Vec<f64>, MeasurementError> {
    if z.len() != model.row_count() {
        return Err(MeasurementError::Dimension { expected: model.row_count(), got: z.len() });
    }
    let scale = row_scales(model, plan)?;
    Ok(z.iter().zip(scale).map(|(v, s)| v * s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// i.i.d. standard normal (post-whitening).
    Gaussian,
    /// `z = H x` exactly.
    Noiseless,
}

/// Simulated whitened measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub z: Vec<f64>,
    /// Noise-free (possibly corrupted) measurement, whitened.
    pub clean: Vec<f64>,
    pub true_state: Vec<f64>,
    /// Ground-truth corruption flags per row.
    pub bad_mask: Vec<bool>,
    pub rng_seed: u64,
    pub noise: Noise,
}

impl MeasurementSet {
    pub fn bad_rows(&self) -> Vec<usize> {
        self.bad_mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

fn noise_vector(len: usize, seed: u64, noise: Noise) -> Vec<f64> {
    match noise {
        Noise::Noiseless => vec![0.0; len],
        Noise::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    }
}

pub fn simulate(
    model: &MeasurementModel,
    true_state: &[f64],
    rng_seed: u64,
    noise: Noise,
) -> Result<MeasurementSet, MeasurementError> {
    if !model.whitened {
        return Err(MeasurementError::NotWhitened);
    }
    if true_state.len() != model.state_dim() {
        return Err(MeasurementError::Dimension { expected: model.state_dim(), got: true_state.len() });
    }
    let clean = model.h.mul_vec(true_state);
    let w = noise_vector(clean.len(), rng_seed, noise);
    let z = clean.iter().zip(&w).map(|(a, b)| a + b).collect();
    Ok(MeasurementSet {
        z,
        bad_mask: vec![false; clean.len()],
        clean,
        true_state: true_state.to_vec(),
        rng_seed,
        noise,
    })
}

/// Scales the noise-free readings of the listed meters by `factor` and
/// redraws the same noise from the stored seed.
pub fn inject_bad(
    set: &MeasurementSet,
    model: &MeasurementModel,
    meters: &[usize],
    factor: f64,
) -> Result<MeasurementSet, MeasurementError> {
    let mut out = set.clone();
    for &m in meters {
        if m >= model.meter_count() {
            return Err(MeasurementError::MeterOutOfRange(m));
        }
        for r in model.meter_rows(m) {
            out.clean[r] *= factor;
            out.bad_mask[r] = true;
        }
    }
    let w = noise_vector(out.clean.len(), out.rng_seed, out.noise);
    out.z = out.clean.iter().zip(&w).map(|(a, b)| a + b).collect();
    Ok(out)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// PMU topological observability over the buses flagged in `within`
/// (all buses when `None`): metered branches with both terminals inside
/// join their terminals, and every resulting island must hold a voltage meter.
pub fn is_topologically_observable(case: &GridCase, plan: &MeterPlan, within: Option<&[bool]>) -> bool {
    let n = case.bus_count();
    let inside = |b: usize| within.is_none_or(|w| w[b]);
    let mut parent: Vec<usize> = (0..n).collect();
    let mut anchored = vec![false; n];
    for m in plan.meters() {
        match m.kind {
            MeterKind::VoltagePhasor { bus } => {
                if inside(bus) {
                    anchored[bus] = true;
                }
            }
            MeterKind::CurrentPhasor { branch, .. } => {
                let (f, t) = case.branch_terminals(branch);
                if inside(f) && inside(t) {
                    let (a, b) = (find(&mut parent, f), find(&mut parent, t));
                    parent[a] = b;
                }
            }
        }
    }
    let mut root_anchored = vec![false; n];
    for b in 0..n {
        if anchored[b] {
            let r = find(&mut parent, b);
            root_anchored[r] = true;
        }
    }
    (0..n).filter(|&b| inside(b)).all(|b| {
        let r = find(&mut parent, b);
        root_anchored[r]
    })
}

/// Draws `voltage` bus sites and `current` branch-end sites uniformly
/// without replacement, redrawing until the plan is topologically
/// observable globally and inside every group of `regions` (if given).
pub fn random_plan(
    case: &GridCase,
    voltage: usize,
    current: usize,
    seed: u64,
    regions: Option<&[Vec<bool>]>,
) -> Result<MeterPlan, MeasurementError> {
    const MAX_DRAWS: usize = 10_000;
    let n = case.bus_count();
    let sites = 2 * case.branches().len();
    if voltage > n {
        return Err(MeasurementError::PlanTooLarge { requested: voltage, available: n });
    }
    if current > sites {
        return Err(MeasurementError::PlanTooLarge { requested: current, available: sites });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        let mut v: Vec<usize> = index::sample(&mut rng, n, voltage).into_vec();
        let mut c: Vec<usize> = index::sample(&mut rng, sites, current).into_vec();
        v.sort_unstable();
        c.sort_unstable();
        let meters = v
            .into_iter()
            .map(Meter::voltage)
            .chain(c.into_iter().map(|s| {
                Meter::current(s / 2, if s % 2 == 0 { Terminal::From } else { Terminal::To })
            }))
            .collect();
        let plan = MeterPlan::new(meters)?;
        let ok = is_topologically_observable(case, &plan, None)
            && regions.is_none_or(|rs| {
                rs.iter().all(|w| is_topologically_observable(case, &plan, Some(w)))
            });
        if ok {
            return Ok(plan);
        }
    }
    Err(MeasurementError::NoObservablePlan(MAX_DRAWS))
}

/// Plan for a grid built by [`crate::grid::compose_grid`]: the inner plan is
/// repeated in every copy and each tie line gets a current meter at its
/// from terminal.
pub fn compose_plan(
    inner_plan: &MeterPlan,
    inner: &GridCase,
    composed: &GridCase,
    copies: usize,
) -> Result<MeterPlan, MeasurementError> {
    let n_in = inner.bus_count();
    let br_in = inner.branches().len();
    let mut meters = Vec::new();
    for a in 0..copies {
        for m in inner_plan.meters() {
            let kind = match m.kind {
                MeterKind::VoltagePhasor { bus } => MeterKind::VoltagePhasor { bus: a * n_in + bus },
                MeterKind::CurrentPhasor { branch, end } => {
                    MeterKind::CurrentPhasor { branch: a * br_in + branch, end }
                }
            };
            meters.push(Meter { kind, sigma: m.sigma });
        }
    }
    for k in copies * br_in..composed.branches().len() {
        meters.push(Meter::current(k, Terminal::From));
    }
    let plan = MeterPlan::new(meters)?;
    plan.validate_for(composed)?;
    Ok(plan)
}
