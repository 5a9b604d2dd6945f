//! Monte Carlo harness and decentralized runs on simulated measurements.

use std::time::{Duration, Instant};

use dpsse_core::admm::{self, AbortedRun, AdmmConfig, Mode, References, RunReport, Transport};
use dpsse_core::baseline::{internal_estimates, local_estimates, AreaEstimate};
use dpsse_core::central::{genie_lse, huber_estimate, lnrt_estimate, solve_wls, RobustEstimate};
use dpsse_core::grid::{build_admittances, GridCase};
use dpsse_core::linalg::distance;
use dpsse_core::measurement::{
    build_model, inject_bad, simulate, whiten, MeasurementModel, MeasurementSet, MeterPlan, Noise,
};
use dpsse_core::partition::{build_views, AreaAssignment, AreaView};
use dpsse_core::{AdmmError, EstimationError, GridError, MeasurementError, PartitionError};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::formats::{BadMeters, Scenario};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error("decentralized run aborted after {} iterations: {}", .0.partial.iterations, .0.error)]
    Aborted(Box<AbortedRun>),
}

/// Grid, whitened model and area views shared by every trial.
#[derive(Debug, Clone)]
pub struct Setup {
    pub case: GridCase,
    pub plan: MeterPlan,
    pub model: MeasurementModel,
    pub assignment: AreaAssignment,
    pub views: Vec<AreaView>,
    pub truth: Vec<f64>,
}

impl Setup {
    pub fn new(case: GridCase, plan: MeterPlan, assignment: AreaAssignment) -> Result<Self, ExperimentError> {
        let y = build_admittances(&case)?;
        let raw = build_model(&case, &y, &plan)?;
        let model = whiten(&raw, &plan)?;
        let views = build_views(&case, &model, &plan, &assignment)?;
        let truth = case.true_state();
        Ok(Self { case, plan, model, assignment, views, truth })
    }

    /// Noisy measurements for one seed with the scenario's corruption.
    pub fn measurements(&self, scenario: &Scenario, seed: u64) -> Result<MeasurementSet, ExperimentError> {
        let clean = simulate(&self.model, &self.truth, seed, Noise::Gaussian)?;
        let bad = match &scenario.bad {
            BadMeters::Fixed(m) => m.clone(),
            BadMeters::RandomFraction(f) => {
                let total = self.plan.len();
                let count = ((f * total as f64).round() as usize).min(total);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBAD0_DA7A_5EED_0001);
                let mut picked = index::sample(&mut rng, total, count).into_vec();
                picked.sort_unstable();
                picked
            }
        };
        Ok(inject_bad(&clean, &self.model, &bad, scenario.factor)?)
    }
}

/// Independent per-trial seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Centralized least squares.
    Lse,
    Lnrt,
    Huber,
    Genie,
    Internal,
    Local,
}

impl Estimator {
    pub const ALL: [Estimator; 6] =
        [Estimator::Lse, Estimator::Lnrt, Estimator::Huber, Estimator::Genie, Estimator::Internal, Estimator::Local];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lse" | "wls" | "global" => Estimator::Lse,
            "lnrt" => Estimator::Lnrt,
            "huber" => Estimator::Huber,
            "genie" => Estimator::Genie,
            "internal" => Estimator::Internal,
            "local" => Estimator::Local,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorSettings {
    pub lambda: f64,
    pub lnrt_threshold: f64,
    pub huber_tol: f64,
    pub huber_max_iter: usize,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self { lambda: 1.34, lnrt_threshold: 3.0, huber_tol: 1e-4, huber_max_iter: 1000 }
    }
}

/// One estimator on one realization.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// One entry per estimate instance (one for centralized, one per area
    /// otherwise): `(‖x̂ − x‖₂, dimension)`.
    pub errors: Vec<(f64, usize)>,
    /// `x̂ − x` concatenated over instances.
    pub deviation: Vec<f64>,
    pub identified: Option<Vec<usize>>,
    pub iterations: Option<usize>,
    pub flagged: bool,
}

fn global_outcome(x: &[f64], truth: &[f64]) -> Outcome {
    Outcome {
        errors: vec![(distance(x, truth), x.len())],
        deviation: x.iter().zip(truth).map(|(a, b)| a - b).collect(),
        identified: None,
        iterations: None,
        flagged: false,
    }
}

fn area_outcome(est: &[AreaEstimate], truth: &[f64]) -> Outcome {
    let mut out = Outcome { errors: Vec::new(), deviation: Vec::new(), identified: None, iterations: None, flagged: false };
    for e in est {
        let t = e.gather(truth);
        out.errors.push((distance(&e.x, &t), e.x.len()));
        out.deviation.extend(e.x.iter().zip(&t).map(|(a, b)| a - b));
        out.flagged |= e.rank_deficient;
    }
    out
}

fn robust_outcome(est: RobustEstimate, truth: &[f64]) -> Outcome {
    let mut out = global_outcome(&est.x, truth);
    out.identified = Some(est.identified);
    out.iterations = Some(est.iterations);
    out.flagged = est.rank_deficient;
    out
}

pub fn estimate(
    setup: &Setup,
    set: &MeasurementSet,
    estimator: Estimator,
    settings: &EstimatorSettings,
) -> Result<Outcome, EstimationError> {
    let h = setup.model.h();
    let z = &set.z;
    let truth = &set.true_state;
    Ok(match estimator {
        Estimator::Lse => {
            let sol = solve_wls(h, z);
            let mut out = global_outcome(&sol.x, truth);
            out.flagged = sol.rank_deficient;
            out
        }
        Estimator::Lnrt => robust_outcome(lnrt_estimate(h, z, settings.lnrt_threshold)?, truth),
        Estimator::Huber => robust_outcome(
            huber_estimate(h, z, settings.lambda, settings.huber_tol, settings.huber_max_iter)?,
            truth,
        ),
        Estimator::Genie => global_outcome(&genie_lse(h, z, &set.bad_mask)?, truth),
        Estimator::Internal => area_outcome(&internal_estimates(&setup.model, &setup.views, z), truth),
        Estimator::Local => area_outcome(&local_estimates(&setup.model, &setup.views, z), truth),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub successes: usize,
    pub failures: usize,
    /// Successful trials that hit a rank-deficient system.
    pub flagged: usize,
    /// Mean over trials (and areas) of `‖x̂ − x‖₂`.
    pub mean_l2_error: f64,
    /// Mean over trials and instances of `‖x̂ − x‖₂ / dim`.
    pub mean_scaled_error: f64,
    /// Mean over states of the across-trial standard deviation of `x̂ − x`.
    pub per_state_std: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub scenario: String,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSummary>,
}

impl MonteCarloReport {
    pub fn summary(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == estimator)
    }
}

fn summarize(estimator: Estimator, results: &[(Result<Outcome, EstimationError>, &[bool])]) -> EstimatorSummary {
    let ok: Vec<(&Outcome, &[bool])> = results.iter().filter_map(|(r, m)| r.as_ref().ok().map(|o| (o, *m))).collect();
    let n = ok.len();
    let mut s = EstimatorSummary {
        estimator,
        successes: n,
        failures: results.len() - n,
        flagged: ok.iter().filter(|(o, _)| o.flagged).count(),
        mean_l2_error: f64::NAN,
        mean_scaled_error: f64::NAN,
        per_state_std: f64::NAN,
        true_positives: 0,
        false_positives: 0,
        false_negatives: 0,
        precision: None,
        recall: None,
        mean_iterations: None,
        max_iterations: None,
    };
    if n == 0 {
        return s;
    }
    let mut l2 = 0.0;
    let mut scaled = 0.0;
    for (o, _) in &ok {
        let k = o.errors.len() as f64;
        l2 += o.errors.iter().map(|e| e.0).sum::<f64>() / k;
        scaled += o.errors.iter().map(|e| e.0 / e.1 as f64).sum::<f64>() / k;
    }
    s.mean_l2_error = l2 / n as f64;
    s.mean_scaled_error = scaled / n as f64;
    if n > 1 {
        let dim = ok[0].0.deviation.len();
        let mut total = 0.0;
        for i in 0..dim {
            let mean = ok.iter().map(|(o, _)| o.deviation[i]).sum::<f64>() / n as f64;
            let var = ok.iter().map(|(o, _)| (o.deviation[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            total += var.sqrt();
        }
        s.per_state_std = total / dim as f64;
    }
    if ok.iter().any(|(o, _)| o.identified.is_some()) {
        for (o, mask) in &ok {
            let found = o.identified.as_deref().unwrap_or(&[]);
            let tp = found.iter().filter(|&&r| mask[r]).count();
            s.true_positives += tp;
            s.false_positives += found.len() - tp;
            s.false_negatives += mask.iter().filter(|&&b| b).count() - tp;
        }
        let (tp, fp, fn_) = (s.true_positives as f64, s.false_positives as f64, s.false_negatives as f64);
        s.precision = (tp + fp > 0.0).then(|| tp / (tp + fp));
        s.recall = (tp + fn_ > 0.0).then(|| tp / (tp + fn_));
    }
    let iters: Vec<usize> = ok.iter().filter_map(|(o, _)| o.iterations).collect();
    if !iters.is_empty() {
        s.mean_iterations = Some(iters.iter().sum::<usize>() as f64 / iters.len() as f64);
        s.max_iterations = iters.iter().copied().max();
    }
    s
}

/// Runs every estimator on `trials` independent realizations. Trials run
/// in parallel; aggregation is in trial order, so results do not depend on
/// scheduling.
pub fn monte_carlo(
    setup: &Setup,
    scenario: &Scenario,
    estimators: &[Estimator],
    trials: usize,
    seed: u64,
    settings: &EstimatorSettings,
) -> Result<MonteCarloReport, ExperimentError> {
    let sets: Vec<MeasurementSet> = (0..trials as u64)
        .into_par_iter()
        .map(|t| setup.measurements(scenario, trial_seed(seed, t)))
        .collect::<Result<_, _>>()?;
    let per_trial: Vec<Vec<Result<Outcome, EstimationError>>> = sets
        .par_iter()
        .map(|set| estimators.iter().map(|&e| estimate(setup, set, e, settings)).collect())
        .collect();
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let results: Vec<(Result<Outcome, EstimationError>, &[bool])> = per_trial
                .iter()
                .zip(&sets)
                .map(|(r, set)| (r[j].clone(), set.bad_mask.as_slice()))
                .collect();
            summarize(e, &results)
        })
        .collect();
    Ok(MonteCarloReport { scenario: scenario.name.clone(), trials, seed, estimators: summaries })
}

#[derive(Debug, Clone)]
pub struct DecentralizedRun {
    pub report: RunReport,
    /// Bus-wise mean of the area estimates.
    pub stitched: Vec<f64>,
    /// Centralized counterpart: least squares, or Huber in robust mode.
    pub central: Vec<f64>,
    pub wall_time: Duration,
}

pub fn run_decentralized(
    setup: &Setup,
    set: &MeasurementSet,
    config: AdmmConfig,
    transport: &mut dyn Transport,
    settings: &EstimatorSettings,
) -> Result<DecentralizedRun, ExperimentError> {
    let h = setup.model.h();
    let central = match config.mode {
        Mode::Lse => solve_wls(h, &set.z).x,
        Mode::Robust => {
            huber_estimate(h, &set.z, config.lambda, settings.huber_tol, settings.huber_max_iter)?.x
        }
    };
    let start = Instant::now();
    let problems = admm::build_problems(&setup.model, &setup.views, &set.z, config.c)?;
    let refs = References { central: Some(&central), truth: Some(&set.true_state) };
    let report = admm::run(problems, config, transport, refs).map_err(|e| ExperimentError::Aborted(Box::new(e)))?;
    let wall_time = start.elapsed();
    let stitched = admm::stitch(&setup.views, &report.estimates, setup.case.bus_count());
    Ok(DecentralizedRun { report, stitched, central, wall_time })
}
