//! Non-cooperating per-area estimators.
//!
//! *Internal*: each area solves least squares over its own buses using only
//! its rows that touch nothing else. *Local*: each area solves over its full
//! extended state with all of its rows. Neither exchanges anything.

use alloc::vec::Vec;

use crate::central::solve_wls;
use crate::measurement::MeasurementModel;
use crate::partition::{restrict_internal, restrict_model, AreaView};

#[derive(Debug, Clone, PartialEq)]
pub struct AreaEstimate {
    pub area: usize,
    /// Global buses covered by `x`, ascending.
    pub buses: Vec<usize>,
    pub x: Vec<f64>,
    pub rank_deficient: bool,
}

impl AreaEstimate {
    /// The true values of the covered states.
    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.buses.iter().flat_map(|&b| [global[2 * b], global[2 * b + 1]]).collect()
    }
}

pub fn internal_estimates(model: &MeasurementModel, views: &[AreaView], z: &[f64]) -> Vec<AreaEstimate> {
    views
        .iter()
        .map(|v| {
            let local = restrict_internal(model, v);
            let sol = solve_wls(&local.h, &local.select(z));
            AreaEstimate { area: v.k, buses: v.owned.clone(), x: sol.x, rank_deficient: sol.rank_deficient }
        })
        .collect()
}

pub fn local_estimates(model: &MeasurementModel, views: &[AreaView], z: &[f64]) -> Vec<AreaEstimate> {
    views
        .iter()
        .map(|v| {
            let local = restrict_model(model, v);
            let sol = solve_wls(&local.h, &local.select(z));
            AreaEstimate { area: v.k, buses: v.local_buses.clone(), x: sol.x, rank_deficient: sol.rank_deficient }
        })
        .collect()
}
