//! Control areas and the overlap bookkeeping between them.
//!
//! A meter belongs to the area owning the bus it sits on (the metered
//! terminal for currents). An area's state covers its own buses plus every
//! bus its meters touch, so tie-line currents pull foreign buses in.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::PartitionError;
use crate::grid::GridCase;
use crate::linalg::SparseMatrix;
use crate::measurement::{MeasurementModel, MeterKind, MeterPlan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaAssignment {
    area_of_bus: Vec<usize>,
    labels: Vec<String>,
}

impl AreaAssignment {
    pub fn new(area_of_bus: Vec<usize>, labels: Vec<String>) -> Result<Self, PartitionError> {
        let areas = labels.len();
        let mut seen = vec![false; areas];
        for (bus, &area) in area_of_bus.iter().enumerate() {
            if area >= areas {
                return Err(PartitionError::AreaOutOfRange { bus, area, areas });
            }
            seen[area] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(PartitionError::EmptyArea(k));
        }
        Ok(Self { area_of_bus, labels })
    }

    /// Every bus in one area labelled "1".
    pub fn single(buses: usize) -> Self {
        Self { area_of_bus: vec![0; buses], labels: vec![String::from("1")] }
    }

    pub fn area_of_bus(&self) -> &[usize] {
        &self.area_of_bus
    }

    pub fn area_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Buses owned by area `k`, ascending.
    pub fn owned_buses(&self, k: usize) -> Vec<usize> {
        (0..self.area_of_bus.len()).filter(|&b| self.area_of_bus[b] == k).collect()
    }

    /// Per-area membership masks.
    pub fn masks(&self) -> Vec<Vec<bool>> {
        (0..self.area_count())
            .map(|k| self.area_of_bus.iter().map(|&a| a == k).collect())
            .collect()
    }
}

/// Buses shared with one neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborLink {
    pub area: usize,
    /// Shared global bus indices, ascending; identical on both sides.
    pub buses: Vec<usize>,
    /// Position of each shared bus in this area's `local_buses`.
    pub local: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaView {
    pub k: usize,
    /// Buses owned by this area, ascending.
    pub owned: Vec<usize>,
    /// Global bus indices forming the local state, ascending.
    pub local_buses: Vec<usize>,
    /// Global meter indices collected by this area, in plan order.
    pub meters: Vec<usize>,
    /// Global measurement rows, ascending.
    pub rows: Vec<usize>,
    /// Neighbors ordered by area index.
    pub neighbors: Vec<NeighborLink>,
    /// Number of other areas holding each local bus.
    pub overlap: Vec<usize>,
}

impl AreaView {
    pub fn state_dim(&self) -> usize {
        2 * self.local_buses.len()
    }

    pub fn local_index(&self, bus: usize) -> Option<usize> {
        self.local_buses.binary_search(&bus).ok()
    }

    /// Diagonal of `D_k`, one entry per local state component.
    pub fn overlap_diagonal(&self) -> Vec<f64> {
        self.overlap.iter().flat_map(|&d| [d as f64, d as f64]).collect()
    }

    pub fn is_shared(&self, local_bus: usize) -> bool {
        self.overlap[local_bus] > 0
    }

    /// No meters: the area can only follow its neighbors.
    pub fn is_unmeasured(&self) -> bool {
        self.meters.is_empty()
    }

    pub fn neighbor(&self, area: usize) -> Option<&NeighborLink> {
        self.neighbors.iter().find(|n| n.area == area)
    }

    /// Local slice of a global vector.
    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.local_buses
            .iter()
            .flat_map(|&b| [global[2 * b], global[2 * b + 1]])
            .collect()
    }
}

fn meter_buses(case: &GridCase, kind: MeterKind) -> [usize; 2] {
    match kind {
        MeterKind::VoltagePhasor { bus } => [bus, bus],
        MeterKind::CurrentPhasor { branch, .. } => {
            let (f, t) = case.branch_terminals(branch);
            [f, t]
        }
    }
}

pub fn build_views(
    case: &GridCase,
    model: &MeasurementModel,
    plan: &MeterPlan,
    assignment: &AreaAssignment,
) -> Result<Vec<AreaView>, PartitionError> {
    let n = case.bus_count();
    if assignment.area_of_bus.len() != n {
        return Err(PartitionError::NotTotal { expected: n, got: assignment.area_of_bus.len() });
    }
    let areas = assignment.area_count();
    let mut holds = vec![vec![false; n]; areas];
    let mut meters = vec![Vec::new(); areas];
    for (b, &k) in assignment.area_of_bus.iter().enumerate() {
        holds[k][b] = true;
    }
    for (m, meter) in plan.meters().iter().enumerate() {
        let k = assignment.area_of_bus[meter.site_bus(case)];
        meters[k].push(m);
        for b in meter_buses(case, meter.kind) {
            holds[k][b] = true;
        }
    }
    // Holders of each bus, ascending by area.
    let mut holders = vec![Vec::new(); n];
    for (k, h) in holds.iter().enumerate() {
        for b in 0..n {
            if h[b] {
                holders[b].push(k);
            }
        }
    }

    let mut views = Vec::with_capacity(areas);
    for k in 0..areas {
        let local_buses: Vec<usize> = (0..n).filter(|&b| holds[k][b]).collect();
        let overlap = local_buses.iter().map(|&b| holders[b].len() - 1).collect();
        let mut shared: alloc::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (pos, &b) in local_buses.iter().enumerate() {
            for &l in &holders[b] {
                if l != k {
                    shared.entry(l).or_default().push(pos);
                }
            }
        }
        let neighbors = shared
            .into_iter()
            .map(|(area, local)| NeighborLink {
                area,
                buses: local.iter().map(|&p| local_buses[p]).collect(),
                local,
            })
            .collect();
        let rows = meters[k]
            .iter()
            .flat_map(|&m| model.meter_rows(m))
            .collect();
        views.push(AreaView {
            k,
            owned: assignment.owned_buses(k),
            local_buses,
            meters: meters[k].clone(),
            rows,
            neighbors,
            overlap,
        });
    }
    Ok(views)
}

/// An area's rows of `H`, columns compressed to its local state.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    pub h: SparseMatrix,
    /// Global row of each local row.
    pub rows: Vec<usize>,
}

impl LocalModel {
    pub fn select(&self, z: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&r| z[r]).collect()
    }
}

fn column_map(buses: &[usize], total_buses: usize) -> Vec<Option<usize>> {
    let mut map = vec![None; 2 * total_buses];
    for (pos, &b) in buses.iter().enumerate() {
        map[2 * b] = Some(2 * pos);
        map[2 * b + 1] = Some(2 * pos + 1);
    }
    map
}

pub fn restrict_model(model: &MeasurementModel, view: &AreaView) -> LocalModel {
    let total = model.state_dim() / 2;
    let h = model
        .h()
        .select_rows(&view.rows)
        .remap_columns(&column_map(&view.local_buses, total), view.state_dim());
    LocalModel { h, rows: view.rows.clone() }
}

/// Rows of the area touching only owned buses, over the owned-bus state.
pub fn restrict_internal(model: &MeasurementModel, view: &AreaView) -> LocalModel {
    let total = model.state_dim() / 2;
    let map = column_map(&view.owned, total);
    let h = model.h();
    let rows: Vec<usize> = view
        .rows
        .iter()
        .copied()
        .filter(|&r| h.row(r).0.iter().all(|&c| map[c].is_some()))
        .collect();
    let h = h.select_rows(&rows).remap_columns(&map, 2 * view.owned.len());
    LocalModel { h, rows }
}
