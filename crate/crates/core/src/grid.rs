//! Grid topology, branch admittances, and composed multi-area grids.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::GridError;
use crate::partition::AreaAssignment;

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    /// External bus number.
    pub id: u32,
    /// Per-unit voltage magnitude.
    pub voltage_mag: f64,
    /// Voltage angle in degrees.
    pub voltage_ang: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x_react: f64,
    /// Total line-charging susceptance.
    pub b_charge: f64,
    /// Off-nominal turns ratio on the from side.
    pub tap: f64,
}

/// Validated bus/branch model. Bus order defines the state order: bus at
/// position `i` owns state components `2i` (real) and `2i + 1` (imaginary).
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    name: String,
    base_mva: f64,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    index: BTreeMap<u32, usize>,
}

impl GridCase {
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<BusRecord>,
        mut branches: Vec<BranchRecord>,
    ) -> Result<Self, GridError> {
        let mut index = BTreeMap::new();
        for (pos, bus) in buses.iter().enumerate() {
            if !(bus.voltage_mag > 0.0) || !bus.voltage_ang.is_finite() {
                return Err(GridError::InvalidVoltage { bus: bus.id });
            }
            if index.insert(bus.id, pos).is_some() {
                return Err(GridError::DuplicateBus(bus.id));
            }
        }
        for (k, br) in branches.iter_mut().enumerate() {
            for end in [br.from_bus, br.to_bus] {
                if !index.contains_key(&end) {
                    return Err(GridError::UnknownBus { branch: k, bus: end });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(GridError::SelfLoop { branch: k, bus: br.from_bus });
            }
            if br.tap == 0.0 {
                br.tap = 1.0;
            }
        }
        Ok(Self {
            name: name.into(),
            base_mva,
            buses,
            branches,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[BusRecord] {
        &self.buses
    }

    pub fn branches(&self) -> &[BranchRecord] {
        &self.branches
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.buses.len()
    }

    /// Internal index of an external bus id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus_id(&self, index: usize) -> u32 {
        self.buses[index].id
    }

    /// Internal terminal indices `(from, to)` of a branch.
    pub fn branch_terminals(&self, branch: usize) -> (usize, usize) {
        let br = &self.branches[branch];
        (self.index[&br.from_bus], self.index[&br.to_bus])
    }

    /// Indices of branches joining the two external buses, in either
    /// orientation, in branch order.
    pub fn find_branches(&self, a: u32, b: u32) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| {
                (br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a)
            })
            .map(|(k, _)| k)
            .collect()
    }

    /// Rectangular voltages `(e_i, f_i)` from the stored magnitudes and angles.
    pub fn true_state(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.state_dim());
        for bus in &self.buses {
            let phasor = Complex64::from_polar(bus.voltage_mag, bus.voltage_ang.to_radians());
            x.push(phasor.re);
            x.push(phasor.im);
        }
        x
    }
}

/// π-model branch admittances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub branch: usize,
    pub y_series: Complex64,
    /// `j·b/2`, scaled by `1/tap²`.
    pub y_shunt_from: Complex64,
    /// `j·b/2`.
    pub y_shunt_to: Complex64,
    pub tap: f64,
}

impl BranchAdmittance {
    /// `(a, b)` such that the current leaving the from terminal is
    /// `a·V_from + b·V_to`.
    pub fn from_end_coefficients(&self) -> (Complex64, Complex64) {
        let t = self.tap;
        (
            self.y_series / (t * t) + self.y_shunt_from,
            -self.y_series / t,
        )
    }

    /// `(a, b)` such that the current leaving the to terminal is
    /// `a·V_from + b·V_to`.
    pub fn to_end_coefficients(&self) -> (Complex64, Complex64) {
        (-self.y_series / self.tap, self.y_series + self.y_shunt_to)
    }
}

pub fn build_admittances(case: &GridCase) -> Result<Vec<BranchAdmittance>, GridError> {
    case.branches()
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let z = Complex64::new(br.r, br.x_react);
            if br.r == 0.0 && br.x_react == 0.0 {
                return Err(GridError::DegenerateBranch(k));
            }
            let y_series = z.inv();
            if !y_series.re.is_finite() || !y_series.im.is_finite() {
                return Err(GridError::DegenerateBranch(k));
            }
            let half = Complex64::new(0.0, br.b_charge / 2.0);
            let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
            Ok(BranchAdmittance {
                branch: k,
                y_series,
                y_shunt_from: half / (tap * tap),
                y_shunt_to: half,
                tap,
            })
        })
        .collect()
}

/// Replaces every bus of `outer` with a copy of `inner`; each outer branch
/// becomes a tie line between uniformly drawn buses of the two copies.
///
/// Composed bus ids are `1..=|outer|·|inner|`, copy `a` occupying positions
/// `a·|inner| ..`. Copy `a` keeps the inner voltage magnitudes and shifts the
/// inner angles by the angle of outer bus `a`. Branches are ordered copy by
/// copy, followed by the tie lines in outer branch order.
pub fn compose_grid(
    inner: &GridCase,
    outer: &GridCase,
    seed: u64,
) -> Result<(GridCase, AreaAssignment), GridError> {
    let n_in = inner.bus_count();
    let n_out = outer.bus_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id_of = |area: usize, local: usize| (area * n_in + local + 1) as u32;

    let mut buses = Vec::with_capacity(n_in * n_out);
    for (a, ob) in outer.buses().iter().enumerate() {
        for (i, ib) in inner.buses().iter().enumerate() {
            buses.push(BusRecord {
                id: id_of(a, i),
                voltage_mag: ib.voltage_mag,
                voltage_ang: ib.voltage_ang + ob.voltage_ang,
            });
        }
    }
    let mut branches =
        Vec::with_capacity(n_out * inner.branches().len() + outer.branches().len());
    for a in 0..n_out {
        for (k, br) in inner.branches().iter().enumerate() {
            let (f, t) = inner.branch_terminals(k);
            branches.push(BranchRecord {
                from_bus: id_of(a, f),
                to_bus: id_of(a, t),
                ..br.clone()
            });
        }
    }
    for (k, br) in outer.branches().iter().enumerate() {
        let (fa, ta) = outer.branch_terminals(k);
        let f = rng.random_range(0..n_in);
        let t = rng.random_range(0..n_in);
        branches.push(BranchRecord {
            from_bus: id_of(fa, f),
            to_bus: id_of(ta, t),
            ..br.clone()
        });
    }
    let case = GridCase::new(
        format!("{}x{}", inner.name(), outer.name()),
        outer.base_mva(),
        buses,
        branches,
    )?;
    let area_of_bus = (0..n_out * n_in).map(|b| b / n_in).collect();
    let labels = outer.buses().iter().map(|b| format!("{}", b.id)).collect();
    let assignment = AreaAssignment::new(area_of_bus, labels).expect("composed assignment is total");
    Ok((case, assignment))
}
