#![allow(dead_code)]

use dpsse_core::grid::{build_admittances, BranchRecord, BusRecord, GridCase};
use dpsse_core::measurement::{build_model, random_plan, simulate, whiten, MeasurementModel, MeasurementSet, MeterPlan, Noise};
use dpsse_core::partition::{build_views, AreaAssignment, AreaView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub case: GridCase,
    pub plan: MeterPlan,
    pub model: MeasurementModel,
    pub assignment: AreaAssignment,
    pub views: Vec<AreaView>,
}

/// Ring of `n` buses plus a chord every fourth bus, with random line data
/// and voltages near nominal.
pub fn ring_case(n: usize, seed: u64) -> GridCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses = (1..=n as u32)
        .map(|id| BusRecord {
            id,
            voltage_mag: rng.random_range(0.95..1.06),
            voltage_ang: rng.random_range(-20.0..5.0),
        })
        .collect();
    let mut line = |a: usize, b: usize| BranchRecord {
        from_bus: a as u32,
        to_bus: b as u32,
        r: rng.random_range(0.005..0.05),
        x_react: rng.random_range(0.05..0.3),
        b_charge: rng.random_range(0.0..0.05),
        tap: 1.0,
    };
    let mut branches: Vec<BranchRecord> = (1..=n).map(|i| line(i, i % n + 1)).collect();
    for i in (1..=n).step_by(4) {
        let j = (i + n / 2 - 1) % n + 1;
        if j != i && j != i % n + 1 && i != j % n + 1 {
            branches.push(line(i, j));
        }
    }
    GridCase::new("ring", 100.0, buses, branches).unwrap()
}

/// `areas` contiguous arcs of the ring.
pub fn arcs(n: usize, areas: usize) -> AreaAssignment {
    let area_of_bus = (0..n).map(|b| b * areas / n).collect();
    AreaAssignment::new(area_of_bus, (1..=areas).map(|k| k.to_string()).collect()).unwrap()
}

pub fn fixture(n: usize, areas: usize, seed: u64) -> Fixture {
    let case = ring_case(n, seed);
    let plan = random_plan(&case, n / 2, n + n / 2, seed, None).unwrap();
    let adm = build_admittances(&case).unwrap();
    let model = whiten(&build_model(&case, &adm, &plan).unwrap(), &plan).unwrap();
    let assignment = arcs(n, areas);
    let views = build_views(&case, &model, &plan, &assignment).unwrap();
    Fixture { case, plan, model, assignment, views }
}

impl Fixture {
    pub fn measure(&self, seed: u64) -> MeasurementSet {
        simulate(&self.model, &self.case.true_state(), seed, Noise::Gaussian).unwrap()
    }
}
