#![allow(dead_code)]

use std::path::PathBuf;

use dpsse::case_io::parse_case;
use dpsse::experiments::Setup;
use dpsse::formats::{parse_partition, parse_plan, parse_scenario, Scenario};
use dpsse_core::grid::GridCase;
use dpsse_core::measurement::MeterPlan;
use dpsse_core::partition::AreaAssignment;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(data(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn case(name: &str) -> GridCase {
    parse_case(&read(name)).unwrap()
}

pub fn plan(name: &str, case: &GridCase) -> MeterPlan {
    parse_plan(&read(name), case).unwrap()
}

pub fn partition(name: &str, case: &GridCase) -> AreaAssignment {
    parse_partition(&read(name), case).unwrap()
}

pub fn scenario(name: &str, setup: &Setup) -> Scenario {
    parse_scenario(&read(&format!("scenarios/{name}.json")), &setup.case, &setup.plan).unwrap()
}

/// IEEE 14 with the four-area partition and its meter plan.
pub fn ieee14() -> Setup {
    let c = case("ieee14.m");
    let p = plan("ieee14_fig1_plan.json", &c);
    let a = partition("ieee14_fig1_partition.json", &c);
    Setup::new(c, p, a).unwrap()
}

/// IEEE 118 with its three-area partition and random meter plan.
pub fn ieee118() -> Setup {
    let c = case("ieee118.m");
    let p = plan("ieee118_plan.json", &c);
    let a = partition("ieee118_partition.json", &c);
    Setup::new(c, p, a).unwrap()
}
