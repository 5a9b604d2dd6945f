mod common;

use dpsse::case_io::{parse_case, write_case};
use dpsse::experiments::{run_decentralized, EstimatorSettings};
use dpsse::formats::{BadMeters, PartitionFile, PlanFile};
use dpsse_core::admm::{AdmmConfig, LossyTransport};
use dpsse_core::measurement::MeterKind;

#[test]
fn real_cases_survive_write_and_reparse() {
    for name in ["ieee14.m", "ieee118.m", "ieee300.m"] {
        let case = common::case(name);
        let text = write_case(&case);
        let again = parse_case(&text).unwrap();
        assert_eq!(again, case, "{name}");
        assert_eq!(write_case(&again), text, "{name}");
    }
}

#[test]
fn plan_describe_resolves_to_same_plan() {
    for (case, plan) in [("ieee14.m", "ieee14_fig1_plan.json"), ("ieee118.m", "ieee118_plan.json")] {
        let c = common::case(case);
        let p = common::plan(plan, &c);
        let file = PlanFile::describe(&p, &c, None);
        let text = serde_json::to_string(&file).unwrap();
        assert_eq!(dpsse::formats::parse_plan(&text, &c).unwrap(), p);
    }
}

#[test]
fn partition_describe_resolves_to_same_assignment() {
    let c = common::case("ieee118.m");
    let a = common::partition("ieee118_partition.json", &c);
    let text = serde_json::to_string(&PartitionFile::describe(&a, &c)).unwrap();
    assert_eq!(dpsse::formats::parse_partition(&text, &c).unwrap(), a);
}

#[test]
fn fixed_scenario_names_plan_meters() {
    let setup = common::ieee14();
    let s = common::scenario("ieee14_s2", &setup);
    let BadMeters::Fixed(idx) = &s.bad else { panic!("expected fixed meters") };
    assert_eq!(idx.len(), 2);
    let sites: Vec<String> = idx
        .iter()
        .map(|&m| match setup.plan.meters()[m].kind {
            MeterKind::VoltagePhasor { bus } => format!("V{}", setup.case.bus_id(bus)),
            MeterKind::CurrentPhasor { branch, .. } => {
                let br = &setup.case.branches()[branch];
                format!("I{}-{}", br.from_bus, br.to_bus)
            }
        })
        .collect();
    assert_eq!(sites, ["I4-7", "V5"]);
    let set = setup.measurements(&s, 1).unwrap();
    assert_eq!(set.bad_rows().len(), 4);
}

#[test]
fn light_message_loss_still_reaches_central_solution() {
    let setup = common::ieee14();
    let clean = common::scenario("ieee14_s0", &setup);
    let set = setup.measurements(&clean, 3).unwrap();
    let config = AdmmConfig { tol: 0.0, max_iter: 3000, ..AdmmConfig::default() };
    let run = run_decentralized(&setup, &set, config, &mut LossyTransport::new(0.1, 17), &EstimatorSettings::default())
        .unwrap();
    let last = run.report.records.iter().rev().take(setup.views.len());
    for r in last {
        assert!(r.e_kc.unwrap() < 1e-4, "area {} e_kc {:?}", r.area, r.e_kc);
    }
}
