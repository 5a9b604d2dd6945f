//! JSON files: meter plans, partitions, scenarios and engine configuration.
//! All bus numbers are external ids.

use std::collections::BTreeMap;

use dpsse_core::admm::{AdmmConfig, Init, Mode};
use dpsse_core::grid::GridCase;
use dpsse_core::measurement::{Meter, MeterKind, MeterPlan, Terminal, CURRENT_SIGMA, VOLTAGE_SIGMA};
use dpsse_core::partition::AreaAssignment;
use dpsse_core::{MeasurementError, PartitionError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("meter {index}: no bus {bus}")]
    UnknownBus { index: usize, bus: u32 },
    #[error("meter {index}: no branch {from}-{to} (circuit {circuit})")]
    UnknownBranch { index: usize, from: u32, to: u32, circuit: usize },
    #[error("bus {0} appears in more than one area")]
    BusInTwoAreas(u32),
    #[error("partition references unknown bus {0}")]
    PartitionUnknownBus(u32),
    #[error("bus {0} is not assigned to any area")]
    Unassigned(u32),
    #[error("scenario meter {0} is not in the plan")]
    MeterNotInPlan(usize),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndSpec {
    From,
    To,
}

/// A meter location as written in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MeterSpec {
    Voltage {
        bus: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    /// The metered bus is `from` when `end` is `"from"`, else `to`. The pair
    /// may be listed in either orientation relative to the case file.
    Current {
        from: u32,
        to: u32,
        #[serde(default = "default_end")]
        end: EndSpec,
        /// 1-based index among parallel branches joining the pair.
        #[serde(default = "default_circuit", skip_serializing_if = "is_first_circuit")]
        circuit: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
}

fn default_end() -> EndSpec {
    EndSpec::From
}

fn default_circuit() -> usize {
    1
}

fn is_first_circuit(c: &usize) -> bool {
    *c == 1
}

impl MeterSpec {
    pub fn resolve(&self, case: &GridCase, index: usize) -> Result<Meter, FormatError> {
        match *self {
            MeterSpec::Voltage { bus, sigma } => {
                let b = case.bus_index(bus).ok_or(FormatError::UnknownBus { index, bus })?;
                Ok(Meter { kind: MeterKind::VoltagePhasor { bus: b }, sigma: sigma.unwrap_or(VOLTAGE_SIGMA) })
            }
            MeterSpec::Current { from, to, end, circuit, sigma } => {
                let missing = FormatError::UnknownBranch { index, from, to, circuit };
                let branch = *case
                    .find_branches(from, to)
                    .get(circuit.checked_sub(1).ok_or(FormatError::UnknownBranch { index, from, to, circuit })?)
                    .ok_or(missing)?;
                let metered = match end {
                    EndSpec::From => from,
                    EndSpec::To => to,
                };
                let terminal =
                    if case.branches()[branch].from_bus == metered { Terminal::From } else { Terminal::To };
                Ok(Meter {
                    kind: MeterKind::CurrentPhasor { branch, end: terminal },
                    sigma: sigma.unwrap_or(CURRENT_SIGMA),
                })
            }
        }
    }

    /// File form of a meter, oriented as the case branch, sigma omitted
    /// when it equals the default.
    pub fn describe(meter: &Meter, case: &GridCase) -> Self {
        match meter.kind {
            MeterKind::VoltagePhasor { bus } => MeterSpec::Voltage {
                bus: case.bus_id(bus),
                sigma: (meter.sigma != VOLTAGE_SIGMA).then_some(meter.sigma),
            },
            MeterKind::CurrentPhasor { branch, end } => {
                let br = &case.branches()[branch];
                let circuit = case.find_branches(br.from_bus, br.to_bus).iter().position(|&k| k == branch).unwrap() + 1;
                MeterSpec::Current {
                    from: br.from_bus,
                    to: br.to_bus,
                    end: match end {
                        Terminal::From => EndSpec::From,
                        Terminal::To => EndSpec::To,
                    },
                    circuit,
                    sigma: (meter.sigma != CURRENT_SIGMA).then_some(meter.sigma),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub meters: Vec<MeterSpec>,
}

impl PlanFile {
    pub fn resolve(&self, case: &GridCase) -> Result<MeterPlan, FormatError> {
        let meters = self
            .meters
            .iter()
            .enumerate()
            .map(|(i, m)| m.resolve(case, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MeterPlan::new(meters)?)
    }

    pub fn describe(plan: &MeterPlan, case: &GridCase, description: Option<String>) -> Self {
        Self { description, meters: plan.meters().iter().map(|m| MeterSpec::describe(m, case)).collect() }
    }
}

pub fn parse_plan(text: &str, case: &GridCase) -> Result<MeterPlan, FormatError> {
    serde_json::from_str::<PlanFile>(text)?.resolve(case)
}

/// Voltage at every bus and current at the from end of every branch.
pub fn default_plan(case: &GridCase) -> MeterPlan {
    let meters = (0..case.bus_count())
        .map(Meter::voltage)
        .chain((0..case.branches().len()).map(|k| Meter::current(k, Terminal::From)))
        .collect();
    MeterPlan::new(meters).expect("distinct sites")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub areas: BTreeMap<String, Vec<u32>>,
}

/// Labels that all parse as integers sort numerically, others lexically.
fn ordered_labels(areas: &BTreeMap<String, Vec<u32>>) -> Vec<String> {
    let mut labels: Vec<String> = areas.keys().cloned().collect();
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().unwrap());
    }
    labels
}

impl PartitionFile {
    pub fn resolve(&self, case: &GridCase) -> Result<AreaAssignment, FormatError> {
        let labels = ordered_labels(&self.areas);
        let mut area_of_bus: Vec<Option<usize>> = vec![None; case.bus_count()];
        for (k, label) in labels.iter().enumerate() {
            for &id in &self.areas[label] {
                let b = case.bus_index(id).ok_or(FormatError::PartitionUnknownBus(id))?;
                if area_of_bus[b].replace(k).is_some() {
                    return Err(FormatError::BusInTwoAreas(id));
                }
            }
        }
        let area_of_bus = area_of_bus
            .into_iter()
            .enumerate()
            .map(|(b, a)| a.ok_or(FormatError::Unassigned(case.bus_id(b))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AreaAssignment::new(area_of_bus, labels)?)
    }

    pub fn describe(assignment: &AreaAssignment, case: &GridCase) -> Self {
        let areas = assignment
            .labels()
            .iter()
            .enumerate()
            .map(|(k, l)| (l.clone(), assignment.owned_buses(k).iter().map(|&b| case.bus_id(b)).collect()))
            .collect();
        Self { areas }
    }
}

pub fn parse_partition(text: &str, case: &GridCase) -> Result<AreaAssignment, FormatError> {
    serde_json::from_str::<PartitionFile>(text)?.resolve(case)
}

fn default_factor() -> f64 {
    1.2
}

/// Bad-data scenario. `bad_meters` are fixed for every trial; with
/// `random_fraction` set, that share of all meters is drawn per trial instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub bad_meters: Vec<MeterSpec>,
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BadMeters {
    Fixed(Vec<usize>),
    RandomFraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub bad: BadMeters,
    pub factor: f64,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn clean() -> Self {
        Self { name: "S0".into(), bad: BadMeters::Fixed(Vec::new()), factor: 1.2, trials: None, seed: None }
    }
}

impl ScenarioFile {
    pub fn resolve(&self, case: &GridCase, plan: &MeterPlan) -> Result<Scenario, FormatError> {
        let bad = match self.random_fraction {
            Some(f) if !(0.0..=1.0).contains(&f) => {
                return Err(FormatError::Config(format!("random_fraction {f} outside [0, 1]")))
            }
            Some(f) => BadMeters::RandomFraction(f),
            None => {
                let mut idx = Vec::new();
                for (i, spec) in self.bad_meters.iter().enumerate() {
                    let m = spec.resolve(case, i)?;
                    idx.push(plan.position(m.kind).ok_or(FormatError::MeterNotInPlan(i))?);
                }
                BadMeters::Fixed(idx)
            }
        };
        Ok(Scenario { name: self.name.clone(), bad, factor: self.factor, trials: self.trials, seed: self.seed })
    }
}

pub fn parse_scenario(text: &str, case: &GridCase, plan: &MeterPlan) -> Result<Scenario, FormatError> {
    serde_json::from_str::<ScenarioFile>(text)?.resolve(case, plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    Lse,
    Robust,
}

/// JSON mirror of the engine configuration; absent fields keep defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub c: f64,
    pub lambda: f64,
    pub mode: ModeSpec,
    pub max_iter: usize,
    pub tol: f64,
    /// `"flat"`, or a state vector `[e_1, f_1, e_2, f_2, ...]`.
    pub init: serde_json::Value,
    pub record_every: usize,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let d = AdmmConfig::default();
        Self {
            c: d.c,
            lambda: d.lambda,
            mode: ModeSpec::Lse,
            max_iter: d.max_iter,
            tol: d.tol,
            init: serde_json::Value::String("flat".into()),
            record_every: d.record_every,
        }
    }
}

impl ConfigFile {
    pub fn to_config(&self) -> Result<AdmmConfig, FormatError> {
        let init = match &self.init {
            serde_json::Value::String(s) if s == "flat" => Init::Flat,
            serde_json::Value::Array(_) => Init::Vector(serde_json::from_value(self.init.clone())?),
            other => return Err(FormatError::Config(format!("unsupported init {other}"))),
        };
        let cfg = AdmmConfig {
            c: self.c,
            lambda: self.lambda,
            mode: match self.mode {
                ModeSpec::Lse => Mode::Lse,
                ModeSpec::Robust => Mode::Robust,
            },
            max_iter: self.max_iter,
            tol: self.tol,
            init,
            record_every: self.record_every,
        };
        cfg.validate().map_err(|e| FormatError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dpsse_core::grid::{BranchRecord, BusRecord};

    fn triangle() -> GridCase {
        let buses = (1..=3).map(|id| BusRecord { id, voltage_mag: 1.0, voltage_ang: 0.0 }).collect();
        let br = |f, t| BranchRecord { from_bus: f, to_bus: t, r: 0.01, x_react: 0.1, b_charge: 0.0, tap: 1.0 };
        GridCase::new("tri", 100.0, buses, vec![br(1, 2), br(2, 3), br(1, 3), br(1, 2)]).unwrap()
    }

    #[test]
    fn plan_resolves_orientation_and_circuits() {
        let case = triangle();
        let text = r#"{"meters":[
            {"type":"voltage","bus":2},
            {"type":"current","from":3,"to":2,"end":"from"},
            {"type":"current","from":1,"to":2,"circuit":2,"sigma":0.05}
        ]}"#;
        let plan = parse_plan(text, &case).unwrap();
        assert_eq!(plan.meters()[0], Meter::voltage(1));
        assert_eq!(plan.meters()[1], Meter::current(1, Terminal::To));
        assert_eq!(plan.meters()[2], Meter::current(3, Terminal::From).with_sigma(0.05));
        let again = PlanFile::describe(&plan, &case, None).resolve(&case).unwrap();
        assert_eq!(again, plan);
    }

    #[test]
    fn plan_errors() {
        let case = triangle();
        assert!(matches!(
            parse_plan(r#"{"meters":[{"type":"voltage","bus":9}]}"#, &case),
            Err(FormatError::UnknownBus { index: 0, bus: 9 })
        ));
        assert!(matches!(
            parse_plan(r#"{"meters":[{"type":"current","from":1,"to":2,"circuit":3}]}"#, &case),
            Err(FormatError::UnknownBranch { .. })
        ));
        assert!(matches!(parse_plan("{", &case), Err(FormatError::Json(_))));
    }

    #[test]
    fn partition_checks() {
        let case = triangle();
        let a = parse_partition(r#"{"areas":{"10":[3],"2":[1,2]}}"#, &case).unwrap();
        assert_eq!(a.labels(), &["2".to_string(), "10".to_string()]);
        assert_eq!(a.area_of_bus(), &[0, 0, 1]);
        assert!(matches!(
            parse_partition(r#"{"areas":{"1":[1,2],"2":[2,3]}}"#, &case),
            Err(FormatError::BusInTwoAreas(2))
        ));
        assert!(matches!(parse_partition(r#"{"areas":{"1":[1,2]}}"#, &case), Err(FormatError::Unassigned(3))));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: ConfigFile = serde_json::from_str(r#"{"c": 100, "mode": "robust"}"#).unwrap();
        let cfg = cfg.to_config().unwrap();
        assert_eq!(cfg.c, 100.0);
        assert_eq!(cfg.mode, Mode::Robust);
        assert_eq!(cfg.max_iter, 2000);
        let bad: ConfigFile = serde_json::from_str(r#"{"c": -1}"#).unwrap();
        assert!(bad.to_config().is_err());
    }
}
