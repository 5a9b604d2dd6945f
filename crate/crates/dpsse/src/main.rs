use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsse::case_io::{parse_case, write_case};
use dpsse::experiments::{
    estimate, monte_carlo, run_decentralized, trial_seed, Estimator, EstimatorSettings, ExperimentError, Setup,
};
use dpsse::formats::{
    default_plan, parse_partition, parse_plan, parse_scenario, ConfigFile, PartitionFile, PlanFile, Scenario,
};
use dpsse::report::{write_curves, RunSummary};
use dpsse_core::admm::{AdmmConfig, LossyTransport, Mode, StrictTransport, Transport};
use dpsse_core::grid::{compose_grid, GridCase};
use dpsse_core::linalg::distance;
use dpsse_core::measurement::{compose_plan, random_plan, MeterPlan};
use dpsse_core::partition::AreaAssignment;

#[derive(Parser)]
#[command(name = "dpsse", version, about = "Decentralized robust PMU state estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Centralized estimate on one simulated measurement set.
    Estimate(EstimateArgs),
    /// Decentralized ADMM run; writes per-iteration error curves.
    Dpsse(DpsseArgs),
    /// Monte Carlo comparison of estimators.
    Montecarlo(MonteCarloArgs),
    /// Compose a large grid by replacing every bus of an outer case with a copy of an inner case.
    GenGrid(GenGridArgs),
    /// Draw a random topologically observable meter plan.
    GenPlan(GenPlanArgs),
    /// Parse inputs and print partition overlaps.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Inputs {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    /// Meter plan JSON; defaults to voltage at every bus and current at every branch's from end.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Scenario JSON; defaults to no bad data.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Measurement noise seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Wls,
    Huber,
    Lnrt,
    Genie,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, default_value_t = Method::Wls)]
    method: Method,
    #[arg(long, default_value_t = 1.34)]
    lambda: f64,
    /// Normalized-residual threshold for `lnrt`.
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Lse,
    Robust,
}

#[derive(Args)]
struct DpsseArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Partition JSON; defaults to a single area.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Engine configuration JSON; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stop when the shared-state disagreement drops below this.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Probability that each directed message is lost (reuses the last value).
    #[arg(long)]
    drop_prob: Option<f64>,
    /// CSV output path; a JSON summary goes next to it. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of lse,lnrt,huber,genie,internal,local.
    #[arg(long, default_value = "lse,lnrt,huber,genie")]
    estimators: String,
    #[arg(long, default_value_t = 1.34)]
    lambda: f64,
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenGridArgs {
    #[arg(long)]
    inner: PathBuf,
    #[arg(long)]
    outer: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_case: PathBuf,
    #[arg(long)]
    out_partition: PathBuf,
    /// Inner-grid plan to replicate per area (requires --out-plan).
    #[arg(long, requires = "out_plan")]
    inner_plan: Option<PathBuf>,
    #[arg(long)]
    out_plan: Option<PathBuf>,
}

#[derive(Args)]
struct GenPlanArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    voltage: usize,
    #[arg(long)]
    current: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also require every area to be observable from its internal meters.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    partition: Option<PathBuf>,
}

enum CliError {
    /// Bad invocation or unreadable file.
    Usage(String),
    /// Inputs parsed but are invalid.
    Data(String),
    /// The computation failed.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Grid(_) | ExperimentError::Measurement(_) | ExperimentError::Partition(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn data_err(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn load_case(path: &Path) -> Result<GridCase> {
    parse_case(&read(path)?).map_err(|e| data_err(path)(&e))
}

fn load_plan(path: Option<&Path>, case: &GridCase) -> Result<MeterPlan> {
    match path {
        Some(p) => parse_plan(&read(p)?, case).map_err(|e| data_err(p)(&e)),
        None => Ok(default_plan(case)),
    }
}

fn load_partition(path: Option<&Path>, case: &GridCase) -> Result<AreaAssignment> {
    match path {
        Some(p) => parse_partition(&read(p)?, case).map_err(|e| data_err(p)(&e)),
        None => Ok(AreaAssignment::single(case.bus_count())),
    }
}

fn load_scenario(path: Option<&Path>, case: &GridCase, plan: &MeterPlan) -> Result<Scenario> {
    match path {
        Some(p) => parse_scenario(&read(p)?, case, plan).map_err(|e| data_err(p)(&e)),
        None => Ok(Scenario::clean()),
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let case = load_case(&a.inputs.case)?;
    let plan = load_plan(a.inputs.plan.as_deref(), &case)?;
    let scenario = load_scenario(a.inputs.scenario.as_deref(), &case, &plan)?;
    let single = AreaAssignment::single(case.bus_count());
    let setup = Setup::new(case, plan, single)?;
    let set = setup.measurements(&scenario, a.inputs.seed)?;
    let estimator = match a.method {
        Method::Wls => Estimator::Lse,
        Method::Huber => Estimator::Huber,
        Method::Lnrt => Estimator::Lnrt,
        Method::Genie => Estimator::Genie,
    };
    let settings = EstimatorSettings { lambda: a.lambda, lnrt_threshold: a.threshold, ..Default::default() };
    let out = estimate(&setup, &set, estimator, &settings).map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary = serde_json::json!({
        "method": estimator,
        "scenario": scenario.name,
        "seed": a.inputs.seed,
        "l2_error": out.errors[0].0,
        "rank_deficient": out.flagged,
        "bad_rows": set.bad_rows(),
        "identified_rows": out.identified,
        "iterations": out.iterations,
    });
    emit(None, &json(&summary))
}

fn cmd_dpsse(a: DpsseArgs) -> Result<()> {
    let case = load_case(&a.inputs.case)?;
    let plan = load_plan(a.inputs.plan.as_deref(), &case)?;
    let assignment = load_partition(a.partition.as_deref(), &case)?;
    let scenario = load_scenario(a.inputs.scenario.as_deref(), &case, &plan)?;
    let file = match &a.config {
        Some(p) => serde_json::from_str::<ConfigFile>(&read(p)?).map_err(|e| data_err(p)(&e))?,
        None => ConfigFile::default(),
    };
    let mut config: AdmmConfig = file.to_config().map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(c) = a.c {
        config.c = c;
    }
    if let Some(l) = a.lambda {
        config.lambda = l;
    }
    if let Some(m) = a.mode {
        config.mode = match m {
            ModeArg::Lse => Mode::Lse,
            ModeArg::Robust => Mode::Robust,
        };
    }
    if let Some(m) = a.max_iter {
        config.max_iter = m;
    }
    if let Some(t) = a.tol {
        config.tol = t;
    }
    if let Some(r) = a.record_every {
        config.record_every = r;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let setup = Setup::new(case, plan, assignment)?;
    let set = setup.measurements(&scenario, a.inputs.seed)?;
    let mut transport: Box<dyn Transport> = match a.drop_prob {
        Some(p) if !(0.0..=1.0).contains(&p) => return Err(CliError::Usage(format!("--drop-prob {p} outside [0, 1]"))),
        Some(p) => Box::new(LossyTransport::new(p, trial_seed(a.inputs.seed, u64::MAX))),
        None => Box::new(StrictTransport),
    };
    let run = run_decentralized(&setup, &set, config, transport.as_mut(), &EstimatorSettings::default())?;
    let mut csv = Vec::new();
    write_curves(&mut csv, &run.report, &setup.assignment).map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary = RunSummary::new(
        &run.report,
        &setup.assignment,
        run.wall_time.as_secs_f64() * 1e3,
        distance(&run.stitched, &run.central),
    );
    match &a.out {
        Some(p) => {
            fs::write(p, &csv).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            write(&p.with_extension("json"), &json(&summary))?;
        }
        None => {
            io::stdout().write_all(&csv).map_err(|e| CliError::Runtime(e.to_string()))?;
            eprint!("{}", json(&summary));
        }
    }
    Ok(())
}

fn cmd_montecarlo(a: MonteCarloArgs) -> Result<()> {
    let case = load_case(&a.inputs.case)?;
    let plan = load_plan(a.inputs.plan.as_deref(), &case)?;
    let assignment = load_partition(a.partition.as_deref(), &case)?;
    let scenario = load_scenario(a.inputs.scenario.as_deref(), &case, &plan)?;
    let estimators = a
        .estimators
        .split(',')
        .map(|s| Estimator::parse(s.trim()).ok_or_else(|| CliError::Usage(format!("unknown estimator `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let trials = a.trials.or(scenario.trials).unwrap_or(200);
    let seed = scenario.seed.unwrap_or(a.inputs.seed);
    let setup = Setup::new(case, plan, assignment)?;
    let settings = EstimatorSettings { lambda: a.lambda, lnrt_threshold: a.threshold, ..Default::default() };
    let report = monte_carlo(&setup, &scenario, &estimators, trials, seed, &settings)?;
    emit(a.out.as_deref(), &json(&report))
}

fn cmd_gen_grid(a: GenGridArgs) -> Result<()> {
    let inner = load_case(&a.inner)?;
    let outer = load_case(&a.outer)?;
    let (case, assignment) = compose_grid(&inner, &outer, a.seed).map_err(|e| CliError::Data(e.to_string()))?;
    write(&a.out_case, &write_case(&case))?;
    write(&a.out_partition, &json(&PartitionFile::describe(&assignment, &case)))?;
    if let (Some(ip), Some(op)) = (&a.inner_plan, &a.out_plan) {
        let inner_plan = load_plan(Some(ip), &inner)?;
        let plan = compose_plan(&inner_plan, &inner, &case, outer.bus_count()).map_err(|e| CliError::Data(e.to_string()))?;
        write(op, &json(&PlanFile::describe(&plan, &case, None)))?;
    }
    println!("buses: {}\nbranches: {}\nareas: {}", case.bus_count(), case.branches().len(), assignment.area_count());
    Ok(())
}

fn cmd_gen_plan(a: GenPlanArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let masks = match &a.partition {
        Some(p) => Some(load_partition(Some(p), &case)?.masks()),
        None => None,
    };
    let plan = random_plan(&case, a.voltage, a.current, a.seed, masks.as_deref())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let note = format!(
        "random plan: {} voltage and {} current meters, seed {}{}",
        a.voltage,
        a.current,
        a.seed,
        if masks.is_some() { ", each area observable from its internal meters" } else { "" }
    );
    write(&a.out, &json(&PlanFile::describe(&plan, &case, Some(note))))
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let plan = load_plan(a.plan.as_deref(), &case)?;
    let assignment = load_partition(a.partition.as_deref(), &case)?;
    let setup = Setup::new(case, plan, assignment)?;
    let case = &setup.case;
    let rows = setup.model.row_count();
    println!("case: {}", case.name());
    println!("buses: {}", case.bus_count());
    println!("branches: {}", case.branches().len());
    println!("meters: {} ({} rows, redundancy {:.2})", setup.plan.len(), rows, rows as f64 / case.state_dim() as f64);
    println!("areas: {}", setup.assignment.area_count());
    let label = |k: usize| &setup.assignment.labels()[k];
    let ids = |buses: &[usize]| buses.iter().map(|&b| case.bus_id(b).to_string()).collect::<Vec<_>>().join(",");
    for v in &setup.views {
        println!(
            "area {}: owns {{{}}} state {{{}}} meters {}{}",
            label(v.k),
            ids(&v.owned),
            ids(&v.local_buses),
            v.meters.len(),
            if v.is_unmeasured() { " (no measurements)" } else { "" }
        );
    }
    for v in &setup.views {
        for link in v.neighbors.iter().filter(|l| l.area > v.k) {
            println!("shared {}-{}: {{{}}}", label(v.k), label(link.area), ids(&link.buses));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Dpsse(a) => cmd_dpsse(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::GenGrid(a) => cmd_gen_grid(a),
        Command::GenPlan(a) => cmd_gen_plan(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, msg) = match &e {
                CliError::Usage(m) => ("usage error", m),
                CliError::Data(m) => ("invalid input", m),
                CliError::Runtime(m) => ("runtime error", m),
            };
            eprintln!("dpsse: {kind}: {msg}");
            ExitCode::from(e.code())
        }
    }
}
