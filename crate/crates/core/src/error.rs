use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("branch {branch} references unknown bus {bus}")]
    UnknownBus { branch: usize, bus: u32 },
    #[error("branch {branch} connects bus {bus} to itself")]
    SelfLoop { branch: usize, bus: u32 },
    #[error("bus {bus} has a non-positive or non-finite voltage")]
    InvalidVoltage { bus: u32 },
    #[error("branch {0} has zero series impedance")]
    DegenerateBranch(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasurementError {
    #[error("meter {meter} references unknown bus index {bus}")]
    UnknownBus { meter: usize, bus: usize },
    #[error("meter {meter} references unknown branch index {branch}")]
    UnknownBranch { meter: usize, branch: usize },
    #[error("meter {meter} has non-positive sigma")]
    InvalidSigma { meter: usize },
    #[error("meter {meter} duplicates meter {first}")]
    DuplicateMeter { meter: usize, first: usize },
    #[error("model is already whitened")]
    AlreadyWhitened,
    #[error("model must be whitened first")]
    NotWhitened,
    #[error("meter index {0} out of range")]
    MeterOutOfRange(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot place {requested} distinct meters, only {available} sites")]
    PlanTooLarge { requested: usize, available: usize },
    #[error("no observable plan found after {0} draws")]
    NoObservablePlan(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("assignment covers {got} buses, grid has {expected}")]
    NotTotal { expected: usize, got: usize },
    #[error("bus index {bus} assigned to area {area}, only {areas} areas")]
    AreaOutOfRange { bus: usize, area: usize, areas: usize },
    #[error("area {0} owns no buses")]
    EmptyArea(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("system is unobservable (normal matrix is rank deficient)")]
    Unobservable,
    #[error("chi-square test needs more measurements than states ({m} <= {n})")]
    DegreesOfFreedom { m: usize, n: usize },
    #[error("confidence must lie in (0, 1), got {0}")]
    Confidence(f64),
    #[error("l0 search limited to tau0 <= 2, got {0}")]
    Tau0TooLarge(usize),
    #[error("l0 search needs {needed} subset solves, budget is {budget}")]
    CombinatorialBudget { needed: usize, budget: usize },
    #[error("too few measurements: {m} rows leave fewer than {n} after removing {tau0}")]
    TooFewRows { m: usize, n: usize, tau0: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmmError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("iteration {iteration}: no payload from area {sender} to area {receiver}")]
    Synchronization {
        iteration: usize,
        sender: usize,
        receiver: usize,
    },
    #[error("views and local models disagree: {0}")]
    Inconsistent(&'static str),
}
