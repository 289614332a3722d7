use thiserror::Error;

use crate::policy::{Coefficient, Queue};

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy coefficients must be non-positive: {}", join(.0))]
    PositiveCoefficients(Vec<Coefficient>),
    #[error("priority factor for {queue} must be positive, got {value}")]
    NonPositiveFactor { queue: Queue, value: f64 },
    #[error("threshold {name} must be non-negative, got {value}")]
    NegativeThreshold { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("mean must be positive and finite, got {0}")]
    BadMean(f64),
    #[error("erlang shape must be at least 1")]
    BadShape,
    #[error("uniform bounds must satisfy 0 <= lo < hi, got lo={lo} hi={hi}")]
    BadBounds { lo: f64, hi: f64 },
    #[error("uniform mean {mean} does not match (lo+hi)/2 = {mid}")]
    UniformMeanMismatch { mean: f64, mid: f64 },
    #[error("distribution '{0}' needs field '{1}'")]
    MissingField(&'static str, &'static str),
}

/// Problems with a [`SystemConfig`](crate::config::SystemConfig). A config
/// may carry several at once.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigIssue {
    #[error("mu must be positive, got {0}")]
    Mu(f64),
    #[error("rho{} must be non-negative, got {value}", .queue.number())]
    Rho { queue: Queue, value: f64 },
    #[error("service: {0}")]
    Service(DistributionError),
    #[error("service mean {got} must equal 1/mu = {expected}")]
    ServiceMean { got: f64, expected: f64 },
    #[error("switchover {}: {err}", .queue.number())]
    Switchover { queue: Queue, err: DistributionError },
    #[error("policy: {0}")]
    Policy(PolicyError),
    #[error("horizon must be positive")]
    Horizon,
    #[error("buffer_cap must be at least 1")]
    BufferCap,
    #[error("initial count {count} exceeds buffer_cap {cap}")]
    InitialAboveCap { count: u64, cap: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {}", join(.0))]
pub struct ConfigError(pub Vec<ConfigIssue>);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no further events can occur at t={0}; the server is waiting forever")]
    Stalled(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("not enough cycles: need more than {needed}, have {have}")]
    TooFewCycles { needed: usize, have: usize },
    #[error("not enough regenerations: need {needed}, observed {have}")]
    TooFewRegenerations { needed: usize, have: usize },
    #[error("batch means needs at least {min} batches, got {got}")]
    TooFewBatches { min: usize, got: usize },
    #[error("series of length {len} is shorter than the {batches} requested batches")]
    SeriesTooShort { len: usize, batches: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("eta{} = {value} is not positive; visit-time expressions do not apply", .queue.number())]
    NonPositiveEta { queue: Queue, value: f64 },
    #[error("fixed point undefined: {0}")]
    Singular(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle requires exponential {0}")]
    NotExponential(&'static str),
    #[error("buffer cap must be at least {min}, got {got}")]
    CapTooSmall { min: u64, got: u64 },
    #[error("generator is reducible or singular: {0}")]
    Singular(String),
    #[error("stationary residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("unstable vacation model: rho = {0}")]
    Unstable(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("bounds admit no policy with alphaC[1]*alphaC[2] < 1")]
    EmptyStableRegion,
    #[error("invalid bounds for {0}: need lo <= hi <= 0")]
    BadBounds(Coefficient),
    #[error("policy is not certified stable: {0}")]
    Unstable(String),
    #[error("alpha grid value {0} must be non-positive")]
    BadGridValue(f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}
