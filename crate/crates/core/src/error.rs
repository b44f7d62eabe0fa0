use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("agent {id}: speed must be positive and finite, got {speed}")]
    InvalidSpeed { id: usize, speed: f64 },
    #[error("agent {id}: non-finite position or heading")]
    NonFiniteState { id: usize },
    #[error("swarm needs at least one agent")]
    EmptySwarm,
    #[error("agent ids must be contiguous from 1: expected {expected}, found {found}")]
    BadAgentId { expected: usize, found: usize },
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("expected {expected} heading-rate commands, got {found}")]
    ControlLength { expected: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("waypoint path needs at least one waypoint")]
    EmptyWaypoints,
    #[error("{what} must be {requirement}, got {value}")]
    InvalidParameter {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("{what} must be positive and finite, got {value}")]
    NonPositiveGain { what: &'static str, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("speeds must be non-empty")]
    NoSpeeds,
    #[error("speed of agent {index} must be positive and finite, got {speed}")]
    InvalidSpeed { index: usize, speed: f64 },
    #[error("m = {m} is out of range for {n} agents")]
    GroupSizeOutOfRange { m: usize, n: usize },
    #[error("velocity error is zero: this is the desired equilibrium")]
    DesiredEquilibrium,
    #[error("configuration is not a critical point: velocity error angle {error_angle} is not aligned with phase {phi}")]
    NotCritical { phi: f64, error_angle: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("{what} must be positive and finite, got {value}")]
    InvalidRate { what: &'static str, value: f64 },
    #[error("loss probability must lie in [0, 1), got {0}")]
    InvalidLoss(f64),
    #[error("delay {delay} must be non-negative and at most the maximum {max}")]
    InvalidDelay { delay: f64, max: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("scenario is infeasible: {0}")]
    Infeasible(String),
    #[error("{what} must be positive and finite, got {value}")]
    InvalidTiming { what: &'static str, value: f64 },
    #[error("broadcast rate {rate} Hz is faster than the integration rate {max} Hz")]
    RateAboveStepRate { rate: f64, max: f64 },
}
