//! Centroid velocity and target tracking control for groups of constant-speed
//! unicycles, with a broadcast network simulator and analysis tools.

pub mod analysis;
pub mod controllers;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod netsim;
pub mod reference;

pub use analysis::{
    build_equilibrium, check_feasibility, classify_equilibrium, lyapunov_v, perturbation_oracle,
    tracking_metrics, EquilibriumSpec, FeasibilityReport, StabilityClass, StabilityVerdict,
};
pub use controllers::{
    combined_control, solve_feedforward, swarm_control, ControlInput, ControllerGains, FeedforwardSolution,
    SpacingMode,
};
pub use dynamics::{centroid, centroid_velocity, PlanarVector, SwarmState, VehicleState};
pub use engine::{run, run_oracle_centroid, AgentInit, NetworkMode, ReferenceMode, RunLog, ScenarioConfig, StepRecord};
pub use error::{AnalysisError, ControllerError, DynamicsError, EngineError, NetworkError, ReferenceError};
pub use netsim::{DelayModel, NetworkConfig, NetworkStats};
pub use reference::{ReferenceProgram, ReferenceSignal, TargetMotion, TargetProgram, WeightFunction};
