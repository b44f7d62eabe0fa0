//! Scenario files: TOML with `[[agents]]`, `[target]`, `[controller]`,
//! `[reference]`, `[network]` and `[sim]` sections. SI units throughout.

use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use swarmtrack_core::{
    AgentInit, ControllerGains, DelayModel, EngineError, NetworkConfig, NetworkMode, PlanarVector,
    ReferenceMode, ReferenceProgram, ScenarioConfig, SpacingMode, TargetMotion, TargetProgram,
    WeightFunction,
};
use toml::Spanned;

/// Offset added to the run seed when the network section gives no seed of its own.
pub const NETWORK_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioErrorKind {
    Io,
    Syntax,
    Invalid,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", self.render())]
pub struct ScenarioError {
    pub kind: ScenarioErrorKind,
    pub source_name: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn render(&self) -> String {
        match self.line {
            Some(line) => format!("{}:{}: {}", self.source_name, line, self.message),
            None => format!("{}: {}", self.source_name, self.message),
        }
    }
}

/// A parsed scenario plus the analysis settings that live beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: ScenarioConfig,
    /// Statistics in the summary skip `t < transient`.
    pub transient: f64,
    /// Whether `[network]` fixed its own seed.
    pub network_seed_fixed: bool,
}

impl Scenario {
    /// Replaces the run seed, and the network seed unless the file pinned it.
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
        if let NetworkMode::Broadcast(cfg) = &mut self.config.network {
            if !self.network_seed_fixed {
                cfg.seed = seed.wrapping_add(NETWORK_SEED_OFFSET);
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    agents: Vec<Spanned<RawAgent>>,
    #[serde(default)]
    target: Option<Spanned<RawTarget>>,
    controller: Spanned<RawController>,
    reference: Spanned<RawReference>,
    #[serde(default)]
    network: Option<Spanned<RawNetwork>>,
    sim: Spanned<RawSim>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    x: f64,
    y: f64,
    heading: f64,
    speed: Spanned<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "program", rename_all = "snake_case", deny_unknown_fields)]
enum RawTarget {
    Stationary {
        x: f64,
        y: f64,
    },
    ConstantVelocity {
        x: f64,
        y: f64,
        vx: f64,
        vy: f64,
    },
    Turning {
        x: f64,
        y: f64,
        speed: f64,
        kappa: f64,
        #[serde(default)]
        heading: f64,
    },
    Waypoints {
        x: f64,
        y: f64,
        waypoints: Vec<[f64; 2]>,
        speed: f64,
        #[serde(default)]
        dwell: f64,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawSpacing {
    Off,
    Beacon,
    BeaconProjected,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    gamma: f64,
    omega0: f64,
    spacing_mode: RawSpacing,
    #[serde(default = "yes")]
    feedforward: bool,
    #[serde(default)]
    u_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum RawReference {
    Track {
        weight: RawWeight,
    },
    Constant {
        vx: f64,
        vy: f64,
    },
    Turning {
        speed: f64,
        kappa: f64,
        #[serde(default)]
        heading: f64,
    },
    Varying {
        speed: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        kappa: f64,
        #[serde(default)]
        heading: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawWeight {
    Constant { value: f64 },
    Distance { scale: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum RawNetwork {
    GroundTruth,
    Broadcast {
        #[serde(default = "ten")]
        agent_rate: f64,
        #[serde(default = "five")]
        target_rate: f64,
        #[serde(default)]
        loss: f64,
        #[serde(default)]
        delay: Option<f64>,
        #[serde(default)]
        delay_min: Option<f64>,
        #[serde(default)]
        delay_max: Option<f64>,
        #[serde(default = "one")]
        max_delay: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        extrapolate: bool,
        #[serde(default)]
        staleness_budget: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: f64,
    duration: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    disturbance: Option<f64>,
    #[serde(default)]
    allow_infeasible: bool,
    #[serde(default)]
    transient: f64,
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn five() -> f64 {
    5.0
}
fn ten() -> f64 {
    10.0
}

/// Options applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub seed: Option<u64>,
    pub allow_infeasible: bool,
}

pub fn parse_scenario(path: &Path, opts: ParseOptions) -> Result<Scenario, ScenarioError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError {
        kind: ScenarioErrorKind::Io,
        source_name: name.clone(),
        line: None,
        message: e.to_string(),
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_scenario_str(&text, &name, &stem, opts)
}

/// Parses scenario text. `source_name` prefixes error messages and
/// `default_name` is used when the file sets no `name`.
pub fn parse_scenario_str(
    text: &str,
    source_name: &str,
    default_name: &str,
    opts: ParseOptions,
) -> Result<Scenario, ScenarioError> {
    let err = |kind, span: Option<Range<usize>>, message: String| ScenarioError {
        kind,
        source_name: source_name.to_string(),
        line: span.map(|s| line_of(text, s.start)),
        message,
    };
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        err(
            ScenarioErrorKind::Syntax,
            e.span(),
            e.message().trim_end().to_string(),
        )
    })?;

    if raw.agents.is_empty() {
        return Err(err(
            ScenarioErrorKind::Invalid,
            None,
            "scenario must define at least one agent".into(),
        ));
    }
    let mut agents = Vec::with_capacity(raw.agents.len());
    for (k, a) in raw.agents.iter().enumerate() {
        let speed = *a.get_ref().speed.get_ref();
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(err(
                ScenarioErrorKind::Invalid,
                Some(a.get_ref().speed.span()),
                format!("agent {}: speed must be positive and finite, got {speed}", k + 1),
            ));
        }
        let a = a.get_ref();
        agents.push(AgentInit {
            position: PlanarVector::new(a.x, a.y),
            heading: a.heading,
            speed,
        });
    }

    let c = raw.controller.get_ref();
    let spacing = match c.spacing_mode {
        RawSpacing::Off => SpacingMode::Off,
        RawSpacing::Beacon => SpacingMode::Beacon,
        RawSpacing::BeaconProjected => SpacingMode::BeaconProjected,
    };
    let controller_err =
        |e: swarmtrack_core::ControllerError| err(ScenarioErrorKind::Invalid, Some(raw.controller.span()), e.to_string());
    let gains = ControllerGains::new(c.gamma, c.omega0, spacing)
        .and_then(|g| g.with_u_max(c.u_max))
        .map_err(controller_err)?
        .with_feedforward(c.feedforward);

    let (reference_mode, weight) = match raw.reference.get_ref() {
        RawReference::Track { weight } => (
            ReferenceMode::TargetTracking,
            match *weight {
                RawWeight::Constant { value } => WeightFunction::Constant(value),
                RawWeight::Distance { scale } => WeightFunction::DistanceDependent { scale },
            },
        ),
        RawReference::Constant { vx, vy } => (
            ReferenceMode::ConstantRef(PlanarVector::new(*vx, *vy)),
            WeightFunction::Constant(1.0),
        ),
        RawReference::Turning { speed, kappa, heading } => (
            ReferenceMode::Program(ReferenceProgram::Turning {
                speed: *speed,
                kappa: *kappa,
                heading: *heading,
            }),
            WeightFunction::Constant(1.0),
        ),
        RawReference::Varying {
            speed,
            amplitude,
            frequency,
            kappa,
            heading,
        } => (
            ReferenceMode::Program(ReferenceProgram::Varying {
                speed: *speed,
                amplitude: *amplitude,
                frequency: *frequency,
                kappa: *kappa,
                heading: *heading,
            }),
            WeightFunction::Constant(1.0),
        ),
    };

    let target = match &raw.target {
        None => TargetProgram::stationary(PlanarVector::ZERO),
        Some(t) => {
            let (start, motion) = match t.get_ref() {
                RawTarget::Stationary { x, y } => (
                    PlanarVector::new(*x, *y),
                    TargetMotion::ConstantVelocity {
                        velocity: PlanarVector::ZERO,
                    },
                ),
                RawTarget::ConstantVelocity { x, y, vx, vy } => (
                    PlanarVector::new(*x, *y),
                    TargetMotion::ConstantVelocity {
                        velocity: PlanarVector::new(*vx, *vy),
                    },
                ),
                RawTarget::Turning {
                    x,
                    y,
                    speed,
                    kappa,
                    heading,
                } => (
                    PlanarVector::new(*x, *y),
                    TargetMotion::Turning {
                        speed: *speed,
                        kappa: *kappa,
                        heading: *heading,
                    },
                ),
                RawTarget::Waypoints {
                    x,
                    y,
                    waypoints,
                    speed,
                    dwell,
                } => (
                    PlanarVector::new(*x, *y),
                    TargetMotion::WaypointPath {
                        waypoints: waypoints.iter().map(|w| PlanarVector::new(w[0], w[1])).collect(),
                        speed: *speed,
                        dwell: *dwell,
                    },
                ),
            };
            TargetProgram::new(start, motion)
                .map_err(|e| err(ScenarioErrorKind::Invalid, Some(t.span()), e.to_string()))?
        }
    };

    let s = raw.sim.get_ref();
    let mut network_seed_fixed = false;
    let network = match raw.network.as_ref().map(|n| (n.get_ref(), n.span())) {
        None | Some((RawNetwork::GroundTruth, _)) => NetworkMode::GroundTruth,
        Some((
            RawNetwork::Broadcast {
                agent_rate,
                target_rate,
                loss,
                delay,
                delay_min,
                delay_max,
                max_delay,
                seed,
                extrapolate,
                staleness_budget,
            },
            span,
        )) => {
            let delay = match (delay, delay_min, delay_max) {
                (Some(d), None, None) => DelayModel::Fixed(*d),
                (None, None, None) => DelayModel::Fixed(0.0),
                (None, Some(min), Some(max)) => DelayModel::Uniform { min: *min, max: *max },
                _ => {
                    return Err(err(
                        ScenarioErrorKind::Invalid,
                        Some(span),
                        "give either `delay` or both `delay_min` and `delay_max`".into(),
                    ))
                }
            };
            network_seed_fixed = seed.is_some();
            NetworkMode::Broadcast(NetworkConfig {
                agent_rate: *agent_rate,
                target_rate: *target_rate,
                loss_probability: *loss,
                delay,
                max_delay: *max_delay,
                seed: seed.unwrap_or(s.seed.wrapping_add(NETWORK_SEED_OFFSET)),
                extrapolate: *extrapolate,
                staleness_budget: *staleness_budget,
            })
        }
    };

    if !(s.transient >= 0.0 && s.transient.is_finite()) {
        return Err(err(
            ScenarioErrorKind::Invalid,
            Some(raw.sim.span()),
            format!("transient must be non-negative, got {}", s.transient),
        ));
    }

    let mut config = ScenarioConfig::new(agents, gains, reference_mode);
    config.target = target;
    config.weight = weight;
    config.network = network;
    config.dt = s.dt;
    config.duration = s.duration;
    config.seed = s.seed;
    config.disturbance = s.disturbance;
    config.allow_infeasible = s.allow_infeasible || opts.allow_infeasible;

    let mut scenario = Scenario {
        name: raw.name.clone().unwrap_or_else(|| default_name.to_string()),
        config,
        transient: s.transient,
        network_seed_fixed,
    };
    if let Some(seed) = opts.seed {
        scenario.set_seed(seed);
    }

    if let Err(e) = scenario.config.validate() {
        let span = match &e {
            EngineError::Infeasible(_) => {
                return Err(infeasible_error(&raw, text, source_name, &e));
            }
            EngineError::Dynamics(_) => None,
            EngineError::Reference(_) => Some(raw.reference.span()),
            EngineError::Controller(_) => Some(raw.controller.span()),
            EngineError::Network(_) | EngineError::RateAboveStepRate { .. } => {
                raw.network.as_ref().map(|n| n.span())
            }
            EngineError::InvalidTiming { .. } => Some(raw.sim.span()),
            EngineError::Analysis(_) => None,
        };
        return Err(err(ScenarioErrorKind::Invalid, span, e.to_string()));
    }
    Ok(scenario)
}

/// Points at the speed entries that break the feasibility conditions.
fn infeasible_error(raw: &RawScenario, text: &str, source_name: &str, e: &EngineError) -> ScenarioError {
    let speeds: Vec<f64> = raw.agents.iter().map(|a| *a.get_ref().speed.get_ref()).collect();
    let v_min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = speeds.iter().copied().fold(0.0, f64::max);
    let mut lines: Vec<usize> = raw
        .agents
        .iter()
        .filter(|a| {
            let v = *a.get_ref().speed.get_ref();
            v == v_min || v == v_max
        })
        .map(|a| line_of(text, a.get_ref().speed.span().start))
        .collect();
    lines.dedup();
    let listed = lines.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
    ScenarioError {
        kind: ScenarioErrorKind::Infeasible,
        source_name: source_name.to_string(),
        line: lines.first().copied(),
        message: format!(
            "{e} (speeds on lines {listed}); set `allow_infeasible = true` under [sim] or pass --allow-infeasible to run anyway"
        ),
    }
}

/// 1-based line containing byte `offset`.
pub fn line_of(text: &str, offset: usize) -> usize {
    let end = offset.min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}
