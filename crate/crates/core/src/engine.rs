//! Fixed-step simulation loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{check_feasibility, FeasibilityReport};
use crate::controllers::{combined_control, saturate, swarm_control, ControlInput, ControllerGains};
use crate::dynamics::{centroid, centroid_velocity, order_parameter, step, PlanarVector, SwarmState};
use crate::error::EngineError;
use crate::netsim::{NetworkConfig, NetworkSim, NetworkStats};
use crate::reference::{
    reference_velocity, ReferenceDifferentiator, ReferenceProgram, ReferenceSignal, TargetMotion,
    TargetProgram, WeightFunction,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentInit {
    pub position: PlanarVector,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ReferenceMode {
    ConstantRef(PlanarVector),
    /// Starts heading along +x.
    TurningRef { speed: f64, kappa: f64 },
    Program(ReferenceProgram),
    /// Track the target through the weighted position error.
    TargetTracking,
}

impl ReferenceMode {
    pub fn program(&self) -> Option<ReferenceProgram> {
        match self {
            ReferenceMode::ConstantRef(velocity) => Some(ReferenceProgram::Constant { velocity: *velocity }),
            ReferenceMode::TurningRef { speed, kappa } => Some(ReferenceProgram::Turning {
                speed: *speed,
                kappa: *kappa,
                heading: 0.0,
            }),
            ReferenceMode::Program(p) => Some(p.clone()),
            ReferenceMode::TargetTracking => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NetworkMode {
    GroundTruth,
    Broadcast(NetworkConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub agents: Vec<AgentInit>,
    pub target: TargetProgram,
    pub weight: WeightFunction,
    pub gains: ControllerGains,
    pub reference_mode: ReferenceMode,
    pub network: NetworkMode,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Amplitude of uniform heading-rate noise added to every command.
    pub disturbance: Option<f64>,
    pub allow_infeasible: bool,
}

impl ScenarioConfig {
    pub fn new(agents: Vec<AgentInit>, gains: ControllerGains, reference_mode: ReferenceMode) -> Self {
        Self {
            agents,
            target: TargetProgram::stationary(PlanarVector::ZERO),
            weight: WeightFunction::Constant(1.0),
            gains,
            reference_mode,
            network: NetworkMode::GroundTruth,
            dt: 0.01,
            duration: 60.0,
            seed: 0,
            disturbance: None,
            allow_infeasible: false,
        }
    }

    pub fn initial_swarm(&self) -> Result<SwarmState, EngineError> {
        Ok(SwarmState::from_parts(
            self.agents.iter().map(|a| (a.position, a.heading, a.speed)),
            0.0,
        )?)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Reference speed bound used by the feasibility gate. In tracking mode
    /// it adds the initial pull `w(rho) rho` toward the target, which bounds
    /// the pull for all later distances up to the initial one.
    pub fn reference_speed_bound(&self) -> Result<f64, EngineError> {
        Ok(match self.reference_mode.program() {
            Some(p) => p.max_speed(),
            None => {
                let swarm = self.initial_swarm()?;
                let rho = (self.target.start() - centroid(&swarm)).norm();
                self.target.max_speed() + self.weight.eval(rho) * rho
            }
        })
    }

    /// Checks every parameter and returns the feasibility report.
    pub fn validate(&self) -> Result<FeasibilityReport, EngineError> {
        for (what, value) in [("dt", self.dt), ("duration", self.duration)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(EngineError::InvalidTiming { what, value });
            }
        }
        if let Some(amp) = self.disturbance {
            if !(amp >= 0.0 && amp.is_finite()) {
                return Err(EngineError::InvalidTiming {
                    what: "disturbance",
                    value: amp,
                });
            }
        }
        let swarm = self.initial_swarm()?;
        match self.reference_mode.program() {
            Some(p) => p.validate()?,
            None => self.weight.validate()?,
        }
        if let NetworkMode::Broadcast(cfg) = &self.network {
            cfg.validate()?;
            let max = 1.0 / self.dt;
            for rate in [cfg.agent_rate, cfg.target_rate] {
                if rate * self.dt > 1.0 + 1e-12 {
                    return Err(EngineError::RateAboveStepRate { rate, max });
                }
            }
        }
        let report = check_feasibility(&swarm.speeds(), self.reference_speed_bound()?)?;
        if !report.feasible && !self.allow_infeasible {
            return Err(EngineError::Infeasible(infeasibility_reason(&report)));
        }
        Ok(report)
    }
}

fn infeasibility_reason(r: &FeasibilityReport) -> String {
    let mut parts = Vec::new();
    if !r.condition1_ok {
        parts.push(format!(
            "slowest speed {} is below the reference speed bound {}",
            r.v_min, r.ref_speed_bound
        ));
    }
    if !r.condition2_ok {
        parts.push(format!(
            "fastest speed {} exceeds the sum of the others {}",
            r.v_max, r.sum_others
        ));
    }
    parts.join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRecord {
    pub id: usize,
    pub position: PlanarVector,
    pub heading: f64,
    pub speed: f64,
    pub control: ControlInput,
    /// Command actually integrated, after disturbance and clamping.
    pub applied: f64,
    /// Reference point this agent used.
    pub reference_position: PlanarVector,
    /// Distance to the true centroid.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub agents: Vec<AgentRecord>,
    pub centroid: PlanarVector,
    pub centroid_velocity: PlanarVector,
    /// Mean over agents in broadcast mode.
    pub reference_position: PlanarVector,
    pub reference_velocity: PlanarVector,
    pub reference_kappa: f64,
    pub reference_accel: f64,
    pub target_position: PlanarVector,
    pub target_velocity: PlanarVector,
    pub v: f64,
    pub beta: f64,
    pub alpha: f64,
    pub order_parameter: f64,
    pub feedforward_rank_ok: bool,
    pub max_age: f64,
    pub stale: bool,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortInfo {
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub feasibility: FeasibilityReport,
    pub network: Option<NetworkStats>,
    pub aborted: Option<AbortInfo>,
    pub dt: f64,
    pub seed: u64,
}

/// Reference generator owned by one estimator.
#[derive(Debug, Clone)]
enum RefState {
    Program {
        program: ReferenceProgram,
        origin: PlanarVector,
        position: PlanarVector,
        last_t: f64,
    },
    Tracking {
        position: PlanarVector,
        diff: ReferenceDifferentiator,
    },
}

impl RefState {
    fn new(mode: &ReferenceMode, origin: PlanarVector) -> Self {
        match mode.program() {
            Some(program) => RefState::Program {
                program,
                origin,
                position: origin,
                last_t: 0.0,
            },
            None => RefState::Tracking {
                position: origin,
                diff: ReferenceDifferentiator::new(),
            },
        }
    }

    /// Reference at time `t` given the estimator's centroid and target view.
    fn signal(
        &mut self,
        t: f64,
        dt: f64,
        centroid: PlanarVector,
        target: (PlanarVector, PlanarVector),
        weight: &WeightFunction,
        motion: Option<&TargetMotion>,
    ) -> ReferenceSignal {
        match self {
            RefState::Program {
                program,
                origin,
                position,
                last_t,
            } => {
                let mut s = program.signal_at(t, *origin);
                if let ReferenceProgram::Varying { .. } = program {
                    *position += program.displacement(*last_t, t);
                    *last_t = t;
                    s.position = *position;
                }
                s
            }
            RefState::Tracking { position, diff } => {
                let vel = reference_velocity(target.0, target.1, centroid, weight);
                let (mut kappa, mut accel) = diff.push(vel, dt);
                // With the weight term inactive the target program gives exact values.
                if target.0 == centroid {
                    match motion {
                        Some(TargetMotion::ConstantVelocity { .. }) => (kappa, accel) = (0.0, 0.0),
                        Some(TargetMotion::Turning { kappa: k, .. }) => (kappa, accel) = (*k, 0.0),
                        _ => {}
                    }
                }
                ReferenceSignal {
                    position: *position,
                    speed: vel.norm(),
                    heading: diff.heading_of(vel),
                    kappa,
                    accel,
                }
            }
        }
    }

    fn advance(&mut self, signal: &ReferenceSignal, dt: f64) {
        if let RefState::Tracking { position, .. } = self {
            *position += signal.velocity() * dt;
        }
    }
}

/// Runs the closed loop for `config.steps()` steps.
pub fn run(config: &ScenarioConfig) -> Result<RunLog, EngineError> {
    let feasibility = config.validate()?;
    let dt = config.dt;
    let steps = config.steps();
    let mut swarm = config.initial_swarm()?;
    let n = swarm.len();
    let origin = centroid(&swarm);
    let (tp0, tv0) = config.target.state_at(0.0);

    let mut network = match &config.network {
        NetworkMode::GroundTruth => None,
        NetworkMode::Broadcast(cfg) => Some(NetworkSim::new(cfg.clone(), &swarm, tp0, tv0, 0.0)?),
    };
    let estimators = if network.is_some() { n } else { 1 };
    let mut refs: Vec<RefState> = (0..estimators)
        .map(|_| RefState::new(&config.reference_mode, origin))
        .collect();
    let mut noise = ChaCha8Rng::seed_from_u64(config.seed);
    noise.set_stream(1);

    let mut records = Vec::with_capacity(steps);
    let mut aborted = None;
    for i in 0..steps {
        let t = i as f64 * dt;
        let target = config.target.state_at(t);
        let true_centroid = centroid(&swarm);

        let mut signals = Vec::with_capacity(estimators);
        let mut inputs = Vec::with_capacity(n);
        let mut rank_ok = true;
        let mut max_age = 0.0f64;
        let mut stale = false;
        match network.as_mut() {
            None => {
                let s = refs[0].signal(
                    t,
                    dt,
                    true_centroid,
                    target,
                    &config.weight,
                    Some(config.target.motion()),
                );
                let c = swarm_control(&swarm, &s, &config.gains);
                rank_ok = c.feedforward_rank_ok;
                inputs = c.inputs;
                signals.push(s);
            }
            Some(net) => {
                net.process(t, dt, &swarm, target.0, target.1);
                for (k, r) in refs.iter_mut().enumerate() {
                    let view = net.view(k, &swarm, t);
                    max_age = max_age.max(view.max_age);
                    stale |= view.stale;
                    let s = r.signal(
                        t,
                        dt,
                        centroid(&view.snapshot),
                        (view.target_position, view.target_velocity),
                        &config.weight,
                        None,
                    );
                    inputs.push(combined_control(&view.snapshot, k, &s, &config.gains));
                    signals.push(s);
                }
                if stale {
                    net.count_stale_step();
                }
            }
        }

        let applied: Vec<f64> = inputs
            .iter()
            .map(|c| {
                let mut u = c.total;
                if let Some(amp) = config.disturbance {
                    if amp > 0.0 {
                        u += noise.random_range(-amp..=amp);
                    }
                }
                saturate(u, &config.gains)
            })
            .collect();

        let m = signals.len() as f64;
        let reference_position = signals.iter().fold(PlanarVector::ZERO, |a, s| a + s.position) / m;
        let reference_velocity = signals.iter().fold(PlanarVector::ZERO, |a, s| a + s.velocity()) / m;
        let cv = centroid_velocity(&swarm);
        let alpha = (cv - reference_velocity).norm();
        let stats = network.as_ref().map(|n| n.stats()).unwrap_or_default();
        records.push(StepRecord {
            t,
            agents: swarm
                .vehicles()
                .iter()
                .enumerate()
                .map(|(k, v)| AgentRecord {
                    id: v.id,
                    position: v.position,
                    heading: v.heading(),
                    speed: v.speed(),
                    control: inputs[k],
                    applied: applied[k],
                    reference_position: signals[k.min(signals.len() - 1)].position,
                    distance: (v.position - true_centroid).norm(),
                })
                .collect(),
            centroid: true_centroid,
            centroid_velocity: cv,
            reference_position,
            reference_velocity,
            reference_kappa: signals.iter().map(|s| s.kappa).sum::<f64>() / m,
            reference_accel: signals.iter().map(|s| s.accel).sum::<f64>() / m,
            target_position: target.0,
            target_velocity: target.1,
            v: 0.5 * alpha * alpha,
            beta: (true_centroid - target.0).norm(),
            alpha,
            order_parameter: order_parameter(&swarm).norm(),
            feedforward_rank_ok: rank_ok,
            max_age,
            stale,
            delivered: stats.delivered,
            dropped: stats.dropped,
        });

        for (r, s) in refs.iter_mut().zip(&signals) {
            r.advance(s, dt);
        }
        let next = step(&swarm, &applied, dt)?;
        if !next.is_finite() || applied.iter().any(|u| !u.is_finite()) {
            aborted = Some(AbortInfo {
                t: t + dt,
                message: format!("non-finite state after step {i}"),
            });
            break;
        }
        swarm = next;
    }

    Ok(RunLog {
        records,
        feasibility,
        network: network.map(|n| n.stats()),
        aborted,
        dt,
        seed: config.seed,
    })
}

/// Replaces the heading loop by commanding the centroid velocity directly,
/// `c' = r_target' + w(|r_target - c|)(r_target - c)`, integrated with RK4.
/// Records carry no agents.
pub fn run_oracle_centroid(config: &ScenarioConfig) -> Result<RunLog, EngineError> {
    for (what, value) in [("dt", config.dt), ("duration", config.duration)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(EngineError::InvalidTiming { what, value });
        }
    }
    config.weight.validate()?;
    let swarm = config.initial_swarm()?;
    let feasibility = check_feasibility(&swarm.speeds(), config.reference_speed_bound()?)?;
    let dt = config.dt;
    let rate = |t: f64, c: PlanarVector| {
        let (tp, tv) = config.target.state_at(t);
        reference_velocity(tp, tv, c, &config.weight)
    };
    let mut c = centroid(&swarm);
    let mut records = Vec::with_capacity(config.steps());
    for i in 0..config.steps() {
        let t = i as f64 * dt;
        let (tp, tv) = config.target.state_at(t);
        let vel = rate(t, c);
        records.push(StepRecord {
            t,
            agents: Vec::new(),
            centroid: c,
            centroid_velocity: vel,
            reference_position: c,
            reference_velocity: vel,
            reference_kappa: 0.0,
            reference_accel: 0.0,
            target_position: tp,
            target_velocity: tv,
            v: 0.0,
            beta: (c - tp).norm(),
            alpha: 0.0,
            order_parameter: 0.0,
            feedforward_rank_ok: true,
            max_age: 0.0,
            stale: false,
            delivered: 0,
            dropped: 0,
        });
        let k1 = vel;
        let k2 = rate(t + dt / 2.0, c + k1 * (dt / 2.0));
        let k3 = rate(t + dt / 2.0, c + k2 * (dt / 2.0));
        let k4 = rate(t + dt, c + k3 * dt);
        c += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(RunLog {
        records,
        feasibility,
        network: None,
        aborted: None,
        dt,
        seed: config.seed,
    })
}
