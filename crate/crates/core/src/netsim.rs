//! All-to-all broadcast network with rate limits, per-receiver loss and delay.
//!
//! Every agent keeps a [`NeighborTable`] filled from received messages and
//! builds its controller snapshot from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{PlanarVector, SwarmState, VehicleState};
use crate::error::NetworkError;

/// Bits per broadcast payload: four 32-bit floats.
pub const PAYLOAD_BITS: f64 = 4.0 * 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Source {
    /// 1-based agent id.
    Agent(usize),
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BroadcastMessage {
    pub sender: Source,
    /// Global emission counter, also the key of the message's random stream.
    pub seq: u64,
    pub send_time: f64,
    pub position: PlanarVector,
    pub velocity: PlanarVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DelayModel {
    Fixed(f64),
    /// Uniform on `[min, max]`.
    Uniform { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkConfig {
    pub agent_rate: f64,
    pub target_rate: f64,
    pub loss_probability: f64,
    pub delay: DelayModel,
    pub max_delay: f64,
    pub seed: u64,
    /// Dead-reckon neighbour positions from their last velocity.
    pub extrapolate: bool,
    /// Entries older than this are flagged.
    pub staleness_budget: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            agent_rate: 10.0,
            target_rate: 5.0,
            loss_probability: 0.0,
            delay: DelayModel::Fixed(0.0),
            max_delay: 1.0,
            seed: 0,
            extrapolate: false,
            staleness_budget: None,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        for (what, value) in [("agent_rate", self.agent_rate), ("target_rate", self.target_rate)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(NetworkError::InvalidRate { what, value });
            }
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(NetworkError::InvalidLoss(self.loss_probability));
        }
        let max = self.max_delay;
        let bad = |delay: f64| !(delay >= 0.0 && delay <= max && delay.is_finite());
        match self.delay {
            DelayModel::Fixed(d) if bad(d) => return Err(NetworkError::InvalidDelay { delay: d, max }),
            DelayModel::Uniform { min, max: hi } => {
                if bad(min) {
                    return Err(NetworkError::InvalidDelay { delay: min, max });
                }
                if bad(hi) || hi < min {
                    return Err(NetworkError::InvalidDelay { delay: hi, max });
                }
            }
            _ => {}
        }
        if let Some(b) = self.staleness_budget {
            if !(b > 0.0) {
                return Err(NetworkError::InvalidRate {
                    what: "staleness_budget",
                    value: b,
                });
            }
        }
        Ok(())
    }

    /// Payload bits per second sent by one agent.
    pub fn agent_bandwidth_bps(&self) -> f64 {
        PAYLOAD_BITS * self.agent_rate
    }
}

/// Periodic send instants `phase + j / rate`, `j >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastClock {
    pub period: f64,
    pub phase: f64,
}

impl BroadcastClock {
    /// Number of send instants strictly before `t`.
    fn emitted_before(&self, t: f64) -> i64 {
        let x = (t - self.phase) / self.period;
        if x <= 0.0 {
            0
        } else {
            x.ceil() as i64
        }
    }

    /// Whether a send instant falls in `[t, t + dt)`.
    pub fn fires(&self, t: f64, dt: f64) -> bool {
        self.emitted_before(t + dt) > self.emitted_before(t)
    }
}

/// One clock per agent (in id order) followed by the target clock. Phases are
/// drawn once from the seed.
pub fn broadcast_clocks(n_agents: usize, config: &NetworkConfig) -> Vec<BroadcastClock> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    (0..=n_agents)
        .map(|k| {
            let rate = if k < n_agents {
                config.agent_rate
            } else {
                config.target_rate
            };
            let period = 1.0 / rate;
            BroadcastClock {
                period,
                phase: rng.random::<f64>() * period,
            }
        })
        .collect()
}

/// Sources that emit during `[t, t + dt)`.
pub fn schedule_broadcasts(clocks: &[BroadcastClock], t: f64, dt: f64) -> Vec<Source> {
    let n_agents = clocks.len().saturating_sub(1);
    clocks
        .iter()
        .enumerate()
        .filter(|(_, c)| c.fires(t, dt))
        .map(|(k, _)| {
            if k < n_agents {
                Source::Agent(k + 1)
            } else {
                Source::Target
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    /// 1-based receiving agent.
    pub receiver: usize,
    pub arrival: f64,
    pub message: BroadcastMessage,
}

/// Per-receiver loss and delay draws for one message. Receivers are visited
/// in id order on the message's own stream, so outcomes do not depend on
/// which other messages exist.
pub fn deliver(message: &BroadcastMessage, n_agents: usize, config: &NetworkConfig) -> Vec<Delivery> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(message.seq + 1);
    let mut out = Vec::with_capacity(n_agents);
    for receiver in 1..=n_agents {
        if message.sender == Source::Agent(receiver) {
            continue;
        }
        let lost = rng.random::<f64>() < config.loss_probability;
        let delay = match config.delay {
            DelayModel::Fixed(d) => d,
            DelayModel::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
        };
        if !lost {
            out.push(Delivery {
                receiver,
                arrival: message.send_time + delay,
                message: *message,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableEntry {
    pub position: PlanarVector,
    pub velocity: PlanarVector,
    pub send_time: f64,
    pub receive_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborTable {
    pub owner: usize,
    /// Indexed by agent id - 1. The owner's slot is never read.
    pub entries: Vec<TableEntry>,
    pub target: TableEntry,
}

impl NeighborTable {
    /// Table holding everyone's true state at time `t`.
    pub fn initialized(
        owner: usize,
        swarm: &SwarmState,
        target_position: PlanarVector,
        target_velocity: PlanarVector,
        t: f64,
    ) -> Self {
        let entries = swarm
            .vehicles()
            .iter()
            .map(|v| TableEntry {
                position: v.position,
                velocity: PlanarVector::from_polar(v.speed(), v.heading()),
                send_time: t,
                receive_time: t,
            })
            .collect();
        Self {
            owner,
            entries,
            target: TableEntry {
                position: target_position,
                velocity: target_velocity,
                send_time: t,
                receive_time: t,
            },
        }
    }

    /// Applies a delivery unless the table already holds newer data.
    /// Returns whether the entry changed.
    pub fn apply(&mut self, delivery: &Delivery) -> bool {
        let slot = match delivery.message.sender {
            Source::Agent(id) => &mut self.entries[id - 1],
            Source::Target => &mut self.target,
        };
        if delivery.message.send_time < slot.send_time {
            return false;
        }
        *slot = TableEntry {
            position: delivery.message.position,
            velocity: delivery.message.velocity,
            send_time: delivery.message.send_time,
            receive_time: delivery.arrival,
        };
        true
    }
}

/// What one agent believes at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentView {
    pub snapshot: SwarmState,
    pub target_position: PlanarVector,
    pub target_velocity: PlanarVector,
    /// Age of the oldest entry in use.
    pub max_age: f64,
    pub stale: bool,
}

/// Controller snapshot for the table's owner. Neighbour speeds come from
/// `speeds`; their headings from the received velocity direction.
pub fn snapshot_for_agent(
    table: &NeighborTable,
    own: &VehicleState,
    speeds: &[f64],
    t: f64,
    config: &NetworkConfig,
) -> AgentView {
    let locate = |e: &TableEntry| {
        if config.extrapolate {
            e.position + e.velocity * (t - e.send_time)
        } else {
            e.position
        }
    };
    let mut max_age = t - table.target.send_time;
    let mut vehicles = Vec::with_capacity(speeds.len());
    for (k, (entry, &speed)) in table.entries.iter().zip(speeds).enumerate() {
        let id = k + 1;
        if id == table.owner {
            vehicles.push(own.clone());
            continue;
        }
        max_age = max_age.max(t - entry.send_time);
        vehicles.push(
            VehicleState::new(id, locate(entry), entry.velocity.angle(), speed)
                .expect("neighbour entries come from valid vehicles"),
        );
    }
    let snapshot = SwarmState::new(vehicles, t).expect("table covers every agent");
    AgentView {
        snapshot,
        target_position: locate(&table.target),
        target_velocity: table.target.velocity,
        max_age,
        stale: config.staleness_budget.is_some_and(|b| max_age > b),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NetworkStats {
    pub sent: u64,
    /// Message-receiver pairs attempted.
    pub attempted: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Deliveries discarded because newer data was already present.
    pub superseded: u64,
    pub agent_bandwidth_bps: f64,
    pub max_age: f64,
    pub stale_steps: u64,
}

/// Network state carried through a run.
#[derive(Debug, Clone)]
pub struct NetworkSim {
    config: NetworkConfig,
    clocks: Vec<BroadcastClock>,
    tables: Vec<NeighborTable>,
    pending: Vec<Delivery>,
    next_seq: u64,
    stats: NetworkStats,
}

impl NetworkSim {
    /// Fully initialized tables at time `t`.
    pub fn new(
        config: NetworkConfig,
        swarm: &SwarmState,
        target_position: PlanarVector,
        target_velocity: PlanarVector,
        t: f64,
    ) -> Result<Self, NetworkError> {
        config.validate()?;
        let n = swarm.len();
        let tables = (1..=n)
            .map(|owner| NeighborTable::initialized(owner, swarm, target_position, target_velocity, t))
            .collect();
        let stats = NetworkStats {
            agent_bandwidth_bps: config.agent_bandwidth_bps(),
            ..NetworkStats::default()
        };
        Ok(Self {
            clocks: broadcast_clocks(n, &config),
            config,
            tables,
            pending: Vec::new(),
            next_seq: 0,
            stats,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn tables(&self) -> &[NeighborTable] {
        &self.tables
    }

    pub fn stats(&self) -> NetworkStats {
        self.stats
    }

    /// Emits the broadcasts due in `[t, t + dt)` with the state at `t`, then
    /// applies every delivery that has arrived by `t`, in arrival order.
    pub fn process(
        &mut self,
        t: f64,
        dt: f64,
        swarm: &SwarmState,
        target_position: PlanarVector,
        target_velocity: PlanarVector,
    ) {
        let n = swarm.len();
        for source in schedule_broadcasts(&self.clocks, t, dt) {
            let (position, velocity) = match source {
                Source::Agent(id) => {
                    let v = swarm.vehicle(id - 1);
                    (v.position, PlanarVector::from_polar(v.speed(), v.heading()))
                }
                Source::Target => (target_position, target_velocity),
            };
            let message = BroadcastMessage {
                sender: source,
                seq: self.next_seq,
                send_time: t,
                position,
                velocity,
            };
            self.next_seq += 1;
            self.stats.sent += 1;
            let receivers = if matches!(source, Source::Target) { n } else { n - 1 } as u64;
            let delivered = deliver(&message, n, &self.config);
            self.stats.attempted += receivers;
            self.stats.dropped += receivers - delivered.len() as u64;
            self.pending.extend(delivered);
        }

        let horizon = t + 1e-9 * dt;
        let (mut due, rest): (Vec<Delivery>, Vec<Delivery>) =
            self.pending.drain(..).partition(|d| d.arrival <= horizon);
        self.pending = rest;
        due.sort_by(|a, b| {
            a.arrival
                .total_cmp(&b.arrival)
                .then(a.message.seq.cmp(&b.message.seq))
                .then(a.receiver.cmp(&b.receiver))
        });
        for d in &due {
            if self.tables[d.receiver - 1].apply(d) {
                self.stats.delivered += 1;
            } else {
                self.stats.superseded += 1;
            }
        }
    }

    /// View of agent `k` (0-based) at time `t`; updates staleness statistics.
    pub fn view(&mut self, k: usize, swarm: &SwarmState, t: f64) -> AgentView {
        let view = snapshot_for_agent(
            &self.tables[k],
            swarm.vehicle(k),
            &swarm.speeds(),
            t,
            &self.config,
        );
        self.stats.max_age = self.stats.max_age.max(view.max_age);
        view
    }

    pub fn count_stale_step(&mut self) {
        self.stats.stale_steps += 1;
    }
}
