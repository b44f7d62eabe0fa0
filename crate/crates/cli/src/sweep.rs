//! Parameter sweeps over a base scenario.

use std::io::Write;

use rayon::prelude::*;
use serde::Deserialize;
use swarmtrack_core::{run, ControllerGains, EngineError, NetworkMode, WeightFunction};

use crate::output::{rows_from_log, tracking_stats, TrackingStats};
use crate::scenario::Scenario;

/// Axes of a sweep. The grid is the Cartesian product of the listed axes,
/// in field order; a grid with no axes has no points.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterGrid {
    pub gamma: Option<Vec<f64>>,
    pub omega0: Option<Vec<f64>>,
    /// Constant weight value, or the scale of the distance-dependent weight.
    pub weight: Option<Vec<f64>>,
    pub loss: Option<Vec<f64>>,
    pub speeds: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub gamma: Option<f64>,
    pub omega0: Option<f64>,
    pub weight: Option<f64>,
    pub loss: Option<f64>,
    pub speeds: Option<Vec<f64>>,
}

impl ParameterGrid {
    pub fn points(&self) -> Vec<GridPoint> {
        let axes = [
            self.gamma.as_ref().map(Vec::len),
            self.omega0.as_ref().map(Vec::len),
            self.weight.as_ref().map(Vec::len),
            self.loss.as_ref().map(Vec::len),
            self.speeds.as_ref().map(Vec::len),
        ];
        if axes.iter().all(Option::is_none) {
            return Vec::new();
        }
        let total: usize = axes.iter().map(|a| a.unwrap_or(1)).product();
        (0..total)
            .map(|index| {
                // Last axis varies fastest.
                let mut rest = index;
                let mut pick = [0usize; 5];
                for (slot, len) in pick.iter_mut().zip(axes).rev() {
                    let len = len.unwrap_or(1);
                    *slot = rest % len;
                    rest /= len;
                }
                GridPoint {
                    index,
                    gamma: self.gamma.as_ref().map(|v| v[pick[0]]),
                    omega0: self.omega0.as_ref().map(|v| v[pick[1]]),
                    weight: self.weight.as_ref().map(|v| v[pick[2]]),
                    loss: self.loss.as_ref().map(|v| v[pick[3]]),
                    speeds: self.speeds.as_ref().map(|v| v[pick[4]].clone()),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Aborted,
    Infeasible,
    Error,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Aborted => "aborted",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: GridPoint,
    pub seed: u64,
    pub status: RunStatus,
    pub message: String,
    pub stats: Option<TrackingStats>,
    pub delivered: Option<u64>,
    pub dropped: Option<u64>,
}

/// Applies a grid point to a copy of the base scenario.
pub fn apply_point(base: &Scenario, point: &GridPoint) -> Result<Scenario, String> {
    let mut s = base.clone();
    s.set_seed(base.config.seed.wrapping_add(point.index as u64));
    let g = &s.config.gains;
    if point.gamma.is_some() || point.omega0.is_some() {
        let gains = ControllerGains::new(
            point.gamma.unwrap_or(g.gamma()),
            point.omega0.unwrap_or(g.omega0()),
            g.spacing_mode,
        )
        .and_then(|n| n.with_u_max(g.u_max))
        .map_err(|e| e.to_string())?
        .with_feedforward(g.feedforward);
        s.config.gains = gains;
    }
    if let Some(w) = point.weight {
        s.config.weight = match s.config.weight {
            WeightFunction::Constant(_) => WeightFunction::Constant(w),
            WeightFunction::DistanceDependent { .. } => WeightFunction::DistanceDependent { scale: w },
        };
    }
    if let Some(loss) = point.loss {
        match &mut s.config.network {
            NetworkMode::Broadcast(cfg) => cfg.loss_probability = loss,
            NetworkMode::GroundTruth => return Err("the loss axis needs a broadcast network".into()),
        }
    }
    if let Some(speeds) = &point.speeds {
        if speeds.len() != s.config.agents.len() {
            return Err(format!(
                "speeds entry has {} values for {} agents",
                speeds.len(),
                s.config.agents.len()
            ));
        }
        for (a, v) in s.config.agents.iter_mut().zip(speeds) {
            a.speed = *v;
        }
    }
    Ok(s)
}

fn run_point(base: &Scenario, point: GridPoint) -> SweepRow {
    let seed = base.config.seed.wrapping_add(point.index as u64);
    let fail = |status, message: String, point| SweepRow {
        point,
        seed,
        status,
        message,
        stats: None,
        delivered: None,
        dropped: None,
    };
    let scenario = match apply_point(base, &point) {
        Ok(s) => s,
        Err(m) => return fail(RunStatus::Error, m, point),
    };
    match run(&scenario.config) {
        Err(e @ EngineError::Infeasible(_)) => fail(RunStatus::Infeasible, e.to_string(), point),
        Err(e) => fail(RunStatus::Error, e.to_string(), point),
        Ok(log) => {
            let rows = rows_from_log(&log);
            let (status, message) = match &log.aborted {
                Some(a) => (RunStatus::Aborted, a.message.clone()),
                None => (RunStatus::Ok, String::new()),
            };
            SweepRow {
                point,
                seed,
                status,
                message,
                stats: Some(tracking_stats(&rows, scenario.transient)),
                delivered: log.network.map(|n| n.delivered),
                dropped: log.network.map(|n| n.dropped),
            }
        }
    }
}

/// Runs every grid point on at most `parallel` threads. Rows come back in
/// grid order whatever the thread count.
pub fn run_sweep(base: &Scenario, grid: &ParameterGrid, parallel: usize) -> Result<Vec<SweepRow>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallel.max(1)).build()?;
    let points = grid.points();
    Ok(pool.install(|| points.into_par_iter().map(|p| run_point(base, p)).collect()))
}

pub const SWEEP_HEADER: [&str; 19] = [
    "index", "seed", "gamma", "omega0", "weight", "loss", "speeds", "status", "message",
    "final_v", "final_beta", "beta_max", "beta_mean", "alpha_mean", "spacing_mean", "spacing_max",
    "order_mean", "delivered", "dropped",
];

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    let f = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for r in rows {
        let s = r.stats.as_ref();
        let speeds = r
            .point
            .speeds
            .as_ref()
            .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        w.write_record([
            r.point.index.to_string(),
            r.seed.to_string(),
            f(r.point.gamma),
            f(r.point.omega0),
            f(r.point.weight),
            f(r.point.loss),
            speeds,
            r.status.as_str().to_string(),
            r.message.clone(),
            f(s.and_then(|s| s.final_v)),
            f(s.and_then(|s| s.final_beta)),
            f(s.and_then(|s| s.beta_max)),
            f(s.and_then(|s| s.beta_mean)),
            f(s.and_then(|s| s.alpha_mean)),
            f(s.and_then(|s| s.spacing_mean)),
            f(s.and_then(|s| s.spacing_max)),
            f(s.and_then(|s| s.order_mean)),
            r.delivered.map(|v| v.to_string()).unwrap_or_default(),
            r.dropped.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
