//! Run artifacts: `trajectory.csv`, `summary.json` and `plot.gp`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use swarmtrack_core::{FeasibilityReport, NetworkStats, RunLog};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_FILE: &str = "plot.gp";

/// Per-agent columns first, then the swarm columns repeated on each row.
pub const CSV_HEADER: [&str; 37] = [
    "t", "agent_id", "x", "y", "theta", "u_vel", "h", "u_spc", "u_total", "u_applied", "speed",
    "ref_x", "ref_y", "dist", "cx", "cy", "cvx", "cvy", "rref_x", "rref_y", "rref_vx", "rref_vy",
    "kappa_ref", "a_ref", "target_x", "target_y", "target_vx", "target_vy", "V", "beta", "alpha",
    "order", "ff_rank_ok", "max_age", "stale", "delivered", "dropped",
];

/// One line of `trajectory.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub agent_id: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub u_vel: f64,
    pub h: f64,
    pub u_spc: f64,
    pub u_total: f64,
    pub u_applied: f64,
    pub speed: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub dist: f64,
    pub cx: f64,
    pub cy: f64,
    pub cvx: f64,
    pub cvy: f64,
    pub rref_x: f64,
    pub rref_y: f64,
    pub rref_vx: f64,
    pub rref_vy: f64,
    pub kappa_ref: f64,
    pub a_ref: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub target_vx: f64,
    pub target_vy: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub beta: f64,
    pub alpha: f64,
    pub order: f64,
    pub ff_rank_ok: u8,
    pub max_age: f64,
    pub stale: u8,
    pub delivered: u64,
    pub dropped: u64,
}

impl TrajectoryRow {
    fn fields(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:.16e}");
        vec![
            f(self.t),
            self.agent_id.to_string(),
            f(self.x),
            f(self.y),
            f(self.theta),
            f(self.u_vel),
            f(self.h),
            f(self.u_spc),
            f(self.u_total),
            f(self.u_applied),
            f(self.speed),
            f(self.ref_x),
            f(self.ref_y),
            f(self.dist),
            f(self.cx),
            f(self.cy),
            f(self.cvx),
            f(self.cvy),
            f(self.rref_x),
            f(self.rref_y),
            f(self.rref_vx),
            f(self.rref_vy),
            f(self.kappa_ref),
            f(self.a_ref),
            f(self.target_x),
            f(self.target_y),
            f(self.target_vx),
            f(self.target_vy),
            f(self.v),
            f(self.beta),
            f(self.alpha),
            f(self.order),
            self.ff_rank_ok.to_string(),
            f(self.max_age),
            self.stale.to_string(),
            self.delivered.to_string(),
            self.dropped.to_string(),
        ]
    }
}

/// Flattens a log into one row per agent and step.
pub fn rows_from_log(log: &RunLog) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for r in &log.records {
        for a in &r.agents {
            rows.push(TrajectoryRow {
                t: r.t,
                agent_id: a.id,
                x: a.position.x,
                y: a.position.y,
                theta: a.heading,
                u_vel: a.control.u_velocity,
                h: a.control.h_feedforward,
                u_spc: a.control.u_spacing,
                u_total: a.control.total,
                u_applied: a.applied,
                speed: a.speed,
                ref_x: a.reference_position.x,
                ref_y: a.reference_position.y,
                dist: a.distance,
                cx: r.centroid.x,
                cy: r.centroid.y,
                cvx: r.centroid_velocity.x,
                cvy: r.centroid_velocity.y,
                rref_x: r.reference_position.x,
                rref_y: r.reference_position.y,
                rref_vx: r.reference_velocity.x,
                rref_vy: r.reference_velocity.y,
                kappa_ref: r.reference_kappa,
                a_ref: r.reference_accel,
                target_x: r.target_position.x,
                target_y: r.target_position.y,
                target_vx: r.target_velocity.x,
                target_vy: r.target_velocity.y,
                v: r.v,
                beta: r.beta,
                alpha: r.alpha,
                order: r.order_parameter,
                ff_rank_ok: r.feedforward_rank_ok as u8,
                max_age: r.max_age,
                stale: r.stale as u8,
                delivered: r.delivered,
                dropped: r.dropped,
            });
        }
    }
    rows
}

pub fn write_trajectory<W: Write>(out: W, rows: &[TrajectoryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> csv::Result<Vec<TrajectoryRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Statistics over the steps with `t >= transient`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingStats {
    pub transient: f64,
    pub steps: usize,
    pub final_t: Option<f64>,
    pub final_v: Option<f64>,
    pub final_beta: Option<f64>,
    pub beta_max: Option<f64>,
    pub beta_mean: Option<f64>,
    pub alpha_max: Option<f64>,
    pub alpha_mean: Option<f64>,
    /// Agent-to-centroid distances.
    pub spacing_min: Option<f64>,
    pub spacing_mean: Option<f64>,
    pub spacing_max: Option<f64>,
    pub order_mean: Option<f64>,
}

/// Computes the statistics from trajectory rows, so the same numbers come
/// out whether the rows are fresh or read back from the CSV.
pub fn tracking_stats(rows: &[TrajectoryRow], transient: f64) -> TrackingStats {
    let mut steps = 0usize;
    let (mut beta_max, mut beta_sum) = (f64::NEG_INFINITY, 0.0);
    let (mut alpha_max, mut alpha_sum) = (f64::NEG_INFINITY, 0.0);
    let (mut sp_min, mut sp_max, mut sp_sum, mut sp_n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    let mut order_sum = 0.0;
    let mut last: Option<&TrajectoryRow> = None;
    let mut prev_t = f64::NAN;
    for row in rows {
        let first_of_step = row.t != prev_t;
        prev_t = row.t;
        if first_of_step {
            last = Some(row);
        }
        if row.t < transient {
            continue;
        }
        if first_of_step {
            steps += 1;
            beta_max = beta_max.max(row.beta);
            beta_sum += row.beta;
            alpha_max = alpha_max.max(row.alpha);
            alpha_sum += row.alpha;
            order_sum += row.order;
        }
        sp_min = sp_min.min(row.dist);
        sp_max = sp_max.max(row.dist);
        sp_sum += row.dist;
        sp_n += 1;
    }
    let some = |v: f64| (steps > 0).then_some(v);
    TrackingStats {
        transient,
        steps,
        final_t: last.map(|r| r.t),
        final_v: last.map(|r| r.v),
        final_beta: last.map(|r| r.beta),
        beta_max: some(beta_max),
        beta_mean: some(beta_sum / steps as f64),
        alpha_max: some(alpha_max),
        alpha_mean: some(alpha_sum / steps as f64),
        spacing_min: some(sp_min),
        spacing_mean: (sp_n > 0).then(|| sp_sum / sp_n as f64),
        spacing_max: some(sp_max),
        order_mean: some(order_sum / steps as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub agents: usize,
    pub rows: usize,
    pub aborted: Option<String>,
    pub tracking: TrackingStats,
    pub feasibility: FeasibilityReport,
    pub network: Option<NetworkStats>,
}

pub fn summarize(name: &str, log: &RunLog, rows: &[TrajectoryRow], transient: f64) -> RunSummary {
    RunSummary {
        scenario: name.to_string(),
        seed: log.seed,
        dt: log.dt,
        agents: log.records.first().map_or(0, |r| r.agents.len()),
        rows: rows.len(),
        aborted: log.aborted.as_ref().map(|a| format!("t = {}: {}", a.t, a.message)),
        tracking: tracking_stats(rows, transient),
        feasibility: log.feasibility.clone(),
        network: log.network,
    }
}

/// Gnuplot script drawing the tracking figures from `trajectory.csv`.
pub fn plot_script(title: &str) -> String {
    let col = |name: &str| CSV_HEADER.iter().position(|c| *c == name).unwrap() + 1;
    let (aid, t) = (col("agent_id"), col("t"));
    format!(
        r#"# gnuplot script; run `gnuplot plot.gp` next to {csv}.
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,700
set grid

set output 'tracking.png'
set title '{title}: centroid and target'
set xlabel 'x [m]'
set ylabel 'y [m]'
set size ratio -1
plot '{csv}' using (${aid}==1 ? ${cx} : 1/0):{cy} with lines lw 2 title 'centroid', \
     '' using (${aid}==1 ? ${tx} : 1/0):{ty} with lines dt 2 lw 2 title 'target', \
     for [k=1:*] '' using (${aid}==k ? ${x} : 1/0):{y} with lines lw 0.5 title sprintf('agent %d', k)

set output 'distances.png'
set size noratio
set title '{title}: distances'
set xlabel 't [s]'
set ylabel 'distance [m]'
plot '{csv}' using (${aid}==1 ? ${t} : 1/0):{beta} with lines lw 2 title 'centroid to target', \
     for [k=1:*] '' using (${aid}==k ? ${t} : 1/0):{dist} with lines title sprintf('agent %d to centroid', k)

set output 'velocity_error.png'
set title '{title}: velocity error'
set ylabel '|centroid velocity - reference| [m/s]'
set logscale y
plot '{csv}' using (${aid}==1 ? ${t} : 1/0):{alpha} with lines title 'alpha'
"#,
        csv = TRAJECTORY_FILE,
        cx = col("cx"),
        cy = col("cy"),
        tx = col("target_x"),
        ty = col("target_y"),
        x = col("x"),
        y = col("y"),
        beta = col("beta"),
        dist = col("dist"),
        alpha = col("alpha"),
    )
}

/// Writes all three artifacts into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, name: &str, log: &RunLog, transient: f64) -> std::io::Result<RunSummary> {
    std::fs::create_dir_all(dir)?;
    let rows = rows_from_log(log);
    let file = std::io::BufWriter::new(std::fs::File::create(dir.join(TRAJECTORY_FILE))?);
    write_trajectory(file, &rows).map_err(std::io::Error::other)?;
    let summary = summarize(name, log, &rows, transient);
    let json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(SUMMARY_FILE), json + "\n")?;
    std::fs::write(dir.join(PLOT_FILE), plot_script(name))?;
    Ok(summary)
}
