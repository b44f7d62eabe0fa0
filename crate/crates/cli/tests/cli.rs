use std::fs;
use std::path::Path;
use std::process::Command;

use swarmtrack_cli::output::{read_trajectory, tracking_stats, PLOT_FILE, SUMMARY_FILE, TRAJECTORY_FILE};
use swarmtrack_cli::sweep::SWEEP_HEADER;
use swarmtrack_cli::{bundled_experiment, main_with_args, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK};
use tempfile::TempDir;

const SCENARIO: &str = r#"
name = "trio"

[[agents]]
x = 0.0
y = 0.0
heading = 0.0
speed = 10.0

[[agents]]
x = 40.0
y = 0.0
heading = 2.0
speed = 12.0

[[agents]]
x = 0.0
y = 40.0
heading = -2.0
speed = 16.0

[target]
program = "constant_velocity"
x = 100.0
y = 0.0
vx = 1.0
vy = 0.0

[controller]
gamma = 0.01
omega0 = 0.25
spacing_mode = "beacon"

[reference]
mode = "track"
weight = { kind = "constant", value = 0.05 }

[network]
mode = "broadcast"
loss = 0.1
delay = 0.05

[sim]
dt = 0.01
duration = 3.0
seed = 7
transient = 1.0
"#;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with_args(std::iter::once("swarmtrack").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_artifacts_that_round_trip() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "trio.toml", SCENARIO);
    let out = dir.path().join("out");
    let r = cli(&["run", "--scenario", &scenario, "--out", arg(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("trio"));
    for f in [TRAJECTORY_FILE, SUMMARY_FILE, PLOT_FILE] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let rows = read_trajectory(fs::File::open(out.join(TRAJECTORY_FILE)).unwrap()).unwrap();
    assert_eq!(rows.len(), 300 * 3);
    assert_eq!(rows[0].t, 0.0);
    assert_eq!((rows[2].agent_id, rows[3].agent_id), (3, 1));
    assert!(rows.iter().all(|r| r.speed == [10.0, 12.0, 16.0][r.agent_id - 1]));

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["rows"], 900);
    assert_eq!(summary["seed"], 7);
    let recomputed = serde_json::to_value(tracking_stats(&rows, 1.0)).unwrap();
    assert_eq!(summary["tracking"], recomputed);
    let last = rows.last().unwrap();
    assert_eq!(summary["network"]["delivered"], last.delivered);

    let plot = fs::read_to_string(out.join(PLOT_FILE)).unwrap();
    assert!(plot.contains(TRAJECTORY_FILE));
}

#[test]
fn seed_flag_reproduces_and_changes_runs() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "trio.toml", SCENARIO);
    let csv = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert_eq!(cli(&["run", "--scenario", &scenario, "--out", arg(&out), "--seed", seed]).code, EXIT_OK);
        fs::read(out.join(TRAJECTORY_FILE)).unwrap()
    };
    let a = csv("a", "3");
    assert_eq!(a, csv("b", "3"));
    assert_ne!(a, csv("c", "4"));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let text = SCENARIO.replace("omega0 = 0.25", "omega0 = 0.25\nomgea = 1.0");
    let line = text.lines().position(|l| l.starts_with("omgea")).unwrap() + 1;
    let scenario = write(dir.path(), "typo.toml", &text);
    let r = cli(&["run", "--scenario", &scenario, "--out", arg(&dir.path().join("o"))]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.stderr.contains(&format!("typo.toml:{line}:")), "{}", r.stderr);
    assert!(r.stderr.contains("omgea"), "{}", r.stderr);
}

#[test]
fn infeasible_speeds_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "slow.toml", &SCENARIO.replace("speed = 16.0", "speed = 40.0"));
    let out = dir.path().join("o");
    let r = cli(&["run", "--scenario", &scenario, "--out", arg(&out)]);
    assert_eq!(r.code, EXIT_INFEASIBLE, "{}", r.stderr);
    assert!(!out.join(TRAJECTORY_FILE).exists());

    let r = cli(&["run", "--scenario", &scenario, "--out", arg(&out), "--allow-infeasible"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);

    let r = cli(&["feasibility", "--scenario", &scenario]);
    assert_eq!(r.code, EXIT_INFEASIBLE);
    assert!(r.stdout.contains("infeasible"));
}

#[test]
fn feasibility_from_speeds() {
    let r = cli(&["feasibility", "--speeds", "10,12,16", "--bound", "2"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains("feasible"));
    let r = cli(&["feasibility", "--speeds", "1,5", "--bound", "0.5", "--json"]);
    assert_eq!(r.code, EXIT_INFEASIBLE);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["feasible"], false);
    let r = cli(&["feasibility", "--speeds", "1,1,1", "--bound", "1"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains("marginal"));
}

#[test]
fn classify_worked_case() {
    let r = cli(&["classify", "--speeds", "1,2,3", "--m", "1"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("Saddle"));
    let r = cli(&["classify", "--speeds", "1,2,3", "--m", "1", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    let eig: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(eig.len(), 3);
    assert!(eig.iter().any(|&l| l >= 5.0 / 3.0));
    assert!(eig.iter().any(|&l| l <= -4.0 / 3.0));

    let r = cli(&["classify", "--speeds", "1,2,3", "--m", "4"]);
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn sweep_rows_follow_the_grid() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "trio.toml", SCENARIO);
    let grid = write(dir.path(), "grid.toml", "omega0 = [0.1, 0.25, 0.5]\n");
    let table = |name: &str, parallel: &str| {
        let out = dir.path().join(name);
        let r = cli(&["sweep", "--scenario", &scenario, "--grid", &grid, "--out", arg(&out), "--parallel", parallel]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        fs::read_to_string(out.join("sweep.csv")).unwrap()
    };
    let serial = table("s", "1");
    let mut reader = csv::Reader::from_reader(serial.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), SWEEP_HEADER);
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 3);
    for (i, (rec, w)) in records.iter().zip([0.1, 0.25, 0.5]).enumerate() {
        assert_eq!(rec[0].parse::<usize>().unwrap(), i);
        assert_eq!(rec[1].parse::<u64>().unwrap(), 7 + i as u64);
        assert_eq!(rec[3].parse::<f64>().unwrap(), w);
        assert_eq!(&rec[7], "ok");
    }
    assert_eq!(serial, table("p", "3"));
}

#[test]
fn empty_grid_writes_only_the_header() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "trio.toml", SCENARIO);
    let grid = write(dir.path(), "grid.toml", "gamma = []\n");
    let out = dir.path().join("o");
    let r = cli(&["sweep", "--scenario", &scenario, "--grid", &grid, "--out", arg(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.trim_end(), SWEEP_HEADER.join(","));
}

#[test]
fn bad_grid_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let scenario = write(dir.path(), "trio.toml", SCENARIO);
    let grid = write(dir.path(), "grid.toml", "gamma = [0.1]\nbeta = [1.0]\n");
    let r = cli(&["sweep", "--scenario", &scenario, "--grid", &grid, "--out", arg(&dir.path().join("o"))]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.stderr.contains("grid.toml:2:"), "{}", r.stderr);
}

#[test]
fn bundled_experiment_parses() {
    let s = bundled_experiment(None).unwrap();
    assert_eq!(s.config.agents.len(), 3);
    assert_eq!(s.config.steps(), 90_000);
    assert_eq!(bundled_experiment(Some(9)).unwrap().config.seed, 9);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_swarmtrack");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let ok = status(&["feasibility", "--speeds", "10,12,16", "--bound", "2"]);
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    let bad = status(&["feasibility", "--speeds", "1,5", "--bound", "1"]);
    assert_eq!(bad.status.code(), Some(EXIT_INFEASIBLE));
    let usage = status(&["no-such-command"]);
    assert_eq!(usage.status.code(), Some(EXIT_ERROR));
    assert!(!usage.stderr.is_empty());
}
