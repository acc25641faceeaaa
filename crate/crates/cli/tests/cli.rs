use std::fs;
use std::path::{Path, PathBuf};

use tugwar_cli::run;

const LINE: &str = r#"
seed = 5

[domain]
kind = "cube"
n = 1
half_width = 1.0

[grid]
h = 0.05
epsilon = 0.2
horizon = 0.3

[p]
kind = "constant"
value = 4.0

[payoff]
kind = "quadratic"
"#;

fn setup(body: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, body).unwrap();
    (dir, cfg)
}

fn tug(args: &[&str], cfg: &Path, out: &Path) -> i32 {
    let mut argv = vec!["tugwar".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".into(), cfg.display().to_string(), "--out".into(), out.display().to_string()]);
    run(argv)
}

#[test]
fn solve_writes_csv_and_summary() {
    let (dir, cfg) = setup(LINE);
    let out = dir.path().join("out");
    assert_eq!(tug(&["solve"], &cfg, &out), 0);
    let csv = fs::read_to_string(out.join("solve.csv")).unwrap();
    assert!(csv.starts_with("slice,t,x1,value,interior\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["complete"], true);
    // no temporary files are left behind
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "{names:?}");
}

#[test]
fn resumed_march_matches_a_full_one() {
    let (dir, cfg) = setup(LINE);
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    assert_eq!(tug(&["solve"], &cfg, &full), 0);
    assert_eq!(tug(&["solve", "--max-slices", "7"], &cfg, &part), 0);
    let dump = part.join("solve.dump");
    assert!(!part.join("solve.csv").exists());
    assert_eq!(tug(&["solve", "--resume", dump.to_str().unwrap()], &cfg, &part), 0);
    assert_eq!(fs::read(full.join("solve.csv")).unwrap(), fs::read(part.join("solve.csv")).unwrap());
}

#[test]
fn seed_flag_overrides_the_config() {
    let (dir, cfg) = setup(LINE);
    let out = dir.path().join("out");
    assert_eq!(tug(&["bounds", "--seed", "99", "--set", "bounds.ns=[10]", "--set", "bounds.runs=1000"], &cfg, &out), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(r["seed"], 99);
    assert_eq!(r["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn usage_and_config_errors_exit_one() {
    let (dir, cfg) = setup(LINE);
    let out = dir.path().join("out");
    assert_eq!(tug(&["solve", "--set", "grid.typo=1"], &cfg, &out), 1);
    assert_eq!(tug(&["solve", "--set", "grid.h=0.1"], &cfg, &out), 1);
    assert_eq!(tug(&["frobnicate"], &cfg, &out), 1);
    assert_eq!(tug(&["solve", "--threads", "0"], &cfg, &out), 1);
    assert_eq!(run(["tugwar", "--help"]), 0);
    assert_eq!(run(["tugwar", "--version"]), 0);
    // a negative payoff has no Harnack quotient
    let negative =
        ["probe", "--kind", "harnack", "--set", "payoff={kind=\"constant\",value=-1.0}", "--set", "probe.radius=0.05"];
    assert_eq!(tug(&negative, &cfg, &out), 1);
    let negative = ["probe", "--kind", "local", "--set", "payoff={kind=\"constant\",value=-1.0}"];
    assert_eq!(tug(&negative, &cfg, &out), 1);
}

#[test]
fn barrier_radius_below_nine_epsilon_is_a_precondition_error() {
    let (dir, cfg) = setup("[barriers]\nepsilon = 0.01\nr_multiples = [5.0]\n");
    let out = dir.path().join("out");
    assert_eq!(tug(&["verify-barriers", "--check", "psi-cases"], &cfg, &out), 1);
}

#[test]
fn selected_barrier_checks_pass() {
    let (dir, cfg) = setup("seed = 4\n[barriers]\ndims = [2]\nsamples = 2000\n");
    let out = dir.path().join("out");
    let code = tug(
        &["verify-barriers", "--check", "psi-cases", "--check", "discriminant", "--check", "time-lattice"],
        &cfg,
        &out,
    );
    assert_eq!(code, 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("barriers.json")).unwrap()).unwrap();
    assert_eq!(r["checks"], serde_json::json!(["psi-cases", "discriminant", "time-lattice"]));
    assert_eq!(r["reports"].as_array().unwrap().len(), 4);
    assert_eq!(r["discriminants"].as_array().unwrap().len(), 10);
}

#[test]
fn stalled_convergence_exits_two() {
    let body = format!("{LINE}\n[converge]\nepsilons = [0.2, 0.1]\nspacing = {{ rule = \"ratio\", ratio = 0.25 }}\n");
    let (dir, cfg) = setup(&body);
    let out = dir.path().join("out");
    assert_eq!(tug(&["converge", "--set", "grid.horizon=0.5"], &cfg, &out), 2);
    let csv = fs::read_to_string(out.join("converge.csv")).unwrap();
    assert!(csv.starts_with("epsilon,h,error,ratio\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn simulate_with_fixed_strategies_and_trajectories() {
    let (dir, cfg) = setup(LINE);
    let out = dir.path().join("out");
    let args = ["simulate", "--strategy-i", "zero", "--strategy-ii", "zero", "--runs", "200", "--trajectories", "2"];
    assert_eq!(tug(&args, &cfg, &out), 0);
    let csv = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run,k,t,x1,mover,move1"));
    assert!(lines.next().unwrap().starts_with("0,0,"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
    assert_eq!(r["compared"], 0);
    assert_eq!(r["starts"][0]["estimate"]["runs"], 200);
}

#[test]
fn identical_runs_are_byte_identical() {
    let (dir, cfg) = setup(LINE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(tug(&["simulate", "--runs", "500", "--trajectories", "1"], &cfg, out), 0);
        assert_eq!(tug(&["probe", "--kind", "time"], &cfg, out), 0);
    }
    for name in ["simulate.json", "trajectories.csv", "probe-time.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    // thread count does not change the result
    let c = dir.path().join("c");
    assert_eq!(tug(&["simulate", "--runs", "500", "--trajectories", "1", "--threads", "3"], &cfg, &c), 0);
    assert_eq!(fs::read(a.join("simulate.json")).unwrap(), fs::read(c.join("simulate.json")).unwrap());
}
