use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn cache(&self) -> PathBuf {
        self.dir.path().join("cache")
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_qaoi"))
            .args(args)
            .env("QAOI_CACHE_DIR", self.cache())
            .output()
            .unwrap()
    }

    fn run_config(&self, command: &str, config: &Path, extra: &[&str]) -> Output {
        let mut args = vec![command, "--config", config.to_str().unwrap()];
        args.extend_from_slice(extra);
        self.run(&args)
    }
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Data lines of a CSV document, header first, metadata comments dropped.
fn csv_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn column(lines: &[Vec<String>], name: &str) -> Vec<String> {
    let k = lines[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines[1..].iter().map(|r| r[k].clone()).collect()
}

const ONE_ARM: &str = r#"{
  "arms": [{"lambda": 0.5, "gamma": 0.7, "p": 0.7}],
  "d_max": 50, "channels": 1, "horizon": 100, "runs": 10, "seed": 3,
  "policies": ["whittle"]
}"#;

const SMALL_NETWORK: &str = r#"{
  "arms": [
    {"lambda": 0.3, "gamma": 0.2, "p": 0.8}, {"lambda": 0.3, "gamma": 0.6, "p": 0.8},
    {"lambda": 0.3, "gamma": 0.2, "p": 0.8}, {"lambda": 0.3, "gamma": 0.6, "p": 0.8}
  ],
  "d_max": 10, "channels": 1, "horizon": 200, "burn_in": 20, "runs": 20, "seed": 9,
  "policies": ["whittle", "discounted", "greedy", "aoi", "random"],
  "sweep": {"field": "lambda", "values": [0.2, 0.7]}
}"#;

// ── index ────────────────────────────────────────────────────────────────

#[test]
fn index_writes_one_monotone_row_per_state() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", ONE_ARM);
    let text = stdout(&sb.run_config("index", &cfg, &[]));
    assert!(text.starts_with("# tool=qaoi version="));
    assert!(text.contains("error_free=false"));
    let lines = csv_lines(&text);
    assert_eq!(lines.len(), 101);
    let q = column(&lines, "q");
    let index: Vec<f64> = column(&lines, "index").iter().map(|x| x.parse().unwrap()).collect();
    assert!(index.iter().all(|&w| w > 0.0));
    for block in ["0", "1"] {
        let xs: Vec<f64> = index.iter().zip(&q).filter(|(_, q)| *q == block).map(|(w, _)| *w).collect();
        assert_eq!(xs.len(), 50);
        assert!(xs.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn error_free_path_is_recorded() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", ONE_ARM);
    let text = stdout(&sb.run_config("index", &cfg, &["--set", "arms.0.p=1"]));
    assert!(text.lines().next().unwrap().contains("error_free=true"));
    let json = stdout(&sb.run_config("index", &cfg, &["--set", "arms.0.p=1", "--format", "json"]));
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(doc["meta"]["error_free"], true);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 100);
    assert_eq!(doc["extra"].as_array().unwrap().len(), 1);
}

#[test]
fn repeated_index_hits_the_cache() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", ONE_ARM);
    let first = stdout(&sb.run_config("index", &cfg, &[]));
    let entries: Vec<_> = std::fs::read_dir(sb.cache()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1);
    let stamp = std::fs::metadata(&entries[0]).unwrap().modified().unwrap();
    let second = stdout(&sb.run_config("index", &cfg, &[]));
    assert_eq!(first, second);
    assert_eq!(std::fs::metadata(&entries[0]).unwrap().modified().unwrap(), stamp);
}

#[test]
fn out_flag_writes_a_file() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", ONE_ARM);
    let dest = sb.dir.path().join("table.csv");
    let out = sb.run_config("index", &cfg, &["--out", dest.to_str().unwrap()]);
    assert!(stdout(&out).is_empty());
    assert_eq!(csv_lines(&std::fs::read_to_string(dest).unwrap()).len(), 101);
}

// ── simulate and lower-bound ─────────────────────────────────────────────

#[test]
fn simulate_emits_policy_and_bound_rows_per_point() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", SMALL_NETWORK);
    let lines = csv_lines(&stdout(&sb.run_config("simulate", &cfg, &["--jobs", "1"])));
    assert_eq!(
        lines[0],
        ["policy", "lambda", "gamma_summary", "esqaoi", "stderr", "schedule_rate_mean", "seed", "runs", "horizon"]
    );
    assert_eq!(lines.len(), 1 + 2 * 6);
    let policy = column(&lines, "policy");
    let lambda = column(&lines, "lambda");
    assert_eq!(policy.iter().filter(|p| *p == "lower_bound").count(), 2);
    assert_eq!(lambda[..6], ["0.2"; 6]);
    assert_eq!(column(&lines, "gamma_summary")[0], "0.2|0.6");
    let esqaoi: Vec<f64> = column(&lines, "esqaoi").iter().map(|x| x.parse().unwrap()).collect();
    for point in esqaoi.chunks(6) {
        let bound = point[5];
        assert!(point[..5].iter().all(|&x| x >= bound - 0.05), "{point:?}");
    }
}

#[test]
fn tiny_simulation_is_byte_identical() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", SMALL_NETWORK);
    let args = ["--set", "runs=1", "--set", "horizon=10", "--set", "burn_in=0"];
    let a = stdout(&sb.run_config("simulate", &cfg, &args));
    let b = stdout(&sb.run_config("simulate", &cfg, &args));
    assert_eq!(a, b);
    let c = stdout(&sb.run_config("simulate", &cfg, &["--set", "runs=1", "--set", "horizon=10", "--set", "burn_in=0", "--set", "seed=10"]));
    assert_ne!(a, c);
}

#[test]
fn lower_bound_rows() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", SMALL_NETWORK);
    let lines = csv_lines(&stdout(&sb.run_config("lower-bound", &cfg, &[])));
    assert_eq!(lines[0], ["lambda", "gamma_summary", "arms", "channels", "lower_bound"]);
    let bounds: Vec<f64> = column(&lines, "lower_bound").iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(bounds.len(), 2);
    assert!(bounds[0] > 0.0 && bounds[0] < bounds[1]);
}

// ── sweep and verify ─────────────────────────────────────────────────────

#[test]
fn sweep_passive_sets_grow() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", ONE_ARM);
    let lines = csv_lines(&stdout(&sb.run_config("sweep", &cfg, &["--set", "d_max=15", "--set", "c_step=0.5"])));
    let passive: Vec<usize> = column(&lines, "passive_states").iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(passive[0], 0);
    assert_eq!(*passive.last().unwrap(), 30);
    assert!(passive.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn verify_passes_on_a_memoryless_arm() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", ONE_ARM);
    let out = sb.run_config("verify", &cfg, &["--set", "d_max=12", "--set", "arms.0.gamma=0.5", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["property"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        ["passive_set_monotone", "equal_thresholds", "index_matches_oracle", "stationary_matches_oracle"]
    );
    assert!(rows.iter().all(|r| r["passed"] == true));
}

// ── Exit codes ───────────────────────────────────────────────────────────

#[test]
fn configuration_errors_exit_with_two() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", SMALL_NETWORK);
    let cases: [&[&str]; 6] = [
        &["--set", "policies=[\"bogus\"]"],
        &["--set", "arms.1.lambda=1.5"],
        &["--set", "arms.9.lambda=0.5"],
        &["--set", "channels=4"],
        &["--set", "burn_in=500"],
        &["--set", "surprise=1"],
    ];
    for extra in cases {
        let out = sb.run_config("simulate", &cfg, extra);
        assert_eq!(out.status.code(), Some(2), "{extra:?}");
    }
    let err = String::from_utf8(sb.run_config("simulate", &cfg, cases[1]).stderr).unwrap();
    assert!(err.contains("arms[1]"), "{err}");
    let missing = sb.config("m.json", r#"{"arms": [], "d_max": 5}"#);
    assert_eq!(sb.run_config("index", &missing, &[]).status.code(), Some(2));
    let absent = sb.dir.path().join("absent.json");
    assert_eq!(sb.run_config("index", &absent, &[]).status.code(), Some(2));
    assert_eq!(sb.run(&["index"]).status.code(), Some(2));
}

#[test]
fn solver_errors_exit_with_three() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.json", SMALL_NETWORK);
    let out = sb.run_config("simulate", &cfg, &["--set", "policies=[\"optimal\"]", "--set", "d_max=50"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("capacity"));
}
