use std::path::Path;
use std::process::{Command, Output};

fn mlpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlpp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const TIGER: &str = r#"
scenario = "tiger"
solvers = ["mlpp", "baseline@0"]
budget = "100"
trials = 3
seed = 11
"#;

#[test]
fn validate_config_accepts_good_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TIGER);
    let out = mlpp(&["validate-config", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("ok: scenario tiger"), "{text}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "scenario = \"maze\"",
        "scenario = \"tiger\"\ntrials = 0",
        "scenario = \"tiger\"\nsolver = \"baseline@4\"",
        "scenario = \"tiger\"\nunknown_key = 1",
        "scenario = \"car\"\n[car.map]\nbeacons = []",
        "not toml at all [",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), text);
        let out = mlpp(&["bench", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "case {text:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
    }
    let missing = dir.path().join("missing.toml");
    let out = mlpp(&["validate-config", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(mlpp(&["bench"]).status.code(), Some(2));
    let cfg = write(dir.path(), "c.toml", TIGER);
    let out = mlpp(&["bench", "--config", &cfg, "--budget", "lots"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_without_budgets_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TIGER);
    assert_eq!(mlpp(&["sweep", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn bench_writes_one_row_per_trial_and_solver() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TIGER);
    let csv = dir.path().join("out/bench.csv");
    let out = mlpp(&[
        "bench",
        "--config",
        &cfg,
        "--out",
        csv.to_str().unwrap(),
        "--trials",
        "4",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "trial,seed,solver,budget,discounted_return,steps,outcome,wall_ms_per_step,episodes_per_level,simulation_cost"
    );
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(!text.contains('\r'));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("mean return") && summary.contains("95% CI"));
}

#[test]
fn csv_goes_to_stdout_without_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TIGER);
    let out = mlpp(&["bench", "--config", &cfg, "--trials", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("trial,seed,solver"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TIGER);
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let out = mlpp(&[
            "bench",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(p).unwrap()
    };
    let a = run("a.csv", "3");
    let b = run("b.csv", "3");
    let c = run("c.csv", "4");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_emits_cartesian_product() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "scenario = \"tiger\"\nsolvers = [\"mlpp\", \"baseline@0\"]\nbudgets = [\"50\", \"100\"]\ntrials = 2\n",
    );
    let out = mlpp(&["sweep", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(text.starts_with("solver,budget,trials,mean_return"));
}

#[test]
fn variance_with_one_sample_emits_missing_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.toml",
        "scenario = \"chain\"\nbudget = \"50\"\n[variance]\nruns = 1\nsamples = 1\nsteps = 2\n",
    );
    let out = mlpp(&["variance", "--config", &cfg]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "step");
    assert_eq!(fields[5], "");
    assert!(String::from_utf8_lossy(&out.stderr).contains("variance undefined"));
}

#[test]
fn variance_on_single_level_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", "scenario = \"tiger\"\n");
    assert_eq!(mlpp(&["variance", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn tree_dump_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("tree.json");
    let cfg = write(
        dir.path(),
        "t.toml",
        &format!(
            "scenario = \"chain\"\nbudget = \"40\"\ntree_dump = {:?}\ntree_dump_depth = 1\n",
            dump.to_str().unwrap()
        ),
    );
    let out = mlpp(&["bench", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dump).unwrap();
    assert!(text.trim_start().starts_with('{'));
    assert!(text.contains("\"nodes\"") && text.contains("\"q_hat\""));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = mlpp(&["validate-config", "--config", path.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
