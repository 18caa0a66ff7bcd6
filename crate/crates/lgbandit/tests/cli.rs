use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use lgbandit::cli::Cli;
use lgbandit::config::ExperimentConfig;

fn lgbandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgbandit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

const SMALL: &[&str] = &["--n", "200", "--burn-in", "50", "--reps", "2"];

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_owned()
}

#[test]
fn sweep_writes_table_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let mut args = vec!["sweep", "--theta-steps", "3", "--seed", "7", "--out", &out];
    args.extend_from_slice(SMALL);
    let o = lgbandit(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("sweep.csv");
    assert_eq!(
        header(&csv),
        "theta,algorithm,s,mean_regret,std_err,normalized_vs_ubss_pct"
    );
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 3 * 4);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap())
            .unwrap();
    assert!(meta["version"].as_str().unwrap().starts_with('v'));
    assert_eq!(meta["command"], "sweep");
    assert_eq!(meta["config"]["seed"], 7);
    assert_eq!(meta["config"]["n"], 200);
}

#[test]
fn sweep_is_deterministic_and_thread_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, ob) = (out_arg(a.path()), out_arg(b.path()));
    let mut args_a = vec![
        "sweep",
        "--theta-steps",
        "2",
        "--threads",
        "1",
        "--out",
        &oa,
    ];
    let mut args_b = vec![
        "sweep",
        "--theta-steps",
        "2",
        "--threads",
        "3",
        "--out",
        &ob,
    ];
    args_a.extend_from_slice(SMALL);
    args_b.extend_from_slice(SMALL);
    assert!(lgbandit(&args_a).status.success());
    assert!(lgbandit(&args_b).status.success());
    assert_eq!(
        fs::read(a.path().join("sweep.csv")).unwrap(),
        fs::read(b.path().join("sweep.csv")).unwrap()
    );
}

#[test]
fn diagnostics_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = lgbandit(&["diagnostics", "--theta-steps", "8", "--out", &out]);
    assert!(o.status.success());
    let csv = dir.path().join("diagnostics.csv");
    assert_eq!(header(&csv), "theta,min_gramian_eig,eig_real_part");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 9);
}

#[test]
fn episode_dumps_trajectory_system_and_agent() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let mut args = vec![
        "episode", "--algo", "ubss", "--algo", "random", "--s", "1,2", "--out", &out,
    ];
    args.extend_from_slice(SMALL);
    let o = lgbandit(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("episode.csv");
    assert_eq!(
        header(&csv),
        "algorithm,t,action,best_action,reward,regret,cumulative_regret"
    );
    assert_eq!(
        fs::read_to_string(&csv).unwrap().lines().count(),
        1 + 3 * 200
    );
    let system: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("system.json")).unwrap()).unwrap();
    assert_eq!(system["gamma"].as_array().unwrap().len(), 4);
    let agent: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("agent_s2.json")).unwrap())
            .unwrap();
    assert_eq!(agent["s"], 2);
    assert_eq!(agent["rounds"], 200);
    assert!(agent["entries"].as_array().unwrap().len() <= 8);
}

#[test]
fn episode_accepts_custom_system() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.json");
    fs::write(
        &sys,
        r#"{"gamma": [[0.5, 0.0], [0.0, 0.3]], "q": [[1.0, 0.0], [0.0, 1.0]], "noise_var": 0.5,
            "actions": [[1.0, 0.0], [0.0, 1.0]], "b_c": 1.0}"#,
    )
    .unwrap();
    let out = out_arg(&dir.path().join("out"));
    let o = lgbandit(&[
        "episode",
        "--system",
        sys.to_str().unwrap(),
        "--n",
        "100",
        "--out",
        &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("out/system.json")).unwrap();
    assert!(text.contains("0.3"));
}

#[test]
fn s_compare_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let mut args = vec!["s-compare", "--out", &out];
    args.extend_from_slice(SMALL);
    let o = lgbandit(&args);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("s_compare.csv")).unwrap();
    let s_col: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(s_col, ["1", "2", "3"]);
}

#[test]
fn verify_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("verify.toml");
    fs::write(
        &cfg,
        "n = 300\nburn_in = 50\nreps = 2\n[verify]\ntrials = 40\nrounds = 60\nsequences = 3\nsteps = 50\ntheta_steps = 3\n",
    )
    .unwrap();
    let out = out_arg(&dir.path().join("out"));
    let o = lgbandit(&["verify", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/verify.json")).unwrap())
            .unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    for c in checks {
        for key in [
            "name",
            "nominal_level",
            "empirical_level",
            "slack",
            "passed",
        ] {
            assert!(c.get(key).is_some(), "missing {key}");
        }
    }
    assert!(report["regret_bound"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn validation_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = lgbandit(&["sweep", "--reps", "0", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reps"));

    let o = lgbandit(&["sweep", "--algo", "ucb", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));

    let o = lgbandit(&["episode", "--n", "2", "--s", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"reps": 3, "no_such_field": 1}"#).unwrap();
    let o = lgbandit(&["sweep", "--config", bad.to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_field"));

    let o = lgbandit(&["sweep", "--config", "/nonexistent/cfg.toml", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));

    let o = lgbandit(&["sweep", "--delta", "1.5", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn no_flags_give_benchmark_defaults() {
    let cli = Cli::try_parse_from(["lgbandit", "sweep"]).unwrap();
    let cfg = cli.command.args().resolve().unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!((cfg.n, cfg.burn_in), (10_000, 10_000));
}

#[test]
fn file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("c.json");
    fs::write(
        &json,
        r#"{"reps": 3, "n": 500, "algorithms": ["ubss", "ucb"], "normalize_denominator": "ubss"}"#,
    )
    .unwrap();
    let toml = dir.path().join("c.toml");
    fs::write(
        &toml,
        "reps = 3\nn = 500\nalgorithms = [\"ubss\", \"ucb\"]\nnormalize_denominator = \"ubss\"\n",
    )
    .unwrap();
    let from_json = ExperimentConfig::load(&json).unwrap();
    assert_eq!(from_json, ExperimentConfig::load(&toml).unwrap());

    let cli = Cli::try_parse_from([
        "lgbandit",
        "sweep",
        "--config",
        json.to_str().unwrap(),
        "--n",
        "900",
        "--tau",
        "0",
    ])
    .unwrap();
    let cfg = cli.command.args().resolve().unwrap();
    assert_eq!((cfg.reps, cfg.n), (3, 900));
    assert_eq!(cfg.tau_opt(), None);
    assert_eq!(cfg.algorithms.len(), 2);
}

#[test]
fn verify_on_single_action_system_skips_bound() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.json");
    fs::write(
        &sys,
        r#"{"gamma": [[0.5]], "q": [[1.0]], "noise_var": 1.0, "actions": [[1.0]], "b_c": 1.0}"#,
    )
    .unwrap();
    let cfg = dir.path().join("v.toml");
    fs::write(
        &cfg,
        "[verify]\ntrials = 20\nrounds = 40\nsequences = 2\nsteps = 20\ntheta_steps = 2\n",
    )
    .unwrap();
    let out = out_arg(&dir.path().join("out"));
    let o = lgbandit(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--system",
        sys.to_str().unwrap(),
        "--out",
        &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/verify.json")).unwrap())
            .unwrap();
    assert!(report["regret_bound"].is_null());
    assert_eq!(report["checks"].as_array().unwrap().len(), 6);
}
