use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use casemem_cli::metrics::read_records;
use casemem_cli::{load_bank, ExperimentConfig};

const TINY: [&str; 6] = ["--env.n_clusters", "2", "--env.tasks_per_cluster", "6", "--seeds", "2"];

fn casemem(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_casemem"));
    cmd.args(args).env_remove("CASEMEM_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("CASEMEM_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(TINY).collect()
}

#[test]
fn continual_run_writes_one_record_per_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("exp.toml");
    fs::write(&cfg_path, "mode = \"continual\"\n[continual]\niterations = 3\nmemory = [\"none\", \"parametric\"]\n")
        .unwrap();
    let out = tmp.path().join("out");
    let o = casemem(&with_tiny(&["run", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()]), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = read_records(fs::read_to_string(out.join("metrics.jsonl")).unwrap().as_bytes()).unwrap();
    assert_eq!(recs.len(), 2 * 2 * 3);
    assert_eq!(recs[0].mode, "none");
    assert_eq!(recs.iter().map(|r| r.iteration).take(3).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(recs.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    assert!(recs.iter().filter(|r| r.mode == "parametric").all(|r| r.loss.is_some()));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("parametric - none"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("a");
    let o = casemem(
        &with_tiny(&["run", "--iterations", "2", "--agent.alpha", "0.5", "--out", first.to_str().unwrap()]),
        None,
    );
    assert!(o.status.success());
    let echo = first.join("config.toml");
    let second = tmp.path().join("b");
    let o = casemem(&["run", echo.to_str().unwrap(), "--out", second.to_str().unwrap()], None);
    assert!(o.status.success());
    assert_eq!(fs::read(first.join("metrics.jsonl")).unwrap(), fs::read(second.join("metrics.jsonl")).unwrap());
    let a = ExperimentConfig::from_toml(&fs::read_to_string(&echo).unwrap()).unwrap();
    let b = ExperimentConfig::from_toml(&fs::read_to_string(second.join("config.toml")).unwrap()).unwrap();
    assert_eq!(a.output.dir.as_deref(), Some(first.as_path()));
    assert_eq!(ExperimentConfig { output: b.output.clone(), ..a }, b);
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = casemem(&with_tiny(&["run", "--iterations", "1", "--continual.memory", "none"]), Some(tmp.path()));
    assert!(o.status.success());
    assert!(tmp.path().join("metrics.jsonl").exists());
    assert!(tmp.path().join("config.toml").exists());
}

#[test]
fn grad_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = casemem(&["check", "--mode", "grad-check", "--seeds", "20", "--out", tmp.path().to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS gradient fidelity"), "{stdout}");
    assert_eq!(fs::read_to_string(tmp.path().join("checks.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn oracle_and_td_modes_pass() {
    for mode in ["oracle-check", "tabular-td"] {
        let tmp = tempfile::tempdir().unwrap();
        let o = casemem(&["run", "--mode", mode, "--out", tmp.path().to_str().unwrap()], None);
        assert!(o.status.success(), "{mode}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn unknown_flags_and_modes_are_usage_errors() {
    for args in [&["run", "--no-such-flag", "1"][..], &["run", "--mode", "train"], &["frobnicate"], &["run", "--seeds"]]
    {
        let o = casemem(args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
    let o = casemem(&["run", "/definitely/missing.toml"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_invariant_exits_one_and_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let args =
        with_tiny(&["check", "--mode", "k-sweep", "--sweep.k_values", "0,1", "--out", tmp.path().to_str().unwrap()]);
    let o = casemem(&args, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invariant failed: k sweep"));
}

#[test]
fn sweep_writes_a_file_per_k_and_saved_banks_load() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = casemem(&with_tiny(&["sweep", "--sweep.k_values", "0,4", "--iterations", "2", "--out", out]), None);
    assert!(o.status.success());
    for k in [0, 4] {
        let text = fs::read_to_string(tmp.path().join(format!("metrics-k{k}.jsonl"))).unwrap();
        assert_eq!(read_records(text.as_bytes()).unwrap().len(), 2 * 2);
    }

    let banks = tmp.path().join("banks");
    let args = with_tiny(&[
        "run",
        "--iterations",
        "2",
        "--continual.memory",
        "nonparametric",
        "--output.save_banks",
        "true",
        "--out",
        banks.to_str().unwrap(),
    ]);
    assert!(casemem(&args, None).status.success());
    let bank = load_bank(&banks.join("bank-nonparametric-seed1.jsonl")).unwrap();
    assert_eq!(bank.len(), 2 * 12);
    assert!(bank.iter().all(|c| c.state.embedding().is_some() && c.has_binary_reward()));
}
