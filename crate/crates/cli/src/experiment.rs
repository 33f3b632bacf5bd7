//! Executes a configuration and writes its artifacts: `config.toml` (the
//! resolved configuration), a line-delimited results file and `summary.txt`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use casemem_core::harness::checks::{
    calibration, ce_vs_mse_gradient, determinism, gradient_fidelity, k_sweep_report, oracle_equivalence,
    oracle_policy_optimality, ordering_report, softmax_optimality, CheckReport, TD_TOL, TD_VISITS,
};
use casemem_core::harness::{
    enumerate_soft_optimal_q, fixed_specs, k_sweep, mean_curve, mean_std, pooled_standard_error, run_seeds_with_banks,
    run_tabular_td, KSweepRow, MemoryMode, RunMetrics,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::metrics::{records, write_records};
use crate::persist::save_bank;

/// What a finished run produced.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub summary: String,
    pub checks: Vec<CheckReport>,
}

impl Outcome {
    pub fn failures(&self) -> Vec<&CheckReport> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Serialize)]
struct CheckRecord<'a> {
    name: &'a str,
    passed: bool,
    detail: &'a str,
}

#[derive(Serialize)]
struct TdRecord<'a> {
    fixture: &'a str,
    alpha: f64,
    keys: usize,
    updates: usize,
    sup_distance: f64,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_checks(dir: &Path, checks: &[CheckReport]) -> Result<()> {
    let mut out = create(&dir.join("checks.jsonl"))?;
    for c in checks {
        serde_json::to_writer(&mut out, &CheckRecord { name: c.name, passed: c.passed, detail: &c.detail })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn prepare(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).context("cannot write config echo")?;
    Ok(dir)
}

/// Runs `cfg.mode`. With `gate` set, continual and sweep runs also evaluate
/// their ordering invariants; check modes always do.
pub fn execute(cfg: &ExperimentConfig, gate: bool) -> Result<Outcome> {
    let dir = prepare(cfg)?;
    let seeds = cfg.seeds.resolve();
    let (summary, checks) = match cfg.mode {
        Mode::OracleCheck => {
            let checks = vec![
                softmax_optimality(1000, 1000, seeds[0]),
                oracle_policy_optimality(1000, seeds[0]),
                oracle_equivalence(),
            ];
            write_checks(&dir, &checks)?;
            (String::new(), checks)
        }
        Mode::GradCheck => {
            let checks = vec![gradient_fidelity(&seeds), ce_vs_mse_gradient()];
            write_checks(&dir, &checks)?;
            (String::new(), checks)
        }
        Mode::TabularTd => tabular_td(&dir)?,
        Mode::Continual => continual(cfg, &dir, &seeds, gate)?,
        Mode::KSweep => sweep(cfg, &dir, &seeds, gate)?,
    };
    finish(dir, cfg.mode.as_str(), summary, checks)
}

/// Every fast invariant suite, with default settings where `cfg` is silent.
pub fn execute_suites(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = prepare(cfg)?;
    let seeds = cfg.seeds.resolve();
    let small = cfg.env.seeded(seeds[0]);
    let agent = casemem_core::AgentConfig { seed: seeds[0], ..cfg.agent.clone() };
    let checks = vec![
        softmax_optimality(1000, 1000, seeds[0]),
        oracle_policy_optimality(1000, seeds[0]),
        gradient_fidelity(&seeds),
        oracle_equivalence(),
        ce_vs_mse_gradient(),
        calibration(seeds[0]),
        determinism(&small, &cfg.continual_config(MemoryMode::Parametric), &agent),
    ];
    write_checks(&dir, &checks)?;
    finish(dir, "invariant suites", String::new(), checks)
}

fn finish(dir: PathBuf, title: &str, mut summary: String, checks: Vec<CheckReport>) -> Result<Outcome> {
    let mut text = format!("{title}\n\n");
    if !summary.is_empty() {
        text.push_str(&summary);
        text.push('\n');
    }
    for c in &checks {
        writeln!(text, "{c}").expect("string write");
    }
    fs::write(dir.join("summary.txt"), &text).context("cannot write summary")?;
    summary = text;
    Ok(Outcome { out_dir: dir, summary, checks })
}

fn tabular_td(dir: &Path) -> Result<(String, Vec<CheckReport>)> {
    let mut out = create(&dir.join("td.jsonl"))?;
    let mut table = format!("{:<12} {:>6} {:>8} {:>12}\n", "fixture", "keys", "updates", "sup error");
    let mut passed = true;
    for fx in fixed_specs() {
        let oracle = enumerate_soft_optimal_q(&fx.spec, fx.alpha)?;
        let run = run_tabular_td(&fx.spec, fx.alpha, TD_VISITS)?;
        let sup = oracle.sup_distance(&run.table);
        passed &= sup < TD_TOL;
        let rec =
            TdRecord { fixture: fx.name, alpha: fx.alpha, keys: oracle.len(), updates: run.updates, sup_distance: sup };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
        writeln!(table, "{:<12} {:>6} {:>8} {:>12.3e}", fx.name, oracle.len(), run.updates, sup)?;
    }
    out.flush()?;
    let check =
        CheckReport { name: "tabular TD convergence", passed, detail: format!("every fixture within {TD_TOL:e}") };
    Ok((table, vec![check]))
}

fn curve_text(curve: &[f64]) -> String {
    curve.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" ")
}

fn continual(cfg: &ExperimentConfig, dir: &Path, seeds: &[u64], gate: bool) -> Result<(String, Vec<CheckReport>)> {
    let mut out = create(&dir.join("metrics.jsonl"))?;
    let mut table = format!("{:<14} {:>5} {:>10} {:>8}  curve\n", "memory", "seeds", "final", "std");
    let mut by_mode: Vec<(MemoryMode, Vec<RunMetrics>)> = Vec::new();
    for mode in cfg.continual.memory.to_vec() {
        let results = run_seeds_with_banks(&cfg.env, &cfg.continual_config(mode), &cfg.agent, seeds)?;
        let mut runs = Vec::with_capacity(results.len());
        for (run, bank) in results {
            write_records(&mut out, &records(&run))?;
            if cfg.output.save_banks {
                save_bank(&bank, &dir.join(format!("bank-{mode}-seed{}.jsonl", run.seed)))?;
            }
            runs.push(run);
        }
        let finals: Vec<f64> = runs.iter().map(RunMetrics::final_accuracy).collect();
        let (mean, std) = mean_std(&finals);
        writeln!(
            table,
            "{:<14} {:>5} {:>10.4} {:>8.4}  {}",
            mode.as_str(),
            runs.len(),
            mean,
            std,
            curve_text(&mean_curve(&runs))
        )?;
        by_mode.push((mode, runs));
    }
    out.flush()?;
    let find = |m: MemoryMode| by_mode.iter().find(|(k, _)| *k == m).map(|(_, r)| r);
    if let (Some(p), Some(n)) = (find(MemoryMode::Parametric), find(MemoryMode::None)) {
        let (a, b): (Vec<f64>, Vec<f64>) =
            (p.iter().map(RunMetrics::final_accuracy).collect(), n.iter().map(RunMetrics::final_accuracy).collect());
        let gap = mean_std(&a).0 - mean_std(&b).0;
        writeln!(table, "\nparametric - none: {gap:.4} ({:.1} pooled SE)", gap / pooled_standard_error(&a, &b))?;
    }
    let mut checks = Vec::new();
    if gate {
        match (find(MemoryMode::Parametric), find(MemoryMode::Nonparametric), find(MemoryMode::None)) {
            (Some(p), Some(s), Some(n)) => checks.push(ordering_report(p, s, n)),
            _ => checks.push(CheckReport {
                name: "continual ordering",
                passed: false,
                detail: "continual.memory must list none, nonparametric and parametric".into(),
            }),
        }
    }
    Ok((table, checks))
}

fn sweep(cfg: &ExperimentConfig, dir: &Path, seeds: &[u64], gate: bool) -> Result<(String, Vec<CheckReport>)> {
    let ccfg = cfg.continual_config(cfg.sweep.memory);
    let rows: Vec<KSweepRow> = k_sweep(&cfg.env, &ccfg, &cfg.agent, &cfg.sweep.k_values, seeds)?;
    let base = rows.iter().find(|r| r.k == 0);
    let mut table = format!("{:>6} {:>10} {:>8} {:>12}\n", "K", "mean", "std", "vs K=0 (SE)");
    for row in &rows {
        let mut out = create(&dir.join(format!("metrics-k{}.jsonl", row.k)))?;
        for run in &row.runs {
            write_records(&mut out, &records(run))?;
        }
        out.flush()?;
        let z = base.filter(|b| b.k != row.k).map_or(String::from("-"), |b| {
            let se = pooled_standard_error(&row.accuracies, &b.accuracies);
            format!("{:.1}", (row.mean - b.mean) / se)
        });
        writeln!(table, "{:>6} {:>10.4} {:>8.4} {:>12}", row.k, row.mean, row.std, z)?;
    }
    let checks = if gate { vec![k_sweep_report(&rows, cfg.env.n_tasks() * ccfg.iterations)] } else { Vec::new() };
    Ok((table, checks))
}
