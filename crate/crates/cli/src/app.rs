//! Verb dispatch and exit codes: 0 on success, 1 when a run errors or an
//! invariant fails, 2 for usage and configuration errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::experiment::{execute, execute_suites, Outcome};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "casemem", version, about = "Case-memory experiments and invariant suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configuration's mode: [CONFIG] [--section.key VALUE]...
    Run(Rest),
    /// Run invariant suites and exit 1 if any fails. Without a config or
    /// --mode, runs every fast suite.
    Check(Rest),
    /// Run a K sweep: [CONFIG] [--section.key VALUE]...
    Sweep(Rest),
}

#[derive(clap::Args, Debug)]
struct Rest {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "ARGS")]
    args: Vec<String>,
}

const OVERRIDE_HELP: &str = "\
Overrides take the form --section.key VALUE or --section.key=VALUE, e.g.
  --mode grad-check --seeds 20 --agent.k_retrieve 2 --continual.memory none,parametric
Shorthands: --out DIR (output.dir), --k N (agent.k_retrieve), --alpha X (agent.alpha),
--iterations N (continual.iterations). Output defaults to $CASEMEM_OUT_DIR, then ./casemem-out.";

fn usage() -> String {
    use clap::CommandFactory;
    format!("{}\n{OVERRIDE_HELP}\n", Cli::command().render_usage())
}

fn split_config(args: Vec<String>) -> (Option<PathBuf>, Vec<String>) {
    match args.first() {
        Some(first) if !first.starts_with("--") => (Some(PathBuf::from(first)), args[1..].to_vec()),
        _ => (None, args),
    }
}

fn report(outcome: &Outcome, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let _ = write!(out, "{}", outcome.summary);
    let _ = writeln!(out, "artifacts in {}", outcome.out_dir.display());
    let failures = outcome.failures();
    if failures.is_empty() {
        return EXIT_OK;
    }
    for f in failures {
        let _ = writeln!(err, "invariant failed: {}: {}", f.name, f.detail);
    }
    EXIT_FAILED
}

/// Parses `args` (without the program name), runs the verb and returns the
/// process exit code.
pub fn run_cli(args: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let argv = std::iter::once("casemem".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let (verb, rest) = match cli.command {
        Command::Run(r) => ("run", r.args),
        Command::Check(r) => ("check", r.args),
        Command::Sweep(r) => ("sweep", r.args),
    };
    if rest.iter().any(|a| a == "--help" || a == "-h") {
        let _ = write!(out, "{}", usage());
        return EXIT_OK;
    }
    let (path, mut overrides) = split_config(rest);
    let mode_given = path.is_some() || overrides.iter().any(|a| a == "--mode" || a.starts_with("--mode="));
    if verb == "sweep" {
        overrides.extend(["--mode".to_string(), "k-sweep".to_string()]);
    }
    let cfg = match ExperimentConfig::load(path.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}\n\n{}", usage());
            return EXIT_USAGE;
        }
    };
    let result = match verb {
        "check" if !mode_given => execute_suites(&cfg),
        "check" => execute(&cfg, true),
        _ => execute(&cfg, false),
    };
    match result {
        Ok(outcome) => report(&outcome, out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILED
        }
    }
}
