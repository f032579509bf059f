//! Command-line front end for the experiment harness.

use std::io::Write;
use std::path::{Path, PathBuf};

use cagb_core::harness::{self, HarnessError, OutputFormat, RunOptions, Table, VerifyReport};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cagb", version, about = "Context-aware group buying experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every cell of a config and write the metrics table.
    Run {
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check stable engine runs against brute-force enumeration.
    Verify { config: PathBuf },
    /// Run a config once per value of one key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output path; defaults to the config's `output` key, else stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Append a wall-time column (breaks byte-for-byte reproducibility).
    #[arg(long)]
    pub timing: bool,
}

impl OutputArgs {
    fn options(&self) -> RunOptions {
        let format = match self.format {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::JsonLines,
        };
        RunOptions { jobs: self.jobs as usize, timing: self.timing, format }
    }
}

fn exit_code(err: &HarnessError) -> i32 {
    if err.is_config() {
        EXIT_INVALID
    } else {
        EXIT_FAILED
    }
}

fn emit(table: &Table, opts: &RunOptions, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), HarnessError> {
    let bytes = table.render(opts.format)?;
    match out {
        Some(path) => harness::write_atomic(path, &bytes),
        None => Ok(stdout.write_all(&bytes)?),
    }
}

/// Prints the verify outcome and returns the exit code.
pub fn report_verify(report: &VerifyReport, out: &mut dyn Write) -> i32 {
    for f in &report.failures {
        let witness = match &f.witness {
            Some(m) => format!("witness: {m}"),
            None => "no witness found".to_string(),
        };
        let _ = writeln!(out, "FAIL seed {} order {}: final partition {} is not stable; {witness}", f.seed, f.order, f.partition);
    }
    let _ = writeln!(
        out,
        "verify: {} runs, {} stable, {} outside the oracle set",
        report.runs,
        report.stable_runs,
        report.failures.len()
    );
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

/// Executes a parsed command line, writing results and diagnostics to the
/// given streams. Returns the process exit code.
pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Run { config, output } => (|| {
            let cfg = harness::load_config(&config)?;
            let opts = output.options();
            let table = harness::run_config(&cfg, &opts)?;
            let target = output.out.clone().or_else(|| cfg.output().map(PathBuf::from));
            emit(&table, &opts, target.as_deref(), stdout)?;
            Ok(EXIT_OK)
        })(),
        Command::Verify { config } => (|| {
            let cfg = harness::load_config(&config)?;
            let report = harness::verify(&cfg)?;
            Ok(report_verify(&report, stdout))
        })(),
        Command::Sweep { config, key, values, output } => (|| {
            let base = harness::read_config_value(&config)?;
            let opts = output.options();
            let table = harness::sweep(&base, &key, &values, &opts)?;
            let configured = base.get("output").and_then(|v| v.as_str()).map(PathBuf::from);
            emit(&table, &opts, output.out.clone().or(configured).as_deref(), stdout)?;
            Ok(EXIT_OK)
        })(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
