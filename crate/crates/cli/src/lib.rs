//! Command-line front end: estimates on sample files, slice/dimension
//! sweeps, particle flows and the oracle self-test.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod estimate;
pub mod flowcmd;
pub mod sweep;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use error::{CliError, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_SELFTEST, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "kerdisc", version, about = "Kernel discrepancies to isotropic priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print one discrepancy estimate as JSON.
    Estimate(estimate::EstimateArgs),
    /// Run a dimension × slice-count × seed grid and print CSV.
    Sweep {
        /// TOML config (JSON when the name ends in `.json`).
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a particle flow and print the trajectory CSV.
    Flow {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle-equivalence checks.
    Selftest {
        /// Only checks whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
        /// Reduced Monte-Carlo budgets.
        #[arg(long)]
        fast: bool,
        /// Test hook: corrupt the reference value of matching checks.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn init_threads() {
    if let Some(n) = std::env::var("KERDISC_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        // Fails only if the pool already exists, e.g. on a second call in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn emit(out: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(body)?;
            s.flush()?;
            Ok(())
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Estimate(args) => {
            let est = estimate::estimate(&args)?;
            emit(None, format!("{}\n", estimate::to_json(&est)).as_bytes())?;
        }
        Command::Sweep { config, out } => {
            let cfg: config::SweepConfig = config::load_config(&config)?;
            let rows = sweep::run_sweep(&cfg)?;
            let mut body = Vec::new();
            sweep::write_sweep(&mut body, &rows)?;
            emit(out.as_deref(), &body)?;
        }
        Command::Flow { config, out } => {
            let cfg: config::FlowConfig = config::load_config(&config)?;
            let res = flowcmd::run_flow(&cfg)?;
            let mut body = Vec::new();
            kerdisc::flow::write_trajectory(&mut body, &flowcmd::flow_meta(&cfg), &res.trajectory)?;
            emit(out.as_deref(), &body)?;
        }
        Command::Selftest { filter, fast, inject_fault } => {
            let budget = if fast { checks::Budget::fast() } else { checks::Budget::full() };
            let ctx = checks::Ctx { budget, fault: inject_fault };
            let started = std::time::Instant::now();
            let results = checks::run_checks(&ctx, filter.as_deref(), |c| println!("{c}"));
            let failed: Vec<&str> = results.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            println!(
                "{} checks, {} failed, {:.1} s{}",
                results.len(),
                failed.len(),
                started.elapsed().as_secs_f64(),
                if fast { " (fast budgets)" } else { "" }
            );
            if results.is_empty() {
                return Err(CliError::Usage(format!("no check matches filter {:?}", filter.unwrap_or_default())));
            }
            if !failed.is_empty() {
                eprintln!("failed checks: {}", failed.join(", "));
                return Ok(EXIT_SELFTEST);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    init_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
