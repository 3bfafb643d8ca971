use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qrd_cli::run::{run_check, run_converge, run_energy, run_simulate, Study};
use qrd_cli::{parse_config, Context, Failure};

/// Simulate and audit degenerate quasilinear reaction-diffusion systems.
///
/// Exit codes: 0 success, 1 property violation, 2 configuration error,
/// 3 runtime failure. Relative output directories are resolved against
/// $QRD_OUTPUT_ROOT when it is set.
#[derive(Parser)]
#[command(name = "qrd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Grid,
    Eps,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system and write series, snapshots and plots.
    Simulate { config: PathBuf },
    /// Audit the structural hypotheses of the configured system.
    Check { config: PathBuf },
    /// Select and verify energy weights for the given orders.
    Energy {
        config: PathBuf,
        /// Comma-separated energy orders, each at least 2.
        #[arg(long = "p", value_delimiter = ',', required = true)]
        p: Vec<u32>,
    },
    /// Grid refinement or regularization study.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, value_enum, default_value = "grid")]
        study: StudyArg,
    },
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let ctx = Context::from_env();
    match cli.command {
        Command::Simulate { config } => {
            let cfg = parse_config(&config)?;
            let out = run_simulate(&cfg, &ctx)?;
            for n in &out.notices {
                eprintln!("notice: {n}");
            }
            println!("wrote {} checkpoints to {}", out.rows, out.dir.display());
            if !out.audit_passed {
                println!("structural audit reported violations; see summary.json");
            }
            if !out.violations.is_empty() {
                return Err(Failure::Violation(out.violations.join("; ")));
            }
        }
        Command::Check { config } => {
            let cfg = parse_config(&config)?;
            let out = run_check(&cfg, &ctx)?;
            for line in out.audit.lines() {
                println!("{line}");
            }
            if !out.audit.passed() {
                return Err(Failure::Violation("at least one hypothesis failed on the audit box".into()));
            }
        }
        Command::Energy { config, p } => {
            let cfg = parse_config(&config)?;
            let out = run_energy(&cfg, &ctx, &p)?;
            for row in &out.rows {
                println!(
                    "p = {}: θ = {:?}, min eigenvalue {:.3e}, c_low {:.3e}, c_high {:.3e}, initial ℒ_p {:.6e}",
                    row.p, row.weights.theta, row.min_eigenvalue, row.c_low, row.c_high, row.initial_energy
                );
            }
            if let Some(row) = out.rows.iter().find(|r| !r.positive_definite) {
                return Err(Failure::Violation(format!("diffusion block matrix is not positive definite for p = {}", row.p)));
            }
        }
        Command::Converge { config, levels, study } => {
            let cfg = parse_config(&config)?;
            let study = match study {
                StudyArg::Grid => Study::Grid,
                StudyArg::Eps => Study::Epsilon,
            };
            let out = run_converge(&cfg, &ctx, levels, study)?;
            for line in out.table.lines() {
                println!("{line}");
            }
            if let qrd_cli::run::ConvergenceTable::Epsilon { strictly_decreasing: false, .. } = out.table {
                return Err(Failure::Violation("regularization gaps are not strictly decreasing".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
