//! `psadmm`: run BER experiments, parameter sweeps, convergence diagnostics
//! and the multiplication audit from a TOML configuration.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, FileConfig, Overrides, RunConfig};
use psadmm_core::harness::{complexity_audit, convergence_trace_experiment, parameter_sweep, run_experiment};

const EXIT_PARSE: u8 = 2;
const EXIT_SEMANTIC: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_DIAGNOSTIC: u8 = 5;

#[derive(Parser)]
#[command(
    name = "psadmm",
    version,
    about = "Massive MIMO detection experiments with penalized sharing ADMM",
    after_help = "Configuration precedence: command-line flags, then the config file, then built-in defaults.\n\
Without --config the defaults describe a 128x16 QPSK experiment: SNR 0..10 dB in 2 dB steps,\n\
1000 trials, seed 0, detectors psadmm and mmse, rho 300, alpha_q = 80*4^(q-1), K 30, eps 1e-6.\n\
Exit codes: 0 success, 2 config parse error, 3 invalid settings, 4 I/O error, 5 diagnostic failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file (sections: system, experiment, psadmm, detectors, sweep, diagnose, audit).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PSADMM_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trials per SNR point (or per sweep cell).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Run PS-ADMM even when its convergence conditions fail.
    #[arg(long, global = true)]
    override_validation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// BER versus SNR for every configured detector; writes ber.csv.
    Ber,
    /// BER and mean convergence traces over the rho x alpha grid; writes sweep.csv and trace.csv.
    Sweep,
    /// Per-iteration property checks on traced runs; writes diagnose.csv and diagnose_runs.csv.
    Diagnose,
    /// Counted multiplications of one detection against the closed-form cost; writes audit.csv.
    Audit,
}

enum Failure {
    Config(ConfigError),
    Io(String),
    Semantic(String),
    Diagnostic(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let file = match &common.config {
        Some(path) => config::parse_file(path)?,
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        seed: common.seed,
        trials: common.trials,
        out: common.out.clone(),
        override_validation: common.override_validation,
    };
    Ok(file.resolve(&overrides)?)
}

fn core_error(e: psadmm_core::Error) -> Failure {
    let hint = match e {
        psadmm_core::Error::ConditionViolation { .. } => " (pass --override-validation to run anyway)",
        _ => "",
    };
    Failure::Semantic(format!("{e}{hint}"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load(&cli.common)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::Semantic("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Semantic(e.to_string()))?;
    }
    let out = output::Output::create(&cfg.out)?;
    match cli.command {
        Command::Ber => {
            let records = run_experiment(&cfg.spec).map_err(core_error)?;
            out.write_ber(&cfg.spec, &records)?;
            for r in &records {
                eprintln!("{:>14} {:>7.2} dB  ber {:.4e}  ({} / {} bits)", r.detector, r.snr_db, r.ber, r.bit_errors, r.bits);
            }
            let failed: Vec<_> = records.iter().filter(|r| r.failures > 0).collect();
            if let Some(r) = failed.first() {
                let first = r.first_failure.as_deref().unwrap_or("?");
                let hint = if first.contains("condition") { "; pass --override-validation to run anyway" } else { "" };
                return Err(Failure::Semantic(format!(
                    "{} failed on {} trials at {} dB; first: {first} (counted as all bits wrong){hint}",
                    r.detector, r.failures, r.snr_db
                )));
            }
        }
        Command::Sweep => {
            let report = parameter_sweep(&cfg.spec, &cfg.sweep_rho, &cfg.sweep_alpha).map_err(core_error)?;
            out.write_sweep(&report)?;
            let best = &report.records[report.best];
            eprintln!(
                "best cell: rho {} alpha {} at {} dB, ber {:.4e} (condition_ok {})",
                best.rho, best.alpha, best.snr_db, best.ber, best.condition_ok
            );
        }
        Command::Diagnose => {
            let stats = convergence_trace_experiment(&cfg.spec, cfg.diagnose_snr_db, cfg.diagnose_instances)
                .map_err(core_error)?;
            out.write_diagnose(&stats)?;
            eprint!("{}", output::diagnose_report(&stats));
            if let Some(msg) = output::first_guaranteed_failure(&stats) {
                return Err(Failure::Diagnostic(msg));
            }
        }
        Command::Audit => {
            let s = &cfg.spec;
            let report = complexity_audit(s.b, s.u, s.q, cfg.audit_iterations).map_err(core_error)?;
            out.write_audit(&report)?;
            eprintln!(
                "B={} U={} Q={} K={}: measured {:.2} vs predicted {:.2} complex multiplications (ratio {:.3})",
                report.b, report.u, report.q, report.k, report.measured, report.predicted, report.ratio
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(ConfigError::Parse(m)) => (EXIT_PARSE, format!("config error: {m}")),
                Failure::Config(ConfigError::Semantic(m)) => (EXIT_SEMANTIC, format!("invalid settings: {m}")),
                Failure::Semantic(m) => (EXIT_SEMANTIC, format!("invalid settings: {m}")),
                Failure::Io(m) => (EXIT_IO, format!("I/O error: {m}")),
                Failure::Diagnostic(m) => (EXIT_DIAGNOSTIC, format!("diagnostic failure: {m}")),
            };
            eprintln!("psadmm: {msg}");
            ExitCode::from(code)
        }
    }
}
