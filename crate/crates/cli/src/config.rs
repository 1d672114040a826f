//! TOML run configuration.
//!
//! Every section and key is optional; missing values take the defaults below.
//! Unknown keys are rejected. Command-line flags override the file.

use std::path::{Path, PathBuf};

use psadmm_core::baselines::{BaselineConfig, BaselineKind, DEFAULT_GS_SWEEPS, DEFAULT_NEUMANN_TERMS};
use psadmm_core::harness::{
    scaled_alphas, DetectorConfig, ExperimentSpec, TrialPolicy, DEFAULT_MIN_ERROR_EVENTS, DEFAULT_TRIALS,
};
use psadmm_core::psadmm::{Initialization, OutputMode, PsAdmmParams};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub psadmm: PsAdmmSection,
    #[serde(default)]
    pub detectors: DetectorsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
    #[serde(default)]
    pub audit: AuditSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// Base-station antennas `B`.
    pub antennas: usize,
    /// Single-antenna users `U`.
    pub users: usize,
    /// Bits per real dimension: 1 = QPSK, 2 = 16-QAM, 3 = 64-QAM.
    pub q: u32,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            antennas: 128,
            users: 16,
            q: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub early_stop: bool,
    /// Enables the min-error-events policy when set.
    pub min_error_events: Option<u64>,
    /// Trial cap for the min-error-events policy (default `10 * trials`).
    pub max_trials: Option<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            trials: DEFAULT_TRIALS,
            seed: 0,
            early_stop: true,
            min_error_events: None,
            max_trials: None,
            out: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsAdmmSection {
    pub rho: f64,
    /// Per-instance `rho = rho_factor * sqrt(2) * lambda_max`; overrides `rho`.
    pub rho_factor: Option<f64>,
    /// `alpha_q = alpha * 4^(q-1)` unless `alphas` is given.
    pub alpha: f64,
    pub alphas: Option<Vec<f64>>,
    pub max_iters: usize,
    pub eps: f64,
    /// `slice` (slice x0) or `sign` (recompose the signs of the parts).
    pub output: String,
    /// `zeros`, `ones`, `minus_ones`, `random` or `dual_consistent`.
    pub init: String,
    pub override_validation: bool,
}

impl Default for PsAdmmSection {
    fn default() -> Self {
        Self {
            rho: 300.0,
            rho_factor: None,
            alpha: 80.0,
            alphas: None,
            max_iters: 30,
            eps: 1e-6,
            output: "slice".into(),
            init: "zeros".into(),
            override_validation: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorsSection {
    /// Any of `psadmm`, `mmse`, `zf`, `neumann`, `gauss_seidel`, `box_admm`, `ml_exhaustive`.
    pub list: Vec<String>,
    pub neumann_terms: usize,
    pub gauss_seidel_iters: usize,
    pub box_admm_iters: usize,
    pub box_admm_rho: f64,
}

impl Default for DetectorsSection {
    fn default() -> Self {
        Self {
            list: vec!["psadmm".into(), "mmse".into()],
            neumann_terms: DEFAULT_NEUMANN_TERMS,
            gauss_seidel_iters: DEFAULT_GS_SWEEPS,
            box_admm_iters: 30,
            box_admm_rho: 1.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            rho: vec![100.0, 200.0, 300.0, 400.0, 600.0],
            alpha: vec![0.0, 40.0, 80.0, 120.0, 160.0],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSection {
    pub instances: usize,
    /// Defaults to the first SNR of the experiment grid.
    pub snr_db: Option<f64>,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            instances: 20,
            snr_db: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub iterations: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self { iterations: 30 }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub override_validation: bool,
}

#[derive(Debug)]
pub enum ConfigError {
    /// Unreadable or malformed file (exit 2).
    Parse(String),
    /// Well-formed but invalid values (exit 3).
    Semantic(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse(m) | ConfigError::Semantic(m) => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ExperimentSpec,
    pub out: PathBuf,
    pub sweep_rho: Vec<f64>,
    pub sweep_alpha: Vec<f64>,
    pub diagnose_instances: usize,
    pub diagnose_snr_db: f64,
    pub audit_iterations: usize,
}

pub fn parse_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_str(text: &str) -> Result<FileConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

fn semantic(msg: impl Into<String>) -> ConfigError {
    ConfigError::Semantic(msg.into())
}

fn parse_init(s: &str, seed: u64) -> Result<Initialization, ConfigError> {
    Ok(match s {
        "zeros" => Initialization::Zeros,
        "ones" => Initialization::Ones,
        "minus_ones" => Initialization::MinusOnes,
        "random" => Initialization::Random { seed },
        "dual_consistent" => Initialization::DualConsistent,
        other => return Err(semantic(format!("psadmm.init: unknown initialization '{other}'"))),
    })
}

fn parse_output(s: &str) -> Result<OutputMode, ConfigError> {
    match s {
        "slice" => Ok(OutputMode::SliceX0),
        "sign" => Ok(OutputMode::RecomposeSign),
        other => Err(semantic(format!("psadmm.output: unknown mode '{other}' (slice or sign)"))),
    }
}

impl FileConfig {
    pub fn resolve(self, o: &Overrides) -> Result<RunConfig, ConfigError> {
        let FileConfig {
            system,
            experiment,
            psadmm,
            detectors,
            sweep,
            diagnose,
            audit,
        } = self;
        let seed = o.seed.unwrap_or(experiment.seed);
        let trials = o.trials.unwrap_or(experiment.trials);

        let alphas = psadmm.alphas.clone().unwrap_or_else(|| scaled_alphas(psadmm.alpha, system.q));
        let params = PsAdmmParams {
            rho: psadmm.rho,
            alphas,
            max_iters: psadmm.max_iters,
            eps: psadmm.eps,
            early_stop: experiment.early_stop,
            output_mode: parse_output(&psadmm.output)?,
            diagnostics: false,
            init: parse_init(&psadmm.init, seed)?,
            override_validation: psadmm.override_validation || o.override_validation,
        };
        params.check_values().map_err(|e| semantic(format!("psadmm: {e}")))?;

        let mut list = Vec::with_capacity(detectors.list.len());
        for name in &detectors.list {
            if name == "psadmm" {
                list.push(DetectorConfig::psadmm());
                continue;
            }
            let kind: BaselineKind = name.parse().map_err(|e| semantic(format!("detectors.list: {e}")))?;
            let mut cfg = BaselineConfig::new(kind);
            cfg.neumann_terms = detectors.neumann_terms;
            cfg.box_rho = detectors.box_admm_rho;
            cfg.iters = match kind {
                BaselineKind::BoxAdmm => detectors.box_admm_iters,
                _ => detectors.gauss_seidel_iters,
            };
            list.push(DetectorConfig::from_baseline(cfg));
        }
        if list.iter().enumerate().any(|(i, d)| list[..i].iter().any(|e| e.label == d.label)) {
            return Err(semantic("detectors.list: duplicate detector"));
        }

        let policy = match experiment.min_error_events {
            None => TrialPolicy::Fixed,
            Some(events) => TrialPolicy::MinErrorEvents {
                events: if events == 0 { DEFAULT_MIN_ERROR_EVENTS } else { events },
                max_trials: experiment.max_trials.unwrap_or(10 * trials),
            },
        };
        let spec = ExperimentSpec {
            b: system.antennas,
            u: system.users,
            q: system.q,
            snr_grid_db: experiment.snr_db,
            trials,
            detectors: list,
            base_seed: seed,
            psadmm: params,
            rho_factor: psadmm.rho_factor,
            early_stop: experiment.early_stop,
            policy,
        };
        spec.validate().map_err(|e| semantic(e.to_string()))?;

        if sweep.rho.is_empty() || sweep.alpha.is_empty() {
            return Err(semantic("sweep: rho and alpha grids must be nonempty"));
        }
        if sweep.rho.iter().any(|r| !(*r > 0.0)) || sweep.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(semantic("sweep: rho values must be positive and alpha values nonnegative"));
        }
        let diagnose_snr_db = diagnose.snr_db.unwrap_or(spec.snr_grid_db[0]);
        Ok(RunConfig {
            out: o.out.clone().unwrap_or(experiment.out),
            sweep_rho: sweep.rho,
            sweep_alpha: sweep.alpha,
            diagnose_instances: diagnose.instances,
            diagnose_snr_db,
            audit_iterations: audit.iterations,
            spec,
        })
    }
}
