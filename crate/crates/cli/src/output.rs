//! CSV writers (UTF-8, LF line endings, `.` decimal separator) and the
//! diagnose report.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use psadmm_core::harness::{AuditReport, BerRecord, CheckTally, ExperimentSpec, SweepReport, TraceStats};

pub const BER_HEADER: &str = "detector,B,U,Q,snr_db,trials,bits,bit_errors,ber,vector_errors,wall_time_s";
pub const SWEEP_HEADER: &str = "rho,alpha,snr_db,ber,condition_ok,mean_final_objective";
pub const TRACE_HEADER: &str = "rho,alpha,k,mean_objective,mean_lagrangian,mean_residual";
pub const DIAGNOSE_HEADER: &str =
    "check,guaranteed,checked,failed,not_applicable,first_failure_trial,first_failure_iteration";
pub const DIAGNOSE_RUNS_HEADER: &str =
    "trial,iterations,first_eps_iteration,t_bound,final_stationarity,params_validated";
pub const AUDIT_HEADER: &str = "kernel,measured_complex_mults,predicted_complex_mults";

pub struct Output {
    dir: PathBuf,
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl Output {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> io::Result<()> {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display())))
    }

    pub fn write_ber(&self, spec: &ExperimentSpec, records: &[BerRecord]) -> io::Result<()> {
        self.write(
            "ber.csv",
            BER_HEADER,
            records.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{:.6}",
                    r.detector,
                    spec.b,
                    spec.u,
                    spec.q,
                    r.snr_db,
                    r.trials,
                    r.bits,
                    r.bit_errors,
                    r.ber,
                    r.vector_errors,
                    r.wall_time_s
                )
            }),
        )
    }

    pub fn write_sweep(&self, report: &SweepReport) -> io::Result<()> {
        self.write(
            "sweep.csv",
            SWEEP_HEADER,
            report.records.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.rho, r.alpha, r.snr_db, r.ber, r.condition_ok, r.mean_final_objective
                )
            }),
        )?;
        // traces of the first SNR point
        let first_snr = report.records.first().map(|r| r.snr_db);
        self.write(
            "trace.csv",
            TRACE_HEADER,
            report
                .records
                .iter()
                .filter(|r| Some(r.snr_db) == first_snr)
                .flat_map(|r| {
                    r.trace.iter().map(move |t| {
                        format!(
                            "{},{},{},{},{},{}",
                            r.rho, r.alpha, t.k, t.mean_objective, t.mean_lagrangian, t.mean_residual
                        )
                    })
                }),
        )
    }

    pub fn write_diagnose(&self, stats: &TraceStats) -> io::Result<()> {
        self.write(
            "diagnose.csv",
            DIAGNOSE_HEADER,
            stats.checks.all().iter().map(|(name, t)| {
                format!(
                    "{name},{},{},{},{},{},{}",
                    guaranteed(name, stats),
                    t.checked,
                    t.failed,
                    t.not_applicable,
                    opt(t.first_failure.map(|f| f.0)),
                    opt(t.first_failure.map(|f| f.1)),
                )
            }),
        )?;
        self.write(
            "diagnose_runs.csv",
            DIAGNOSE_RUNS_HEADER,
            stats.runs.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.trial,
                    r.iterations,
                    opt(r.first_eps_iteration),
                    opt(r.t_bound),
                    r.final_stationarity,
                    r.params_validated
                )
            }),
        )
    }

    pub fn write_audit(&self, report: &AuditReport) -> io::Result<()> {
        let rows = report
            .per_kernel
            .iter()
            .map(|(name, measured, predicted)| format!("{name},{measured},{predicted}"))
            .chain(std::iter::once(format!("total,{},{}", report.measured, report.predicted)));
        self.write("audit.csv", AUDIT_HEADER, rows)
    }
}

/// Checks that hold by construction regardless of the parameters.
fn unconditional(name: &str) -> bool {
    matches!(name, "dual_identity" | "box")
}

fn guaranteed(name: &str, stats: &TraceStats) -> bool {
    unconditional(name) || stats.all_validated
}

pub fn first_guaranteed_failure(stats: &TraceStats) -> Option<String> {
    stats
        .checks
        .all()
        .iter()
        .filter(|(name, t)| guaranteed(name, stats) && !t.passed())
        .map(|(name, t)| match t.first_failure {
            Some((trial, k)) => format!("{name} failed {} times; first at trial {trial}, iteration {k}", t.failed),
            None => format!("{name} failed {} times", t.failed),
        })
        .next()
}

fn line(name: &str, t: &CheckTally, guaranteed: bool) -> String {
    let status = match (t.passed(), guaranteed) {
        (true, _) => "pass",
        (false, true) => "FAIL",
        (false, false) => "fail (not guaranteed)",
    };
    format!(
        "  {name:<16} {status:<22} {}/{} ok, {} not applicable{}\n",
        t.checked - t.failed,
        t.checked,
        t.not_applicable,
        if guaranteed { "" } else { ", not guaranteed for these parameters" }
    )
}

pub fn diagnose_report(stats: &TraceStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} traced runs, parameters validated on all: {}", stats.runs.len(), stats.all_validated);
    for (name, t) in stats.checks.all() {
        s.push_str(&line(name, t, guaranteed(name, stats)));
    }
    let reached: Vec<_> = stats.runs.iter().filter_map(|r| Some((r.first_eps_iteration?, r.t_bound))).collect();
    let _ = writeln!(s, "  eps reached on {}/{} runs", reached.len(), stats.runs.len());
    for r in stats.runs.iter().take(10) {
        let _ = writeln!(
            s,
            "    trial {:>4}: first eps iteration {:>6}, predicted bound {}",
            r.trial,
            r.first_eps_iteration.map_or("-".to_string(), |k| k.to_string()),
            r.t_bound.map_or("n/a".to_string(), |b| b.to_string())
        );
    }
    s
}
