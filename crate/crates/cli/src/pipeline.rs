//! Generate, measure, recover, certify.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sphere_superres::certificate::{certify, nonneg_certificate};
use sphere_superres::geometry::{fibonacci_grid, grid_spacing};
use sphere_superres::harmonics::moments;
use sphere_superres::kernel::build_kernel;
use sphere_superres::recovery::{extract_support, nonneg_recover, recovery_report, tv_min_recover, GridMeasure, RecoveryReport};
use sphere_superres::DiracEnsemble;

use crate::config::{ExperimentConfig, Thresholds};
use crate::error::{CliError, CliResult};
use crate::generate::gen_ensemble;
use crate::io::{self, CertificateReportJson, RecoveryReportJson, SolveInfoJson};

/// Environment variable capping batch workers.
pub const THREADS_ENV: &str = "SPHERE_SUPERRES_THREADS";
/// Off-support samples for the positive certificate.
pub const NONNEG_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub passed: bool,
    pub report: Option<RecoveryReportJson>,
    pub solve: Option<SolveInfoJson>,
    pub thresholds: Thresholds,
    pub recovered_atoms: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CertificateSummary {
    Signed {
        passed: bool,
        report: Option<CertificateReportJson>,
        error: Option<String>,
    },
    Nonneg {
        passed: bool,
        node_max_error: f64,
        /// `1 − min_gap`; may round to 1 for tight clusters.
        off_support_max: f64,
        /// Smallest `1 − q` over the samples.
        min_gap: f64,
        off_support_min: f64,
        samples: usize,
        error: Option<String>,
    },
}

impl CertificateSummary {
    pub fn passed(&self) -> bool {
        match self {
            Self::Signed { passed, .. } | Self::Nonneg { passed, .. } => *passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub dir: PathBuf,
    pub recovery: RecoverySummary,
    pub certificate: CertificateSummary,
}

impl PipelineOutcome {
    /// Exit status criterion: the recovery thresholds.
    pub fn passed(&self) -> bool {
        self.recovery.passed
    }
}

pub fn thresholds_met(r: &RecoveryReport, t: &Thresholds) -> bool {
    r.support_distance <= t.support_distance && r.weight_error < t.weight_error && r.extra_atoms == 0
}

/// Signed or positive certificate on the true support.
pub fn certificate_summary(truth: &DiracEnsemble, cfg: &ExperimentConfig) -> CertificateSummary {
    let nodes = truth.locations();
    if cfg.solver.nonneg {
        return match nonneg_certificate(&nodes, cfg.degree) {
            Ok(q) => {
                let node_max_error = nodes.iter().map(|p| (q.value(p) - 1.0).abs()).fold(0.0, f64::max);
                let (mut gap, mut lo) = (f64::INFINITY, f64::INFINITY);
                for p in fibonacci_grid(NONNEG_SAMPLES).iter().filter(|p| !nodes.contains(p)) {
                    gap = gap.min(q.gap(p));
                    lo = lo.min(q.value(p));
                }
                CertificateSummary::Nonneg {
                    passed: node_max_error == 0.0 && gap > 0.0 && lo >= 0.0,
                    node_max_error,
                    off_support_max: 1.0 - gap,
                    min_gap: gap,
                    off_support_min: lo,
                    samples: NONNEG_SAMPLES,
                    error: None,
                }
            }
            Err(e) => CertificateSummary::Nonneg {
                passed: false,
                node_max_error: f64::NAN,
                off_support_max: f64::NAN,
                min_gap: f64::NAN,
                off_support_min: f64::NAN,
                samples: 0,
                error: Some(e.to_string()),
            },
        };
    }
    let signs: Vec<f64> = truth.weights().iter().map(|w| w.signum()).collect();
    let result = build_kernel(cfg.degree).and_then(|k| certify(&nodes, &signs, &k, &cfg.validation_options()));
    match result {
        Ok((_, report)) => CertificateSummary::Signed {
            passed: report.passes(0.0),
            report: Some(report.into()),
            error: None,
        },
        Err(e) => CertificateSummary::Signed {
            passed: false,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

struct Log(Option<std::fs::File>, Instant);

impl Log {
    fn line(&mut self, msg: &str) {
        if let Some(f) = self.0.as_mut() {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0);
            let _ = writeln!(f, "{now:.3} +{:.3}s {msg}", self.1.elapsed().as_secs_f64());
        }
    }
}

/// Recovers from moments of `truth` on the configured grid.
pub fn recover_ensemble(
    truth: &DiracEnsemble,
    cfg: &ExperimentConfig,
) -> CliResult<(GridMeasure, DiracEnsemble, RecoveryReport, SolveInfoJson)> {
    let y = moments(truth, cfg.degree);
    let grid = fibonacci_grid(cfg.grid_size);
    let opts = cfg.solver_options();
    let (m, info) = if opts.nonneg {
        nonneg_recover(&y, &grid, &opts)?
    } else {
        tv_min_recover(&y, &grid, &opts)?
    };
    let floor = cfg.thresholds.weight_floor * m.weights.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let radius = cfg.thresholds.cluster_radius * grid_spacing(cfg.grid_size);
    let rec = extract_support(&m, floor, radius);
    let mut report = recovery_report(truth, &rec, &y);
    report.iterations = info.iterations;
    Ok((m, rec, report, info.into()))
}

/// Runs one experiment into `dir`. `Err` only for invalid configs or I/O;
/// numerical failures land in the reports.
pub fn run_pipeline(cfg: &ExperimentConfig, dir: &Path) -> CliResult<PipelineOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let log_file = std::fs::File::create(dir.join(&cfg.paths.log_file)).ok();
    let mut log = Log(log_file, Instant::now());
    io::write_text(&dir.join("config.json"), &cfg.to_json()?)?;

    let truth = match gen_ensemble(cfg) {
        Ok(f) => f,
        Err(CliError::Config(m)) => return Err(CliError::Config(m)),
        Err(e) => {
            log.line(&format!("generation failed: {e}"));
            let recovery = RecoverySummary {
                passed: false,
                report: None,
                solve: None,
                thresholds: cfg.thresholds,
                recovered_atoms: 0,
                error: Some(e.to_string()),
            };
            io::write_json(&dir.join("recovery_report.json"), &recovery)?;
            let certificate = CertificateSummary::Signed {
                passed: false,
                report: None,
                error: Some(e.to_string()),
            };
            io::write_json(&dir.join("certificate_report.json"), &certificate)?;
            return Ok(PipelineOutcome {
                dir: dir.to_path_buf(),
                recovery,
                certificate,
            });
        }
    };
    log.line(&format!("generated {} atoms", truth.len()));
    io::write_ensemble_csv(&dir.join("ensemble.csv"), &truth)?;
    io::write_moments(&dir.join("moments.json"), &moments(&truth, cfg.degree))?;

    let recovery = match recover_ensemble(&truth, cfg) {
        Ok((_, rec, report, info)) => {
            io::write_ensemble_csv(&dir.join("recovered.csv"), &rec)?;
            RecoverySummary {
                passed: thresholds_met(&report, &cfg.thresholds),
                report: Some(report.into()),
                solve: Some(info),
                thresholds: cfg.thresholds,
                recovered_atoms: rec.len(),
                error: None,
            }
        }
        Err(e) => {
            io::write_ensemble_csv(&dir.join("recovered.csv"), &DiracEnsemble::empty())?;
            RecoverySummary {
                passed: false,
                report: None,
                solve: None,
                thresholds: cfg.thresholds,
                recovered_atoms: 0,
                error: Some(e.to_string()),
            }
        }
    };
    log.line(&format!("recovery passed: {}", recovery.passed));
    io::write_json(&dir.join("recovery_report.json"), &recovery)?;

    let certificate = certificate_summary(&truth, cfg);
    log.line(&format!("certificate passed: {}", certificate.passed()));
    io::write_json(&dir.join("certificate_report.json"), &certificate)?;

    Ok(PipelineOutcome {
        dir: dir.to_path_buf(),
        recovery,
        certificate,
    })
}

/// Worker count from [`THREADS_ENV`], if set and positive.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Independent seeds in parallel, one `seed-<n>` directory each.
pub fn run_batch(cfg: &ExperimentConfig, seeds: &[u64], dir: &Path) -> CliResult<Vec<PipelineOutcome>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let c = ExperimentConfig { seed, ..cfg.clone() };
                run_pipeline(&c, &dir.join(format!("seed-{seed}")))
            })
            .collect()
    })
}
