use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sphere_superres::certificate::{certify, heatmap, ValidationOptions};
use sphere_superres::geometry::{fibonacci_grid, grid_spacing, min_separation};
use sphere_superres::harmonics::{moments, sampling_matrix};
use sphere_superres::kernel::{build_kernel, envelope, scan_rows, DerivOrder, DEFAULT_SCAN_SAMPLES};
use sphere_superres::recovery::{extract_support, nonneg_recover, recovery_report, tv_min_recover, SolverOptions};
use sphere_superres_cli::config::ExperimentConfig;
use sphere_superres_cli::generate::gen_ensemble;
use sphere_superres_cli::io;
use sphere_superres_cli::pipeline::{run_batch, run_pipeline, thresholds_met};

#[derive(Parser)]
#[command(name = "sphere-superres", version, about = "Spike super-resolution on the sphere")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; for `recover` a `.csv` path names the ensemble file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random ensemble to ensemble.csv.
    Gen,
    /// Moments of an ensemble to moments.json.
    Measure(MeasureArgs),
    /// Grid TV minimization from moments.
    Recover(RecoverArgs),
    /// Solve and validate the interpolating certificate on given nodes.
    Certify(CertifyArgs),
    /// Localization scan of the kernel.
    KernelScan(ScanArgs),
    /// Certificate values on a lat/lon grid.
    Heatmap(HeatmapArgs),
    /// End-to-end run.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long)]
    degree: Option<usize>,
    /// Also write the sampling matrix of an M-point grid to sampling_matrix.bin.
    #[arg(long)]
    matrix_grid: Option<usize>,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    moments: PathBuf,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    nonneg: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Primal and dual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Truth ensemble for a recovery report.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    degree: Option<usize>,
    /// CSV rows x,y,z[,sign].
    #[arg(long)]
    nodes: PathBuf,
    /// Refuse node sets with separation below ν/N.
    #[arg(long)]
    nu_check: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long, default_value_t = 91)]
    lat_steps: usize,
    #[arg(long, default_value_t = 180)]
    lon_steps: usize,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 40, 80])]
    degree: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0usize])]
    order: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [3u32])]
    k: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_SCAN_SAMPLES)]
    samples: usize,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 91)]
    lat_steps: usize,
    #[arg(long, default_value_t = 180)]
    lon_steps: usize,
}

#[derive(Args)]
struct PipelineArgs {
    /// Run seeds seed..seed+batch in parallel, one directory each.
    #[arg(long)]
    batch: Option<u64>,
    /// Positive-atom preset (N = s = 12, clustered pairs).
    #[arg(long)]
    nonneg_preset: bool,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = o.clone();
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| cfg.paths.out_dir.clone())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = load_config(&cli)?;
    let out = out_dir(&cli, &cfg);
    match &cli.cmd {
        Command::Gen => {
            let f = gen_ensemble(&cfg)?;
            let path = out.join("ensemble.csv");
            io::write_ensemble_csv(&path, &f)?;
            println!("{} atoms -> {}", f.len(), path.display());
        }
        Command::Measure(a) => {
            let f = io::read_ensemble_csv(&a.ensemble)?;
            let n = a.degree.unwrap_or(cfg.degree);
            let path = out.join("moments.json");
            io::write_moments(&path, &moments(&f, n))?;
            println!("moments up to degree {n} -> {}", path.display());
            if let Some(m) = a.matrix_grid {
                let path = out.join("sampling_matrix.bin");
                io::write_matrix(&path, &sampling_matrix(&fibonacci_grid(m), n))?;
                println!("sampling matrix -> {}", path.display());
            }
        }
        Command::Recover(a) => return recover(a, &cli, &mut cfg, &out),
        Command::Certify(a) => return certify_cmd(a, &cfg, &out),
        Command::KernelScan(a) => {
            for &n in &a.degree {
                let table = build_kernel(n)?;
                for &l in &a.order {
                    let order = DerivOrder::new(l)?;
                    for &k in &a.k {
                        let rows = scan_rows(&table, k, order, a.samples);
                        let c = rows.iter().map(|r| r.scaled).fold(0.0, f64::max);
                        let path = out.join(format!("kernel_scan_N{n}_l{l}_k{k}.csv"));
                        io::write_scan_csv(&path, &rows, |t| envelope(c, n, k, order, t))?;
                        println!("N={n} l={l} k={k} c={c:.6} -> {}", path.display());
                    }
                }
            }
        }
        Command::Heatmap(a) => {
            let (nodes, signs) = io::read_nodes_csv(&a.nodes)?;
            let table = build_kernel(a.degree.unwrap_or(cfg.degree))?;
            let (cert, _) = sphere_superres::certificate::solve_certificate(&nodes, &signs, &table)?;
            let path = out.join("heatmap.csv");
            io::write_heatmap_csv(&path, &heatmap(&cert, a.lat_steps, a.lon_steps))?;
            println!("heatmap -> {}", path.display());
        }
        Command::Pipeline(a) => {
            if a.nonneg_preset {
                let seed = cfg.seed;
                let paths = cfg.paths.clone();
                cfg = ExperimentConfig {
                    seed,
                    paths,
                    ..ExperimentConfig::nonneg_default()
                };
            }
            let outcomes = match a.batch {
                Some(b) => {
                    let seeds: Vec<u64> = (cfg.seed..cfg.seed + b).collect();
                    run_batch(&cfg, &seeds, &out)?
                }
                None => vec![run_pipeline(&cfg, &out)?],
            };
            let mut all = true;
            for o in &outcomes {
                let r = &o.recovery;
                println!(
                    "{}: recovery {} certificate {}{}",
                    o.dir.display(),
                    if r.passed { "pass" } else { "FAIL" },
                    if o.certificate.passed() { "pass" } else { "FAIL" },
                    r.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
                );
                all &= o.passed();
            }
            return Ok(all);
        }
    }
    Ok(true)
}

fn recover(a: &RecoverArgs, cli: &Cli, cfg: &mut ExperimentConfig, out: &Path) -> Result<bool> {
    let y = io::read_moments(&a.moments)?;
    if let Some(n) = a.degree {
        if n != y.degree() {
            bail!("--degree {n} does not match moments of degree {}", y.degree());
        }
    }
    let grid_size = a.grid_size.unwrap_or(cfg.grid_size);
    let mut opts: SolverOptions = cfg.solver_options();
    opts.nonneg |= a.nonneg;
    if let Some(m) = a.max_iters {
        opts.max_iters = m;
    }
    if let Some(t) = a.tol {
        opts.primal_tol = t;
        opts.dual_tol = t;
    }
    let grid = fibonacci_grid(grid_size);
    let (m, info) = if opts.nonneg {
        nonneg_recover(&y, &grid, &opts)?
    } else {
        tv_min_recover(&y, &grid, &opts)?
    };
    let floor = cfg.thresholds.weight_floor * m.weights.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let rec = extract_support(&m, floor, cfg.thresholds.cluster_radius * grid_spacing(grid_size));
    let csv = match &cli.out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => p.clone(),
        _ => out.join("recovered.csv"),
    };
    io::write_ensemble_csv(&csv, &rec)?;
    println!(
        "{} atoms, {} iterations, converged {} -> {}",
        rec.len(),
        info.iterations,
        info.converged,
        csv.display()
    );
    let mut passed = info.converged;
    let mut report = serde_json::json!({ "solve": io::SolveInfoJson::from(info) });
    if let Some(t) = &a.truth {
        let truth = io::read_ensemble_csv(t)?;
        let mut r = recovery_report(&truth, &rec, &y);
        r.iterations = info.iterations;
        passed = thresholds_met(&r, &cfg.thresholds);
        report["report"] = serde_json::to_value(io::RecoveryReportJson::from(r))?;
        report["passed"] = passed.into();
    }
    if let Some(p) = &a.report {
        io::write_json(p, &report)?;
    }
    Ok(passed)
}

fn certify_cmd(a: &CertifyArgs, cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let (nodes, signs) = io::read_nodes_csv(&a.nodes).context("reading nodes")?;
    let n = a.degree.unwrap_or(cfg.degree);
    if let (Some(nu), true) = (a.nu_check, nodes.len() > 1) {
        let d = min_separation(&nodes)?;
        if d < nu / n as f64 {
            bail!("separation {d:.6} below nu/N = {:.6}", nu / n as f64);
        }
    }
    let mut opts: ValidationOptions = cfg.validation_options();
    if let Some(g) = a.grid {
        opts.grid_size = Some(g);
    }
    if let Some(s) = a.sigma {
        opts.sigma = s;
    }
    let table = build_kernel(n)?;
    let (cert, report) = certify(&nodes, &signs, &table, &opts)?;
    let path = a.report.clone().unwrap_or_else(|| out.join("certificate_report.json"));
    io::write_json(&path, &io::CertificateReportJson::from(report))?;
    println!(
        "off_support_max {:.6}, hessian_ok {}, condition {:.3e} -> {}",
        report.off_support_max,
        report.hessian_ok,
        report.system_diagnostics.condition,
        path.display()
    );
    if let Some(h) = &a.heatmap {
        io::write_heatmap_csv(h, &heatmap(&cert, a.lat_steps, a.lon_steps))?;
    }
    Ok(report.passes(0.0))
}
