//! CSV, JSON and binary artifact formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sphere_superres::certificate::{CertificateReport, HeatmapRow, SystemDiagnostics};
use sphere_superres::geometry::SpherePoint;
use sphere_superres::kernel::ScanRow;
use sphere_superres::linalg::DenseMatrix;
use sphere_superres::recovery::{RecoveryReport, SolveInfo};
use sphere_superres::{DiracEnsemble, MomentVector};

use crate::error::{CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?))
}

/// Rows of floats; a leading non-numeric row is taken as a header.
fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::Format(format!("{}: row {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

fn point_of(row: &[f64], path: &Path) -> CliResult<SpherePoint> {
    Ok(SpherePoint::try_new(row[0], row[1], row[2]).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?)
}

/// Writes `x,y,z` rows.
pub fn write_points_csv(path: &Path, points: &[SpherePoint]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["x", "y", "z"])?;
    for p in points {
        w.serialize((p.x(), p.y(), p.z()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Reads `x,y,z[,sign]` rows; signs default to +1.
pub fn read_nodes_csv(path: &Path) -> CliResult<(Vec<SpherePoint>, Vec<f64>)> {
    let mut points = Vec::new();
    let mut signs = Vec::new();
    for row in read_rows(path)? {
        if !(row.len() == 3 || row.len() == 4) {
            return Err(CliError::Format(format!("{}: expected 3 or 4 columns", path.display())));
        }
        points.push(point_of(&row, path)?);
        signs.push(row.get(3).copied().unwrap_or(1.0));
    }
    Ok((points, signs))
}

/// Writes `x,y,z,weight` rows.
pub fn write_ensemble_csv(path: &Path, f: &DiracEnsemble) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["x", "y", "z", "weight"])?;
    for a in f.atoms() {
        let p = a.location;
        w.serialize((p.x(), p.y(), p.z(), a.weight))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn read_ensemble_csv(path: &Path) -> CliResult<DiracEnsemble> {
    let mut weights = Vec::new();
    let mut points = Vec::new();
    for row in read_rows(path)? {
        if row.len() != 4 {
            return Err(CliError::Format(format!("{}: expected x,y,z,weight", path.display())));
        }
        points.push(point_of(&row, path)?);
        weights.push(row[3]);
    }
    Ok(DiracEnsemble::from_parts(&weights, &points)?)
}

pub fn points_to_json(points: &[SpherePoint]) -> CliResult<String> {
    let rows: Vec<[f64; 3]> = points.iter().map(|p| *p.as_array()).collect();
    Ok(serde_json::to_string(&rows)?)
}

pub fn points_from_json(text: &str) -> CliResult<Vec<SpherePoint>> {
    let rows: Vec<[f64; 3]> = serde_json::from_str(text)?;
    rows.iter()
        .map(|r| SpherePoint::try_new(r[0], r[1], r[2]).map_err(CliError::from))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct MomentJson {
    #[serde(rename = "N")]
    degree: usize,
    values: Vec<f64>,
}

pub fn moments_to_json(y: &MomentVector) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(&MomentJson {
        degree: y.degree(),
        values: y.values().to_vec(),
    })?)
}

pub fn moments_from_json(text: &str) -> CliResult<MomentVector> {
    let m: MomentJson = serde_json::from_str(text)?;
    Ok(MomentVector::from_values(m.degree, m.values)?)
}

pub fn write_moments(path: &Path, y: &MomentVector) -> CliResult<()> {
    write_text(path, &moments_to_json(y)?)
}

pub fn read_moments(path: &Path) -> CliResult<MomentVector> {
    moments_from_json(&read_text(path)?)
}

/// Row-major `f64` LE payload after a `rows, cols` u32 LE header.
pub fn write_matrix(path: &Path, a: &DenseMatrix) -> CliResult<()> {
    let too_big = || CliError::Format("matrix dimension exceeds u32".into());
    let rows = u32::try_from(a.rows()).map_err(|_| too_big())?;
    let cols = u32::try_from(a.cols()).map_err(|_| too_big())?;
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    w.write_all(&rows.to_le_bytes()).map_err(io)?;
    w.write_all(&cols.to_le_bytes()).map_err(io)?;
    for i in 0..a.rows() {
        for &v in a.row(i) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> CliResult<DenseMatrix> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    if bytes.len() < 8 {
        return Err(CliError::Format("matrix header truncated".into()));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != rows * cols * 8 {
        return Err(CliError::Format(format!("expected {} payload bytes, got {}", rows * cols * 8, body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DenseMatrix::from_row_major(rows, cols, data)?)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

pub fn write_heatmap_csv(path: &Path, rows: &[HeatmapRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["lat", "lon", "q"])?;
    for r in rows {
        w.serialize((r.lat, r.lon, r.q))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// `theta,value,envelope` rows.
pub fn write_scan_csv(path: &Path, rows: &[ScanRow], envelope: impl Fn(f64) -> f64) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["theta", "value", "envelope"])?;
    for r in rows {
        w.serialize((r.theta, r.value, envelope(r.theta)))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Serializable copy of [`SystemDiagnostics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsJson {
    pub identity_gap: f64,
    pub f1: [f64; 2],
    pub f1_tilde: [f64; 2],
    pub f2_mixed: f64,
    pub f2_diagonal_gap: f64,
    pub condition: f64,
    pub schur_f2_gap: f64,
    pub schur_f1: f64,
    pub schur_f1_tilde: f64,
    pub schur_gap: f64,
    pub alpha_max: f64,
    pub alpha_deviation: f64,
    pub beta_scaled: f64,
    pub gamma_scaled: f64,
}

impl From<SystemDiagnostics> for DiagnosticsJson {
    fn from(d: SystemDiagnostics) -> Self {
        Self {
            identity_gap: d.identity_gap,
            f1: d.f1,
            f1_tilde: d.f1_tilde,
            f2_mixed: d.f2_mixed,
            f2_diagonal_gap: d.f2_diagonal_gap,
            condition: d.condition,
            schur_f2_gap: d.schur_f2_gap,
            schur_f1: d.schur_f1,
            schur_f1_tilde: d.schur_f1_tilde,
            schur_gap: d.schur_gap,
            alpha_max: d.alpha_max,
            alpha_deviation: d.alpha_deviation,
            beta_scaled: d.beta_scaled,
            gamma_scaled: d.gamma_scaled,
        }
    }
}

/// Serializable copy of [`CertificateReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReportJson {
    pub interp_error: f64,
    pub grad_norm: f64,
    pub off_support_max: f64,
    pub near_max: f64,
    pub hessian_margin: f64,
    pub hessian_ok: bool,
    pub far_points: usize,
    pub system_diagnostics: DiagnosticsJson,
}

impl From<CertificateReport> for CertificateReportJson {
    fn from(r: CertificateReport) -> Self {
        Self {
            interp_error: r.interp_error,
            grad_norm: r.grad_norm,
            off_support_max: r.off_support_max,
            near_max: r.near_max,
            hessian_margin: r.hessian_margin,
            hessian_ok: r.hessian_ok,
            far_points: r.far_points,
            system_diagnostics: r.system_diagnostics.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReportJson {
    pub support_distance: f64,
    pub weight_error: f64,
    pub residual: f64,
    pub iterations: usize,
    pub extra_atoms: usize,
}

impl From<RecoveryReport> for RecoveryReportJson {
    fn from(r: RecoveryReport) -> Self {
        Self {
            support_distance: r.support_distance,
            weight_error: r.weight_error,
            residual: r.residual,
            iterations: r.iterations,
            extra_atoms: r.extra_atoms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInfoJson {
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub objective: f64,
    pub dual_objective: f64,
    pub dual_infeasibility: f64,
    pub working_set: usize,
    pub rounds: usize,
    pub polished: bool,
}

impl From<SolveInfo> for SolveInfoJson {
    fn from(i: SolveInfo) -> Self {
        Self {
            iterations: i.iterations,
            converged: i.converged,
            residual: i.residual,
            objective: i.objective,
            dual_objective: i.dual_objective,
            dual_infeasibility: i.dual_infeasibility,
            working_set: i.working_set,
            rounds: i.rounds,
            polished: i.polished,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sphere_superres::geometry::fibonacci_grid;
    use sphere_superres::harmonics::{moments, sampling_matrix};

    #[test]
    fn ensemble_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let grid = fibonacci_grid(7);
        let f = DiracEnsemble::from_parts(&[1.0, -0.1, 1.0 / 3.0], &grid[..3]).unwrap();
        write_ensemble_csv(&path, &f).unwrap();
        assert_eq!(read_ensemble_csv(&path).unwrap(), f);
        let text = read_text(&path).unwrap();
        assert!(text.starts_with("x,y,z,weight\n"));
    }

    #[test]
    fn nodes_csv_with_and_without_signs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.csv");
        std::fs::write(&path, "0,0,1,-1\n1,0,0,1\n").unwrap();
        let (p, s) = read_nodes_csv(&path).unwrap();
        assert_eq!(p[0], SpherePoint::new(0.0, 0.0, 1.0));
        assert_eq!(s, vec![-1.0, 1.0]);
        let grid = fibonacci_grid(5);
        write_points_csv(&path, &grid).unwrap();
        let (p, s) = read_nodes_csv(&path).unwrap();
        assert_eq!(p, grid);
        assert!(s.iter().all(|&v| v == 1.0));
        std::fs::write(&path, "x,y,z\n0,0,1\nnope,1,2\n").unwrap();
        assert!(read_nodes_csv(&path).is_err());
        std::fs::write(&path, "0,0,0\n").unwrap();
        assert!(read_nodes_csv(&path).is_err());
    }

    #[test]
    fn point_json_round_trip() {
        let grid = fibonacci_grid(4);
        let text = points_to_json(&grid).unwrap();
        assert!(text.starts_with("[["));
        assert_eq!(points_from_json(&text).unwrap(), grid);
    }

    #[test]
    fn moments_json() {
        let f = DiracEnsemble::from_parts(&[2.0], &fibonacci_grid(1)).unwrap();
        let y = moments(&f, 3);
        let text = moments_to_json(&y).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["N"], 3);
        assert_eq!(v["values"].as_array().unwrap().len(), 16);
        assert_eq!(moments_from_json(&text).unwrap(), y);
        assert!(moments_from_json(r#"{"N": 2, "values": [1.0]}"#).is_err());
    }

    #[test]
    fn matrix_binary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        let a = sampling_matrix(&fibonacci_grid(10), 2);
        write_matrix(&path, &a).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 8 + 9 * 10 * 8);
        assert_eq!(&bytes[0..8], &[9, 0, 0, 0, 10, 0, 0, 0]);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), a[(0, 1)]);
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, a);
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(read_matrix(&path).is_err());
    }
}
