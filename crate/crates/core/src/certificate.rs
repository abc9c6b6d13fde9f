//! The interpolating dual polynomial
//!
//! `q(ξ) = Σ_m α_m F_N(ξ·ξ_m) + β_m D_{ξ_m,1}F_N(ξ,ξ_m) + γ_m D_{ξ_m,2}F_N(ξ,ξ_m)`
//!
//! with `q(ξ_m) = u_m` and vanishing gradient at every node, plus the
//! product certificate for non-negative ensembles.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, pow, sin};

use crate::error::{Error, Result};
use crate::geometry::{
    closest_pair, fibonacci_grid, frame_generators, geodesic_distance, tangent_frame, RotationGenerator, SpherePoint,
    TangentFrame,
};
use crate::kernel::{rot_deriv_unchecked, KernelTable};
use crate::linalg::{self, DenseMatrix, Lu};

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// A solved certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    nodes: Vec<SpherePoint>,
    frames: Vec<TangentFrame>,
    gens: Vec<[RotationGenerator; 2]>,
    signs: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    kernel: KernelTable,
}

/// Norms of the blocks of the interpolation system and of its Schur
/// complements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SystemDiagnostics {
    /// `‖I − F0‖∞`
    pub identity_gap: f64,
    /// `‖F1^r‖∞`, r = 1, 2
    pub f1: [f64; 2],
    /// `‖F̃1^r‖∞`
    pub f1_tilde: [f64; 2],
    /// `max(‖F2^{12}‖∞, ‖F2^{21}‖∞)`
    pub f2_mixed: f64,
    /// `max_r ‖−F'_N(1) I − F2^{rr}‖∞`
    pub f2_diagonal_gap: f64,
    /// `‖F‖∞ ‖F⁻¹‖∞`
    pub condition: f64,
    /// `‖I − F_{s,2}/(−F'_N(1))‖∞`
    pub schur_f2_gap: f64,
    /// `‖F_{s,1}‖∞`
    pub schur_f1: f64,
    /// `‖F̃_{s,1}‖∞`
    pub schur_f1_tilde: f64,
    /// `‖I − F_s‖∞`
    pub schur_gap: f64,
    /// `‖α‖∞`
    pub alpha_max: f64,
    /// `‖α − u‖∞`
    pub alpha_deviation: f64,
    /// `N ‖β‖∞`
    pub beta_scaled: f64,
    /// `N ‖γ‖∞`
    pub gamma_scaled: f64,
}

/// Outcome of [`validate_certificate`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertificateReport {
    /// `max_m |q(ξ_m) − u_m|`
    pub interp_error: f64,
    /// `max_{m,r} |D_{ξ_m,r} q(ξ_m)|`
    pub grad_norm: f64,
    /// `max |q|` over the far-field grid.
    pub off_support_max: f64,
    /// `max |q|` over the near-node samples.
    pub near_max: f64,
    /// Largest eigenvalue of `u_m H` seen near any node; negative when the
    /// Hessian test passes.
    pub hessian_margin: f64,
    pub hessian_ok: bool,
    pub far_points: usize,
    pub system_diagnostics: SystemDiagnostics,
}

impl CertificateReport {
    /// Strict bound off the support and local concavity at every node.
    pub fn passes(&self, margin: f64) -> bool {
        self.hessian_ok && self.off_support_max < 1.0 - margin
    }
}

/// Validation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Far-field grid size; `None` picks `max(50 N², 20000)`.
    pub grid_size: Option<usize>,
    /// Cap radius is `sigma / N`.
    pub sigma: f64,
    /// Samples per node, split over two rings.
    pub near_samples: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            grid_size: None,
            sigma: 0.2,
            near_samples: 32,
        }
    }
}

impl ValidationOptions {
    pub fn grid_size_for(&self, degree: usize) -> usize {
        self.grid_size.unwrap_or_else(|| (50 * degree * degree).max(20_000))
    }
}

/// What [`eval_certificate`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    None,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertificateValue {
    Value(f64),
    Gradient([f64; 2]),
    Hessian([[f64; 2]; 2]),
}

fn check_nodes(nodes: &[SpherePoint], signs: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::EmptyNodes);
    }
    if signs.len() != nodes.len() {
        return Err(Error::LengthMismatch {
            what: "signs",
            expected: nodes.len(),
            got: signs.len(),
        });
    }
    if let Some((index, &value)) = signs.iter().enumerate().find(|(_, &u)| u != 1.0 && u != -1.0) {
        return Err(Error::InvalidSign { index, value });
    }
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if nodes[i] == nodes[j] || geodesic_distance(&nodes[i], &nodes[j]) == 0.0 {
                return Err(Error::DuplicateNodes { first: i, second: j });
            }
        }
    }
    Ok(())
}

/// The `3s × 3s` interpolation matrix and right-hand side `(u, 0, 0)`.
///
/// Rows are `q(ξ_k)`, `D_{ξ_k,1}q(ξ_k)`, `D_{ξ_k,2}q(ξ_k)`; columns are
/// `α`, `β`, `γ`. Tangent frames come from [`tangent_frame`].
pub fn assemble_system(nodes: &[SpherePoint], signs: &[f64], table: &KernelTable) -> Result<(DenseMatrix, Vec<f64>)> {
    let frames: Vec<_> = nodes.iter().map(tangent_frame).collect();
    assemble_with_frames(nodes, &frames, signs, table)
}

fn assemble_with_frames(
    nodes: &[SpherePoint],
    frames: &[TangentFrame],
    signs: &[f64],
    table: &KernelTable,
) -> Result<(DenseMatrix, Vec<f64>)> {
    check_nodes(nodes, signs)?;
    let s = nodes.len();
    let gens: Vec<_> = frames.iter().map(frame_generators).collect();
    let mut f = DenseMatrix::zeros(3 * s, 3 * s);
    for k in 0..s {
        for m in 0..s {
            let (xk, xm) = (&nodes[k], &nodes[m]);
            f[(k, m)] = table.value(xk.dot(xm));
            for r in 0..2 {
                f[(s * (r + 1) + k, m)] = rot_deriv_unchecked(table, &[gens[k][r]], xk, xm);
                f[(k, s * (r + 1) + m)] = rot_deriv_unchecked(table, &[gens[m][r]], xk, xm);
                for r2 in 0..2 {
                    f[(s * (r + 1) + k, s * (r2 + 1) + m)] =
                        rot_deriv_unchecked(table, &[gens[m][r2], gens[k][r]], xk, xm);
                }
            }
        }
    }
    let mut rhs = vec![0.0; 3 * s];
    rhs[..s].copy_from_slice(signs);
    Ok((f, rhs))
}

fn diagnostics(f: &DenseMatrix, s: usize, slope: f64) -> Result<SystemDiagnostics> {
    let blk = |i: usize, j: usize| f.block(i * s, j * s, s, s);
    let f0 = blk(0, 0);
    let f2_22 = blk(2, 2);
    let inv22 = linalg::inverse(&f2_22)?;
    let f_s2 = blk(1, 1).sub(&blk(1, 2).matmul(&inv22).matmul(&blk(2, 1)));
    let f_s1 = blk(1, 0).sub(&blk(1, 2).matmul(&inv22).matmul(&blk(2, 0)));
    let f_s1_tilde = blk(0, 1).sub(&blk(0, 2).matmul(&inv22).matmul(&blk(2, 1)));
    let inv_s2 = linalg::inverse(&f_s2)?;
    let f_s = f0
        .sub(&f_s1_tilde.matmul(&inv_s2).matmul(&f_s1))
        .sub(&blk(0, 2).matmul(&inv22).matmul(&blk(2, 0)));
    let eye = DenseMatrix::identity(s);
    let diag_gap = |b: DenseMatrix| eye.scaled(-slope).sub(&b).inf_norm();
    Ok(SystemDiagnostics {
        identity_gap: eye.sub(&f0).inf_norm(),
        f1: [blk(1, 0).inf_norm(), blk(2, 0).inf_norm()],
        f1_tilde: [blk(0, 1).inf_norm(), blk(0, 2).inf_norm()],
        f2_mixed: blk(1, 2).inf_norm().max(blk(2, 1).inf_norm()),
        f2_diagonal_gap: diag_gap(blk(1, 1)).max(diag_gap(f2_22)),
        condition: 0.0,
        schur_f2_gap: eye.sub(&f_s2.scaled(-1.0 / slope)).inf_norm(),
        schur_f1: f_s1.inf_norm(),
        schur_f1_tilde: f_s1_tilde.inf_norm(),
        schur_gap: eye.sub(&f_s).inf_norm(),
        ..SystemDiagnostics::default()
    })
}

fn ill_posed(nodes: &[SpherePoint], condition: f64) -> Error {
    let (first, second, distance) = closest_pair(nodes).unwrap_or((0, 0, PI));
    Error::IllPosed {
        condition,
        first,
        second,
        distance,
    }
}

/// Solves the interpolation system by LU with partial pivoting.
pub fn solve_certificate(
    nodes: &[SpherePoint],
    signs: &[f64],
    table: &KernelTable,
) -> Result<(Certificate, SystemDiagnostics)> {
    let frames: Vec<_> = nodes.iter().map(tangent_frame).collect();
    solve_certificate_with_frames(nodes, &frames, signs, table)
}

/// [`solve_certificate`] with caller-chosen tangent frames.
pub fn solve_certificate_with_frames(
    nodes: &[SpherePoint],
    frames: &[TangentFrame],
    signs: &[f64],
    table: &KernelTable,
) -> Result<(Certificate, SystemDiagnostics)> {
    if frames.len() != nodes.len() {
        return Err(Error::LengthMismatch {
            what: "frames",
            expected: nodes.len(),
            got: frames.len(),
        });
    }
    let (f, rhs) = assemble_with_frames(nodes, frames, signs, table)?;
    let s = nodes.len();
    let lu = Lu::factor(&f).map_err(|_| ill_posed(nodes, f64::INFINITY))?;
    let condition = f.inf_norm() * lu.inverse().inf_norm();
    if !(condition <= MAX_CONDITION) {
        return Err(ill_posed(nodes, condition));
    }
    let coef = lu.solve(&rhs);
    let slope = table.slope_at_one();
    let mut diag = diagnostics(&f, s, slope).map_err(|_| ill_posed(nodes, condition))?;
    diag.condition = condition;

    let (alpha, rest) = coef.split_at(s);
    let (beta, gamma) = rest.split_at(s);
    let nf = table.degree() as f64;
    diag.alpha_max = linalg::max_abs(alpha);
    diag.alpha_deviation = alpha.iter().zip(signs).map(|(a, u)| (a - u).abs()).fold(0.0, f64::max);
    diag.beta_scaled = nf * linalg::max_abs(beta);
    diag.gamma_scaled = nf * linalg::max_abs(gamma);

    let cert = Certificate {
        nodes: nodes.to_vec(),
        frames: frames.to_vec(),
        gens: frames.iter().map(frame_generators).collect(),
        signs: signs.to_vec(),
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        gamma: gamma.to_vec(),
        kernel: table.clone(),
    };
    Ok((cert, diag))
}

impl Certificate {
    pub fn degree(&self) -> usize {
        self.kernel.degree()
    }

    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn frames(&self) -> &[TangentFrame] {
        &self.frames
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    /// `q(ξ)`.
    pub fn value(&self, xi: &SpherePoint) -> f64 {
        let x = xi.as_array();
        let mut q = 0.0;
        for (m, node) in self.nodes.iter().enumerate() {
            let (f, df) = self.kernel.eval_first(xi.dot(node));
            let y = node.as_array();
            let d1 = crate::geometry::dot(&self.gens[m][0].velocity(x), y);
            let d2 = crate::geometry::dot(&self.gens[m][1].velocity(x), y);
            q += self.alpha[m] * f + df * (self.beta[m] * d1 + self.gamma[m] * d2);
        }
        q
    }

    /// Applies `outer` derivatives (first listed first) to `q` at `ξ`.
    fn derivative(&self, outer: &[RotationGenerator], xi: &SpherePoint) -> f64 {
        let mut buf = [outer[0]; 3];
        let l = outer.len();
        let mut q = 0.0;
        for (m, node) in self.nodes.iter().enumerate() {
            buf[..l].copy_from_slice(outer);
            q += self.alpha[m] * rot_deriv_unchecked(&self.kernel, &buf[..l], xi, node);
            for (r, c) in [self.beta[m], self.gamma[m]].into_iter().enumerate() {
                buf[0] = self.gens[m][r];
                buf[1..=l].copy_from_slice(outer);
                q += c * rot_deriv_unchecked(&self.kernel, &buf[..=l], xi, node);
            }
        }
        q
    }

    /// `(D_{ξ,1} q(ξ), D_{ξ,2} q(ξ))` in the frame [`tangent_frame`]`(ξ)`.
    pub fn gradient(&self, xi: &SpherePoint) -> [f64; 2] {
        self.gradient_in(&tangent_frame(xi), xi)
    }

    fn gradient_in(&self, frame: &TangentFrame, xi: &SpherePoint) -> [f64; 2] {
        let [h1, h2] = frame_generators(frame);
        [self.derivative(&[h1], xi), self.derivative(&[h2], xi)]
    }

    /// `H[r1][r2] = D_{ξ,r1} D_{ξ,r2} q(ξ)`.
    pub fn hessian(&self, xi: &SpherePoint) -> [[f64; 2]; 2] {
        let h = frame_generators(&tangent_frame(xi));
        let mut out = [[0.0; 2]; 2];
        for (r1, row) in out.iter_mut().enumerate() {
            for (r2, e) in row.iter_mut().enumerate() {
                *e = self.derivative(&[h[r2], h[r1]], xi);
            }
        }
        out
    }

    pub fn eval(&self, xi: &SpherePoint, what: Derivative) -> CertificateValue {
        match what {
            Derivative::None => CertificateValue::Value(self.value(xi)),
            Derivative::Gradient => CertificateValue::Gradient(self.gradient(xi)),
            Derivative::Hessian => CertificateValue::Hessian(self.hessian(xi)),
        }
    }
}

/// `q(ξ)`, its gradient or its Hessian.
pub fn eval_certificate(cert: &Certificate, xi: &SpherePoint, what: Derivative) -> CertificateValue {
    cert.eval(xi, what)
}

/// Points on rings of radius `σ/(2N)` and `σ/N` around `center`.
pub fn near_samples(center: &SpherePoint, radius: f64, count: usize) -> Vec<SpherePoint> {
    let frame = tangent_frame(center);
    let inner = count / 2;
    let outer = count - inner;
    let mut out = Vec::with_capacity(count);
    for (n, rad, shift) in [(inner, radius / 2.0, 0.0), (outer, radius, 0.5)] {
        for i in 0..n {
            let a = 2.0 * PI * (i as f64 + shift) / n as f64;
            let dir = crate::geometry::add(
                &crate::geometry::scale(&frame.t1, cos(a)),
                &crate::geometry::scale(&frame.t2, sin(a)),
            );
            out.push(center.walk(&dir, rad));
        }
    }
    out
}

/// Largest eigenvalue of the symmetric part of `u H`.
fn signed_hessian_top(u: f64, h: &[[f64; 2]; 2]) -> f64 {
    let off = 0.5 * (h[0][1] + h[1][0]);
    let sym = [[u * h[0][0], u * off], [u * off, u * h[1][1]]];
    linalg::sym2_eigenvalues(&sym)[1]
}

fn signed_hessian_ok(u: f64, h: &[[f64; 2]; 2]) -> bool {
    let off = 0.5 * (h[0][1] + h[1][0]);
    let det = h[0][0] * h[1][1] - off * off;
    let trace = u * (h[0][0] + h[1][1]);
    det > 0.0 && trace < 0.0
}

/// Checks interpolation, node gradients, the near-node Hessian test and
/// `|q| < 1` on a far-field grid.
pub fn validate_certificate(cert: &Certificate, opts: &ValidationOptions) -> CertificateReport {
    let grid = fibonacci_grid(opts.grid_size_for(cert.degree()));
    validate_certificate_on(cert, &grid, opts)
}

/// [`validate_certificate`] on a caller-supplied far-field grid.
pub fn validate_certificate_on(cert: &Certificate, grid: &[SpherePoint], opts: &ValidationOptions) -> CertificateReport {
    let nf = cert.degree() as f64;
    let radius = opts.sigma / nf;
    let mut report = CertificateReport {
        hessian_ok: true,
        hessian_margin: f64::NEG_INFINITY,
        ..CertificateReport::default()
    };
    for (m, node) in cert.nodes.iter().enumerate() {
        let u = cert.signs[m];
        report.interp_error = report.interp_error.max((cert.value(node) - u).abs());
        let g = cert.gradient_in(&cert.frames[m], node);
        report.grad_norm = report.grad_norm.max(g[0].abs()).max(g[1].abs());

        let mut check = |p: &SpherePoint| {
            let h = cert.hessian(p);
            report.hessian_margin = report.hessian_margin.max(signed_hessian_top(u, &h));
            if !signed_hessian_ok(u, &h) {
                report.hessian_ok = false;
            }
        };
        check(node);
        for p in near_samples(node, radius, opts.near_samples) {
            check(&p);
            let q = cert.value(&p).abs();
            report.near_max = report.near_max.max(q);
        }
    }
    if report.near_max >= 1.0 {
        report.hessian_ok = false;
    }
    let cap = cos(radius);
    for p in grid {
        if cert.nodes.iter().any(|n| n.dot(p) > cap) {
            continue;
        }
        report.far_points += 1;
        report.off_support_max = report.off_support_max.max(cert.value(p).abs());
    }
    report
}

/// Solve followed by validation; the report carries the solve diagnostics.
pub fn certify(
    nodes: &[SpherePoint],
    signs: &[f64],
    table: &KernelTable,
    opts: &ValidationOptions,
) -> Result<(Certificate, CertificateReport)> {
    let (cert, diag) = solve_certificate(nodes, signs, table)?;
    let mut report = validate_certificate(&cert, opts);
    report.system_diagnostics = diag;
    Ok((cert, report))
}

/// One cell of an equiangular heatmap; angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapRow {
    pub lat: f64,
    pub lon: f64,
    pub q: f64,
}

/// `q` on `lat_steps` latitudes in `[−90, 90]` times `lon_steps` longitudes
/// in `[−180, 180)`.
pub fn heatmap(cert: &Certificate, lat_steps: usize, lon_steps: usize) -> Vec<HeatmapRow> {
    let mut rows = Vec::with_capacity(lat_steps * lon_steps);
    for i in 0..lat_steps {
        let lat = if lat_steps == 1 {
            0.0
        } else {
            -90.0 + 180.0 * i as f64 / (lat_steps - 1) as f64
        };
        for j in 0..lon_steps {
            let lon = -180.0 + 360.0 * j as f64 / lon_steps as f64;
            let p = SpherePoint::from_lat_lon(lat.to_radians(), lon.to_radians());
            rows.push(HeatmapRow { lat, lon, q: cert.value(&p) });
        }
    }
    rows
}

/// `q(ξ) = 1 − 2^{−(s+1)} Π_m (1 − ξ·ξ_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegCertificate {
    nodes: Vec<SpherePoint>,
    scale: f64,
}

pub fn nonneg_certificate(nodes: &[SpherePoint], degree: usize) -> Result<NonnegCertificate> {
    if nodes.is_empty() {
        return Err(Error::EmptyNodes);
    }
    if nodes.len() > degree {
        return Err(Error::Sparsity {
            nodes: nodes.len(),
            degree,
        });
    }
    Ok(NonnegCertificate {
        nodes: nodes.to_vec(),
        scale: pow(2.0, -(nodes.len() as f64 + 1.0)),
    })
}

impl NonnegCertificate {
    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn value(&self, xi: &SpherePoint) -> f64 {
        1.0 - self.gap(xi)
    }

    /// `1 − q(ξ)`, with `1 − ξ·ξ_m = |ξ − ξ_m|²/2` so it stays positive near nodes.
    pub fn gap(&self, xi: &SpherePoint) -> f64 {
        self.scale
            * self
                .nodes
                .iter()
                .map(|n| {
                    let d = crate::geometry::sub(xi.as_array(), n.as_array());
                    0.5 * crate::geometry::dot(&d, &d)
                })
                .product::<f64>()
    }
}

/// Number of nodes in each ring `νm/N < d(ξ, ξ0) ≤ ν(m+1)/N`,
/// `0 ≤ m ≤ ⌊πN/ν − 1⌋`.
pub fn ring_counts(nodes: &[SpherePoint], center: &SpherePoint, nu: f64, degree: usize) -> Vec<usize> {
    let width = nu / degree as f64;
    let rings = (libm::floor(PI / width - 1.0).max(0.0) as usize) + 1;
    let mut counts = vec![0; rings];
    for p in nodes {
        if p == center {
            continue;
        }
        let d = geodesic_distance(p, center);
        let m = (libm::ceil(d / width) as usize).saturating_sub(1).min(rings - 1);
        counts[m] += 1;
    }
    counts
}

/// Cap-packing bound on the number of nodes in ring `m`.
pub fn ring_bound(m: usize, nu: f64, degree: usize) -> f64 {
    let w = nu / degree as f64;
    let lo = (w * (m as f64 - 0.5)).max(0.0);
    let hi = (w * (m as f64 + 1.5)).min(PI);
    (cos(lo) - cos(hi)) / (1.0 - cos(w / 2.0))
}
