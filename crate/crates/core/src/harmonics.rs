//! Legendre polynomials, a real orthonormal spherical-harmonic basis and the
//! forward moment operator.
//!
//! Basis convention for degree `n`, index `j ∈ 1..=2n+1`: `j = 1` is the
//! zonal harmonic, `j = 2k` the cosine harmonic of order `k` and `j = 2k+1`
//! the sine harmonic of order `k`. There is no Condon–Shortley phase. Moment
//! vectors are stored in `(n, j)` lexicographic order, so `(n, j)` lives at
//! offset `n² + j − 1`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use libm::sqrt;

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::linalg::DenseMatrix;

pub const MAX_DERIVATIVE: usize = 3;

/// `P_n^{(ℓ)}(t)` for `ℓ = 0..=3`.
pub fn legendre_derivatives(n: usize, t: f64) -> [f64; 4] {
    let mut prev = [1.0, 0.0, 0.0, 0.0];
    if n == 0 {
        return prev;
    }
    let mut cur = [t, 1.0, 0.0, 0.0];
    for k in 1..n {
        let next = legendre_step(k, t, &cur, &prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// One step of `(k+1) P_{k+1}^{(ℓ)} = (2k+1)(t P_k^{(ℓ)} + ℓ P_k^{(ℓ−1)}) − k P_{k−1}^{(ℓ)}`.
#[inline]
fn legendre_step(k: usize, t: f64, cur: &[f64; 4], prev: &[f64; 4]) -> [f64; 4] {
    let kf = k as f64;
    let a = (2.0 * kf + 1.0) / (kf + 1.0);
    let b = kf / (kf + 1.0);
    [
        a * t * cur[0] - b * prev[0],
        a * (t * cur[1] + cur[0]) - b * prev[1],
        a * (t * cur[2] + 2.0 * cur[1]) - b * prev[2],
        a * (t * cur[3] + 3.0 * cur[2]) - b * prev[3],
    ]
}

/// `ℓ`-th derivative of the Legendre polynomial `P_n` at `t`.
pub fn legendre(n: usize, t: f64, order: usize) -> Result<f64> {
    if order > MAX_DERIVATIVE {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(legendre_derivatives(n, t)[order])
}

/// `Σ_n coeffs[n] P_n^{(ℓ)}(t)` for `ℓ = 0..=3`.
pub fn legendre_series(coeffs: &[f64], t: f64) -> [f64; 4] {
    let mut acc = [0.0; 4];
    if coeffs.is_empty() {
        return acc;
    }
    let mut prev = [1.0, 0.0, 0.0, 0.0];
    acc[0] = coeffs[0];
    if coeffs.len() == 1 {
        return acc;
    }
    let mut cur = [t, 1.0, 0.0, 0.0];
    for k in 1..coeffs.len() {
        let c = coeffs[k];
        for l in 0..4 {
            acc[l] += c * cur[l];
        }
        if k + 1 < coeffs.len() {
            let next = legendre_step(k, t, &cur, &prev);
            prev = cur;
            cur = next;
        }
    }
    acc
}

/// `Σ_n coeffs[n] P_n(t)` and its first derivative only.
pub fn legendre_series_first(coeffs: &[f64], t: f64) -> (f64, f64) {
    let (mut f, mut df) = (0.0, 0.0);
    let (mut p_prev, mut p) = (1.0, t);
    let (mut d_prev, mut d) = (0.0, 1.0);
    if let Some(&c0) = coeffs.first() {
        f = c0;
    }
    for k in 1..coeffs.len() {
        f += coeffs[k] * p;
        df += coeffs[k] * d;
        let kf = k as f64;
        let a = (2.0 * kf + 1.0) / (kf + 1.0);
        let b = kf / (kf + 1.0);
        let p_next = a * t * p - b * p_prev;
        let d_next = a * (t * d + p) - b * d_prev;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (f, df)
}

/// Gegenbauer polynomial of degree `n` for the sphere `S^{d−1}`, normalized
/// so that `P_{n,d}(1) = 1`. `d = 3` gives Legendre polynomials.
pub fn gegenbauer(n: usize, d: usize, t: f64) -> f64 {
    assert!(d >= 3, "dimension must be at least 3");
    let lambda = (d as f64 - 2.0) / 2.0;
    let raw = |x: f64| {
        let (mut prev, mut cur) = (1.0, 2.0 * lambda * x);
        if n == 0 {
            return prev;
        }
        for k in 2..=n {
            let kf = k as f64;
            let next = (2.0 * (kf + lambda - 1.0) * x * cur - (kf + 2.0 * lambda - 2.0) * prev) / kf;
            prev = cur;
            cur = next;
        }
        cur
    };
    raw(t) / raw(1.0)
}

/// Dimension `(N+1)²` of the space of spherical polynomials of degree ≤ N.
pub const fn harmonic_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Offset of `(n, j)` in lexicographic order; `j` is 1-based.
pub fn harmonic_index(n: usize, j: usize) -> Result<usize> {
    if j == 0 || j > 2 * n + 1 {
        return Err(Error::HarmonicIndex { degree: n, index: j });
    }
    Ok(n * n + j - 1)
}

/// Evaluates every basis function up to a fixed degree at a point. Keeps
/// the recurrence coefficients and scratch space between calls.
#[derive(Debug, Clone)]
pub struct HarmonicEvaluator {
    degree: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    diag: Vec<f64>,
    plm: Vec<f64>,
    cos_m: Vec<f64>,
    sin_m: Vec<f64>,
}

#[inline]
fn tri(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

impl HarmonicEvaluator {
    pub fn new(degree: usize) -> Self {
        let size = tri(degree, degree) + 1;
        let mut a = vec![0.0; size];
        let mut b = vec![0.0; size];
        for n in 2..=degree {
            for m in 0..n - 1 {
                let (nf, mf) = (n as f64, m as f64);
                a[tri(n, m)] = sqrt((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf));
                b[tri(n, m)] = sqrt(((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0));
            }
        }
        let diag = (0..=degree)
            .map(|m| if m == 0 { 0.0 } else { sqrt((2.0 * m as f64 + 1.0) / (2.0 * m as f64)) })
            .collect();
        Self {
            degree,
            a,
            b,
            diag,
            plm: vec![0.0; size],
            cos_m: vec![0.0; degree + 1],
            sin_m: vec![0.0; degree + 1],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        harmonic_count(self.degree)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes all `(N+1)²` basis values at `p` into `out`.
    pub fn eval_into(&mut self, p: &SpherePoint, out: &mut [f64]) {
        let n_max = self.degree;
        assert_eq!(out.len(), harmonic_count(n_max));
        let (x, y, z) = (p.x(), p.y(), p.z());
        let s = sqrt(x * x + y * y);
        let (c1, s1) = if s > 0.0 { (x / s, y / s) } else { (1.0, 0.0) };

        self.cos_m[0] = 1.0;
        self.sin_m[0] = 0.0;
        for m in 1..=n_max {
            let (c, sn) = (self.cos_m[m - 1], self.sin_m[m - 1]);
            self.cos_m[m] = c * c1 - sn * s1;
            self.sin_m[m] = sn * c1 + c * s1;
        }

        let plm = &mut self.plm;
        plm[0] = 1.0 / sqrt(4.0 * PI);
        for m in 0..=n_max {
            if m > 0 {
                plm[tri(m, m)] = self.diag[m] * s * plm[tri(m - 1, m - 1)];
            }
            if m < n_max {
                plm[tri(m + 1, m)] = sqrt(2.0 * m as f64 + 3.0) * z * plm[tri(m, m)];
            }
            for n in m + 2..=n_max {
                let k = tri(n, m);
                plm[k] = self.a[k] * (z * plm[tri(n - 1, m)] - self.b[k] * plm[tri(n - 2, m)]);
            }
        }

        for n in 0..=n_max {
            let base = n * n;
            out[base] = plm[tri(n, 0)];
            for k in 1..=n {
                let v = SQRT_2 * plm[tri(n, k)];
                out[base + 2 * k - 1] = v * self.cos_m[k];
                out[base + 2 * k] = v * self.sin_m[k];
            }
        }
    }

    pub fn eval(&mut self, p: &SpherePoint) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(p, &mut out);
        out
    }
}

/// Real orthonormal spherical harmonic `Y_{n,j}(p)`.
pub fn real_sph_harmonic(n: usize, j: usize, p: &SpherePoint) -> Result<f64> {
    let idx = harmonic_index(n, j)?;
    Ok(HarmonicEvaluator::new(n).eval(p)[idx])
}

/// Reproducing kernel of degree-≤N polynomials:
/// `K_N(t) = Σ_{n≤N} (2n+1)/(4π) P_n(t)`.
pub fn projection_kernel(degree: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    let mut sum = 1.0;
    if degree >= 1 {
        sum += 3.0 * t;
    }
    for k in 1..degree {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        sum += (2.0 * kf + 3.0) * cur;
    }
    sum / (4.0 * PI)
}

/// One point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub location: SpherePoint,
}

/// A finite signed combination of point masses with distinct locations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiracEnsemble {
    atoms: Vec<Atom>,
}

impl DiracEnsemble {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].location == atoms[j].location {
                    return Err(Error::DuplicateAtoms { first: i, second: j });
                }
            }
        }
        Ok(Self { atoms })
    }

    pub fn from_parts(weights: &[f64], locations: &[SpherePoint]) -> Result<Self> {
        if weights.len() != locations.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: locations.len(),
                got: weights.len(),
            });
        }
        Self::new(
            weights
                .iter()
                .zip(locations)
                .map(|(&weight, &location)| Atom { weight, location })
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> Vec<SpherePoint> {
        self.atoms.iter().map(|a| a.location).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// Total variation norm `Σ |c_m|`.
    pub fn tv_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    /// Union of two ensembles with disjoint supports.
    pub fn concat(&self, other: &DiracEnsemble) -> Result<Self> {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self::new(atoms)
    }
}

/// Coefficients `y_{n,j}` for `0 ≤ n ≤ N`, `1 ≤ j ≤ 2n+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    degree: usize,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn zeros(degree: usize) -> Self {
        Self {
            degree,
            values: vec![0.0; harmonic_count(degree)],
        }
    }

    pub fn from_values(degree: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != harmonic_count(degree) {
            return Err(Error::LengthMismatch {
                what: "moment vector",
                expected: harmonic_count(degree),
                got: values.len(),
            });
        }
        Ok(Self { degree, values })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, n: usize, j: usize) -> Option<f64> {
        if n > self.degree {
            return None;
        }
        harmonic_index(n, j).ok().map(|i| self.values[i])
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.values)
    }

    /// Elementwise sum; both vectors must share a degree.
    pub fn add(&self, other: &MomentVector) -> Result<MomentVector> {
        if self.degree != other.degree {
            return Err(Error::LengthMismatch {
                what: "moment vector",
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(MomentVector {
            degree: self.degree,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

/// `y_{n,j} = Σ_m c_m Y_{n,j}(ξ_m)`.
pub fn moments(f: &DiracEnsemble, degree: usize) -> MomentVector {
    let mut eval = HarmonicEvaluator::new(degree);
    let mut values = vec![0.0; harmonic_count(degree)];
    let mut scratch = vec![0.0; harmonic_count(degree)];
    for atom in f.atoms() {
        eval.eval_into(&atom.location, &mut scratch);
        crate::linalg::axpy(atom.weight, &scratch, &mut values);
    }
    MomentVector { degree, values }
}

/// `(N+1)² × |grid|` matrix whose column `k` holds every basis function at
/// `grid[k]`.
pub fn sampling_matrix(grid: &[SpherePoint], degree: usize) -> DenseMatrix {
    let rows = harmonic_count(degree);
    let mut eval = HarmonicEvaluator::new(degree);
    let mut scratch = vec![0.0; rows];
    let mut m = DenseMatrix::zeros(rows, grid.len());
    for (k, p) in grid.iter().enumerate() {
        eval.eval_into(p, &mut scratch);
        for (i, &v) in scratch.iter().enumerate() {
            m[(i, k)] = v;
        }
    }
    m
}
