//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! Householder least squares.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                    axpy(a, other.row(k), dst);
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> DenseMatrix {
        DenseMatrix::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &DenseMatrix) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    sqrt(dot(v, v))
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// LU factorization `PA = LU` with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::LengthMismatch {
                what: "square matrix columns",
                expected: a.rows(),
                got: a.cols(),
            });
        }
        let n = a.rows();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        inv
    }
}

pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(Lu::factor(a)?.inverse())
}

/// `‖A‖∞ ‖A⁻¹‖∞`, infinite for exactly singular input.
pub fn condition_inf(a: &DenseMatrix) -> f64 {
    match Lu::factor(a) {
        Ok(lu) => a.inf_norm() * lu.inverse().inf_norm(),
        Err(_) => f64::INFINITY,
    }
}

/// Minimizer of `‖A x − b‖₂` for a tall matrix with full column rank, via
/// Householder QR. Returns the solution and the residual norm.
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::LengthMismatch {
            what: "right-hand side",
            expected: m,
            got: b.len(),
        });
    }
    if n > m {
        return Err(Error::Singular);
    }
    // Column-major copy for cache-friendly reflections.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut rhs = b.to_vec();
    let scale = cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    let mut diag = vec![0.0; n];
    for k in 0..n {
        let alpha = {
            let c = &cols[k];
            let nrm = norm2(&c[k..]);
            if nrm <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Singular);
            }
            if c[k] > 0.0 {
                -nrm
            } else {
                nrm
            }
        };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for c in cols.iter_mut().skip(k + 1) {
            let f = 2.0 * dot(&v, &c[k..]) / vnorm2;
            axpy(-f, &v, &mut c[k..]);
        }
        let f = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
        axpy(-f, &v, &mut rhs[k..]);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| cols[j][i] * x[j]).sum();
        x[i] = (rhs[i] - s) / diag[i];
    }
    let residual = norm2(&rhs[n..]);
    Ok((x, residual))
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym2_eigenvalues(h: &[[f64; 2]; 2]) -> [f64; 2] {
    let a = h[0][0];
    let d = h[1][1];
    let b = 0.5 * (h[0][1] + h[1][0]);
    let mean = 0.5 * (a + d);
    let rad = sqrt(0.25 * (a - d) * (a - d) + b * b);
    [mean - rad, mean + rad]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn lu_solves_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 5, 30] {
            let a = random_matrix(&mut rng, n, n);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b = a.mul_vec(&x);
            let sol = Lu::factor(&a).unwrap().solve(&b);
            for (s, t) in sol.iter().zip(&x) {
                assert!((s - t).abs() < 1e-9);
            }
            let prod = a.matmul(&inverse(&a).unwrap());
            assert!(prod.sub(&DenseMatrix::identity(n)).max_abs() < 1e-9);
        }
    }

    #[test]
    fn lu_needs_pivoting() {
        let a = DenseMatrix::from_row_major(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(Lu::factor(&a).unwrap().solve(&[2.0, 3.0]), vec![3.0, 2.0]);
        let singular = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(condition_inf(&singular) > 1e15);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 12, 4);
        let b: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, res) = least_squares(&a, &b).unwrap();
        let at = a.transpose();
        let normal = at.matmul(&a);
        let rhs = at.mul_vec(&b);
        let expected = Lu::factor(&normal).unwrap().solve(&rhs);
        for (s, t) in x.iter().zip(&expected) {
            assert!((s - t).abs() < 1e-10);
        }
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!((norm2(&r) - res).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_least_squares_is_rejected() {
        let a = DenseMatrix::from_row_major(3, 2, vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
        assert_eq!(least_squares(&a, &[1.0, 2.0, 3.0]), Err(Error::Singular));
    }

    #[test]
    fn symmetric_eigenvalues() {
        let e = sym2_eigenvalues(&[[2.0, 1.0], [1.0, 2.0]]);
        assert!((e[0] - 1.0).abs() < 1e-15 && (e[1] - 3.0).abs() < 1e-15);
    }
}
