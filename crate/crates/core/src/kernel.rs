//! The smoothed band-limited zonal kernel `F_N` and its rotational
//! derivatives.
//!
//! `F_N(t) = C̃(N) Σ_{n≤N} ρ(n/N) (2n+1)/(4π) P_n(t)` with `C̃(N)` chosen so
//! that `F_N(1) = 1`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, exp, pow};

use crate::error::{Error, Result};
use crate::geometry::{dot, RotationGenerator, SpherePoint, Vec3};
use crate::harmonics::{legendre_series, legendre_series_first};

fn bump(s: f64) -> f64 {
    if s > 0.0 {
        exp(-1.0 / s)
    } else {
        0.0
    }
}

/// Smooth cutoff: 1 on `[0, 1/2]`, 0 on `[1, ∞)`, monotone in between.
pub fn rho(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(t));
    }
    Ok(rho_unchecked(t))
}

fn rho_unchecked(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = bump(2.0 - 2.0 * t);
        let b = bump(2.0 * t - 1.0);
        a / (a + b)
    }
}

/// Derivative order `ℓ ∈ {0, 1, 2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DerivOrder(u8);

impl DerivOrder {
    pub const VALUE: DerivOrder = DerivOrder(0);
    pub const FIRST: DerivOrder = DerivOrder(1);
    pub const SECOND: DerivOrder = DerivOrder(2);
    pub const THIRD: DerivOrder = DerivOrder(3);

    pub fn new(order: usize) -> Result<Self> {
        if order > 3 {
            return Err(Error::UnsupportedOrder(order));
        }
        Ok(DerivOrder(order as u8))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<usize> for DerivOrder {
    type Error = Error;

    fn try_from(order: usize) -> Result<Self> {
        DerivOrder::new(order)
    }
}

/// Coefficients of `F_N` in the Legendre basis.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    degree: usize,
    coeffs: Vec<f64>,
    normalization: f64,
    scaled: Vec<f64>,
}

/// Tabulates `c_n = ρ(n/N)(2n+1)/(4π)` and `C̃(N) = 1/Σ c_n`.
pub fn build_kernel(degree: usize) -> Result<KernelTable> {
    if degree < 2 {
        return Err(Error::KernelDegree(degree));
    }
    let nf = degree as f64;
    let coeffs: Vec<f64> = (0..=degree)
        .map(|n| rho_unchecked(n as f64 / nf) * (2.0 * n as f64 + 1.0) / (4.0 * PI))
        .collect();
    let normalization = 1.0 / coeffs.iter().sum::<f64>();
    let scaled = coeffs.iter().map(|c| c * normalization).collect();
    Ok(KernelTable {
        degree,
        coeffs,
        normalization,
        scaled,
    })
}

impl KernelTable {
    pub fn new(degree: usize) -> Result<Self> {
        build_kernel(degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `c_n` for `0 ≤ n ≤ N`, zero beyond.
    pub fn coeff(&self, n: usize) -> f64 {
        self.coeffs.get(n).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `F_N^{(ℓ)}(t)` for `ℓ = 0..=3`.
    pub fn eval_all(&self, t: f64) -> [f64; 4] {
        legendre_series(&self.scaled, t)
    }

    /// `F_N(t)` and `F_N'(t)`.
    pub fn eval_first(&self, t: f64) -> (f64, f64) {
        legendre_series_first(&self.scaled, t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval_first(t).0
    }

    pub fn eval(&self, t: f64, order: DerivOrder) -> f64 {
        self.eval_all(t)[order.get()]
    }

    /// `F_N'(1)`.
    pub fn slope_at_one(&self) -> f64 {
        self.eval_first(1.0).1
    }
}

/// `F_N^{(ℓ)}(t)`.
pub fn eval_kernel(table: &KernelTable, t: f64, order: usize) -> Result<f64> {
    Ok(table.eval(t, DerivOrder::new(order)?))
}

/// First rotational derivative of `G(ξ, ξ0) = ξ·ξ0` along `gen`.
pub fn rot_deriv_g(gen: &RotationGenerator, xi: &SpherePoint, xi0: &SpherePoint) -> f64 {
    dot(&gen.velocity(xi.as_array()), xi0.as_array())
}

/// Iterated rotational derivative of `ξ ↦ F_N(ξ·ξ0)`. The first listed
/// generator differentiates first; as matrices the last one acts on `ξ`
/// innermost, e.g. two generators give
/// `F''·(A1ξ·ξ0)(A2ξ·ξ0) + F'·(A1A2ξ·ξ0)` with `A = −M`.
pub fn rot_deriv_f(
    table: &KernelTable,
    gens: &[RotationGenerator],
    xi: &SpherePoint,
    xi0: &SpherePoint,
) -> Result<f64> {
    if gens.is_empty() || gens.len() > 3 {
        return Err(Error::GeneratorCount(gens.len()));
    }
    Ok(rot_deriv_unchecked(table, gens, xi, xi0))
}

pub(crate) fn rot_deriv_unchecked(
    table: &KernelTable,
    gens: &[RotationGenerator],
    xi: &SpherePoint,
    xi0: &SpherePoint,
) -> f64 {
    let x = xi.as_array();
    let y = xi0.as_array();
    let t = dot(x, y);
    let on = |v: &Vec3| dot(v, y);
    match gens {
        [] => table.value(t),
        [g1] => {
            let (_, f1) = table.eval_first(t);
            f1 * on(&g1.velocity(x))
        }
        [g1, g2] => {
            let f = table.eval_all(t);
            let v2 = g2.velocity(x);
            let a1 = on(&g1.velocity(x));
            let a12 = on(&g1.velocity(&v2));
            f[2] * a1 * on(&v2) + f[1] * a12
        }
        [g1, g2, g3, ..] => {
            let f = table.eval_all(t);
            let v1 = g1.velocity(x);
            let v2 = g2.velocity(x);
            let v3 = g3.velocity(x);
            let (a1, a2, a3) = (on(&v1), on(&v2), on(&v3));
            let a12 = on(&g1.velocity(&v2));
            let a13 = on(&g1.velocity(&v3));
            let v23 = g2.velocity(&v3);
            let a23 = on(&v23);
            let a123 = on(&g1.velocity(&v23));
            f[3] * a1 * a2 * a3 + f[2] * (a12 * a3 + a13 * a2 + a23 * a1) + f[1] * a123
        }
    }
}

/// `sup_θ |F_N^{(ℓ)}(cos θ)| (1+Nθ)^k / N^{2ℓ}` over `samples` equispaced
/// angles in `[0, π]`.
pub fn localization_constant(table: &KernelTable, k: u32, order: DerivOrder, samples: usize) -> f64 {
    scan_rows(table, k, order, samples)
        .iter()
        .map(|r| r.scaled)
        .fold(0.0, f64::max)
}

/// [`localization_constant`] on the default grid of 20 001 angles.
pub fn localization_scan(table: &KernelTable, k: u32, order: DerivOrder) -> Result<f64> {
    if !(3..=5).contains(&k) {
        return Err(Error::Domain(k as f64));
    }
    Ok(localization_constant(table, k, order, DEFAULT_SCAN_SAMPLES))
}

pub const DEFAULT_SCAN_SAMPLES: usize = 20_001;

/// One angle of a localization scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub theta: f64,
    pub value: f64,
    /// `|value| (1+Nθ)^k / N^{2ℓ}`.
    pub scaled: f64,
}

pub fn scan_rows(table: &KernelTable, k: u32, order: DerivOrder, samples: usize) -> Vec<ScanRow> {
    let nf = table.degree() as f64;
    let norm = pow(nf, 2.0 * order.get() as f64);
    let samples = samples.max(2);
    (0..samples)
        .map(|i| {
            let theta = PI * i as f64 / (samples - 1) as f64;
            let value = table.eval(cos(theta), order);
            let scaled = value.abs() * pow(1.0 + nf * theta, k as f64) / norm;
            ScanRow { theta, value, scaled }
        })
        .collect()
}

/// Envelope `c N^{2ℓ} / (1+Nθ)^k`.
pub fn envelope(c: f64, degree: usize, k: u32, order: DerivOrder, theta: f64) -> f64 {
    let nf = degree as f64;
    c * pow(nf, 2.0 * order.get() as f64) / pow(1.0 + nf * theta, k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{frame_generators, geodesic_distance, rotation_generator, tangent_frame, Direction};
    use crate::harmonics::{gegenbauer, harmonic_count, HarmonicEvaluator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng) -> SpherePoint {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let phi: f64 = rng.gen_range(0.0..2.0 * PI);
        SpherePoint::from_spherical(libm::acos(z), phi)
    }

    fn random_generator(rng: &mut impl Rng) -> RotationGenerator {
        let p = random_point(rng);
        let dir = if rng.gen_bool(0.5) { Direction::First } else { Direction::Second };
        rotation_generator(&p, dir)
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(0.25).unwrap(), 1.0);
        assert_eq!(rho(0.5).unwrap(), 1.0);
        assert_eq!(rho(1.5).unwrap(), 0.0);
        assert_eq!(rho(1.0).unwrap(), 0.0);
        assert!((rho(0.75).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(rho(-0.1), Err(Error::Domain(-0.1)));
        assert!(rho(f64::NAN).is_err());
    }

    #[test]
    fn rho_is_monotone_and_symmetric() {
        let mut last = 1.0;
        for i in 0..=1000 {
            let t = 0.5 + 0.5 * i as f64 / 1000.0;
            let r = rho(t).unwrap();
            assert!(r <= last + 1e-15 && (0.0..=1.0).contains(&r));
            last = r;
            let mirror = rho(1.5 - t).unwrap();
            assert!((r + mirror - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_table_invariants() {
        for n in [2, 3, 10, 17, 40] {
            let table = build_kernel(n).unwrap();
            for k in 0..=n / 2 {
                assert_eq!(table.coeff(k), (2.0 * k as f64 + 1.0) / (4.0 * PI));
            }
            assert_eq!(table.coeff(n + 1), 0.0);
            assert!((table.value(1.0) - 1.0).abs() < 1e-12);
        }
        assert_eq!(build_kernel(1), Err(Error::KernelDegree(1)));
    }

    #[test]
    fn degree_two_normalization() {
        let table = build_kernel(2).unwrap();
        assert!((table.normalization() - PI).abs() < 1e-14);
    }

    #[test]
    fn slope_lower_bound() {
        for n in [2, 5, 10, 20, 40, 80] {
            let table = build_kernel(n).unwrap();
            assert!(table.slope_at_one() >= (n * n) as f64 / 64.0);
        }
    }

    #[test]
    fn first_derivative_via_lifted_gegenbauer() {
        // F'(t) = C̃ Σ c_n n(n+1)/2 P_{n-1,5}(t)
        let table = build_kernel(12).unwrap();
        for t in [-0.9, -0.2, 0.3, 0.95, 1.0] {
            let lifted: f64 = (1..=12)
                .map(|n| {
                    let nf = n as f64;
                    table.coeff(n) * nf * (nf + 1.0) / 2.0 * gegenbauer(n - 1, 5, t)
                })
                .sum::<f64>()
                * table.normalization();
            let direct = eval_kernel(&table, t, 1).unwrap();
            assert!((lifted - direct).abs() < 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let table = build_kernel(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..50 {
            let t: f64 = rng.gen_range(-0.99..0.99);
            for l in 1..=3 {
                let fd = (eval_kernel(&table, t + h, l - 1).unwrap() - eval_kernel(&table, t - h, l - 1).unwrap())
                    / (2.0 * h);
                let exact = eval_kernel(&table, t, l).unwrap();
                let scale = exact.abs().max(1e-3 * pow(20.0, 2.0 * l as f64));
                assert!((fd - exact).abs() <= 1e-5 * scale, "l = {l}, t = {t}: {fd} vs {exact}");
            }
        }
        assert_eq!(eval_kernel(&table, 0.1, 4), Err(Error::UnsupportedOrder(4)));
    }

    #[test]
    fn envelope_fit_at_twenty() {
        let table = build_kernel(20).unwrap();
        let c3 = localization_scan(&table, 3, DerivOrder::VALUE).unwrap();
        assert!(c3 >= 1.0 && c3.is_finite());
        for row in scan_rows(&table, 3, DerivOrder::VALUE, 5000) {
            assert!(row.value.abs() <= envelope(c3, 20, 3, DerivOrder::VALUE, row.theta) * (1.0 + 1e-9));
        }
        assert!((scan_rows(&table, 3, DerivOrder::VALUE, 10)[0].scaled - 1.0).abs() < 1e-12);
    }

    #[test]
    fn localization_is_uniform_in_degree() {
        let c = |n| localization_scan(&build_kernel(n).unwrap(), 3, DerivOrder::VALUE).unwrap();
        let (a, b) = (c(20), c(40));
        assert!(a / b < 2.0 && b / a < 2.0, "{a} vs {b}");
        for n in [10, 20, 40] {
            let c1 = localization_scan(&build_kernel(n).unwrap(), 3, DerivOrder::FIRST).unwrap();
            assert!(c1.is_finite() && c1 > 0.0);
        }
        assert!(localization_scan(&build_kernel(10).unwrap(), 2, DerivOrder::VALUE).is_err());
    }

    #[test]
    fn g_derivative_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let gen = random_generator(&mut rng);
            let (xi, xi0) = (random_point(&mut rng), random_point(&mut rng));
            let d = rot_deriv_g(&gen, &xi, &xi0);
            assert!(d.abs() <= geodesic_distance(&xi, &xi0) + 1e-12);
        }
        for _ in 0..50 {
            let gen = random_generator(&mut rng);
            let (xi, xi0) = (random_point(&mut rng), random_point(&mut rng));
            let t = 1e-6;
            let fd = (gen.flow_point(t, &xi).dot(&xi0) - gen.flow_point(-t, &xi).dot(&xi0)) / (2.0 * t);
            assert!((fd - rot_deriv_g(&gen, &xi, &xi0)).abs() < 1e-7);
            let p = gen.axis_point;
            assert!(rot_deriv_g(&gen, &p, &p).abs() < 1e-15);
        }
    }

    #[test]
    fn identities_at_the_anchor() {
        let table = build_kernel(40).unwrap();
        let slope = table.slope_at_one();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = random_point(&mut rng);
            let [g1, g2] = frame_generators(&tangent_frame(&p));
            let tol = 1e-9 * 1600.0;
            assert!(rot_deriv_f(&table, &[g1], &p, &p).unwrap().abs() < tol);
            assert!(rot_deriv_f(&table, &[g2], &p, &p).unwrap().abs() < tol);
            assert!(rot_deriv_f(&table, &[g1, g2], &p, &p).unwrap().abs() < tol);
            assert!(rot_deriv_f(&table, &[g2, g1], &p, &p).unwrap().abs() < tol);
            assert!((rot_deriv_f(&table, &[g1, g1], &p, &p).unwrap() + slope).abs() < tol);
            assert!((rot_deriv_f(&table, &[g2, g2], &p, &p).unwrap() + slope).abs() < tol);
        }
        let g = rotation_generator(&SpherePoint::new(0.0, 0.0, 1.0), Direction::First);
        let p = SpherePoint::new(1.0, 0.0, 0.0);
        assert_eq!(rot_deriv_f(&table, &[], &p, &p), Err(Error::GeneratorCount(0)));
        assert_eq!(rot_deriv_f(&table, &[g; 4], &p, &p), Err(Error::GeneratorCount(4)));
    }

    /// `F_N(flow_1(t1) flow_2(t2) flow_3(t3) ξ · ξ0)`, first generator outermost.
    fn flowed(table: &KernelTable, gens: &[RotationGenerator], ts: &[f64], xi: &SpherePoint, xi0: &SpherePoint) -> f64 {
        let mut v = *xi.as_array();
        for (g, &t) in gens.iter().zip(ts).rev() {
            v = g.flow(t, &v);
        }
        table.value(dot(&v, xi0.as_array()))
    }

    #[test]
    fn rotational_derivatives_match_nested_differences() {
        let table = build_kernel(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let gens = [random_generator(&mut rng), random_generator(&mut rng), random_generator(&mut rng)];
            let xi = random_point(&mut rng);
            let xi0 = xi.walk(&tangent_frame(&xi).t1, rng.gen_range(0.0..0.6));
            for order in 1..=3usize {
                let h = [1e-5, 1e-4, 1e-3][order - 1];
                let g = &gens[..order];
                let mut fd = 0.0;
                for mask in 0..(1usize << order) {
                    let ts: Vec<f64> = (0..order).map(|i| if mask >> i & 1 == 1 { h } else { -h }).collect();
                    let sign = if (order - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
                    fd += sign * flowed(&table, g, &ts, &xi, &xi0);
                }
                fd /= pow(2.0 * h, order as f64);
                let exact = rot_deriv_f(&table, g, &xi, &xi0).unwrap();
                let scale = exact.abs().max(pow(10.0, order as f64) * 1e-2);
                assert!((fd - exact).abs() <= 1e-3 * scale, "order {order}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn kernel_is_band_limited() {
        let n = 8;
        let table = build_kernel(n).unwrap();
        let xi0 = SpherePoint::new(0.3, -0.4, 0.8);
        let grid = crate::geometry::fibonacci_grid(100_000);
        let top = n + 4;
        let mut eval = HarmonicEvaluator::new(top);
        let mut coeffs = alloc::vec![0.0; harmonic_count(top)];
        let mut y = alloc::vec![0.0; harmonic_count(top)];
        let w = 4.0 * PI / grid.len() as f64;
        for p in &grid {
            eval.eval_into(p, &mut y);
            let f = table.value(p.dot(&xi0)) * w;
            crate::linalg::axpy(f, &y, &mut coeffs);
        }
        let split = harmonic_count(n);
        let low: f64 = coeffs[..split].iter().map(|c| c * c).sum();
        let high: f64 = coeffs[split..].iter().map(|c| c * c).sum();
        assert!(high / low < 1e-6, "tail ratio {}", high / low);
    }

    #[test]
    fn lipschitz_constant_is_uniform_in_degree() {
        let fit = |n: usize, order: DerivOrder| {
            let table = build_kernel(n).unwrap();
            let nf = n as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let xi0 = SpherePoint::new(0.0, 0.0, 1.0);
            let mut best: f64 = 0.0;
            for i in 0..400 {
                let theta = (i as f64 * 0.05 / nf).min(PI);
                let eta = SpherePoint::from_spherical(theta, rng.gen_range(0.0..2.0 * PI));
                let frame = tangent_frame(&eta);
                let pick = |rng: &mut ChaCha8Rng| {
                    let a: f64 = rng.gen_range(0.0..2.0 * PI);
                    let dir = crate::geometry::add(
                        &crate::geometry::scale(&frame.t1, cos(a)),
                        &crate::geometry::scale(&frame.t2, libm::sin(a)),
                    );
                    eta.walk(&dir, rng.gen_range(0.0..1.0 / nf))
                };
                let (e1, e2) = (pick(&mut rng), pick(&mut rng));
                let d12 = geodesic_distance(&e1, &e2);
                if d12 < 1e-8 {
                    continue;
                }
                let diff = (table.eval(e1.dot(&xi0), order) - table.eval(e2.dot(&xi0), order)).abs();
                let bound = d12 * pow(nf, 2.0 * order.get() as f64 + 1.0)
                    / pow(1.0 + nf * geodesic_distance(&eta, &xi0), 3.0);
                best = best.max(diff / bound);
            }
            best
        };
        for order in [DerivOrder::VALUE, DerivOrder::FIRST, DerivOrder::SECOND] {
            let cs: Vec<f64> = [10, 20, 40].iter().map(|&n| fit(n, order)).collect();
            let (lo, hi) = cs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
            assert!(hi / lo < 2.0, "order {}: {cs:?}", order.get());
        }
    }
}
