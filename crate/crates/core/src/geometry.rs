//! Points on the unit sphere, local tangent frames and the rotation
//! generators behind the rotational derivatives.

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{acos, atan2, cos, sin, sqrt};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    sqrt(dot(a, a))
}

#[inline]
pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

pub fn determinant(m: &Mat3) -> f64 {
    dot(&m[0], &cross(&m[1], &m[2]))
}

/// Matrix of `v -> w × v`.
pub fn skew(w: &Vec3) -> Mat3 {
    [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
}

/// A unit vector in R^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint([f64; 3]);

impl SpherePoint {
    /// Normalizes `(x, y, z)` onto the sphere.
    ///
    /// # Panics
    /// If the vector is zero or not finite. Use [`SpherePoint::try_new`] for
    /// untrusted input.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self::try_new(x, y, z).expect("cannot place a zero vector on the sphere")
    }

    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vec(&[x, y, z])
    }

    pub fn from_vec(v: &Vec3) -> Result<Self> {
        let n = norm(v);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::DegenerateVector);
        }
        // already unit up to rounding: keep the bits so normalization is idempotent
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self(*v));
        }
        Ok(Self(scale(v, 1.0 / n)))
    }

    /// Colatitude `theta` in `[0, π]`, longitude `phi`.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let st = sin(theta);
        Self([st * cos(phi), st * sin(phi), cos(theta)])
    }

    /// Latitude and longitude in radians, latitude in `[-π/2, π/2]`.
    pub fn from_lat_lon(lat: f64, lon: f64) -> Self {
        Self::from_spherical(PI / 2.0 - lat, lon)
    }

    pub fn lat_lon(&self) -> (f64, f64) {
        let [x, y, z] = self.0;
        (PI / 2.0 - acos(z.clamp(-1.0, 1.0)), atan2(y, x))
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn as_array(&self) -> &Vec3 {
        &self.0
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn antipode(&self) -> Self {
        Self(scale(&self.0, -1.0))
    }

    pub fn distance(&self, other: &SpherePoint) -> f64 {
        geodesic_distance(self, other)
    }

    /// Point reached by walking `angle` radians along the great circle
    /// leaving `self` in tangent direction `direction` (unit, orthogonal to
    /// `self`).
    pub fn walk(&self, direction: &Vec3, angle: f64) -> Self {
        let v = add(&scale(&self.0, cos(angle)), &scale(direction, sin(angle)));
        Self::from_vec(&v).unwrap_or(*self)
    }
}

/// Great-circle distance in `[0, π]`. Same as `acos` of the clamped dot
/// product, evaluated as `atan2(|a×b|, a·b)` to stay accurate for nearby
/// points.
pub fn geodesic_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    atan2(norm(&cross(a.as_array(), b.as_array())), a.dot(b).clamp(-1.0, 1.0))
}

/// Orthonormal tangent basis at `base` with `t1 × t2 = base`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub base: SpherePoint,
    pub t1: Vec3,
    pub t2: Vec3,
}

impl TangentFrame {
    /// Builds a frame from an explicit first tangent. `t1` is projected onto
    /// the tangent plane and normalized; `t2 = base × t1`.
    pub fn from_first_tangent(base: SpherePoint, t1: &Vec3) -> Result<Self> {
        let p = base.as_array();
        let projected = sub(t1, &scale(p, dot(t1, p)));
        let t1 = *SpherePoint::from_vec(&projected)?.as_array();
        let t2 = cross(p, &t1);
        Ok(Self { base, t1, t2 })
    }

    pub fn tangent(&self, direction: Direction) -> Vec3 {
        match direction {
            Direction::First => self.t1,
            Direction::Second => self.t2,
        }
    }

    /// Same base point, tangents rotated by `angle` within the tangent plane.
    pub fn rotated(&self, angle: f64) -> Self {
        let (c, s) = (cos(angle), sin(angle));
        Self {
            base: self.base,
            t1: add(&scale(&self.t1, c), &scale(&self.t2, s)),
            t2: add(&scale(&self.t1, -s), &scale(&self.t2, c)),
        }
    }
}

const POLE_THRESHOLD: f64 = 1.0 - 1e-6;

/// Deterministic frame: `t1 = normalize(ref × p)`, `t2 = p × t1`, with
/// `ref = e_z` except within 1e-6 of the poles where `ref = e_x`.
pub fn tangent_frame(p: &SpherePoint) -> TangentFrame {
    let reference: Vec3 = if p.z().abs() > POLE_THRESHOLD {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let raw = cross(&reference, p.as_array());
    let t1 = scale(&raw, 1.0 / norm(&raw));
    let t2 = cross(p.as_array(), &t1);
    TangentFrame { base: *p, t1, t2 }
}

/// Tangent direction index `r ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    First,
    Second,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::First, Direction::Second];

    pub fn index(self) -> usize {
        match self {
            Direction::First => 1,
            Direction::Second => 2,
        }
    }

    pub fn from_index(r: usize) -> Option<Self> {
        match r {
            1 => Some(Direction::First),
            2 => Some(Direction::Second),
            _ => None,
        }
    }
}

/// Skew-symmetric generator `M` anchored at a point. The one-parameter
/// family `exp(-tM)` rotates the anchor along the chosen tangent at unit
/// speed, so `-M p = t_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationGenerator {
    pub axis_point: SpherePoint,
    pub direction: Direction,
    /// Unit rotation axis `w` with `M v = w × v`.
    axis: Vec3,
}

impl RotationGenerator {
    pub fn from_frame(frame: &TangentFrame, direction: Direction) -> Self {
        // r = 1 rotates about -t2, r = 2 about t1.
        let axis = match direction {
            Direction::First => scale(&frame.t2, -1.0),
            Direction::Second => frame.t1,
        };
        Self {
            axis_point: frame.base,
            direction,
            axis,
        }
    }

    pub fn matrix(&self) -> Mat3 {
        skew(&self.axis)
    }

    pub fn axis(&self) -> &Vec3 {
        &self.axis
    }

    /// Velocity of the flow at `v`: `-M v`.
    #[inline]
    pub fn velocity(&self, v: &Vec3) -> Vec3 {
        cross(v, &self.axis)
    }

    /// `exp(-tM)` in closed form (Rodrigues).
    pub fn rotation(&self, t: f64) -> Mat3 {
        let k = skew(&self.axis);
        let k2 = mat_mul(&k, &k);
        let (s, c) = (sin(t), cos(t));
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                out[i][j] = id - s * k[i][j] + (1.0 - c) * k2[i][j];
            }
        }
        out
    }

    /// `exp(-tM) v`.
    pub fn flow(&self, t: f64, v: &Vec3) -> Vec3 {
        let w = &self.axis;
        let (s, c) = (sin(t), cos(t));
        // Rodrigues for rotation by -t about w.
        let wxv = cross(w, v);
        let wdv = dot(w, v);
        [
            v[0] * c - wxv[0] * s + w[0] * wdv * (1.0 - c),
            v[1] * c - wxv[1] * s + w[1] * wdv * (1.0 - c),
            v[2] * c - wxv[2] * s + w[2] * wdv * (1.0 - c),
        ]
    }

    pub fn flow_point(&self, t: f64, p: &SpherePoint) -> SpherePoint {
        SpherePoint(self.flow(t, p.as_array()))
    }
}

/// Generator for direction `r` at `p`, using [`tangent_frame`].
pub fn rotation_generator(p: &SpherePoint, direction: Direction) -> RotationGenerator {
    RotationGenerator::from_frame(&tangent_frame(p), direction)
}

/// Both generators of a frame.
pub fn frame_generators(frame: &TangentFrame) -> [RotationGenerator; 2] {
    [
        RotationGenerator::from_frame(frame, Direction::First),
        RotationGenerator::from_frame(frame, Direction::Second),
    ]
}

/// Golden-angle spiral with `m` points.
pub fn fibonacci_grid(m: usize) -> Vec<SpherePoint> {
    let golden_angle = PI * (3.0 - sqrt(5.0));
    let mf = m as f64;
    (0..m)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / mf;
            let r = sqrt((1.0 - z * z).max(0.0));
            let phi = golden_angle * i as f64;
            SpherePoint([r * cos(phi), r * sin(phi), z])
        })
        .collect()
}

/// Nominal spacing `sqrt(4π / m)` of an `m`-point quasi-uniform grid.
pub fn grid_spacing(m: usize) -> f64 {
    sqrt(4.0 * PI / m as f64)
}

/// Closest pair `(i, j, distance)` with `i < j`.
pub fn closest_pair(points: &[SpherePoint]) -> Result<(usize, usize, f64)> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = geodesic_distance(&points[i], &points[j]);
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    Ok(best)
}

/// Minimum pairwise geodesic distance.
pub fn min_separation(points: &[SpherePoint]) -> Result<f64> {
    closest_pair(points).map(|(_, _, d)| d)
}

/// Index of the point of `grid` closest to `p`.
pub fn nearest_index(grid: &[SpherePoint], p: &SpherePoint) -> Option<usize> {
    let mut best = None;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, g) in grid.iter().enumerate() {
        let d = g.dot(p);
        if d > best_dot {
            best_dot = d;
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng) -> SpherePoint {
        loop {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = norm(&v);
            if n > 0.1 && n <= 1.0 {
                return SpherePoint::from_vec(&v).unwrap();
            }
        }
    }

    fn assert_vec_close(a: &Vec3, b: &Vec3, tol: f64) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn distance_examples() {
        let z = SpherePoint::new(0.0, 0.0, 1.0);
        assert_eq!(geodesic_distance(&z, &z), 0.0);
        let d = geodesic_distance(&SpherePoint::new(1.0, 0.0, 0.0), &SpherePoint::new(0.0, 1.0, 0.0));
        assert!((d - PI / 2.0).abs() < 1e-15);
        let d = geodesic_distance(&z, &z.antipode());
        assert!((d - PI).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_rejected() {
        assert_eq!(SpherePoint::try_new(0.0, 0.0, 0.0), Err(Error::DegenerateVector));
        assert!(SpherePoint::try_new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn frame_at_x_axis() {
        let f = tangent_frame(&SpherePoint::new(1.0, 0.0, 0.0));
        assert_vec_close(&f.t1, &[0.0, 1.0, 0.0], 1e-15);
        assert_vec_close(&f.t2, &[0.0, 0.0, 1.0], 1e-15);
    }

    #[test]
    fn frame_at_pole_uses_x_reference() {
        // ref = e_x: e_x × e_z = (0, -1, 0), then t2 = e_z × t1 = (1, 0, 0).
        let f = tangent_frame(&SpherePoint::new(0.0, 0.0, 1.0));
        assert_vec_close(&f.t1, &[0.0, -1.0, 0.0], 1e-15);
        assert_vec_close(&f.t2, &[1.0, 0.0, 0.0], 1e-15);
        let f = tangent_frame(&SpherePoint::new(0.0, 0.0, -1.0));
        assert_vec_close(&f.t1, &[0.0, 1.0, 0.0], 1e-15);
        assert_vec_close(&f.t2, &[1.0, 0.0, 0.0], 1e-15);
    }

    fn check_frame(f: &TangentFrame) {
        let p = f.base.as_array();
        assert!(dot(&f.t1, p).abs() < 1e-12);
        assert!(dot(&f.t2, p).abs() < 1e-12);
        assert!(dot(&f.t1, &f.t2).abs() < 1e-12);
        assert!((norm(&f.t1) - 1.0).abs() < 1e-12);
        assert!((norm(&f.t2) - 1.0).abs() < 1e-12);
        assert!((dot(&cross(&f.t1, &f.t2), p) - 1.0).abs() < 1e-10);
    }

    /// Truncated exponential series, independent of the Rodrigues form.
    fn expm_series(m: &Mat3) -> Mat3 {
        let mut out = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut term = out;
        for k in 1..40 {
            term = mat_mul(&term, m);
            for row in term.iter_mut() {
                for v in row.iter_mut() {
                    *v /= k as f64;
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] += term[i][j];
                }
            }
        }
        out
    }

    #[test]
    fn explicit_frame_generators_reproduce_axis_rotations() {
        // At (-1, 0, 0) the frame t1 = e_z, t2 = e_y is right-handed.
        let p = SpherePoint::new(-1.0, 0.0, 0.0);
        let frame = TangentFrame::from_first_tangent(p, &[0.0, 0.0, 1.0]).unwrap();
        assert_vec_close(&frame.t2, &[0.0, 1.0, 0.0], 1e-15);
        let g1 = RotationGenerator::from_frame(&frame, Direction::First);
        let g2 = RotationGenerator::from_frame(&frame, Direction::Second);
        for t in [0.1, 0.5] {
            let (c, s) = (cos(t), sin(t));
            let expected1 = [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]];
            let expected2 = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
            for (g, expected) in [(g1, expected1), (g2, expected2)] {
                let mut scaled = g.matrix();
                for row in scaled.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= -t;
                    }
                }
                let series = expm_series(&scaled);
                let closed = g.rotation(t);
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((series[i][j] - expected[i][j]).abs() < 1e-14);
                        assert!((closed[i][j] - expected[i][j]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn generators_are_skew_and_rotations_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = random_point(&mut rng);
            for dir in Direction::BOTH {
                let g = rotation_generator(&p, dir);
                let m = g.matrix();
                let mt = transpose(&m);
                let asym = (0..3)
                    .flat_map(|i| (0..3).map(move |j| (i, j)))
                    .map(|(i, j)| (m[i][j] + mt[i][j]).abs())
                    .fold(0.0, f64::max);
                assert!(asym < 1e-14);
                let t = rng.gen_range(0.0..PI);
                let r = g.rotation(t);
                let rrt = mat_mul(&r, &transpose(&r));
                for i in 0..3 {
                    for j in 0..3 {
                        let id = if i == j { 1.0 } else { 0.0 };
                        assert!((rrt[i][j] - id).abs() < 1e-13);
                    }
                }
                assert!((determinant(&r) - 1.0).abs() < 1e-13);
                assert!((norm(&g.flow(t, p.as_array())) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generator_velocity_matches_frame_and_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_point(&mut rng);
            let frame = tangent_frame(&p);
            check_frame(&frame);
            for dir in Direction::BOTH {
                let g = RotationGenerator::from_frame(&frame, dir);
                let v = g.velocity(p.as_array());
                assert_vec_close(&v, &frame.tangent(dir), 1e-12);
                let minus_mp = scale(&mat_vec(&g.matrix(), p.as_array()), -1.0);
                assert_vec_close(&minus_mp, &v, 1e-14);
                let h = 1e-5;
                let fd = scale(&sub(&g.flow(h, p.as_array()), &g.flow(-h, p.as_array())), 0.5 / h);
                assert_vec_close(&fd, &v, 1e-7);
            }
        }
    }

    #[test]
    fn fibonacci_grid_is_quasi_uniform() {
        let one = fibonacci_grid(1);
        assert_eq!(one.len(), 1);
        assert!((norm(one[0].as_array()) - 1.0).abs() < 1e-15);

        let grid = fibonacci_grid(1000);
        assert_eq!(grid.len(), 1000);
        let limit = 4.0 * grid_spacing(1000);
        for (i, p) in grid.iter().enumerate() {
            assert!((norm(p.as_array()) - 1.0).abs() < 1e-12);
            let nn = grid
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| geodesic_distance(p, q))
                .fold(f64::INFINITY, f64::min);
            assert!(nn < limit && nn > 0.0);
        }
    }

    #[test]
    fn separation_examples() {
        let axes = [
            SpherePoint::new(1.0, 0.0, 0.0),
            SpherePoint::new(0.0, 1.0, 0.0),
            SpherePoint::new(0.0, 0.0, 1.0),
        ];
        assert!((min_separation(&axes).unwrap() - PI / 2.0).abs() < 1e-15);
        let poles = [SpherePoint::new(0.0, 0.0, 1.0), SpherePoint::new(0.0, 0.0, -1.0)];
        assert!((min_separation(&poles).unwrap() - PI).abs() < 1e-15);
        assert_eq!(min_separation(&axes[..1]), Err(Error::TooFewPoints));
    }

    #[test]
    fn separation_matches_exhaustive_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..50).map(|_| random_point(&mut rng)).collect();
        let mut brute = f64::INFINITY;
        for a in &pts {
            for b in &pts {
                if a != b {
                    brute = brute.min(acos(dot(a.as_array(), b.as_array()).clamp(-1.0, 1.0)));
                }
            }
        }
        assert!((min_separation(&pts).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn rotated_frame_stays_right_handed() {
        let f = tangent_frame(&SpherePoint::new(0.3, -0.4, 0.8)).rotated(1.1);
        check_frame(&f);
    }

    #[test]
    fn lat_lon_round_trip() {
        let p = SpherePoint::new(0.2, -0.5, 0.7);
        let (lat, lon) = p.lat_lon();
        let q = SpherePoint::from_lat_lon(lat, lon);
        assert!(geodesic_distance(&p, &q) < 1e-12);
    }

    proptest! {
        #[test]
        fn triangle_inequality(
            a in prop::array::uniform3(-1.0f64..1.0),
            b in prop::array::uniform3(-1.0f64..1.0),
            c in prop::array::uniform3(-1.0f64..1.0),
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3 && norm(&c) > 1e-3);
            let (a, b, c) = (
                SpherePoint::from_vec(&a).unwrap(),
                SpherePoint::from_vec(&b).unwrap(),
                SpherePoint::from_vec(&c).unwrap(),
            );
            let ab = geodesic_distance(&a, &b);
            prop_assert!((ab - geodesic_distance(&b, &a)).abs() == 0.0);
            prop_assert!(geodesic_distance(&a, &c) <= ab + geodesic_distance(&b, &c) + 1e-12);
        }

        #[test]
        fn frames_are_orthonormal(v in prop::array::uniform3(-1.0f64..1.0)) {
            prop_assume!(norm(&v) > 1e-3);
            let f = tangent_frame(&SpherePoint::from_vec(&v).unwrap());
            check_frame(&f);
        }
    }
}
