//! Random ensembles with a separation floor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphere_superres::geometry::{
    add, fibonacci_grid, geodesic_distance, grid_spacing, nearest_index, scale, tangent_frame, SpherePoint,
};
use sphere_superres::DiracEnsemble;

use crate::config::{ExperimentConfig, Placement, WeightLaw};
use crate::error::{CliError, CliResult};

/// Rejection budget across all placements.
pub const MAX_ATTEMPTS: usize = 1_000_000;
/// Largest admissible `s·(1 − cos(ν/2N))`; caps cover at most 95% of the sphere.
pub const PACKING_LIMIT: f64 = 1.9;

/// `s·(1 − cos(ν/(2N)))`, the total normalized area of the separation caps.
pub fn packing_load(num_atoms: usize, nu: f64, degree: usize) -> f64 {
    num_atoms as f64 * (1.0 - (nu / (2.0 * degree as f64)).cos())
}

pub fn uniform_point(rng: &mut impl Rng) -> SpherePoint {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    SpherePoint::new(r * phi.cos(), r * phi.sin(), z)
}

fn random_neighbour(rng: &mut impl Rng, p: &SpherePoint, angle: f64) -> SpherePoint {
    let frame = tangent_frame(p);
    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let dir = add(&scale(&frame.t1, a.cos()), &scale(&frame.t2, a.sin()));
    p.walk(&dir, angle)
}

struct Placer<'a> {
    grid: Option<&'a [SpherePoint]>,
    min_sep: f64,
    points: Vec<SpherePoint>,
}

impl Placer<'_> {
    fn snap(&self, p: SpherePoint) -> SpherePoint {
        match self.grid {
            Some(g) => g[nearest_index(g, &p).expect("grid is non-empty")],
            None => p,
        }
    }

    fn admissible(&self, p: &SpherePoint) -> bool {
        self.points.iter().all(|q| {
            let d = geodesic_distance(p, q);
            d > 0.0 && d >= self.min_sep
        })
    }
}

/// Seeded random ensemble per `cfg`.
///
/// Candidates are snapped to the grid before the separation test, so the
/// returned locations satisfy it exactly. Members of a clustered pair are
/// exempt from the floor with respect to each other.
pub fn gen_ensemble(cfg: &ExperimentConfig) -> CliResult<DiracEnsemble> {
    cfg.validate()?;
    let (s, n, nu) = (cfg.num_atoms, cfg.degree, cfg.separation_factor);
    let load = packing_load(s, nu, n);
    if load > PACKING_LIMIT {
        return Err(CliError::Config(format!(
            "{s} caps of radius {nu}/(2*{n}) cannot be packed: load {load:.3} > {PACKING_LIMIT}"
        )));
    }
    let grid = cfg.snap.then(|| fibonacci_grid(cfg.grid_size));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut placer = Placer {
        grid: grid.as_deref(),
        min_sep: nu / n as f64,
        points: Vec::with_capacity(s),
    };
    let (pairs, gap) = match cfg.placement {
        Placement::Uniform => (0, 0.0),
        Placement::ClusteredPairs { pairs, gap } => (pairs, gap * grid_spacing(cfg.grid_size)),
    };

    let mut attempts = 0;
    let exhausted = |placed| CliError::RetryExhausted {
        attempts: MAX_ATTEMPTS,
        placed,
        wanted: s,
    };
    for _ in 0..pairs {
        loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(exhausted(placer.points.len()));
            }
            let p = uniform_point(&mut rng);
            let q = random_neighbour(&mut rng, &p, gap);
            let (p, q) = (placer.snap(p), placer.snap(q));
            if geodesic_distance(&p, &q) > 0.0 && placer.admissible(&p) && placer.admissible(&q) {
                placer.points.push(p);
                placer.points.push(q);
                break;
            }
        }
    }
    while placer.points.len() < s {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(exhausted(placer.points.len()));
        }
        let p = placer.snap(uniform_point(&mut rng));
        if placer.admissible(&p) {
            placer.points.push(p);
        }
    }

    let nonneg = cfg.solver.nonneg;
    let weights: Vec<f64> = (0..s)
        .map(|_| {
            let magnitude = match cfg.weight_law {
                WeightLaw::UnitSigns => 1.0,
                WeightLaw::Uniform { a, b } => {
                    if a == b {
                        a
                    } else {
                        rng.gen_range(a..=b)
                    }
                }
            };
            let negative = !nonneg && rng.gen_bool(0.5);
            if negative {
                -magnitude
            } else {
                magnitude
            }
        })
        .collect();
    Ok(DiracEnsemble::from_parts(&weights, &placer.points)?)
}
