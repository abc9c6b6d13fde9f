//! Total-variation minimization over a point grid:
//! `min ‖w‖₁` subject to `A w = y`, with `A` the sampling matrix.
//!
//! The solver is a primal-dual hybrid gradient (Chambolle–Pock) iteration
//! run on a working set of grid columns. After each inner solve the dual
//! polynomial `Aᵀλ` is synthesized on the whole grid; grid points that
//! violate dual feasibility join the working set. When none remain the
//! restricted solution solves the full problem. A least-squares polish on
//! the detected support removes solver noise, and is kept only if the
//! duality gap confirms it.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use libm::{exp, log as ln, sqrt};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, grid_spacing, SpherePoint};
use crate::harmonics::{harmonic_count, moments, Atom, DiracEnsemble, HarmonicEvaluator, MomentVector};
use crate::linalg::{self, axpy, dot, norm2, DenseMatrix};

/// Weights on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    pub grid: Vec<SpherePoint>,
    pub weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: Vec<SpherePoint>, weights: Vec<f64>) -> Result<Self> {
        if grid.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: grid.len(),
                got: weights.len(),
            });
        }
        Ok(Self { grid, weights })
    }

    pub fn tv_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Indices with nonzero weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i] != 0.0).collect()
    }

    pub fn to_ensemble(&self) -> DiracEnsemble {
        let atoms = self
            .support()
            .into_iter()
            .map(|i| Atom {
                weight: self.weights[i],
                location: self.grid[i],
            })
            .collect();
        DiracEnsemble::new(atoms).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Total PDHG iterations across all working-set rounds.
    pub max_iters: usize,
    /// Relative residual target `‖Aw − y‖ / ‖y‖`.
    pub primal_tol: f64,
    /// Relative change of `‖w‖₁` over 50 iterations; also the accepted
    /// relative duality gap and dual infeasibility.
    pub dual_tol: f64,
    /// `τ/σ = step_ratio²`.
    pub step_ratio: f64,
    pub nonneg: bool,
    /// Least-squares refit on the detected support.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            primal_tol: 1e-6,
            dual_tol: 1e-6,
            step_ratio: 1.0,
            nonneg: false,
            polish: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidOptions("max_iters must be at least 1"));
        }
        if !(self.primal_tol > 0.0 && self.dual_tol > 0.0) {
            return Err(Error::InvalidOptions("tolerances must be positive"));
        }
        if !(self.step_ratio > 0.0 && self.step_ratio.is_finite()) {
            return Err(Error::InvalidOptions("step_ratio must be positive"));
        }
        Ok(())
    }
}

/// Solver bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveInfo {
    pub iterations: usize,
    pub converged: bool,
    /// `‖Aw − y‖₂`
    pub residual: f64,
    /// `‖w‖₁` (or `Σw` for the non-negative problem).
    pub objective: f64,
    /// Dual objective of the rescaled, feasible dual iterate.
    pub dual_objective: f64,
    /// `max(|Aᵀλ|∞ − 1, 0)` over the full grid.
    pub dual_infeasibility: f64,
    pub working_set: usize,
    pub rounds: usize,
    pub polished: bool,
}

/// Measurement of a recovered ensemble against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecoveryReport {
    /// Largest distance from a true atom to its matched recovered atom;
    /// `π` when a true atom is left unmatched.
    pub support_distance: f64,
    /// Largest weight mismatch over matched pairs.
    pub weight_error: f64,
    /// `‖A w − y‖₂`
    pub residual: f64,
    pub iterations: usize,
    /// Recovered atoms without a true partner.
    pub extra_atoms: usize,
}

impl RecoveryReport {
    pub fn exact(&self, weight_tol: f64) -> bool {
        self.support_distance == 0.0 && self.weight_error < weight_tol && self.extra_atoms == 0
    }
}

/// Grid plus degree; evaluates the sampling matrix column by column.
#[derive(Debug, Clone)]
pub struct MeasurementSystem {
    grid: Vec<SpherePoint>,
    degree: usize,
}

impl MeasurementSystem {
    pub fn new(grid: Vec<SpherePoint>, degree: usize) -> Result<Self> {
        let needed = harmonic_count(degree);
        if grid.len() < needed {
            return Err(Error::GridTooSmall {
                grid: grid.len(),
                needed,
            });
        }
        Ok(Self { grid, degree })
    }

    pub fn grid(&self) -> &[SpherePoint] {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn rows(&self) -> usize {
        harmonic_count(self.degree)
    }

    /// Column `k` of the sampling matrix.
    pub fn column(&self, k: usize) -> Vec<f64> {
        HarmonicEvaluator::new(self.degree).eval(&self.grid[k])
    }

    /// `A w`.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut eval = HarmonicEvaluator::new(self.degree);
        let mut col = vec![0.0; self.rows()];
        let mut out = vec![0.0; self.rows()];
        for (k, &wk) in w.iter().enumerate() {
            if wk != 0.0 {
                eval.eval_into(&self.grid[k], &mut col);
                axpy(wk, &col, &mut out);
            }
        }
        out
    }

    /// `Aᵀ c`, the polynomial with coefficients `c` sampled on the grid.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let mut eval = HarmonicEvaluator::new(self.degree);
        let mut col = vec![0.0; self.rows()];
        self.grid
            .iter()
            .map(|p| {
                eval.eval_into(p, &mut col);
                dot(&col, c)
            })
            .collect()
    }

    /// The explicit sampling matrix.
    pub fn matrix(&self) -> DenseMatrix {
        crate::harmonics::sampling_matrix(&self.grid, self.degree)
    }

    pub fn recover(&self, y: &MomentVector, opts: &SolverOptions) -> Result<(GridMeasure, SolveInfo)> {
        opts.validate()?;
        if y.degree() != self.degree {
            return Err(Error::LengthMismatch {
                what: "moment vector",
                expected: self.rows(),
                got: y.len(),
            });
        }
        let mut solver = Solver::new(self, y.values(), opts);
        solver.run();
        Ok(solver.finish())
    }
}

/// Columns of `A` for a subset of grid indices, stored contiguously.
struct WorkingSet {
    dim: usize,
    idx: Vec<usize>,
    cols: Vec<f64>,
    slot: Vec<usize>,
}

impl WorkingSet {
    fn new(dim: usize, grid_len: usize) -> Self {
        Self {
            dim,
            idx: Vec::new(),
            cols: Vec::new(),
            slot: vec![usize::MAX; grid_len],
        }
    }

    fn len(&self) -> usize {
        self.idx.len()
    }

    fn contains(&self, k: usize) -> bool {
        self.slot[k] != usize::MAX
    }

    fn push(&mut self, k: usize, eval: &mut HarmonicEvaluator, grid: &[SpherePoint]) {
        if self.contains(k) {
            return;
        }
        self.slot[k] = self.idx.len();
        self.idx.push(k);
        let start = self.cols.len();
        self.cols.resize(start + self.dim, 0.0);
        eval.eval_into(&grid[k], &mut self.cols[start..]);
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.dim..(j + 1) * self.dim]
    }

    /// `out = A_W w` over the nonzeros of `w`.
    fn apply(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                axpy(wj, self.col(j), out);
            }
        }
    }

    /// `out = A_Wᵀ λ`.
    fn adjoint(&self, lambda: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.col(j), lambda);
        }
    }

    /// Largest singular value of `A_W`, by power iteration on `A_W A_Wᵀ`.
    fn operator_norm(&self, start: &[f64], steps: usize) -> f64 {
        let mut v = start.to_vec();
        let n = norm2(&v);
        if n == 0.0 {
            v = vec![1.0; self.dim];
        }
        let mut tmp = vec![0.0; self.len()];
        let mut next = vec![0.0; self.dim];
        let mut est = 0.0;
        for _ in 0..steps {
            let n = norm2(&v);
            if n == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= n);
            self.adjoint(&v, &mut tmp);
            self.apply(&tmp, &mut next);
            est = norm2(&next);
            core::mem::swap(&mut v, &mut next);
        }
        sqrt(est)
    }
}

const POWER_STEPS: usize = 50;
/// PDHG iterations in the first working-set round; doubles each round up to [`ROUND_ITERS`].
const FIRST_ROUND: usize = 1_000;
const ROUND_ITERS: usize = 20_000;
const WINDOW: usize = 50;
/// Restart test cadence.
const RESTART_CHECK: usize = 64;
/// Primal weight stays within this factor of `1/step_ratio`.
const OMEGA_RANGE: f64 = 1e4;
/// Seed columns where `|Aᵀy|` reaches this fraction of its peak.
const SEED_FRACTION: f64 = 0.2;
/// Relative duality gap under which a polished solution is accepted.
pub const POLISH_GAP: f64 = 1e-6;

struct Solver<'a> {
    sys: &'a MeasurementSystem,
    y: &'a [f64],
    opts: SolverOptions,
    ws: WorkingSet,
    eval: HarmonicEvaluator,
    w: Vec<f64>,
    lambda: Vec<f64>,
    iterations: usize,
    rounds: usize,
    converged: bool,
    full_dual: Vec<f64>,
    /// Primal weight; `τ = 0.99/(ωL)`, `σ = 0.99ω/L`.
    omega: f64,
}

impl<'a> Solver<'a> {
    fn new(sys: &'a MeasurementSystem, y: &'a [f64], opts: &SolverOptions) -> Self {
        Self {
            sys,
            y,
            opts: *opts,
            ws: WorkingSet::new(sys.rows(), sys.grid.len()),
            eval: HarmonicEvaluator::new(sys.degree),
            w: Vec::new(),
            lambda: vec![0.0; sys.rows()],
            iterations: 0,
            rounds: 0,
            converged: false,
            full_dual: Vec::new(),
            omega: 1.0 / opts.step_ratio,
        }
    }

    fn prox(&self, v: f64, tau: f64) -> f64 {
        if self.opts.nonneg {
            (v - tau).max(0.0)
        } else if v > tau {
            v - tau
        } else if v < -tau {
            v + tau
        } else {
            0.0
        }
    }

    fn objective(&self, w: &[f64]) -> f64 {
        if self.opts.nonneg {
            w.iter().sum()
        } else {
            w.iter().map(|x| x.abs()).sum()
        }
    }

    /// How far `p = Aᵀλ` is from dual feasibility at one point.
    fn violation(&self, p: f64) -> f64 {
        if self.opts.nonneg {
            (-p - 1.0).max(0.0)
        } else {
            (p.abs() - 1.0).max(0.0)
        }
    }

    fn add(&mut self, k: usize) {
        self.ws.push(k, &mut self.eval, &self.sys.grid);
        self.w.push(0.0);
    }

    fn run(&mut self) {
        let ynorm = norm2(self.y);
        if ynorm == 0.0 {
            self.converged = true;
            return;
        }
        // Seed with the peaks of the back-projection.
        let b = self.sys.synthesize(self.y);
        let peak = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let key = |k: usize| if self.opts.nonneg { b[k] } else { b[k].abs() };
        let mut seed: Vec<usize> = (0..b.len()).filter(|&k| key(k) >= SEED_FRACTION * peak).collect();
        let mut keep = 4 * self.sys.rows();
        // at least 2D columns so the restricted system is solvable
        let floor = (2 * self.sys.rows()).min(b.len());
        if seed.len() < floor {
            seed = (0..b.len()).collect();
            keep = floor;
        }
        seed.sort_by(|&a, &c| key(c).partial_cmp(&key(a)).unwrap_or(Ordering::Equal));
        seed.truncate(keep);
        for k in seed {
            self.add(k);
        }

        loop {
            self.rounds += 1;
            let cap = (FIRST_ROUND << (self.rounds - 1).min(8)).min(ROUND_ITERS);
            let budget = (self.opts.max_iters - self.iterations).min(cap);
            let inner_ok = self.pdhg(budget, ynorm);
            let p = self.sys.synthesize(&self.lambda);
            let tol = self.opts.dual_tol.max(1e-9);
            let mut violators: Vec<usize> = (0..p.len())
                .filter(|&k| !self.ws.contains(k) && self.violation(p[k]) > tol)
                .collect();
            self.full_dual = p;
            if self.iterations >= self.opts.max_iters || (violators.is_empty() && inner_ok) {
                self.converged = inner_ok && violators.is_empty();
                return;
            }
            let p = &self.full_dual;
            violators.sort_by(|&a, &c| p[c].abs().partial_cmp(&p[a].abs()).unwrap_or(Ordering::Equal));
            violators.truncate(self.sys.rows());
            for k in violators {
                self.add(k);
            }
        }
    }

    /// Normalized KKT error of a restricted pair: primal residual, dual violation, gap.
    fn kkt(&self, w: &[f64], lambda: &[f64], aw: &mut [f64], p: &mut [f64]) -> f64 {
        self.ws.apply(w, aw);
        let rp: f64 = aw.iter().zip(self.y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.ws.adjoint(lambda, p);
        let rd: f64 = p.iter().map(|&v| { let e = self.violation(v); e * e }).sum();
        let gap = self.objective(w) + dot(lambda, self.y);
        sqrt(rp + rd + gap * gap)
    }

    /// Restarted PDHG on the working set; `true` on convergence.
    fn pdhg(&mut self, budget: usize, ynorm: f64) -> bool {
        let dim = self.sys.rows();
        let n = self.ws.len();
        let l = self.ws.operator_norm(self.y, POWER_STEPS).max(1e-12);
        let mut p = vec![0.0; n];
        let mut w_new = vec![0.0; n];
        let mut w_bar = vec![0.0; n];
        let mut aw = vec![0.0; dim];
        let mut w_avg = vec![0.0; n];
        let mut l_avg = vec![0.0; dim];
        let mut avg_count = 0usize;
        let mut w_anchor = self.w.clone();
        let mut l_anchor = self.lambda.clone();
        let mut kkt_anchor = self.kkt(&self.w, &self.lambda, &mut aw, &mut p);
        let mut kkt_prev = kkt_anchor;
        let mut since_restart = 0usize;
        let mut history = [0.0f64; WINDOW];
        let mut tau = 0.99 / (self.omega * l);
        let mut sigma = 0.99 * self.omega / l;
        for it in 0..budget {
            self.ws.adjoint(&self.lambda, &mut p);
            for j in 0..n {
                w_new[j] = self.prox(self.w[j] - tau * p[j], tau);
                w_bar[j] = 2.0 * w_new[j] - self.w[j];
            }
            self.ws.apply(&w_bar, &mut aw);
            for i in 0..dim {
                self.lambda[i] += sigma * (aw[i] - self.y[i]);
            }
            core::mem::swap(&mut self.w, &mut w_new);
            self.iterations += 1;
            since_restart += 1;
            avg_count += 1;
            let c = 1.0 / avg_count as f64;
            for (a, v) in w_avg.iter_mut().zip(&self.w) {
                *a += c * (v - *a);
            }
            for (a, v) in l_avg.iter_mut().zip(&self.lambda) {
                *a += c * (v - *a);
            }

            if it % RESTART_CHECK == RESTART_CHECK - 1 {
                let k_cur = self.kkt(&self.w, &self.lambda, &mut aw, &mut p);
                let k_avg = self.kkt(&w_avg, &l_avg, &mut aw, &mut p);
                let use_avg = k_avg < k_cur;
                let k_cand = k_cur.min(k_avg);
                let restart = k_cand <= 0.2 * kkt_anchor
                    || (k_cand <= 0.8 * kkt_anchor && k_cand > kkt_prev)
                    || since_restart as f64 >= 0.36 * self.iterations as f64;
                kkt_prev = k_cand;
                if restart {
                    if use_avg {
                        self.w.copy_from_slice(&w_avg);
                        self.lambda.copy_from_slice(&l_avg);
                    }
                    let dw = norm2(&sub(&self.w, &w_anchor));
                    let dl = norm2(&sub(&self.lambda, &l_anchor));
                    if dw > 1e-10 && dl > 1e-10 {
                        let base = 1.0 / self.opts.step_ratio;
                        self.omega = exp(0.5 * ln(dl / dw) + 0.5 * ln(self.omega))
                            .clamp(base / OMEGA_RANGE, base * OMEGA_RANGE);
                        tau = 0.99 / (self.omega * l);
                        sigma = 0.99 * self.omega / l;
                    }
                    w_anchor.copy_from_slice(&self.w);
                    l_anchor.copy_from_slice(&self.lambda);
                    kkt_anchor = k_cand;
                    kkt_prev = k_cand;
                    since_restart = 0;
                    avg_count = 0;
                    w_avg.copy_from_slice(&self.w);
                    l_avg.copy_from_slice(&self.lambda);
                }
            }

            let obj = self.objective(&self.w);
            let old = history[it % WINDOW];
            history[it % WINDOW] = obj;
            if it >= WINDOW && (obj - old).abs() <= self.opts.dual_tol * obj.max(1e-300) {
                self.ws.apply(&self.w, &mut aw);
                let resid = aw.iter().zip(self.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                if sqrt(resid) <= self.opts.primal_tol * ynorm {
                    self.ws.adjoint(&self.lambda, &mut p);
                    let viol = p.iter().map(|&v| self.violation(v)).fold(0.0, f64::max);
                    let dual = -dot(&self.lambda, self.y) / (1.0 + viol);
                    if (obj - dual).abs() <= 10.0 * self.opts.dual_tol * obj.max(1.0) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn full_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.sys.grid.len()];
        for (j, &k) in self.ws.idx.iter().enumerate() {
            out[k] = self.w[j];
        }
        out
    }

    fn dual_objective(&self, p: &[f64]) -> (f64, f64) {
        let viol = p.iter().map(|&v| self.violation(v)).fold(0.0, f64::max);
        (-dot(&self.lambda, self.y) / (1.0 + viol), viol)
    }

    fn finish(mut self) -> (GridMeasure, SolveInfo) {
        let grid = self.sys.grid.clone();
        if norm2(self.y) == 0.0 {
            let m = grid.len();
            return (
                GridMeasure {
                    grid,
                    weights: vec![0.0; m],
                },
                SolveInfo {
                    converged: true,
                    ..SolveInfo::default()
                },
            );
        }
        if self.full_dual.is_empty() {
            self.full_dual = self.sys.synthesize(&self.lambda);
        }
        let (dual, viol) = self.dual_objective(&self.full_dual);
        let mut weights = self.full_weights();
        let mut residual = norm2(&sub(&self.sys.apply(&weights), self.y));
        let mut objective = self.objective(&weights);
        let mut polished = false;

        let mut dual = dual;
        let mut viol = viol;
        if self.opts.polish {
            if let Some((pw, pres)) = self.polish(&weights) {
                let pobj = self.objective(&pw);
                if pres <= self.opts.primal_tol * norm2(self.y) {
                    if let Some((d, v)) = self.projected_dual(&pw) {
                        if d > dual {
                            dual = d;
                            viol = v;
                        }
                    }
                    if pobj - dual <= POLISH_GAP * pobj.max(1.0) {
                        weights = pw;
                        residual = pres;
                        objective = pobj;
                        polished = true;
                    }
                }
            }
        }

        let info = SolveInfo {
            iterations: self.iterations,
            converged: self.converged && residual <= self.opts.primal_tol * norm2(self.y),
            residual,
            objective,
            dual_objective: dual,
            dual_infeasibility: viol,
            working_set: self.ws.len(),
            rounds: self.rounds,
            polished,
        };
        (GridMeasure { grid, weights }, info)
    }

    /// Moves `λ` to the nearest point with `A_Sᵀλ = −sgn(w_S)` on the support
    /// of `w` and returns the dual bound it certifies over the full grid.
    fn projected_dual(&self, w: &[f64]) -> Option<(f64, f64)> {
        let support: Vec<usize> = (0..w.len()).filter(|&k| w[k] != 0.0).collect();
        let s = support.len();
        let cols: Vec<&[f64]> = support.iter().map(|&k| self.ws.col(self.ws.slot[k])).collect();
        let gram = DenseMatrix::from_fn(s, s, |i, j| dot(cols[i], cols[j]));
        let rhs: Vec<f64> = support
            .iter()
            .zip(&cols)
            .map(|(&k, c)| {
                let target = if self.opts.nonneg { -1.0 } else { -w[k].signum() };
                target - dot(c, &self.lambda)
            })
            .collect();
        let z = linalg::Lu::factor(&gram).ok()?.solve(&rhs);
        let mut lambda = self.lambda.clone();
        for (zi, c) in z.iter().zip(&cols) {
            axpy(*zi, c, &mut lambda);
        }
        let p = self.sys.synthesize(&lambda);
        let viol = p.iter().map(|&v| self.violation(v)).fold(0.0, f64::max);
        Some((-dot(&lambda, self.y) / (1.0 + viol), viol))
    }

    /// Least squares on the entries above `1e-4 · max|w|`.
    fn polish(&self, weights: &[f64]) -> Option<(Vec<f64>, f64)> {
        let peak = weights.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return None;
        }
        let support: Vec<usize> = (0..weights.len())
            .filter(|&k| weights[k].abs() >= 1e-4 * peak)
            .collect();
        if support.is_empty() || support.len() > self.sys.rows() {
            return None;
        }
        let dim = self.sys.rows();
        let mut a = DenseMatrix::zeros(dim, support.len());
        for (j, &k) in support.iter().enumerate() {
            let col = self.ws.col(self.ws.slot[k]);
            for i in 0..dim {
                a[(i, j)] = col[i];
            }
        }
        let (x, res) = linalg::least_squares(&a, self.y).ok()?;
        if self.opts.nonneg && x.iter().any(|&v| v < 0.0) {
            return None;
        }
        let mut out = vec![0.0; weights.len()];
        for (j, &k) in support.iter().enumerate() {
            out[k] = x[j];
        }
        Some((out, res))
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `min ‖w‖₁` subject to `A w = y` on `grid`.
pub fn tv_min_recover(y: &MomentVector, grid: &[SpherePoint], opts: &SolverOptions) -> Result<(GridMeasure, SolveInfo)> {
    let opts = SolverOptions { nonneg: false, ..*opts };
    MeasurementSystem::new(grid.to_vec(), y.degree())?.recover(y, &opts)
}

/// `min Σw` subject to `A w = y`, `w ≥ 0`.
pub fn nonneg_recover(y: &MomentVector, grid: &[SpherePoint], opts: &SolverOptions) -> Result<(GridMeasure, SolveInfo)> {
    let opts = SolverOptions { nonneg: true, ..*opts };
    MeasurementSystem::new(grid.to_vec(), y.degree())?.recover(y, &opts)
}

/// Default `weight_floor`: `1e-4 · max|w|`.
pub fn default_weight_floor(m: &GridMeasure) -> f64 {
    1e-4 * m.weights.iter().fold(0.0f64, |a, w| a.max(w.abs()))
}

/// Default `cluster_radius`: twice the nominal grid spacing.
pub fn default_cluster_radius(grid_len: usize) -> f64 {
    2.0 * grid_spacing(grid_len)
}

/// Groups surviving grid entries into atoms. Entries are visited by
/// descending `|w|`, ties by lowest index; each unassigned entry seeds a
/// cluster that absorbs every unassigned entry within `cluster_radius`.
pub fn extract_support(m: &GridMeasure, weight_floor: f64, cluster_radius: f64) -> DiracEnsemble {
    let mut order: Vec<usize> = (0..m.weights.len())
        .filter(|&k| m.weights[k] != 0.0 && m.weights[k].abs() >= weight_floor)
        .collect();
    order.sort_by(|&a, &b| {
        m.weights[b]
            .abs()
            .partial_cmp(&m.weights[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; order.len()];
    let mut atoms: Vec<Atom> = Vec::new();
    for i in 0..order.len() {
        if taken[i] {
            continue;
        }
        let seed = m.grid[order[i]];
        let mut weight = 0.0;
        let mut centre = [0.0; 3];
        let mut members = 0;
        for j in i..order.len() {
            if taken[j] {
                continue;
            }
            let k = order[j];
            if j == i || geodesic_distance(&seed, &m.grid[k]) <= cluster_radius {
                taken[j] = true;
                members += 1;
                let w = m.weights[k];
                weight += w;
                centre = crate::geometry::add(&centre, &crate::geometry::scale(m.grid[k].as_array(), w.abs()));
            }
        }
        let location = if members == 1 {
            seed
        } else {
            SpherePoint::from_vec(&centre).unwrap_or(seed)
        };
        if atoms.iter().all(|a| a.location != location) {
            atoms.push(Atom { weight, location });
        }
    }
    DiracEnsemble::new(atoms).unwrap_or_default()
}

/// Greedy matching of true to recovered atoms, closest pairs first.
pub fn recovery_report(truth: &DiracEnsemble, recovered: &DiracEnsemble, y: &MomentVector) -> RecoveryReport {
    let t = truth.atoms();
    let r = recovered.atoms();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(t.len() * r.len());
    for (i, a) in t.iter().enumerate() {
        for (j, b) in r.iter().enumerate() {
            pairs.push((geodesic_distance(&a.location, &b.location), i, j));
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut t_used = vec![false; t.len()];
    let mut r_used = vec![false; r.len()];
    let mut report = RecoveryReport::default();
    for (d, i, j) in pairs {
        if t_used[i] || r_used[j] {
            continue;
        }
        t_used[i] = true;
        r_used[j] = true;
        report.support_distance = report.support_distance.max(d);
        report.weight_error = report.weight_error.max((t[i].weight - r[j].weight).abs());
    }
    if t_used.iter().any(|u| !u) {
        report.support_distance = PI;
    }
    report.extra_atoms = r_used.iter().filter(|u| !**u).count();
    let predicted = moments(recovered, y.degree());
    report.residual = norm2(&sub(predicted.values(), y.values()));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fibonacci_grid, nearest_index};

    fn on_grid(grid: &[SpherePoint], picks: &[usize], weights: &[f64]) -> DiracEnsemble {
        let locs: Vec<_> = picks.iter().map(|&i| grid[i]).collect();
        DiracEnsemble::from_parts(weights, &locs).unwrap()
    }

    #[test]
    fn zero_moments_give_zero_measure() {
        let grid = fibonacci_grid(200);
        for nonneg in [false, true] {
            let opts = SolverOptions { nonneg, ..SolverOptions::default() };
            let (m, info) = MeasurementSystem::new(grid.clone(), 4)
                .unwrap()
                .recover(&MomentVector::zeros(4), &opts)
                .unwrap();
            assert!(m.weights.iter().all(|&w| w == 0.0));
            assert!(info.converged);
        }
    }

    #[test]
    fn input_checks() {
        let grid = fibonacci_grid(10);
        let y = MomentVector::zeros(4);
        assert_eq!(
            tv_min_recover(&y, &grid, &SolverOptions::default()).unwrap_err(),
            Error::GridTooSmall { grid: 10, needed: 25 }
        );
        let bad = SolverOptions { max_iters: 0, ..SolverOptions::default() };
        assert!(tv_min_recover(&y, &fibonacci_grid(100), &bad).is_err());
        let bad = SolverOptions { primal_tol: 0.0, ..SolverOptions::default() };
        assert!(tv_min_recover(&y, &fibonacci_grid(100), &bad).is_err());
    }

    #[test]
    fn single_atom_is_recovered() {
        let grid = fibonacci_grid(4000);
        let f = on_grid(&grid, &[1234], &[2.5]);
        let y = moments(&f, 15);
        let (m, info) = tv_min_recover(&y, &grid, &SolverOptions::default()).unwrap();
        assert!(info.converged);
        assert!((m.weights[1234] - 2.5).abs() < 1e-4);
        for (k, w) in m.weights.iter().enumerate() {
            if k != 1234 {
                assert!(w.abs() < 1e-6);
            }
        }
        assert!(info.residual <= 1e-6 * y.norm());
    }

    #[test]
    fn antipodal_pair_is_recovered() {
        let grid = fibonacci_grid(4000);
        let a = 777;
        let b = nearest_index(&grid, &grid[a].antipode()).unwrap();
        let f = on_grid(&grid, &[a, b], &[1.0, -1.0]);
        let y = moments(&f, 15);
        let (m, info) = tv_min_recover(&y, &grid, &SolverOptions::default()).unwrap();
        assert!(info.converged);
        assert!((m.weights[a] - 1.0).abs() < 1e-4 && (m.weights[b] + 1.0).abs() < 1e-4);
        let rec = extract_support(&m, default_weight_floor(&m), default_cluster_radius(grid.len()));
        let report = recovery_report(&f, &rec, &y);
        assert!(report.exact(1e-3), "{report:?}");
    }

    #[test]
    fn nonneg_rejects_negative_data() {
        let grid = fibonacci_grid(1000);
        let f = on_grid(&grid, &[10, 500], &[-1.0, -0.5]);
        let y = moments(&f, 6);
        let opts = SolverOptions { max_iters: 4000, ..SolverOptions::default() };
        let (m, info) = nonneg_recover(&y, &grid, &opts).unwrap();
        assert!(m.weights.iter().all(|&w| w >= 0.0));
        assert!(!info.converged);
        // y_{0,1} < 0 while every nonnegative measure has y_{0,1} ≥ 0
        assert!(info.residual >= 1.5 / sqrt(4.0 * PI) - 1e-9);
    }

    #[test]
    fn nonneg_recovers_close_positive_atoms() {
        let grid = fibonacci_grid(1800);
        let a = 900;
        let b = nearest_index(&grid, &grid[a].walk(&[0.0, 0.0, 1.0], 1.5 * grid_spacing(1800))).unwrap();
        let f = on_grid(&grid, &[a, b, 100, 1700], &[1.0, 0.7, 2.0, 0.3]);
        let y = moments(&f, 6);
        let (m, info) = nonneg_recover(&y, &grid, &SolverOptions::default()).unwrap();
        assert!(info.converged);
        let rec = extract_support(&m, default_weight_floor(&m), 0.0);
        assert!(recovery_report(&f, &rec, &y).exact(1e-3));
    }

    #[test]
    fn extract_support_rules() {
        let grid = fibonacci_grid(500);
        let mut w = vec![0.0; 500];
        w[42] = 1.25;
        let m = GridMeasure::new(grid.clone(), w.clone()).unwrap();
        let e = extract_support(&m, 1e-6, 0.1);
        assert_eq!(e.len(), 1);
        assert_eq!(e.atoms()[0].location, grid[42]);
        assert_eq!(e.atoms()[0].weight, 1.25);

        let near = nearest_index(&grid, &grid[42].walk(&[0.0, 0.0, 1.0], 0.3)).unwrap();
        assert_ne!(near, 42);
        w[42] = 0.6;
        w[near] = 0.4;
        let m = GridMeasure::new(grid.clone(), w.clone()).unwrap();
        let d = geodesic_distance(&grid[42], &grid[near]);
        let e = extract_support(&m, 1e-6, 2.0 * d);
        assert_eq!(e.len(), 1);
        let atom = e.atoms()[0];
        assert!((atom.weight - 1.0).abs() < 1e-15);
        let (da, db) = (geodesic_distance(&atom.location, &grid[42]), geodesic_distance(&atom.location, &grid[near]));
        assert!((da + db - d).abs() < 1e-9 && da < db);

        let e = extract_support(&m, 0.5, 2.0 * d);
        assert_eq!(e.len(), 1);
        assert_eq!(e.atoms()[0].location, grid[42]);
        assert!(extract_support(&m, 1.0, 1.0).is_empty());
    }

    #[test]
    fn ties_break_by_index() {
        let grid = fibonacci_grid(300);
        let mut w = vec![0.0; 300];
        w[5] = 1.0;
        w[7] = 1.0;
        let m = GridMeasure::new(grid.clone(), w).unwrap();
        let e = extract_support(&m, 0.0, PI);
        assert_eq!(e.len(), 1);
        assert!((e.atoms()[0].weight - 2.0).abs() < 1e-15);
        let m2 = GridMeasure::new(grid.clone(), {
            let mut w = vec![0.0; 300];
            w[5] = 1.0;
            w[7] = -1.0;
            w
        })
        .unwrap();
        let e = extract_support(&m2, 0.0, 1e-3);
        assert_eq!(e.atoms()[0].location, grid[5]);
    }

    #[test]
    fn report_examples() {
        let grid = fibonacci_grid(100);
        let f = on_grid(&grid, &[1, 50, 99], &[1.0, -2.0, 0.5]);
        let y = moments(&f, 5);
        let same = recovery_report(&f, &f, &y);
        assert_eq!((same.support_distance, same.weight_error, same.extra_atoms), (0.0, 0.0, 0));
        assert!(same.residual < 1e-12);

        let empty = recovery_report(&f, &DiracEnsemble::empty(), &y);
        assert_eq!(empty.support_distance, PI);

        let g = on_grid(&grid, &[1, 50, 99], &[1.001, -2.0, 0.5]);
        let r = recovery_report(&f, &g, &y);
        assert!((r.weight_error - 1e-3).abs() < 1e-12);
        assert_eq!(r.support_distance, 0.0);
    }

    #[test]
    fn grid_measure_basics() {
        let grid = fibonacci_grid(4);
        let m = GridMeasure::new(grid.clone(), vec![1.0, 0.0, -2.0, 0.5]).unwrap();
        assert_eq!(m.tv_norm(), 3.5);
        assert_eq!(m.support(), vec![0, 2, 3]);
        assert_eq!(m.to_ensemble().len(), 3);
        assert!(GridMeasure::new(grid, vec![1.0]).is_err());
    }

    #[test]
    fn explicit_matrix_agrees_with_matrix_free_products() {
        let grid = fibonacci_grid(64);
        let sys = MeasurementSystem::new(grid, 3).unwrap();
        let a = sys.matrix();
        let w: Vec<f64> = (0..64).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        for (x, y) in a.mul_vec(&w).iter().zip(sys.apply(&w)) {
            assert!((x - y).abs() < 1e-12);
        }
        let c: Vec<f64> = (0..16).map(|i| i as f64 * 0.1 - 0.7).collect();
        for (x, y) in a.mul_transpose_vec(&c).iter().zip(sys.synthesize(&c)) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(sys.column(5), a.column(5));
    }

    #[test]
    fn solution_is_feasible_and_no_worse_than_truth() {
        let grid = fibonacci_grid(600);
        for seed in 0..4u64 {
            let picks = [(seed as usize * 37) % 600, (seed as usize * 191 + 300) % 600, 599 - seed as usize];
            let f = on_grid(&grid, &picks, &[1.0, -0.5, 0.75]);
            let y = moments(&f, 8);
            let opts = SolverOptions { max_iters: 200_000, ..SolverOptions::default() };
            let (m, info) = tv_min_recover(&y, &grid, &opts).unwrap();
            assert!(info.converged, "{seed} {info:?}");
            assert!(info.residual <= 1e-6 * y.norm());
            assert!(m.tv_norm() <= f.tv_norm() + 1e-5);
            assert!(info.dual_objective <= info.objective + 1e-9);
        }
    }

    #[test]
    fn error_does_not_grow_with_degree() {
        let grid = fibonacci_grid(3000);
        let picks = [100usize, 160, 1500, 1530, 2600];
        let f = on_grid(&grid, &picks, &[1.0, -0.8, 0.6, 1.2, -1.0]);
        let mut last = f64::INFINITY;
        for degree in [8usize, 12, 16, 24] {
            let y = moments(&f, degree);
            let opts = SolverOptions { max_iters: 200_000, ..SolverOptions::default() };
            let (m, _) = tv_min_recover(&y, &grid, &opts).unwrap();
            let rec = extract_support(&m, default_weight_floor(&m), default_cluster_radius(grid.len()));
            let r = recovery_report(&f, &rec, &y);
            let err = r.support_distance + r.weight_error;
            std::println!("N={degree}: {r:?}");
            assert!(err <= last + 1e-6, "N={degree}: {err} > {last}");
            last = err;
        }
        assert!(last < 1e-6);
    }
}
