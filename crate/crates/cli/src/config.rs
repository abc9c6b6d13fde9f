//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sphere_superres::certificate::ValidationOptions;
use sphere_superres::recovery::SolverOptions;

use crate::error::{CliError, CliResult};

/// Weight distribution of generated atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightLaw {
    /// Rademacher ±1; all +1 when the solver is non-negative.
    UnitSigns,
    /// Magnitude uniform on `[a, b]` with a Rademacher sign (positive in non-negative mode).
    Uniform { a: f64, b: f64 },
}

/// Where atoms are placed before the separation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Placement {
    Uniform,
    /// `pairs` pairs of atoms `gap` grid spacings apart; the rest uniform.
    ClusteredPairs { pairs: usize, gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub step_ratio: f64,
    pub nonneg: bool,
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverOptions::default().into()
    }
}

impl From<SolverOptions> for SolverConfig {
    fn from(o: SolverOptions) -> Self {
        Self {
            max_iters: o.max_iters,
            primal_tol: o.primal_tol,
            dual_tol: o.dual_tol,
            step_ratio: o.step_ratio,
            nonneg: o.nonneg,
            polish: o.polish,
        }
    }
}

impl From<SolverConfig> for SolverOptions {
    fn from(c: SolverConfig) -> Self {
        Self {
            max_iters: c.max_iters,
            primal_tol: c.primal_tol,
            dual_tol: c.dual_tol,
            step_ratio: c.step_ratio,
            nonneg: c.nonneg,
            polish: c.polish,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Far-field grid size; `None` means `max(50N², 20000)`.
    pub grid_size: Option<usize>,
    pub sigma: f64,
    pub near_samples: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        let v = ValidationOptions::default();
        Self {
            grid_size: v.grid_size,
            sigma: v.sigma,
            near_samples: v.near_samples,
        }
    }
}

impl From<ValidationConfig> for ValidationOptions {
    fn from(c: ValidationConfig) -> Self {
        Self {
            grid_size: c.grid_size,
            sigma: c.sigma,
            near_samples: c.near_samples,
        }
    }
}

/// Pass/fail limits for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub support_distance: f64,
    pub weight_error: f64,
    /// Relative weight floor for support extraction.
    pub weight_floor: f64,
    /// Cluster radius in grid spacings.
    pub cluster_radius: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            support_distance: 0.0,
            weight_error: 1e-3,
            weight_floor: 1e-4,
            cluster_radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub out_dir: PathBuf,
    pub log_file: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/default"),
            log_file: "run.log".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub degree: usize,
    pub num_atoms: usize,
    pub separation_factor: f64,
    pub weight_law: WeightLaw,
    pub placement: Placement,
    pub grid_size: usize,
    pub snap: bool,
    pub solver: SolverConfig,
    pub validation: ValidationConfig,
    pub thresholds: Thresholds,
    pub paths: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            degree: 40,
            num_atoms: 10,
            separation_factor: 4.0,
            weight_law: WeightLaw::UnitSigns,
            placement: Placement::Uniform,
            grid_size: 80_000,
            snap: true,
            solver: SolverConfig::default(),
            validation: ValidationConfig::default(),
            thresholds: Thresholds::default(),
            paths: OutputPaths::default(),
        }
    }
}

impl ExperimentConfig {
    /// Positive-atom setting without separation: N = s = 12.
    pub fn nonneg_default() -> Self {
        Self {
            degree: 12,
            num_atoms: 12,
            separation_factor: 0.0,
            weight_law: WeightLaw::Uniform { a: 0.5, b: 2.0 },
            placement: Placement::ClusteredPairs { pairs: 3, gap: 1.5 },
            grid_size: 7200,
            solver: SolverConfig {
                nonneg: true,
                max_iters: 100_000,
                ..SolverConfig::default()
            },
            thresholds: Thresholds {
                cluster_radius: 0.5,
                ..Thresholds::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.degree < 2 {
            return bad(format!("degree must be at least 2, got {}", self.degree));
        }
        if self.num_atoms < 1 {
            return bad("num_atoms must be at least 1".into());
        }
        let nu = self.separation_factor;
        if !(nu.is_finite() && (nu > 0.0 || (nu == 0.0 && self.solver.nonneg))) {
            return bad(format!(
                "separation_factor must be positive (zero allowed only with nonneg), got {nu}"
            ));
        }
        let needed = (self.degree + 1) * (self.degree + 1);
        if self.grid_size < needed {
            return bad(format!("grid_size {} below (N+1)^2 = {needed}", self.grid_size));
        }
        if let WeightLaw::Uniform { a, b } = self.weight_law {
            if !(a > 0.0 && b >= a && b.is_finite()) {
                return bad(format!("uniform weight law needs 0 < a <= b, got ({a}, {b})"));
            }
        }
        if let Placement::ClusteredPairs { pairs, gap } = self.placement {
            if 2 * pairs > self.num_atoms || !(gap > 0.0 && gap.is_finite()) {
                return bad("clustered pairs need 2*pairs <= num_atoms and gap > 0".into());
            }
        }
        let t = &self.thresholds;
        if !(t.support_distance >= 0.0 && t.weight_error > 0.0 && t.weight_floor >= 0.0 && t.cluster_radius >= 0.0) {
            return bad("thresholds must be non-negative (weight_error positive)".into());
        }
        SolverOptions::from(self.solver).validate()?;
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        self.solver.into()
    }

    pub fn validation_options(&self) -> ValidationOptions {
        self.validation.into()
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }
}
