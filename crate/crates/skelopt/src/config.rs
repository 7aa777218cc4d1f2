//! Run configuration: JSON-backed settings for the whole pipeline with
//! defaults matching the standard elastomer setup.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::ProjectionParams;
use crate::fem::{InterpolationParams, SolverSettings};
use crate::material::Material;
use crate::pbc::{LoadCase, LoadKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 100,
            ny: 100,
            h: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub a10: f64,
    pub a01: f64,
    pub k: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            a10: 34.0,
            a01: 5.8,
            k: 2000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadKindConfig {
    Uniaxial,
    Biaxial,
    Shear,
}

impl From<LoadKindConfig> for LoadKind {
    fn from(k: LoadKindConfig) -> Self {
        match k {
            LoadKindConfig::Uniaxial => LoadKind::Uniaxial,
            LoadKindConfig::Biaxial => LoadKind::Biaxial,
            LoadKindConfig::Shear => LoadKind::Shear,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadConfig {
    pub case: LoadKindConfig,
    pub u_bar: f64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            case: LoadKindConfig::Uniaxial,
            u_bar: 30.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    /// Energy density bound per element.
    pub e_bar: f64,
    /// Volume fraction bound.
    pub v_f: f64,
    /// Whether the local energy constraint is enforced.
    pub energy_constraint: bool,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            e_bar: 1.1,
            v_f: 0.3,
            energy_constraint: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub beta: f64,
    pub p: f64,
    pub rho_min: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        let p = ProjectionParams::default();
        Self {
            beta: p.beta,
            p: p.p,
            rho_min: p.rho_min,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpolationConfig {
    pub x0: f64,
    pub beta1: f64,
    pub pl: f64,
    pub eps: f64,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        let p = InterpolationParams::default();
        Self {
            x0: p.x0,
            beta1: p.beta1,
            pl: p.pl,
            eps: p.eps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub n_load_steps: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub max_cutbacks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            alpha: 1e8,
            n_load_steps: s.n_load_steps,
            newton_tol: s.newton_tol,
            max_newton_iters: s.max_newton_iters,
            max_cutbacks: s.max_cutbacks,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub move_frac: f64,
    /// Relaxation factor for the adaptive p-norm scale.
    pub eta: f64,
    pub c0: f64,
    /// Infinity-norm design-change threshold for termination.
    pub step_tol: f64,
    /// Consecutive feasible small-step iterations required to stop.
    pub stable_iters: usize,
    /// Consecutive rejected designs before aborting.
    pub max_rejects: usize,
    /// Free-density warm-start iterations (0 skips the warm start).
    pub simp_iters: usize,
    /// Components with a lower density multiplier are dropped on export.
    pub prune_rho_bar: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            move_frac: 0.01,
            eta: 0.5,
            c0: 1.0,
            step_tol: 1e-4,
            stable_iters: 5,
            max_rejects: 5,
            simp_iters: 10,
            prune_rho_bar: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub n_components: usize,
    pub degree: usize,
    pub w_min: f64,
    pub w_max: f64,
    pub rho_bar_init: f64,
    /// Lower bound for each component's density variable. Raising it above
    /// zero forbids the optimizer from fading members out, which keeps
    /// slender designs connected at the expense of some design freedom.
    pub rho_bar_min: f64,
    /// Enforce symmetry about both cell midlines.
    pub symmetric: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            n_components: 15,
            degree: 4,
            w_min: 2.0,
            w_max: 3.0,
            rho_bar_init: 0.5,
            rho_bar_min: 0.0,
            symmetric: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub material: MaterialConfig,
    pub load: LoadConfig,
    pub constraints: ConstraintConfig,
    pub projection: ProjectionConfig,
    pub interpolation: InterpolationConfig,
    pub solver: SolverConfig,
    pub optimizer: OptimizerConfig,
    pub design: DesignConfig,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            material: MaterialConfig::default(),
            load: LoadConfig::default(),
            constraints: ConstraintConfig::default(),
            projection: ProjectionConfig::default(),
            interpolation: InterpolationConfig::default(),
            solver: SolverConfig::default(),
            optimizer: OptimizerConfig::default(),
            design: DesignConfig::default(),
            seed: 0,
            output_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid.nx == 0 || self.grid.ny == 0 {
            return Err(invalid("grid.nx/grid.ny", "grid dimensions must be positive"));
        }
        if !(self.grid.h > 0.0) {
            return Err(invalid("grid.h", "element size must be positive"));
        }
        if self.design.symmetric && (self.grid.nx % 2 != 0 || self.grid.ny % 2 != 0) {
            return Err(invalid(
                "grid.nx/grid.ny",
                "symmetric designs need even grid dimensions",
            ));
        }
        if !(self.material.k > 0.0) {
            return Err(invalid("material.k", "bulk modulus must be positive"));
        }
        if self.material.a10 < 0.0 || self.material.a01 < 0.0 {
            return Err(invalid("material.a10/material.a01", "moduli must be non-negative"));
        }
        if !(self.constraints.e_bar > 0.0) {
            return Err(invalid("constraints.e_bar", "energy bound must be positive"));
        }
        if !(self.constraints.v_f > 0.0 && self.constraints.v_f <= 1.0) {
            return Err(invalid("constraints.v_f", "volume fraction must be in (0, 1]"));
        }
        if !(self.projection.beta > 0.0) {
            return Err(invalid("projection.beta", "projection sharpness must be positive"));
        }
        if !(self.projection.p >= 1.0) {
            return Err(invalid("projection.p", "p-norm exponent must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.projection.rho_min) {
            return Err(invalid("projection.rho_min", "density floor must be in [0, 1)"));
        }
        if !(self.solver.alpha > 0.0) {
            return Err(invalid("solver.alpha", "penalty factor must be positive"));
        }
        if self.solver.n_load_steps == 0 {
            return Err(invalid("solver.n_load_steps", "need at least one load step"));
        }
        if !(self.optimizer.move_frac > 0.0 && self.optimizer.move_frac <= 1.0) {
            return Err(invalid("optimizer.move_frac", "move limit must be in (0, 1]"));
        }
        if !(0.0 < self.optimizer.eta && self.optimizer.eta <= 1.0) {
            return Err(invalid("optimizer.eta", "relaxation factor must be in (0, 1]"));
        }
        if self.design.n_components == 0 {
            return Err(invalid("design.n_components", "need at least one component"));
        }
        if self.design.degree < 1 {
            return Err(invalid("design.degree", "curve degree must be at least 1"));
        }
        if !(self.design.w_min > 0.0 && self.design.w_min <= self.design.w_max) {
            return Err(invalid(
                "design.w_min/design.w_max",
                "need 0 < w_min <= w_max",
            ));
        }
        if !(0.0..=1.0).contains(&self.design.rho_bar_init) {
            return Err(invalid("design.rho_bar_init", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.design.rho_bar_min)
            || self.design.rho_bar_min > self.design.rho_bar_init
        {
            return Err(invalid(
                "design.rho_bar_min",
                "must be in [0, 1] and not exceed rho_bar_init",
            ));
        }
        if !self.load.u_bar.is_finite() {
            return Err(invalid("load.u_bar", "stretch must be finite"));
        }
        Ok(())
    }

    pub fn material(&self) -> Material {
        Material::new(self.material.a10, self.material.a01, self.material.k)
    }

    pub fn load_case(&self) -> LoadCase {
        LoadCase {
            kind: self.load.case.into(),
            u_bar: self.load.u_bar,
        }
    }

    pub fn projection_params(&self) -> ProjectionParams {
        ProjectionParams {
            beta: self.projection.beta,
            p: self.projection.p,
            rho_min: self.projection.rho_min,
        }
    }

    pub fn interpolation_params(&self) -> InterpolationParams {
        InterpolationParams {
            x0: self.interpolation.x0,
            beta1: self.interpolation.beta1,
            pl: self.interpolation.pl,
            eps: self.interpolation.eps,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            n_load_steps: self.solver.n_load_steps,
            newton_tol: self.solver.newton_tol,
            max_newton_iters: self.solver.max_newton_iters,
            max_cutbacks: self.solver.max_cutbacks,
        }
    }
}
