//! Run configuration: a flat `key = value` file, then `--set` overrides,
//! then dedicated flags. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use dgsem_tau::{FitWindow, Flavor, GasParameters64, MapMethod, Orders, SolverOptions, TauNorm};
use serde::Deserialize;

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "DGSEM_TAU_OUTPUT_DIR";

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    /// Reference orders of the converged solution.
    pub p1: usize,
    pub p2: usize,

    pub gamma: f64,
    pub prandtl: f64,
    pub reynolds: f64,
    pub mach: f64,
    pub mu: f64,

    pub tolerance: f64,
    pub max_iterations: usize,
    pub cfl: f64,
    pub history_stride: usize,

    pub n_min: usize,
    pub n_max: usize,
    pub flavor: String,
    pub map_method: String,
    pub norm: String,
    /// Drop `N = 1` from regressions once the reference order reaches this; 0 keeps every point.
    pub fit_drop_first_from: usize,

    pub tau_max: f64,
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub thresholds_per_decade: usize,
    pub resolve: bool,

    /// Element for `map`; defaults to the one containing the Gaussian peak.
    pub element: Option<usize>,
    pub source_points_per_side: usize,
    pub source_step: f64,
    pub source_tolerance: f64,

    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gas = GasParameters64::default();
        let solver = SolverOptions::<f64>::default();
        Self {
            nx: 4,
            ny: 4,
            p1: 5,
            p2: 5,
            gamma: gas.gamma,
            prandtl: gas.prandtl,
            reynolds: gas.reynolds,
            mach: gas.mach,
            mu: gas.mu,
            tolerance: solver.tolerance,
            max_iterations: solver.max_iterations,
            cfl: solver.cfl,
            history_stride: solver.history_stride,
            n_min: 1,
            n_max: 10,
            flavor: "non-isolated".into(),
            map_method: "high-order".into(),
            norm: "mass-weighted-max".into(),
            fit_drop_first_from: 4,
            tau_max: 1e-4,
            threshold_min: 1e-7,
            threshold_max: 1e-1,
            thresholds_per_decade: 4,
            resolve: true,
            element: None,
            source_points_per_side: 10,
            source_step: 1e-3,
            source_tolerance: 1e-6,
            output_dir: PathBuf::from("output"),
            jobs: None,
        }
    }
}

/// Parses `key=value`; the value is read as TOML and falls back to a bare string.
fn parse_assignment(s: &str) -> Result<(String, toml::Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{s}` is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

impl RunConfig {
    /// `file`, then `overrides` in order, then the output-directory
    /// environment variable unless `output_dir` was overridden explicitly.
    pub fn load(
        file: Option<&Path>,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                .parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            None => toml::Table::new(),
        };
        let explicit_dir = overrides.iter().any(|(k, _)| k == "output_dir");
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        if !explicit_dir {
            if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
                table.insert("output_dir".into(), toml::Value::String(dir));
            }
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_overrides(pairs: &[String]) -> Result<Vec<(String, toml::Value)>, CliError> {
        pairs.iter().map(|s| parse_assignment(s)).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.nx == 0 || self.ny == 0 {
            return bad(format!("mesh {}x{} is empty", self.nx, self.ny));
        }
        if self.p1 < 1 || self.p2 < 1 {
            return bad(format!(
                "reference orders ({}, {}) must be at least 1",
                self.p1, self.p2
            ));
        }
        if self.n_min < 1 || self.n_min > self.n_max {
            return bad(format!(
                "order range {}..={} is empty",
                self.n_min, self.n_max
            ));
        }
        if !(self.threshold_min > 0.0 && self.threshold_min < self.threshold_max) {
            return bad("thresholds need 0 < threshold_min < threshold_max".into());
        }
        if self.thresholds_per_decade == 0 || !(self.tau_max > 0.0) {
            return bad("tau_max and thresholds_per_decade must be positive".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        self.gas()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.solver()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.flavor()?;
        self.map_method()?;
        self.norm()?;
        Ok(())
    }

    pub fn gas(&self) -> GasParameters64 {
        GasParameters64 {
            gamma: self.gamma,
            prandtl: self.prandtl,
            reynolds: self.reynolds,
            mach: self.mach,
            mu: self.mu,
        }
    }

    pub fn solver(&self) -> SolverOptions<f64> {
        SolverOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            cfl: self.cfl,
            history_stride: self.history_stride,
        }
    }

    pub fn reference_orders(&self) -> Orders {
        Orders::new(self.p1, self.p2)
    }

    pub fn flavor(&self) -> Result<Flavor, CliError> {
        self.flavor.parse().map_err(CliError::Config)
    }

    pub fn map_method(&self) -> Result<MapMethod, CliError> {
        match self.map_method.parse().map_err(CliError::Config)? {
            m @ (MapMethod::HighOrder | MapMethod::LowOrder) => Ok(m),
            other => Err(CliError::Config(format!(
                "map_method `{}` cannot drive adaptation; use high-order or low-order",
                other.as_str()
            ))),
        }
    }

    pub fn norm(&self) -> Result<TauNorm, CliError> {
        self.norm.parse().map_err(CliError::Config)
    }

    pub fn fit_window(&self) -> FitWindow {
        match self.fit_drop_first_from {
            0 => FitWindow::All,
            p => FitWindow::DropFirstFrom(p),
        }
    }
}
