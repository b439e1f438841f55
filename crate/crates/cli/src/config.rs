//! Strict TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Test1,
    Test2Smooth,
    Test2Delta,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    #[serde(default)]
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub table1: Table1Config,
    #[serde(default)]
    pub spatial: SpatialConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub nex: usize,
    pub ney: usize,
    pub order: usize,
    /// Gauss points per direction; `order + 2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<usize>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            nex: 1,
            ney: 1,
            order: 10,
            quadrature: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub tau: f64,
    pub t_final: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Lagged,
    #[default]
    Extrapolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub varpi: f64,
    pub nonlinearity: bool,
    pub nonlinear_treatment: Treatment,
    pub delta_center: [f64; 2],
    pub delta_width: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            varpi: 1.0,
            nonlinearity: true,
            nonlinear_treatment: Treatment::default(),
            delta_center: [0.5, 0.5],
            delta_width: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// `u v / ((1 + u)(v + 2))`
    Product,
    /// `u / (kappa_1 + u) + v / (kappa_2 + v)`
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Smooth,
    Delta,
}

/// Constant-coefficient problem on a rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomConfig {
    /// `[x0, x1, y0, y1]`
    pub domain: [f64; 4],
    pub xi: f64,
    pub zeta: f64,
    pub r: f64,
    pub e: [f64; 3],
    pub kappa: [f64; 2],
    pub law: Law,
    pub init: Initial,
}

impl Default for CustomConfig {
    fn default() -> Self {
        Self {
            domain: [0.0, 1.0, 0.0, 1.0],
            xi: 1.0,
            zeta: 1e-3,
            r: 2.0,
            e: [0.6; 3],
            kappa: [1.0, 1.0],
            law: Law::Saturating,
            init: Initial::Smooth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    #[default]
    Subtract,
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub decay: f64,
    pub truncation: usize,
    pub seed: u64,
    pub sign: SignConvention,
    pub shared_paths: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            decay: 2.0,
            truncation: 8,
            seed: 0x5eed,
            sign: SignConvention::default(),
            shared_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub samples: usize,
    /// 0 lets the thread pool pick.
    pub workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub order: usize,
    pub common_random_numbers: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            order: 20,
            common_random_numbers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    pub taus: Vec<f64>,
    pub orders: Vec<usize>,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            taus: (5..=9).map(|k| 0.5f64.powi(k)).collect(),
            orders: vec![10, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub orders: Vec<usize>,
    pub taus: Vec<f64>,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            orders: vec![4, 6, 8, 10, 12],
            taus: vec![1e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub times: Vec<f64>,
    pub grid: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            grid: 121,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

pub const MAX_ORDER: usize = 40;
pub const MAX_ELEMENTS_PER_AXIS: usize = 64;
pub const MAX_TRUNCATION: usize = 64;

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

/// Step index of time `t`, if `t` is a whole number of steps.
pub fn step_of(t: f64, tau: f64) -> Option<usize> {
    let n = (t / tau).round();
    ((n * tau - t).abs() <= 1e-9 * t.abs().max(1.0) && n >= 0.0).then_some(n as usize)
}

fn check_order(key: &str, n: usize) -> Result<(), CliError> {
    if !(2..=MAX_ORDER).contains(&n) {
        return Err(invalid(key, format!("must be in 2..={MAX_ORDER}, got {n}")));
    }
    Ok(())
}

fn check_tau(key: &str, tau: f64, t_final: f64) -> Result<(), CliError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(key, format!("must be positive and finite, got {tau}")));
    }
    if step_of(t_final, tau).is_none() {
        return Err(invalid(
            key,
            format!("time.t_final = {t_final} is not a whole number of steps of {tau}"),
        ));
    }
    Ok(())
}

fn check_times(key: &str, times: &[f64], tau: f64, t_final: f64) -> Result<(), CliError> {
    for &t in times {
        if !(0.0..=t_final * (1.0 + 1e-12)).contains(&t) {
            return Err(invalid(key, format!("time {t} outside [0, {t_final}]")));
        }
        if step_of(t, tau).is_none() {
            return Err(invalid(key, format!("time {t} is not a whole number of steps of {tau}")));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn stochastic(&self) -> bool {
        self.noise.sigma != 0.0
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.mesh;
        for (key, n) in [("mesh.nex", m.nex), ("mesh.ney", m.ney)] {
            if !(1..=MAX_ELEMENTS_PER_AXIS).contains(&n) {
                return Err(invalid(key, format!("must be in 1..={MAX_ELEMENTS_PER_AXIS}, got {n}")));
            }
        }
        check_order("mesh.order", m.order)?;
        if let Some(q) = m.quadrature {
            if q < m.order + 2 {
                return Err(invalid("mesh.quadrature", format!("must be >= order + 2, got {q}")));
            }
        }
        let t = &self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(invalid("time.t_final", format!("must be >= 0, got {}", t.t_final)));
        }
        check_tau("time.tau", t.tau, t.t_final)?;
        check_times("time.snapshot_times", &t.snapshot_times, t.tau, t.t_final)?;

        let md = &self.model;
        if !md.varpi.is_finite() {
            return Err(invalid("model.varpi", "must be finite"));
        }
        if !(md.delta_width > 0.0) {
            return Err(invalid("model.delta_width", format!("must be positive, got {}", md.delta_width)));
        }
        match (self.problem, &self.custom) {
            (Problem::Custom, None) => {
                return Err(invalid("custom", "section required when problem = \"custom\""))
            }
            (Problem::Custom, Some(c)) => {
                let [x0, x1, y0, y1] = c.domain;
                if !(x1 > x0 && y1 > y0) {
                    return Err(invalid("custom.domain", "needs x1 > x0 and y1 > y0"));
                }
                if !(c.zeta > 0.0) {
                    return Err(invalid("custom.zeta", format!("must be positive, got {}", c.zeta)));
                }
                if c.law == Law::Saturating && !(c.kappa[0] > 0.0 && c.kappa[1] > 0.0) {
                    return Err(invalid("custom.kappa", "entries must be positive"));
                }
            }
            (_, Some(_)) => {
                return Err(invalid("custom", "only allowed when problem = \"custom\""))
            }
            _ => {}
        }

        let nz = &self.noise;
        if !(nz.sigma >= 0.0 && nz.sigma.is_finite()) {
            return Err(invalid("noise.sigma", format!("must be >= 0, got {}", nz.sigma)));
        }
        if !(nz.decay > 1.0 && nz.decay.is_finite()) {
            return Err(invalid("noise.decay", format!("must exceed 1 for a trace-class covariance, got {}", nz.decay)));
        }
        if !(1..=MAX_TRUNCATION).contains(&nz.truncation) {
            return Err(invalid("noise.truncation", format!("must be in 1..={MAX_TRUNCATION}, got {}", nz.truncation)));
        }
        if self.ensemble.samples == 0 {
            return Err(invalid("ensemble.samples", "must be at least 1"));
        }
        check_order("reference.order", self.reference.order)?;

        let tb = &self.table1;
        if tb.taus.is_empty() || tb.orders.is_empty() {
            return Err(invalid("table1", "taus and orders must be non-empty"));
        }
        for &n in &tb.orders {
            check_order("table1.orders", n)?;
        }

        let sp = &self.spatial;
        if sp.orders.is_empty() || sp.taus.is_empty() {
            return Err(invalid("spatial", "orders and taus must be non-empty"));
        }
        if sp.orders.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("spatial.orders", "must be strictly ascending"));
        }
        for &n in &sp.orders {
            check_order("spatial.orders", n)?;
        }

        let ev = &self.evolve;
        if ev.times.is_empty() {
            return Err(invalid("evolve.times", "must be non-empty"));
        }
        if ev.grid < 2 {
            return Err(invalid("evolve.grid", format!("must be >= 2, got {}", ev.grid)));
        }
        Ok(())
    }

    /// Checks that the time lists used by `command` fit the step grid.
    pub fn validate_for(&self, command: crate::commands::Command) -> Result<(), CliError> {
        use crate::commands::Command;
        let t = &self.time;
        match command {
            Command::Table1 => {
                for &tau in &self.table1.taus {
                    check_tau("table1.taus", tau, t.t_final)?;
                }
            }
            Command::Spatial => {
                for &tau in &self.spatial.taus {
                    check_tau("spatial.taus", tau, t.t_final)?;
                }
            }
            Command::Evolve => check_times("evolve.times", &self.evolve.times, t.tau, t.t_final)?,
            Command::Run | Command::SpectrumDump => {}
        }
        Ok(())
    }
}
