//! JSON run configuration. The schema is described in `SCHEMA.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveSpec, DEFAULT_QUADRATURE_ORDER};
use crate::dynamics::{ModelConfig, ModelError, ModelParams, SystemState};
use crate::exprlang::Expr;
use crate::periodic::SolverOptions;
use crate::spatial::{Field, Grid1D};

/// A configuration problem, located by the dotted path of the offending key.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Value(f64),
    Off(Off),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Off {
    #[serde(rename = "off")]
    Off,
}

impl LambdaSpec {
    pub fn value(self) -> Option<f64> {
        match self {
            LambdaSpec::Value(l) => Some(l),
            LambdaSpec::Off(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kappa: f64,
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub epsilon: f64,
    pub period: f64,
    /// Defaults to `10⁻³·period`.
    #[serde(default)]
    pub dt: Option<f64>,
    pub grid: Grid1D,
    #[serde(default)]
    pub curves: CurveSpec,
    pub h: String,
    pub g: String,
    #[serde(default)]
    pub lipschitz_g_u: Option<f64>,
    #[serde(default)]
    pub lipschitz_g_v: Option<f64>,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
}

fn default_truncation() -> f64 {
    10.0
}

fn default_quadrature() -> usize {
    DEFAULT_QUADRATURE_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub anderson_window: usize,
    /// Also run the two-level `F∘T` iteration and compare.
    pub schauder_check: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            tol: 1e-8,
            max_iter: 500,
            anderson_window: 0,
            schauder_check: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Epsilon,
    Lambda,
    Dt,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::Lambda => "lambda",
            SweepParameter::Dt => "dt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            directory: PathBuf::from("out"),
            csv: true,
            json: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

fn model_error(e: ModelError) -> ConfigError {
    match e {
        ModelError::Invalid { key, message } => ConfigError::new(format!("model.{key}"), message),
        ModelError::Curve(c) => ConfigError::new("model.curves", c.to_string()),
    }
}

impl RunConfig {
    pub fn from_json_str(src: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(src);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let key = if path == "." { "<root>".to_string() } else { path };
            ConfigError::new(key, inner.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&src)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(ConfigError::new("solver.tol", format!("must be positive, got {}", s.tol)));
        }
        if s.max_iter == 0 {
            return Err(ConfigError::new("solver.max_iter", "must be at least 1"));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(ConfigError::new("sweep.values", "must not be empty"));
            }
            if let Some(k) = sw.values.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(ConfigError::new(format!("sweep.values[{k}]"), "must be positive"));
            }
            if let Some(k) = (1..sw.values.len()).find(|&k| sw.values[k] >= sw.values[k - 1]) {
                return Err(ConfigError::new(format!("sweep.values[{k}]"), "values must be strictly decreasing"));
            }
        }
        if let Some(init) = &self.initial {
            let n = self.model.grid.n_interior();
            for (key, w) in [("initial.u", &init.u), ("initial.v", &init.v)] {
                if w.len() != n {
                    return Err(ConfigError::new(key, format!("expected {n} values, found {}", w.len())));
                }
                if w.iter().any(|x| !x.is_finite()) {
                    return Err(ConfigError::new(key, "values must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let m = &self.model;
        let parse = |key: &str, src: &str| {
            Expr::parse(src).map_err(|e| ConfigError::new(format!("model.{key}"), e.to_string()))
        };
        let curves = m
            .curves
            .build(m.truncation)
            .map_err(|e| ConfigError::new("model.curves", e.to_string()))?;
        Ok(ModelParams {
            kappa: m.kappa,
            lambda: m.lambda.value(),
            epsilon: m.epsilon,
            period: m.period,
            dt: m.dt.unwrap_or(1e-3 * m.period),
            grid: m.grid,
            curves,
            h: parse("h", &m.h)?,
            g: parse("g", &m.g)?,
            lipschitz_g_u: m.lipschitz_g_u,
            lipschitz_g_v: m.lipschitz_g_v,
            truncation: m.truncation,
            quadrature_order: m.quadrature_order,
        })
    }

    pub fn model(&self) -> Result<ModelConfig, ConfigError> {
        ModelConfig::new(self.params()?).map_err(model_error)
    }

    /// The model with the swept parameter set to `value`.
    pub fn model_at(&self, parameter: SweepParameter, value: f64) -> Result<ModelConfig, ConfigError> {
        let mut p = self.params()?;
        match parameter {
            SweepParameter::Epsilon => p.epsilon = value,
            SweepParameter::Lambda => p.lambda = Some(value),
            SweepParameter::Dt => p.dt = value,
        }
        ModelConfig::new(p).map_err(model_error)
    }

    pub fn initial_state(&self, cfg: &ModelConfig) -> SystemState {
        match &self.initial {
            Some(init) => SystemState {
                t: 0.0,
                u: Field::from_vec(init.u.clone()),
                v: Field::from_vec(init.v.clone()),
            },
            None => SystemState::zero(cfg.grid()),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            anderson_window: self.solver.anderson_window,
            anderson_damping: 1.0,
        }
    }

    /// The reference configuration of [`ModelParams::canonical`].
    pub fn canonical() -> Self {
        RunConfig {
            model: ModelSpec {
                kappa: 1.0,
                lambda: LambdaSpec::Value(1e-2),
                epsilon: 0.05,
                period: 1.0,
                dt: Some(1e-3),
                grid: Grid1D::new(1.0, 128).expect("valid grid"),
                curves: CurveSpec::default(),
                h: "sin(2*pi*t)".into(),
                g: "12 + 6*cos(2*pi*t) + 2*u - 0.5*v".into(),
                lipschitz_g_u: Some(2.0),
                lipschitz_g_v: Some(0.5),
                truncation: 10.0,
                quadrature_order: DEFAULT_QUADRATURE_ORDER,
            },
            initial: None,
            solver: SolverSpec {
                tol: 1e-10,
                ..SolverSpec::default()
            },
            sweep: None,
            output: OutputSpec::default(),
            seed: 0,
        }
    }
}
