//! JSON run configuration and its validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{BridgeError, Result};
use crate::linalg::Matrix;
use crate::oracle::{GaussianBridgeProblem, GaussianOracle};
use crate::samplers::{Method, SamplerConfig};
use crate::schedule::{
    GridKind, GridSpec, NoiseSchedule, TimeGrid, DEFAULT_BOOT_GAP, DEFAULT_EDM_KAPPA, DEFAULT_T_MIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Sample,
    Marginals,
    DriftCheck,
    Convergence,
    Roundtrip,
    Interpolate,
    Diversity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sample => "sample",
            Experiment::Marginals => "marginals",
            Experiment::DriftCheck => "drift-check",
            Experiment::Convergence => "convergence",
            Experiment::Roundtrip => "roundtrip",
            Experiment::Interpolate => "interpolate",
            Experiment::Diversity => "diversity",
        }
    }
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Vp {
        beta_min: f64,
        beta_max: f64,
        #[serde(default = "default_horizon")]
        horizon: f64,
    },
    Ve {
        sigma_min: f64,
        sigma_max: f64,
        #[serde(default = "default_horizon")]
        horizon: f64,
    },
    BrownianBridge {
        beta: f64,
        #[serde(default = "default_horizon")]
        horizon: f64,
    },
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule<f64>> {
        match *self {
            ScheduleSpec::Vp {
                beta_min,
                beta_max,
                horizon,
            } => NoiseSchedule::vp(beta_min, beta_max, horizon),
            ScheduleSpec::Ve {
                sigma_min,
                sigma_max,
                horizon,
            } => NoiseSchedule::ve(sigma_min, sigma_max, horizon),
            ScheduleSpec::BrownianBridge { beta, horizon } => NoiseSchedule::brownian_bridge(beta, horizon),
        }
    }

    fn horizon(&self) -> f64 {
        match *self {
            ScheduleSpec::Vp { horizon, .. }
            | ScheduleSpec::Ve { horizon, .. }
            | ScheduleSpec::BrownianBridge { horizon, .. } => horizon,
        }
    }
}

/// A scalar (times identity), a diagonal, or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn build(&self, d: usize, name: &str) -> Result<Matrix<f64>> {
        match self {
            MatrixSpec::Scalar(v) => Ok(Matrix::diagonal(&vec![*v; d])),
            MatrixSpec::Diagonal(v) => {
                if v.len() != d {
                    return Err(BridgeError::InvalidProblem(format!(
                        "{name} diagonal has length {}, expected {d}",
                        v.len()
                    )));
                }
                Ok(Matrix::diagonal(v))
            }
            MatrixSpec::Full(rows) => {
                let m = Matrix::from_rows(rows)?;
                if m.rows() != d || m.cols() != d {
                    return Err(BridgeError::InvalidProblem(format!(
                        "{name} is {}x{}, expected {d}x{d}",
                        m.rows(),
                        m.cols()
                    )));
                }
                Ok(m)
            }
        }
    }
}

/// `x_0 | x_T ~ N(gain x_T + offset, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dim: usize,
    #[serde(default = "default_gain")]
    pub gain: MatrixSpec,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    pub cov: MatrixSpec,
}

fn default_gain() -> MatrixSpec {
    MatrixSpec::Scalar(0.0)
}

impl ProblemSpec {
    pub fn build(&self) -> Result<GaussianBridgeProblem<f64>> {
        let d = self.dim;
        let offset = self.offset.clone().unwrap_or_else(|| vec![0.0; d]);
        if offset.len() != d {
            return Err(BridgeError::InvalidProblem(format!(
                "offset has length {}, expected {d}",
                offset.len()
            )));
        }
        if d == 0 {
            return Err(BridgeError::InvalidProblem("dim must be >= 1".into()));
        }
        GaussianBridgeProblem::new(self.gain.build(d, "gain")?, offset, self.cov.build(d, "cov")?)
    }
}

fn default_steps() -> usize {
    10
}
fn default_t_min() -> f64 {
    DEFAULT_T_MIN
}
fn default_boot_gap() -> f64 {
    DEFAULT_BOOT_GAP
}
fn default_kappa() -> f64 {
    DEFAULT_EDM_KAPPA
}
fn default_grid_kind() -> GridKind {
    GridKind::UniformWithBootStep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_kind")]
    pub kind: GridKind,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    /// Defaults to the schedule horizon.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_boot_gap")]
    pub boot_gap: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            kind: default_grid_kind(),
            steps: default_steps(),
            t_min: default_t_min(),
            t_max: None,
            boot_gap: default_boot_gap(),
            kappa: default_kappa(),
        }
    }
}

fn default_method() -> Method {
    Method::Dbim1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub eta: f64,
    /// Methods compared by `convergence`; defaults to `[method]`.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    /// Step counts swept by `convergence` and `diversity`; defaults to `[grid.steps]`.
    #[serde(default)]
    pub steps_sweep: Option<Vec<usize>>,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            method: default_method(),
            eta: 0.0,
            methods: None,
            steps_sweep: None,
        }
    }
}

fn default_count() -> usize {
    1
}
fn default_points() -> usize {
    9
}
fn default_drift_points() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleSpec,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub sampler: SamplerSpec,
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub trajectories: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Fixed condition `x_T`; when absent, conditions are drawn from `N(0, I)`.
    #[serde(default)]
    pub condition: Option<Vec<f64>>,
    /// Number of conditions (diversity only).
    #[serde(default = "default_count")]
    pub conditions: usize,
    /// Fixed data point for `marginals`; when absent it is drawn from the problem.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub interpolation_points: usize,
    #[serde(default = "default_drift_points")]
    pub drift_points: usize,
}

/// A configuration with every section turned into library objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub schedule: NoiseSchedule<f64>,
    pub problem: GaussianBridgeProblem<f64>,
    pub oracle: GaussianOracle<f64>,
    pub grid_spec: GridSpec<f64>,
    pub methods: Vec<Method>,
    pub sweep: Vec<usize>,
}

impl Resolved {
    pub fn grid(&self, steps: usize) -> Result<TimeGrid<f64>> {
        self.grid_spec.with_steps(steps).build(&self.schedule)
    }

    pub fn sampler(&self, method: Method, steps: usize) -> Result<SamplerConfig<f64>> {
        let eta = if method.uses_eta() {
            self.config.sampler.eta
        } else {
            0.0
        };
        SamplerConfig::new(method, eta, self.grid(steps)?, self.config.seed)
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }
}

fn invalid(msg: impl Into<String>) -> BridgeError {
    BridgeError::InvalidConfig(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Builds and checks everything the experiment will touch.
    pub fn resolve(mut self) -> Result<Resolved> {
        let schedule = self.schedule.build()?;
        let problem = self.problem.build()?;
        let d = problem.dim();
        if self.grid.t_max.is_none() {
            self.grid.t_max = Some(self.schedule.horizon());
        }
        let grid_spec = GridSpec {
            kind: self.grid.kind,
            steps: self.grid.steps,
            t_min: self.grid.t_min,
            t_max: self.grid.t_max.unwrap(),
            boot_gap: self.grid.boot_gap,
            kappa: self.grid.kappa,
        };
        let methods = self
            .sampler
            .methods
            .clone()
            .unwrap_or_else(|| vec![self.sampler.method]);
        if methods.is_empty() {
            return Err(invalid("sampler.methods is empty"));
        }
        let sweep = self
            .sampler
            .steps_sweep
            .clone()
            .unwrap_or_else(|| vec![self.grid.steps]);
        if sweep.is_empty() {
            return Err(invalid("sampler.steps_sweep is empty"));
        }
        if !(0.0..=1.0).contains(&self.sampler.eta) {
            return Err(invalid(format!(
                "sampler.eta must lie in [0, 1], got {}",
                self.sampler.eta
            )));
        }
        if self.trajectories == 0 {
            return Err(invalid("trajectories must be >= 1"));
        }
        if self.conditions == 0 {
            return Err(invalid("conditions must be >= 1"));
        }
        for (name, v) in [("condition", &self.condition), ("x0", &self.x0)] {
            if let Some(v) = v {
                if v.len() != d {
                    return Err(invalid(format!("{name} has length {}, expected {d}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(format!("{name} has non-finite entries")));
                }
            }
        }
        let oracle = GaussianOracle::new(problem.clone(), schedule);
        let resolved = Resolved {
            config: self,
            schedule,
            problem,
            oracle,
            grid_spec,
            methods,
            sweep,
        };
        resolved.check_experiment()?;
        Ok(resolved)
    }
}

impl Resolved {
    fn check_experiment(&self) -> Result<()> {
        let cfg = &self.config;
        let steps_used: Vec<usize> = match cfg.experiment {
            Experiment::Convergence => {
                if self.sweep.len() < 3 {
                    return Err(invalid("convergence needs at least 3 entries in sampler.steps_sweep"));
                }
                self.sweep.clone()
            }
            Experiment::Diversity => {
                if cfg.trajectories < 2 {
                    return Err(invalid("diversity needs trajectories >= 2 (samples per condition)"));
                }
                self.sweep.clone()
            }
            Experiment::Marginals => {
                if cfg.trajectories < 2 {
                    return Err(invalid("marginals needs trajectories >= 2"));
                }
                vec![cfg.grid.steps]
            }
            Experiment::Interpolate => {
                if cfg.interpolation_points < 2 {
                    return Err(invalid("interpolation_points must be >= 2"));
                }
                vec![cfg.grid.steps]
            }
            Experiment::DriftCheck => {
                if cfg.drift_points == 0 {
                    return Err(invalid("drift_points must be >= 1"));
                }
                vec![]
            }
            Experiment::Sample | Experiment::Roundtrip => vec![cfg.grid.steps],
        };
        let methods: Vec<Method> = match cfg.experiment {
            Experiment::Convergence => self.methods.clone(),
            Experiment::Sample => vec![cfg.sampler.method],
            Experiment::Diversity | Experiment::Marginals | Experiment::Roundtrip | Experiment::Interpolate => {
                vec![Method::Dbim1]
            }
            Experiment::DriftCheck => vec![],
        };
        for &n in &steps_used {
            for &m in &methods {
                self.sampler(m, n)?.validate(&self.schedule)?;
            }
        }
        Ok(())
    }
}
