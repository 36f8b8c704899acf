//! Generation procedures: implicit bridge sampling (first and high order), the
//! probability-flow and reverse-SDE baselines, and deterministic encoding.

mod baseline;
mod codec;
mod dbim;
mod drift;

use serde::{Deserialize, Serialize};

use crate::error::{BridgeError, Result};
use crate::noise::NoiseStream;
use crate::oracle::DataPredictor;
use crate::scalar::Scalar;
use crate::schedule::{NoiseSchedule, TimeGrid};

pub use baseline::run_baseline;
pub use codec::{decode, encode, slerp_interpolate};
pub use dbim::{boot_step, dbim_step, exp_integrator_phis, run_dbim1, run_dbim_high, taylor_integral};
pub use drift::{drift_dbim, drift_pfode, drift_reverse_sde};

/// Sampling method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dbim1,
    Dbim2,
    Dbim3,
    PfOdeEuler,
    PfOdeHeun,
    SdeEulerMaruyama,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Dbim1,
        Method::Dbim2,
        Method::Dbim3,
        Method::PfOdeEuler,
        Method::PfOdeHeun,
        Method::SdeEulerMaruyama,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dbim1 => "dbim1",
            Method::Dbim2 => "dbim2",
            Method::Dbim3 => "dbim3",
            Method::PfOdeEuler => "pf_ode_euler",
            Method::PfOdeHeun => "pf_ode_heun",
            Method::SdeEulerMaruyama => "sde_euler_maruyama",
        }
    }

    /// Fewest steps the method accepts.
    pub fn min_steps(self) -> usize {
        match self {
            Method::Dbim2 => 2,
            Method::Dbim3 => 3,
            _ => 1,
        }
    }

    pub fn uses_eta(self) -> bool {
        self == Method::Dbim1
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig<T> {
    pub method: Method,
    /// Stochasticity in `[0, 1]`; only read by [`Method::Dbim1`].
    pub eta: T,
    pub grid: TimeGrid<T>,
    pub seed: u64,
}

impl<T: Scalar> SamplerConfig<T> {
    /// Validated configuration. Logs a warning when `eta` is set for a method that ignores it.
    pub fn new(method: Method, eta: T, grid: TimeGrid<T>, seed: u64) -> Result<Self> {
        let cfg = Self {
            method,
            eta,
            grid,
            seed,
        };
        cfg.check()?;
        if !method.uses_eta() && eta != T::zero() {
            log::warn!("eta = {eta} is ignored by {method}");
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !(self.eta >= T::zero() && self.eta <= T::one()) {
            return Err(BridgeError::InvalidConfig(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        let n = self.grid.steps();
        if n < self.method.min_steps() {
            return Err(BridgeError::InvalidConfig(format!(
                "{} needs at least {} steps, got {n}",
                self.method,
                self.method.min_steps()
            )));
        }
        Ok(())
    }

    pub fn validate(&self, schedule: &NoiseSchedule<T>) -> Result<()> {
        self.check()?;
        self.grid.check_against(schedule)
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }
}

/// States from `t_N` (the condition `x_T`) down to `t_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<(T, Vec<T>)>,
    pub boot_noise: Vec<T>,
    pub predictor_calls: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn terminal(&self) -> &[T] {
        &self.states[self.states.len() - 1].1
    }

    pub fn terminal_time(&self) -> T {
        self.states[self.states.len() - 1].0
    }

    /// State at grid index `i` (`0` is `t_0`).
    pub fn at_index(&self, i: usize) -> &[T] {
        &self.states[self.states.len() - 1 - i].1
    }
}

/// Draws the booting noise of `trajectory` and runs the configured method.
pub fn sample<T: Scalar, P: DataPredictor<T>>(
    config: &SamplerConfig<T>,
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x_t: &[T],
    trajectory: u64,
) -> Result<Trajectory<T>> {
    let boot = NoiseStream::new(config.seed).boot(trajectory, x_t.len());
    sample_from_boot(config, schedule, predictor, x_t, boot, trajectory)
}

/// Runs the configured method from a given booting noise. Per-step noise (if any)
/// is still drawn from `(config.seed, trajectory)`.
pub fn sample_from_boot<T: Scalar, P: DataPredictor<T>>(
    config: &SamplerConfig<T>,
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x_t: &[T],
    boot_noise: Vec<T>,
    trajectory: u64,
) -> Result<Trajectory<T>> {
    config.validate(schedule)?;
    match config.method {
        Method::Dbim1 => run_dbim1(config, schedule, predictor, x_t, boot_noise, trajectory),
        Method::Dbim2 => run_dbim_high(2, &config.grid, schedule, predictor, x_t, boot_noise),
        Method::Dbim3 => run_dbim_high(3, &config.grid, schedule, predictor, x_t, boot_noise),
        Method::PfOdeEuler | Method::PfOdeHeun | Method::SdeEulerMaruyama => {
            run_baseline(config, schedule, predictor, x_t, boot_noise, trajectory)
        }
    }
}
