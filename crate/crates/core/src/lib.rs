//! Implicit samplers for diffusion bridges.
//!
//! The numerical core is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`); `f64` aliases are provided below. Ground truth comes from
//! jointly Gaussian endpoint models ([`oracle::GaussianBridgeProblem`]) whose
//! posterior mean, bridge marginals and probability flow are known in closed form.
//!
//! ```
//! use bridgekit::oracle::{GaussianBridgeProblem, GaussianOracle};
//! use bridgekit::samplers::{sample, Method, SamplerConfig};
//! use bridgekit::schedule::{GridKind, GridSpec, NoiseSchedule};
//!
//! # fn main() -> bridgekit::Result<()> {
//! let schedule = NoiseSchedule::brownian_bridge(1.0, 1.0)?;
//! let problem = GaussianBridgeProblem::diagonal(0.5, vec![0.0, 0.0], vec![1.0, 0.5])?;
//! let oracle = GaussianOracle::new(problem, schedule);
//! let grid = GridSpec::new(GridKind::UniformWithBootStep, 50).build(&schedule)?;
//! let config = SamplerConfig::new(Method::Dbim2, 0.0, grid, 42)?;
//! let trajectory = sample(&config, &schedule, &oracle, &[1.0, -1.0], 0)?;
//! assert_eq!(trajectory.terminal().len(), 2);
//! # Ok(())
//! # }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bridge;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod oracle;
pub mod samplers;
pub mod scalar;
pub mod schedule;

pub use error::{BridgeError, Result};
pub use scalar::Scalar;

pub type NoiseScheduleF64 = schedule::NoiseSchedule<f64>;
pub type NoiseScheduleF32 = schedule::NoiseSchedule<f32>;
pub type BridgeCoeffsF64 = schedule::BridgeCoeffs<f64>;
pub type TimeGridF64 = schedule::TimeGrid<f64>;
pub type TimeGridF32 = schedule::TimeGrid<f32>;
pub type GaussianBridgeProblemF64 = oracle::GaussianBridgeProblem<f64>;
pub type GaussianBridgeProblemF32 = oracle::GaussianBridgeProblem<f32>;
pub type GaussianOracleF64 = oracle::GaussianOracle<f64>;
pub type SamplerConfigF64 = samplers::SamplerConfig<f64>;
pub type SamplerConfigF32 = samplers::SamplerConfig<f32>;
pub type TrajectoryF64 = samplers::Trajectory<f64>;
pub type TrajectoryF32 = samplers::Trajectory<f32>;
pub type MatrixF64 = linalg::Matrix<f64>;
