use super::dbim::boot_step;
use super::drift::{drift_pfode, drift_reverse_sde};
use super::{Method, SamplerConfig, Trajectory};
use crate::bridge::check_dims;
use crate::error::{BridgeError, Result};
use crate::noise::NoiseStream;
use crate::oracle::DataPredictor;
use crate::scalar::{vecops, Scalar};
use crate::schedule::NoiseSchedule;

/// Explicit Euler / Heun on the probability-flow ODE, or Euler-Maruyama on the
/// reverse SDE. All three leave `t = T` through the boot step.
pub fn run_baseline<T: Scalar, P: DataPredictor<T>>(
    config: &SamplerConfig<T>,
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x_t: &[T],
    boot_noise: Vec<T>,
    trajectory: u64,
) -> Result<Trajectory<T>> {
    let method = config.method;
    if !matches!(
        method,
        Method::PfOdeEuler | Method::PfOdeHeun | Method::SdeEulerMaruyama
    ) {
        return Err(BridgeError::InvalidConfig(format!("{method} is not a baseline method")));
    }
    let grid = &config.grid;
    let n = grid.steps();
    let d = x_t.len();
    check_dims(predictor.dim(), &[x_t, &boot_noise])?;
    let noise = NoiseStream::new(config.seed);

    let mut states = Vec::with_capacity(n + 1);
    states.push((grid.t_max(), x_t.to_vec()));
    let mut x = boot_step(schedule, predictor, x_t, grid.t(n - 1), &boot_noise)?;
    let mut calls = 1;
    for i in (0..n - 1).rev() {
        states.push((grid.t(i + 1), x.clone()));
        let (t_from, t_to) = (grid.t(i + 1), grid.t(i));
        let dt = t_from - t_to;
        x = match method {
            Method::PfOdeEuler => {
                calls += 1;
                let v = drift_pfode(schedule, predictor, &x, t_from, x_t)?;
                vecops::lincomb(T::one(), &x, -dt, &v)
            }
            Method::PfOdeHeun => {
                calls += 2;
                let v1 = drift_pfode(schedule, predictor, &x, t_from, x_t)?;
                let guess = vecops::lincomb(T::one(), &x, -dt, &v1);
                let v2 = drift_pfode(schedule, predictor, &guess, t_to, x_t)?;
                let half = T::lit(0.5) * dt;
                vecops::lincomb3(T::one(), &x, -half, &v1, -half, &v2)
            }
            _ => {
                calls += 1;
                let v = drift_reverse_sde(schedule, predictor, &x, t_from, x_t)?;
                let eps = noise.gaussian::<T>(trajectory, i as u32, d);
                let scale = (schedule.g2(t_from) * dt).sqrt();
                vecops::lincomb3(T::one(), &x, -dt, &v, scale, &eps)
            }
        };
    }
    states.push((grid.t(0), x));
    Ok(Trajectory {
        states,
        boot_noise,
        predictor_calls: calls,
    })
}
