use crate::bridge::check_dims;
use crate::error::{BridgeError, Result};
use crate::oracle::{score_from_predictor, DataPredictor};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

fn require_open<T: Scalar>(c: T, t: T) -> Result<()> {
    if c > T::zero() {
        Ok(())
    } else {
        Err(BridgeError::DegenerateCoefficient {
            what: "c_t",
            t: t.to_f64_lossy(),
        })
    }
}

/// Velocity of the implicit sampler's continuous limit, written in
/// `(x, x_T, x_hat)` with closed-form coefficients.
pub fn drift_dbim<T: Scalar, P: DataPredictor<T>>(
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x: &[T],
    t: T,
    x_t: &[T],
) -> Result<Vec<T>> {
    check_dims(x.len(), &[x_t])?;
    let k = schedule.coeffs(t)?;
    require_open(k.c, t)?;
    let x_hat = predictor.predict(x, t, x_t)?;
    let g2 = schedule.g2(t);
    let w = g2 / (T::lit(2.0) * k.c * k.c);
    let dlog_c = schedule.f(t) + g2 / schedule.sigma2(t) - w;
    let ca = w * k.a;
    let cb = -w * k.b;
    Ok((0..x.len())
        .map(|i| dlog_c * x[i] + ca * x_t[i] + cb * x_hat[i])
        .collect())
}

/// `grad_x log q(x_T | x_t) = -a_t ((alpha_T / alpha_t) x - x_T) / c_t^2`
fn h_term<T: Scalar>(schedule: &NoiseSchedule<T>, x: &[T], t: T, x_t: &[T]) -> Result<Vec<T>> {
    let k = schedule.coeffs(t)?;
    require_open(k.c, t)?;
    let ratio = (schedule.log_alpha(schedule.horizon()) - schedule.log_alpha(t)).exp();
    let s = -k.a / (k.c * k.c);
    Ok((0..x.len()).map(|i| s * (ratio * x[i] - x_t[i])).collect())
}

/// Probability-flow drift `f x - g^2 (score / 2 - h)`.
pub fn drift_pfode<T: Scalar, P: DataPredictor<T>>(
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x: &[T],
    t: T,
    x_t: &[T],
) -> Result<Vec<T>> {
    assemble(schedule, predictor, x, t, x_t, T::lit(0.5))
}

/// Reverse-time SDE drift `f x - g^2 (score - h)`; the diffusion is `g(t)`.
pub fn drift_reverse_sde<T: Scalar, P: DataPredictor<T>>(
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x: &[T],
    t: T,
    x_t: &[T],
) -> Result<Vec<T>> {
    assemble(schedule, predictor, x, t, x_t, T::one())
}

fn assemble<T: Scalar, P: DataPredictor<T>>(
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x: &[T],
    t: T,
    x_t: &[T],
    score_weight: T,
) -> Result<Vec<T>> {
    check_dims(x.len(), &[x_t])?;
    let h = h_term(schedule, x, t, x_t)?;
    let x_hat = predictor.predict(x, t, x_t)?;
    let score = score_from_predictor(schedule, x, t, x_t, &x_hat)?;
    let f = schedule.f(t);
    let g2 = schedule.g2(t);
    Ok((0..x.len())
        .map(|i| f * x[i] - g2 * (score_weight * score[i] - h[i]))
        .collect())
}
