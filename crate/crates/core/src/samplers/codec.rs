use super::dbim::run_dbim1;
use super::{Method, SamplerConfig};
use crate::bridge::check_dims;
use crate::error::{BridgeError, Result};
use crate::linalg::Matrix;
use crate::oracle::DataPredictor;
use crate::scalar::{vecops, Scalar};
use crate::schedule::{NoiseSchedule, TimeGrid};

const MAX_NEWTON: usize = 40;

/// Deterministic (`eta = 0`) map from booting noise to the state at `t_0`.
pub fn decode<T: Scalar, P: DataPredictor<T>>(
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x_t: &[T],
    grid: &TimeGrid<T>,
    boot_noise: &[T],
) -> Result<Vec<T>> {
    let config = SamplerConfig {
        method: Method::Dbim1,
        eta: T::zero(),
        grid: grid.clone(),
        seed: 0,
    };
    config.validate(schedule)?;
    let traj = run_dbim1(&config, schedule, predictor, x_t, boot_noise.to_vec(), 0)?;
    Ok(traj.terminal().to_vec())
}

/// Inverse of [`decode`] on the same grid: recovers the booting noise of `x0`.
///
/// Each deterministic step `x_n = A x_{n+1} + B x_hat(x_{n+1}) + C x_T` is solved
/// for `x_{n+1}` by Newton iteration with a finite-difference Jacobian, which is
/// exact for affine predictors.
pub fn encode<T: Scalar, P: DataPredictor<T>>(
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x0: &[T],
    x_t: &[T],
    grid: &TimeGrid<T>,
) -> Result<Vec<T>> {
    check_dims(predictor.dim(), &[x0, x_t])?;
    grid.check_against(schedule)?;
    let n = grid.steps();
    let tol = T::lit(1e-8).max(T::lit(1000.0) * T::epsilon());
    let mut x = x0.to_vec();
    for i in 0..n - 1 {
        let kn = schedule.coeffs(grid.t(i))?;
        let k1 = schedule.coeffs(grid.t(i + 1))?;
        if !(k1.c > T::zero()) {
            return Err(BridgeError::DegenerateCoefficient {
                what: "c_t",
                t: grid.t(i + 1).to_f64_lossy(),
            });
        }
        let ratio = kn.c / k1.c;
        let coef_hat = kn.b - ratio * k1.b;
        let coef_end = kn.a - ratio * k1.a;
        let t_next = grid.t(i + 1);
        let target = x.clone();
        let residual = |y: &[T]| -> Result<Vec<T>> {
            let x_hat = predictor.predict(y, t_next, x_t)?;
            Ok((0..y.len())
                .map(|j| ratio * y[j] + coef_hat * x_hat[j] + coef_end * x_t[j] - target[j])
                .collect())
        };
        x = newton(residual, x, i, tol)?;
    }
    let k = schedule.coeffs(grid.t(n - 1))?;
    if !(k.c > T::zero()) {
        return Err(BridgeError::DegenerateCoefficient {
            what: "c_t",
            t: grid.t(n - 1).to_f64_lossy(),
        });
    }
    let x_hat = predictor.predict(x_t, schedule.horizon(), x_t)?;
    Ok((0..x.len())
        .map(|j| (x[j] - k.a * x_t[j] - k.b * x_hat[j]) / k.c)
        .collect())
}

fn newton<T: Scalar>(residual: impl Fn(&[T]) -> Result<Vec<T>>, start: Vec<T>, step: usize, tol: T) -> Result<Vec<T>> {
    let d = start.len();
    let mut y = start;
    let mut r = residual(&y)?;
    let scale = T::one() + vecops::norm(&y);
    let floor = T::lit(8.0) * T::epsilon() * scale;
    for _ in 0..MAX_NEWTON {
        let rn = vecops::norm(&r);
        if rn <= floor {
            break;
        }
        let mut jac = Matrix::zeros(d, d);
        for j in 0..d {
            let delta = T::one().max(y[j].abs());
            let mut probe = y.clone();
            probe[j] = probe[j] + delta;
            let rp = residual(&probe)?;
            for k in 0..d {
                jac[(k, j)] = (rp[k] - r[k]) / delta;
            }
        }
        let Ok(dy) = jac.solve(&r) else { break };
        let cand: Vec<T> = vecops::sub(&y, &dy);
        let rc = residual(&cand)?;
        if !(vecops::norm(&rc) < rn) {
            break;
        }
        y = cand;
        r = rc;
    }
    let rel = vecops::norm(&r) / scale;
    if !(rel <= tol) {
        return Err(BridgeError::EncodingInconsistent {
            residual: rel.to_f64_lossy(),
            step,
        });
    }
    Ok(y)
}

/// Spherical linear interpolation; the endpoints are returned unchanged and
/// nearly parallel inputs fall back to linear interpolation.
pub fn slerp_interpolate<T: Scalar>(eps_a: &[T], eps_b: &[T], w: T) -> Result<Vec<T>> {
    check_dims(eps_a.len(), &[eps_b])?;
    if !(w >= T::zero() && w <= T::one()) {
        return Err(BridgeError::InvalidArgument(format!(
            "weight must lie in [0, 1], got {w}"
        )));
    }
    let na = vecops::norm(eps_a);
    let nb = vecops::norm(eps_b);
    if na == T::zero() || nb == T::zero() {
        return Err(BridgeError::ZeroVector);
    }
    if w == T::zero() {
        return Ok(eps_a.to_vec());
    }
    if w == T::one() {
        return Ok(eps_b.to_vec());
    }
    let cos = (vecops::dot(eps_a, eps_b) / (na * nb)).max(-T::one()).min(T::one());
    let theta = cos.acos();
    let s = theta.sin();
    if s < T::lit(1e-6) {
        return Ok(vecops::lincomb(T::one() - w, eps_a, w, eps_b));
    }
    let wa = ((T::one() - w) * theta).sin() / s;
    let wb = (w * theta).sin() / s;
    Ok(vecops::lincomb(wa, eps_a, wb, eps_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let a = [1.0f64, 0.0];
        let b = [0.0f64, 1.0];
        assert_eq!(slerp_interpolate(&a, &b, 0.0).unwrap(), a.to_vec());
        assert_eq!(slerp_interpolate(&a, &b, 1.0).unwrap(), b.to_vec());
        let mid = slerp_interpolate(&a, &b, 0.5).unwrap();
        assert!((vecops::norm(&mid) - 1.0).abs() < 1e-15);
        assert!((mid[0] - mid[1]).abs() < 1e-15);
        assert_eq!(slerp_interpolate(&a, &[0.0, 0.0], 0.5), Err(BridgeError::ZeroVector));
    }

    #[test]
    fn slerp_parallel_falls_back() {
        let v = slerp_interpolate(&[1.0f64, 1.0], &[2.0, 2.0], 0.5).unwrap();
        assert!((v[0] - 1.5).abs() < 1e-15);
    }
}
