use super::{SamplerConfig, Trajectory};
use crate::bridge::{check_dims, residual_weight, VarianceParam};
use crate::error::{BridgeError, Result};
use crate::noise::NoiseStream;
use crate::oracle::DataPredictor;
use crate::scalar::{vecops, Scalar};
use crate::schedule::{BridgeCoeffs, NoiseSchedule, TimeGrid};

/// Leaves the pinned endpoint: `a x_T + b x_theta(x_T, T, x_T) + c eps` at `t_target`.
pub fn boot_step<T: Scalar, P: DataPredictor<T>>(
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x_t: &[T],
    t_target: T,
    eps: &[T],
) -> Result<Vec<T>> {
    let x_hat = predictor.predict(x_t, schedule.horizon(), x_t)?;
    boot_from_prediction(schedule, x_t, &x_hat, t_target, eps)
}

fn boot_from_prediction<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    x_t: &[T],
    x_hat: &[T],
    t_target: T,
    eps: &[T],
) -> Result<Vec<T>> {
    check_dims(x_t.len(), &[x_hat, eps])?;
    if !(t_target < schedule.horizon()) {
        return Err(BridgeError::InvalidArgument(format!(
            "boot target {t_target} must precede the horizon {}",
            schedule.horizon()
        )));
    }
    let k = schedule.coeffs(t_target)?;
    Ok(vecops::lincomb3(k.a, x_t, k.b, x_hat, k.c, eps))
}

/// One implicit step from `t_{n+1}` to `t_n`.
#[allow(clippy::too_many_arguments)]
pub fn dbim_step<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    rho: T,
    x_next: &[T],
    x_t: &[T],
    x_hat: &[T],
    t_n: T,
    t_next: T,
    eps: &[T],
) -> Result<Vec<T>> {
    check_dims(x_next.len(), &[x_t, x_hat, eps])?;
    let kn = schedule.coeffs(t_n)?;
    let k1 = schedule.coeffs(t_next)?;
    step_with(&kn, &k1, rho, x_next, x_t, x_hat, Some(eps), t_next)
}

#[allow(clippy::too_many_arguments)]
fn step_with<T: Scalar>(
    kn: &BridgeCoeffs<T>,
    k1: &BridgeCoeffs<T>,
    rho: T,
    x_next: &[T],
    x_t: &[T],
    x_hat: &[T],
    eps: Option<&[T]>,
    t_next: T,
) -> Result<Vec<T>> {
    let keep = residual_weight(kn.c, rho)?;
    let mut out = vecops::lincomb(kn.a, x_t, kn.b, x_hat);
    if keep > T::zero() {
        if k1.c == T::zero() {
            return Err(BridgeError::InitialStepSingularity {
                t_next: t_next.to_f64_lossy(),
            });
        }
        let w = keep / k1.c;
        for i in 0..out.len() {
            out[i] = out[i] + w * (x_next[i] - k1.a * x_t[i] - k1.b * x_hat[i]);
        }
    }
    if rho > T::zero() {
        if let Some(eps) = eps {
            vecops::axpy_in_place(&mut out, rho, eps);
        }
    }
    Ok(out)
}

fn grid_coeffs<T: Scalar>(schedule: &NoiseSchedule<T>, grid: &TimeGrid<T>) -> Result<Vec<BridgeCoeffs<T>>> {
    grid.times().iter().map(|&t| schedule.coeffs(t)).collect()
}

/// First-order implicit sampler for any `eta`.
pub fn run_dbim1<T: Scalar, P: DataPredictor<T>>(
    config: &SamplerConfig<T>,
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x_t: &[T],
    boot_noise: Vec<T>,
    trajectory: u64,
) -> Result<Trajectory<T>> {
    let grid = &config.grid;
    let n = grid.steps();
    let d = x_t.len();
    check_dims(predictor.dim(), &[x_t, &boot_noise])?;
    let rhos = VarianceParam::make_rhos(schedule, grid, config.eta)?;
    let coeffs = grid_coeffs(schedule, grid)?;
    let noise = NoiseStream::new(config.seed);

    let mut states = Vec::with_capacity(n + 1);
    states.push((grid.t_max(), x_t.to_vec()));
    let mut x = boot_step(schedule, predictor, x_t, grid.t(n - 1), &boot_noise)?;
    let mut calls = 1;
    for i in (0..n - 1).rev() {
        states.push((grid.t(i + 1), x.clone()));
        let x_hat = predictor.predict(&x, grid.t(i + 1), x_t)?;
        calls += 1;
        let rho = rhos.rho(i);
        let eps = (rho > T::zero()).then(|| noise.gaussian::<T>(trajectory, i as u32, d));
        x = step_with(
            &coeffs[i],
            &coeffs[i + 1],
            rho,
            &x,
            x_t,
            &x_hat,
            eps.as_deref(),
            grid.t(i + 1),
        )?;
    }
    states.push((grid.t(0), x));
    Ok(Trajectory {
        states,
        boot_noise,
        predictor_calls: calls,
    })
}

/// `(1 - e^-h, h - 1 + e^-h, h^2/2 - h + 1 - e^-h)`, by power series below `h = 1`.
pub fn exp_integrator_phis<T: Scalar>(h: T) -> (T, T, T) {
    let phi1 = -(-h).exp_m1();
    if h >= T::one() {
        let e = (-h).exp();
        let phi2 = h - T::one() + e;
        let phi3 = h * h / T::lit(2.0) - h + T::one() - e;
        return (phi1, phi2, phi3);
    }
    // phi2 = sum_{k>=2} (-h)^k / k!,  phi3 = -sum_{k>=3} (-h)^k / k!
    let mut term = h * h / T::lit(2.0);
    let mut phi2 = term;
    let mut phi3 = T::zero();
    let mut k = 2.0;
    loop {
        k += 1.0;
        term = -term * h / T::lit(k);
        phi2 = phi2 + term;
        phi3 = phi3 - term;
        if term.abs() <= T::epsilon() * phi3.abs() * T::lit(0.01) || k > 60.0 {
            break;
        }
    }
    (phi1, phi2, phi3)
}

/// `e^{lambda_s} [phi1 x_hat + phi2 d1 + phi3 d2]` with `h = lambda_s - lambda_t`;
/// `d2` is ignored at order 2.
pub fn taylor_integral<T: Scalar>(
    order: usize,
    lambda_s: T,
    lambda_t: T,
    x_hat: &[T],
    d1: &[T],
    d2: &[T],
) -> Result<Vec<T>> {
    if order != 2 && order != 3 {
        return Err(BridgeError::InvalidArgument(format!(
            "order must be 2 or 3, got {order}"
        )));
    }
    check_dims(x_hat.len(), &[d1])?;
    if order == 3 {
        check_dims(x_hat.len(), &[d2])?;
    }
    let h = lambda_s - lambda_t;
    if !(h > T::zero()) {
        return Err(BridgeError::NonpositiveStep { h: h.to_f64_lossy() });
    }
    let (p1, p2, p3) = exp_integrator_phis(h);
    let e = lambda_s.exp();
    Ok((0..x_hat.len())
        .map(|i| {
            let mut v = p1 * x_hat[i] + p2 * d1[i];
            if order == 3 {
                v = v + p3 * d2[i];
            }
            e * v
        })
        .collect())
}

/// High-order implicit sampler (`order` 2 or 3), deterministic after the boot step.
pub fn run_dbim_high<T: Scalar, P: DataPredictor<T>>(
    order: usize,
    grid: &TimeGrid<T>,
    schedule: &NoiseSchedule<T>,
    predictor: &P,
    x_t: &[T],
    boot_noise: Vec<T>,
) -> Result<Trajectory<T>> {
    if order != 2 && order != 3 {
        return Err(BridgeError::InvalidArgument(format!(
            "order must be 2 or 3, got {order}"
        )));
    }
    let n = grid.steps();
    if n < order {
        return Err(BridgeError::InvalidConfig(format!(
            "order {order} needs at least {order} steps, got {n}"
        )));
    }
    let d = x_t.len();
    check_dims(predictor.dim(), &[x_t, &boot_noise])?;
    let coeffs = grid_coeffs(schedule, grid)?;

    let mut states = Vec::with_capacity(n + 1);
    states.push((grid.t_max(), x_t.to_vec()));
    let x_hat_end = predictor.predict(x_t, schedule.horizon(), x_t)?;
    let mut x = boot_from_prediction(schedule, x_t, &x_hat_end, grid.t(n - 1), &boot_noise)?;
    let mut calls = 1;
    // (lambda, prediction), most recent last; lambda_T = -inf
    let mut history: Vec<(T, Vec<T>)> = vec![(coeffs[n].lambda, x_hat_end)];
    let zero = vec![T::zero(); d];

    for i in (1..n).rev() {
        states.push((grid.t(i), x.clone()));
        let (kt, ks) = (&coeffs[i], &coeffs[i - 1]);
        let x_hat = predictor.predict(&x, grid.t(i), x_t)?;
        calls += 1;
        let h = ks.lambda - kt.lambda;
        if !(h > T::zero()) {
            return Err(BridgeError::NonpositiveStep { h: h.to_f64_lossy() });
        }
        let (lam_u1, x_u1) = &history[history.len() - 1];
        let h1 = kt.lambda - *lam_u1;
        let (d1, d2) = if order == 2 || i == n - 1 {
            let d1 = if h1.is_finite() {
                divided(&x_hat, x_u1, h1)
            } else {
                zero.clone()
            };
            (d1, zero.clone())
        } else {
            let (lam_u2, x_u2) = &history[history.len() - 2];
            let h2 = *lam_u1 - *lam_u2;
            let f1 = divided(&x_hat, x_u1, h1);
            if h2.is_finite() {
                let f2 = divided(x_u1, x_u2, h2);
                let s = h1 + h2;
                let two = T::lit(2.0);
                let d1 = (0..d).map(|j| (f1[j] * (two * h1 + h2) - f2[j] * h1) / s).collect();
                let d2 = (0..d).map(|j| two * (f1[j] - f2[j]) / s).collect();
                (d1, d2)
            } else {
                (f1, zero.clone())
            }
        };
        let (_, p2, p3) = exp_integrator_phis(h);
        let mut next = step_with(ks, kt, T::zero(), &x, x_t, &x_hat, None, grid.t(i))?;
        for j in 0..d {
            next[j] = next[j] + ks.b * (p2 * d1[j] + p3 * d2[j]);
        }
        x = next;
        history.push((kt.lambda, x_hat));
        if history.len() > 2 {
            history.remove(0);
        }
    }
    states.push((grid.t(0), x));
    Ok(Trajectory {
        states,
        boot_noise,
        predictor_calls: calls,
    })
}

fn divided<T: Scalar>(a: &[T], b: &[T], h: T) -> Vec<T> {
    a.iter().zip(b).map(|(&u, &v)| (u - v) / h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phis_match_direct_formulas() {
        for &h in &[0.9f64, 0.5, 0.1] {
            let (p1, p2, p3) = exp_integrator_phis(h);
            let e = (-h).exp();
            assert!((p1 - (1.0 - e)).abs() < 1e-15);
            assert!((p2 - (h - 1.0 + e)).abs() < 1e-15);
            assert!((p3 - (h * h / 2.0 - h + 1.0 - e)).abs() < 1e-15);
        }
    }

    #[test]
    fn phis_small_h_leading_terms() {
        let h = 1e-6f64;
        let (p1, p2, p3) = exp_integrator_phis(h);
        assert!((p1 / h - 1.0).abs() < 1e-6);
        assert!((p2 / (h * h / 2.0) - 1.0).abs() < 1e-6);
        assert!((p3 / (h * h * h / 6.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn taylor_rejects_nonpositive_step() {
        let err = taylor_integral(2, 0.0, 0.0, &[1.0f64], &[0.0], &[]).unwrap_err();
        assert!(matches!(err, BridgeError::NonpositiveStep { .. }));
    }

    #[test]
    fn taylor_reduces_to_first_order() {
        let v = taylor_integral(3, 0.5f64, 0.2, &[2.0], &[0.0], &[0.0]).unwrap();
        let want = 0.5f64.exp() * (1.0 - (-0.3f64).exp()) * 2.0;
        assert!((v[0] - want).abs() < 1e-14);
    }
}
