//! Forward bridge kernel and the non-Markovian inference family indexed by
//! per-step standard deviations `rho_n`.

use crate::error::{BridgeError, Result};
use crate::noise::NoiseStream;
use crate::scalar::{vecops, Scalar};
use crate::schedule::{NoiseSchedule, TimeGrid};

/// A point on the bridge together with its condition.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeState<T> {
    pub x: Vec<T>,
    pub t: T,
    pub x_t: Vec<T>,
}

impl<T: Scalar> BridgeState<T> {
    pub fn new(x: Vec<T>, t: T, x_t: Vec<T>) -> Result<Self> {
        check_dims(x.len(), &[&x_t])?;
        Ok(Self { x, t, x_t })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

pub(crate) fn check_dims<T>(d: usize, others: &[&[T]]) -> Result<()> {
    for o in others {
        if o.len() != d {
            return Err(BridgeError::DimensionMismatch {
                expected: d,
                got: o.len(),
            });
        }
    }
    Ok(())
}

/// Per-step standard deviations `rho_0 .. rho_{N-1}` of the inference family.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceParam<T> {
    eta: Option<T>,
    rhos: Vec<T>,
}

/// `sigma_{t_n} sqrt(1 - SNR_{t_{n+1}} / SNR_{t_n})`, the Markovian choice of `rho_n`.
pub fn markovian_rho<T: Scalar>(schedule: &NoiseSchedule<T>, t_n: T, t_next: T) -> Result<T> {
    schedule.coeffs(t_n)?;
    schedule.coeffs(t_next)?;
    Ok((schedule.sigma2(t_n) * schedule.one_minus_snr_ratio(t_n, t_next)).sqrt())
}

impl<T: Scalar> VarianceParam<T> {
    /// `rho_n = eta * markovian_rho(t_n, t_{n+1})` for `n <= N-2` and `rho_{N-1} = c_{t_{N-1}}`.
    pub fn make_rhos(schedule: &NoiseSchedule<T>, grid: &TimeGrid<T>, eta: T) -> Result<Self> {
        if !(eta >= T::zero() && eta <= T::one()) {
            return Err(BridgeError::InvalidConfig(format!("eta must lie in [0, 1], got {eta}")));
        }
        grid.check_against(schedule)?;
        let n = grid.steps();
        let mut rhos = Vec::with_capacity(n);
        for i in 0..n - 1 {
            rhos.push(eta * markovian_rho(schedule, grid.t(i), grid.t(i + 1))?);
        }
        rhos.push(schedule.coeffs(grid.t(n - 1))?.c);
        Ok(Self { eta: Some(eta), rhos })
    }

    /// Arbitrary `rho` values. The final entry is forced to `c_{t_{N-1}}`.
    pub fn from_rhos(schedule: &NoiseSchedule<T>, grid: &TimeGrid<T>, mut rhos: Vec<T>) -> Result<Self> {
        grid.check_against(schedule)?;
        let n = grid.steps();
        if rhos.len() != n {
            return Err(BridgeError::DimensionMismatch {
                expected: n,
                got: rhos.len(),
            });
        }
        let slack = T::one() + T::lit(1e-12);
        for (i, rho) in rhos.iter_mut().enumerate() {
            let c = schedule.coeffs(grid.t(i))?.c;
            if !(*rho >= T::zero() && *rho <= c * slack) {
                return Err(BridgeError::InvalidConfig(format!(
                    "rho_{i} = {rho} outside [0, c_t = {c}]"
                )));
            }
            *rho = rho.min(c);
        }
        rhos[n - 1] = schedule.coeffs(grid.t(n - 1))?.c;
        Ok(Self { eta: None, rhos })
    }

    pub fn eta(&self) -> Option<T> {
        self.eta
    }

    pub fn rhos(&self) -> &[T] {
        &self.rhos
    }

    pub fn rho(&self, n: usize) -> T {
        self.rhos[n]
    }
}

/// `a_t x_T + b_t x_0 + c_t noise`
pub fn forward_sample<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    x0: &[T],
    x_t: &[T],
    t: T,
    noise: &[T],
) -> Result<Vec<T>> {
    check_dims(x0.len(), &[x_t, noise])?;
    let k = schedule.coeffs(t)?;
    Ok(vecops::lincomb3(k.a, x_t, k.b, x0, k.c, noise))
}

/// Mean and variance of `q(x_{t_n} | x_0, x_{t_{n+1}}, x_T)`.
#[allow(clippy::too_many_arguments)]
pub fn inference_kernel_mean_var<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    rho: T,
    x0: &[T],
    x_next: &[T],
    x_t: &[T],
    t_n: T,
    t_next: T,
) -> Result<(Vec<T>, T)> {
    check_dims(x0.len(), &[x_next, x_t])?;
    if !(t_next > t_n) {
        return Err(BridgeError::InvalidArgument(format!(
            "need t_n < t_next, got {t_n} >= {t_next}"
        )));
    }
    let kn = schedule.coeffs(t_n)?;
    let k1 = schedule.coeffs(t_next)?;
    let keep = residual_weight(kn.c, rho)?;
    let mut mean = vecops::lincomb(kn.a, x_t, kn.b, x0);
    if keep > T::zero() {
        if k1.c == T::zero() {
            return Err(BridgeError::InitialStepSingularity {
                t_next: t_next.to_f64_lossy(),
            });
        }
        let w = keep / k1.c;
        for i in 0..mean.len() {
            mean[i] = mean[i] + w * (x_next[i] - k1.a * x_t[i] - k1.b * x0[i]);
        }
    }
    Ok((mean, rho * rho))
}

/// `sqrt(c^2 - rho^2)`, rejecting `rho > c`.
pub(crate) fn residual_weight<T: Scalar>(c: T, rho: T) -> Result<T> {
    if !(rho >= T::zero()) || rho > c * (T::one() + T::lit(1e-12)) {
        return Err(BridgeError::InvalidArgument(format!(
            "rho = {rho} outside [0, c = {c}]"
        )));
    }
    Ok(((c - rho) * (c + rho)).max(T::zero()).sqrt())
}

/// Coefficient of `x_0` in `grad log q(x_{t_{n+1}} | x_0, x_{t_n}, x_T)`; zero iff the family is Markovian.
pub fn markov_x0_coefficient<T: Scalar>(schedule: &NoiseSchedule<T>, rho: T, t_n: T, t_next: T) -> Result<T> {
    if rho == T::zero() {
        return Err(BridgeError::ZeroRho);
    }
    let kn = schedule.coeffs(t_n)?;
    let k1 = schedule.coeffs(t_next)?;
    let keep = residual_weight(kn.c, rho)?;
    let rho2 = rho * rho;
    let rho_max2 = schedule.sigma2(t_n) * schedule.one_minus_snr_ratio(t_n, t_next);
    // conjugate form of (b' c^2 - b c' keep) / (c'^2 rho^2)
    let denom = (k1.b * kn.c * kn.c + kn.b * k1.c * keep) * rho2;
    Ok(kn.b * kn.b * (rho2 - rho_max2) / denom)
}

/// `c_t^4 / b_t^2 = sigma_t^4 / alpha_t^2`, finite at `t = T`.
fn c4_over_b2<T: Scalar>(schedule: &NoiseSchedule<T>, t: T) -> T {
    (T::lit(2.0) * (schedule.log_sigma2(t) - schedule.log_alpha(t))).exp()
}

/// Variational weight `gamma(t_n)` for `1 <= n <= N`.
pub fn vi_weight<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    grid: &TimeGrid<T>,
    rhos: &VarianceParam<T>,
    n: usize,
) -> Result<T> {
    if n == 0 || n > grid.steps() {
        return Err(BridgeError::InvalidArgument(format!(
            "n = {n} outside 1..={}",
            grid.steps()
        )));
    }
    let rho = rhos.rho(n - 1);
    if rho == T::zero() {
        return Err(BridgeError::ZeroRho);
    }
    let d = if n == 1 {
        T::one()
    } else {
        let kp = schedule.coeffs(grid.t(n - 1))?;
        let keep = residual_weight(kp.c, rho)?;
        if keep == T::zero() {
            kp.b
        } else {
            let kn = schedule.coeffs(grid.t(n))?;
            kp.b - keep * kn.b / kn.c
        }
    };
    Ok(d * d * c4_over_b2(schedule, grid.t(n)) / (T::lit(2.0) * rho * rho))
}

/// Runs the inference chain with the true `x_0`: `x_{t_{N-1}}` from the forward
/// kernel, then each `x_{t_n}` from [`inference_kernel_mean_var`].
/// Returns states indexed by grid position `0 ..= N-1`.
pub fn simulate_inference_chain<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    grid: &TimeGrid<T>,
    rhos: &VarianceParam<T>,
    x0: &[T],
    x_t: &[T],
    noise: &NoiseStream,
    trajectory: u64,
) -> Result<Vec<Vec<T>>> {
    let d = x0.len();
    let n = grid.steps();
    let mut states = vec![Vec::new(); n];
    let eps = noise.gaussian(trajectory, (n - 1) as u32, d);
    states[n - 1] = forward_sample(schedule, x0, x_t, grid.t(n - 1), &eps)?;
    for i in (0..n - 1).rev() {
        let rho = rhos.rho(i);
        let (mut mean, _) =
            inference_kernel_mean_var(schedule, rho, x0, &states[i + 1], x_t, grid.t(i), grid.t(i + 1))?;
        if rho > T::zero() {
            let eps = noise.gaussian::<T>(trajectory, i as u32, d);
            vecops::axpy_in_place(&mut mean, rho, &eps);
        }
        states[i] = mean;
    }
    Ok(states)
}
