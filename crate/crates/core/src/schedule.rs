//! Noise schedules, bridge coefficients and sampling time grids.
//!
//! A schedule fixes the Gaussian transition `x_t | x_0 ~ N(alpha_t x_0, sigma_t^2 I)`
//! of the underlying linear SDE `dx = f(t) x dt + g(t) dw`. Pinning the endpoint
//! `x_T` turns it into a diffusion bridge with marginal
//!
//! ```text
//! x_t | x_0, x_T ~ N(a_t x_T + b_t x_0, c_t^2 I)
//! a_t = (alpha_t / alpha_T) SNR_T / SNR_t
//! b_t = alpha_t (1 - SNR_T / SNR_t)
//! c_t^2 = sigma_t^2 (1 - SNR_T / SNR_t)
//! ```
//!
//! Everything is evaluated through `log alpha_t` and `log SNR_t` so that the
//! ratio `SNR_T / SNR_t` and its complement stay accurate near both ends.

use serde::{Deserialize, Serialize};

use crate::error::{BridgeError, Result};
use crate::scalar::Scalar;

/// Parametric family of the underlying (unconditioned) noise schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind<T> {
    /// Variance preserving, linear `beta(t) = beta_min + t (beta_max - beta_min)`:
    /// `alpha_t = exp(-1/2 int_0^t beta)`, `sigma_t^2 = 1 - alpha_t^2`.
    Vp { beta_min: T, beta_max: T },
    /// Variance exploding, geometric `sigma_t = sigma_min (sigma_max / sigma_min)^(t / T)`, `alpha_t = 1`.
    Ve { sigma_min: T, sigma_max: T },
    /// Brownian bridge: `alpha_t = 1`, `sigma_t^2 = beta t`.
    BrownianBridge { beta: T },
}

/// An immutable noise schedule on `(0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule<T> {
    kind: ScheduleKind<T>,
    horizon: T,
}

/// Bridge coefficients at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeCoeffs<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    /// `log(b / c)`; `-inf` exactly at the pinned endpoint `t = T`.
    pub lambda: T,
}

fn check_positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(BridgeError::InvalidSchedule(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl<T: Scalar> NoiseSchedule<T> {
    pub fn vp(beta_min: T, beta_max: T, horizon: T) -> Result<Self> {
        check_positive("horizon", horizon)?;
        check_positive("beta_max", beta_max)?;
        if !(beta_min >= T::zero()) || !beta_min.is_finite() {
            return Err(BridgeError::InvalidSchedule(format!(
                "beta_min must be >= 0, got {beta_min}"
            )));
        }
        Ok(Self {
            kind: ScheduleKind::Vp { beta_min, beta_max },
            horizon,
        })
    }

    pub fn ve(sigma_min: T, sigma_max: T, horizon: T) -> Result<Self> {
        check_positive("horizon", horizon)?;
        check_positive("sigma_min", sigma_min)?;
        check_positive("sigma_max", sigma_max)?;
        if sigma_max <= sigma_min {
            return Err(BridgeError::InvalidSchedule(format!(
                "sigma_max ({sigma_max}) must exceed sigma_min ({sigma_min})"
            )));
        }
        Ok(Self {
            kind: ScheduleKind::Ve { sigma_min, sigma_max },
            horizon,
        })
    }

    pub fn brownian_bridge(beta: T, horizon: T) -> Result<Self> {
        check_positive("horizon", horizon)?;
        check_positive("beta", beta)?;
        Ok(Self {
            kind: ScheduleKind::BrownianBridge { beta },
            horizon,
        })
    }

    pub fn kind(&self) -> ScheduleKind<T> {
        self.kind
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    fn beta_vp(beta_min: T, beta_max: T, t: T) -> T {
        beta_min + t * (beta_max - beta_min)
    }

    pub fn log_alpha(&self, t: T) -> T {
        match self.kind {
            ScheduleKind::Vp { beta_min, beta_max } => {
                let integral = beta_min * t + T::lit(0.5) * (beta_max - beta_min) * t * t;
                -T::lit(0.5) * integral
            }
            ScheduleKind::Ve { .. } | ScheduleKind::BrownianBridge { .. } => T::zero(),
        }
    }

    pub fn alpha(&self, t: T) -> T {
        self.log_alpha(t).exp()
    }

    pub fn sigma2(&self, t: T) -> T {
        match self.kind {
            ScheduleKind::Vp { .. } => -(T::lit(2.0) * self.log_alpha(t)).exp_m1(),
            ScheduleKind::Ve { .. } => self.log_sigma2(t).exp(),
            ScheduleKind::BrownianBridge { beta } => beta * t,
        }
    }

    pub fn sigma(&self, t: T) -> T {
        self.sigma2(t).sqrt()
    }

    pub fn log_sigma2(&self, t: T) -> T {
        match self.kind {
            ScheduleKind::Ve { sigma_min, sigma_max } => {
                let two = T::lit(2.0);
                two * sigma_min.ln() + two * (t / self.horizon) * (sigma_max / sigma_min).ln()
            }
            _ => self.sigma2(t).ln(),
        }
    }

    /// Drift coefficient `f(t) = d log alpha_t / dt`.
    pub fn f(&self, t: T) -> T {
        match self.kind {
            ScheduleKind::Vp { beta_min, beta_max } => -T::lit(0.5) * Self::beta_vp(beta_min, beta_max, t),
            _ => T::zero(),
        }
    }

    /// Squared diffusion `g^2(t) = d sigma_t^2 / dt - 2 f(t) sigma_t^2`.
    pub fn g2(&self, t: T) -> T {
        match self.kind {
            ScheduleKind::Vp { beta_min, beta_max } => Self::beta_vp(beta_min, beta_max, t),
            ScheduleKind::Ve { sigma_min, sigma_max } => {
                T::lit(2.0) * self.sigma2(t) * (sigma_max / sigma_min).ln() / self.horizon
            }
            ScheduleKind::BrownianBridge { beta } => beta,
        }
    }

    pub fn log_snr(&self, t: T) -> T {
        T::lit(2.0) * self.log_alpha(t) - self.log_sigma2(t)
    }

    pub fn snr(&self, t: T) -> T {
        self.log_snr(t).exp()
    }

    /// `1 - SNR_later / SNR_earlier` for `earlier <= later`, computed without cancellation.
    pub fn one_minus_snr_ratio(&self, earlier: T, later: T) -> T {
        -(self.log_snr(later) - self.log_snr(earlier)).exp_m1()
    }

    fn check_time(&self, t: T) -> Result<()> {
        if t.is_finite() && t > T::zero() && t <= self.horizon {
            Ok(())
        } else {
            Err(BridgeError::TimeOutOfRange {
                t: t.to_f64_lossy(),
                horizon: self.horizon.to_f64_lossy(),
            })
        }
    }

    /// Bridge coefficients `(a_t, b_t, c_t, lambda_t)`.
    pub fn coeffs(&self, t: T) -> Result<BridgeCoeffs<T>> {
        self.check_time(t)?;
        if t == self.horizon {
            return Ok(BridgeCoeffs {
                a: T::one(),
                b: T::zero(),
                c: T::zero(),
                lambda: T::neg_infinity(),
            });
        }
        let log_ratio = self.log_snr(self.horizon) - self.log_snr(t);
        let complement = -log_ratio.exp_m1();
        let log_alpha_t = self.log_alpha(t);

        let a = (log_alpha_t - self.log_alpha(self.horizon) + log_ratio).exp();
        let b = log_alpha_t.exp() * complement;
        let c = (self.sigma2(t) * complement).sqrt();

        let floor = T::degenerate_floor();
        let tf = t.to_f64_lossy();
        if !(b >= floor) {
            return Err(BridgeError::DegenerateCoefficient { what: "b_t", t: tf });
        }
        if !(c >= floor) {
            return Err(BridgeError::DegenerateCoefficient { what: "c_t", t: tf });
        }
        let half = T::lit(0.5);
        let lambda = half * self.log_snr(t) + half * complement.ln();
        if !lambda.is_finite() || !a.is_finite() {
            return Err(BridgeError::DegenerateCoefficient {
                what: "lambda_t",
                t: tf,
            });
        }
        Ok(BridgeCoeffs { a, b, c, lambda })
    }

    /// `lambda_t = log(b_t / c_t) = 1/2 log(SNR_t - SNR_T)`; strictly decreasing in `t`.
    pub fn lambda_of(&self, t: T) -> Result<T> {
        let coeffs = self.coeffs(t)?;
        if coeffs.lambda.is_finite() {
            Ok(coeffs.lambda)
        } else {
            Err(BridgeError::DegenerateCoefficient {
                what: "lambda_t",
                t: t.to_f64_lossy(),
            })
        }
    }

    /// Inverse of [`lambda_of`](Self::lambda_of) over `[1e-12 T, (1 - 1e-12) T]`.
    pub fn time_of_lambda(&self, lambda: T) -> Result<T> {
        let eps = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
        self.time_of_lambda_in(lambda, self.horizon * eps, self.horizon * (T::one() - eps))
    }

    /// Inverse of `lambda_t` by bisection on the bracket `[lo, hi]`.
    pub fn time_of_lambda_in(&self, lambda: T, lo: T, hi: T) -> Result<T> {
        if !(lo < hi) {
            return Err(BridgeError::InvalidArgument(format!("empty bracket [{lo}, {hi}]")));
        }
        let lam_lo = self.lambda_of(lo)?;
        let lam_hi = self.lambda_of(hi)?;
        if !(lambda <= lam_lo && lambda >= lam_hi) {
            return Err(BridgeError::NotBracketed {
                lambda: lambda.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
                lambda_lo: lam_lo.to_f64_lossy(),
                lambda_hi: lam_hi.to_f64_lossy(),
            });
        }
        if lambda == lam_lo {
            return Ok(lo);
        }
        if lambda == lam_hi {
            return Ok(hi);
        }
        let (mut a, mut b) = (lo, hi);
        let two = T::lit(2.0);
        for _ in 0..400 {
            let mid = (a + b) / two;
            if mid <= a || mid >= b {
                break;
            }
            if self.lambda_of(mid)? > lambda {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok((a + b) / two)
    }
}

/// How a [`TimeGrid`] distributes its interior times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// One boot step `t_max -> t_max - boot_gap`, then uniform in `t` down to `t_min`.
    UniformWithBootStep,
    /// `(t_max^(1/k) + (i/N)(t_min^(1/k) - t_max^(1/k)))^k`.
    EdmPower,
    /// One boot step, then uniform in `lambda_t` down to `t_min`.
    LambdaUniformWithBootStep,
}

/// Discretization `t_0 < t_1 < ... < t_N = t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    times: Vec<T>,
    kind: GridKind,
    t_min: T,
    boot_gap: T,
    kappa: T,
}

/// Default `t_min`, `t_max`, boot gap and EDM exponent.
pub const DEFAULT_T_MIN: f64 = 1e-4;
pub const DEFAULT_T_MAX: f64 = 1.0;
pub const DEFAULT_BOOT_GAP: f64 = 1e-4;
pub const DEFAULT_EDM_KAPPA: f64 = 7.0;

impl<T: Scalar> TimeGrid<T> {
    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// `t_i`
    pub fn t(&self, i: usize) -> T {
        self.times[i]
    }

    /// Number of sampling steps `N` (one less than the number of times).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn t_min(&self) -> T {
        self.t_min
    }

    pub fn t_max(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn boot_gap(&self) -> T {
        self.boot_gap
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    /// Checks that the grid ends exactly at the schedule horizon.
    pub fn check_against(&self, schedule: &NoiseSchedule<T>) -> Result<()> {
        if self.t_max() != schedule.horizon() {
            return Err(BridgeError::InvalidGridParams(format!(
                "grid ends at {} but schedule horizon is {}",
                self.t_max(),
                schedule.horizon()
            )));
        }
        Ok(())
    }

    fn validated(self) -> Result<Self> {
        let strictly_increasing = self.times.windows(2).all(|w| w[0] < w[1]);
        if !strictly_increasing || self.times.iter().any(|t| !t.is_finite()) {
            return Err(BridgeError::InvalidGridParams(
                "times are not strictly increasing (too many steps for the scalar precision?)".into(),
            ));
        }
        Ok(self)
    }
}

fn check_common<T: Scalar>(n: usize, t_min: T, t_max: T) -> Result<()> {
    if n < 1 {
        return Err(BridgeError::InvalidGridParams("N must be >= 1".into()));
    }
    if !(t_min > T::zero() && t_min < t_max && t_max.is_finite()) {
        return Err(BridgeError::InvalidGridParams(format!(
            "need 0 < t_min < t_max, got t_min = {t_min}, t_max = {t_max}"
        )));
    }
    Ok(())
}

/// Boot-step grids: `t_N = t_max`, `t_{N-1} = t_max - boot_gap`; returns `t_max - boot_gap`.
fn boot_top<T: Scalar>(n: usize, t_min: T, t_max: T, boot_gap: T) -> Result<T> {
    check_common(n, t_min, t_max)?;
    if !(boot_gap > T::zero()) {
        return Err(BridgeError::InvalidGridParams(format!(
            "boot_gap must be > 0, got {boot_gap}"
        )));
    }
    let top = t_max - boot_gap;
    if n == 1 {
        let tol = T::lit(4.0) * T::epsilon() * t_max;
        if (top - t_min).abs() > tol {
            return Err(BridgeError::InvalidGridParams(format!(
                "N = 1 requires t_min == t_max - boot_gap, got t_min = {t_min}, t_max - boot_gap = {top}"
            )));
        }
    } else if !(t_min < top) {
        return Err(BridgeError::InvalidGridParams(format!(
            "need t_min < t_max - boot_gap, got t_min = {t_min}, t_max - boot_gap = {top}"
        )));
    }
    Ok(top)
}

/// Builds a schedule-independent grid (`UniformWithBootStep` or `EdmPower`).
pub fn make_grid<T: Scalar>(
    kind: GridKind,
    n: usize,
    t_min: T,
    t_max: T,
    boot_gap: T,
    kappa: T,
) -> Result<TimeGrid<T>> {
    let times = match kind {
        GridKind::UniformWithBootStep => {
            let top = boot_top(n, t_min, t_max, boot_gap)?;
            let mut times = Vec::with_capacity(n + 1);
            if n == 1 {
                times.push(t_min);
            } else {
                let span = top - t_min;
                let denom = T::from_usize(n - 1).unwrap();
                for i in 0..n - 1 {
                    times.push(t_min + span * T::from_usize(i).unwrap() / denom);
                }
                times.push(top);
            }
            times.push(t_max);
            times
        }
        GridKind::EdmPower => {
            check_common(n, t_min, t_max)?;
            if !(kappa > T::zero()) {
                return Err(BridgeError::InvalidGridParams(format!(
                    "kappa must be > 0, got {kappa}"
                )));
            }
            let inv = kappa.recip();
            let hi = t_max.powf(inv);
            let lo = t_min.powf(inv);
            let nf = T::from_usize(n).unwrap();
            // index i counts down from t_max; store ascending
            let mut times: Vec<T> = (0..=n)
                .rev()
                .map(|i| (hi + T::from_usize(i).unwrap() / nf * (lo - hi)).powf(kappa))
                .collect();
            times[0] = t_min;
            times[n] = t_max;
            times
        }
        GridKind::LambdaUniformWithBootStep => {
            return Err(BridgeError::InvalidGridParams(
                "lambda-uniform grids depend on the schedule; use make_lambda_grid".into(),
            ))
        }
    };
    TimeGrid {
        times,
        kind,
        t_min,
        boot_gap,
        kappa,
    }
    .validated()
}

/// Boot-step grid whose remaining times are uniform in `lambda_t` on `[t_min, t_max - boot_gap]`.
pub fn make_lambda_grid<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    n: usize,
    t_min: T,
    t_max: T,
    boot_gap: T,
) -> Result<TimeGrid<T>> {
    let top = boot_top(n, t_min, t_max, boot_gap)?;
    if t_max != schedule.horizon() {
        return Err(BridgeError::InvalidGridParams(format!(
            "t_max ({t_max}) must equal the schedule horizon ({})",
            schedule.horizon()
        )));
    }
    let mut times = Vec::with_capacity(n + 1);
    if n == 1 {
        times.push(t_min);
    } else {
        let lam_lo = schedule.lambda_of(t_min)?;
        let lam_hi = schedule.lambda_of(top)?;
        let denom = T::from_usize(n - 1).unwrap();
        times.push(t_min);
        for i in 1..n - 1 {
            let w = T::from_usize(i).unwrap() / denom;
            let lam = lam_lo + w * (lam_hi - lam_lo);
            times.push(schedule.time_of_lambda_in(lam, t_min, top)?);
        }
        times.push(top);
    }
    times.push(t_max);
    TimeGrid {
        times,
        kind: GridKind::LambdaUniformWithBootStep,
        t_min,
        boot_gap,
        kappa: T::lit(DEFAULT_EDM_KAPPA),
    }
    .validated()
}

/// Declarative grid description, resolved against a schedule by [`GridSpec::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub kind: GridKind,
    pub steps: usize,
    pub t_min: T,
    pub t_max: T,
    pub boot_gap: T,
    pub kappa: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(kind: GridKind, steps: usize) -> Self {
        Self {
            kind,
            steps,
            t_min: T::lit(DEFAULT_T_MIN),
            t_max: T::lit(DEFAULT_T_MAX),
            boot_gap: T::lit(DEFAULT_BOOT_GAP),
            kappa: T::lit(DEFAULT_EDM_KAPPA),
        }
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }

    pub fn build(&self, schedule: &NoiseSchedule<T>) -> Result<TimeGrid<T>> {
        let grid = match self.kind {
            GridKind::LambdaUniformWithBootStep => {
                make_lambda_grid(schedule, self.steps, self.t_min, self.t_max, self.boot_gap)?
            }
            kind => make_grid(kind, self.steps, self.t_min, self.t_max, self.boot_gap, self.kappa)?,
        };
        grid.check_against(schedule)?;
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb() -> NoiseSchedule<f64> {
        NoiseSchedule::brownian_bridge(1.0, 1.0).unwrap()
    }

    #[test]
    fn brownian_midpoint_coefficients() {
        let c = bb().coeffs(0.5).unwrap();
        assert!((c.a - 0.5).abs() < 1e-15);
        assert!((c.b - 0.5).abs() < 1e-15);
        assert!((c.c - 0.5).abs() < 1e-15);
        assert!(c.lambda.abs() < 1e-15);
    }

    #[test]
    fn endpoint_is_pinned() {
        for s in [
            bb(),
            NoiseSchedule::vp(0.1, 20.0, 1.0).unwrap(),
            NoiseSchedule::ve(0.002, 80.0, 1.0).unwrap(),
        ] {
            let c = s.coeffs(1.0).unwrap();
            assert_eq!((c.a, c.b, c.c), (1.0, 0.0, 0.0));
            assert_eq!(c.lambda, f64::NEG_INFINITY);
            assert!(s.lambda_of(1.0).is_err());
        }
    }

    #[test]
    fn time_out_of_range() {
        let s = bb();
        assert!(matches!(s.coeffs(0.0), Err(BridgeError::TimeOutOfRange { .. })));
        assert!(matches!(s.coeffs(1.5), Err(BridgeError::TimeOutOfRange { .. })));
        assert!(matches!(s.coeffs(f64::NAN), Err(BridgeError::TimeOutOfRange { .. })));
    }

    #[test]
    fn underflow_is_an_error() {
        let s = NoiseSchedule::vp(2000.0, 2000.0, 1.0).unwrap();
        let err = s.coeffs(0.8).unwrap_err();
        assert_eq!(err, BridgeError::DegenerateCoefficient { what: "b_t", t: 0.8 });
        assert!(s.coeffs(0.2).is_ok());
    }

    #[test]
    fn brownian_lambda_by_hand() {
        let lam = bb().lambda_of(0.2).unwrap();
        assert!((lam - 0.5 * 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn lambda_round_trip() {
        for s in [bb(), NoiseSchedule::vp(0.1, 20.0, 1.0).unwrap()] {
            let t = 0.3;
            let back = s.time_of_lambda(s.lambda_of(t).unwrap()).unwrap();
            assert!((back - t).abs() <= 1e-10 * t);
        }
    }

    #[test]
    fn lambda_not_bracketed() {
        let s = bb();
        let err = s.time_of_lambda_in(10.0, 0.1, 0.9).unwrap_err();
        assert!(matches!(err, BridgeError::NotBracketed { .. }));
    }

    #[test]
    fn uniform_grid_two_steps() {
        let g = make_grid(GridKind::UniformWithBootStep, 2, 1e-4, 1.0, 1e-4, 7.0).unwrap();
        assert_eq!(g.times(), &[0.0001, 0.9999, 1.0]);
        assert_eq!(g.steps(), 2);
    }

    #[test]
    fn uniform_grid_single_step_requires_coincidence() {
        let err = make_grid(GridKind::UniformWithBootStep, 1, 1e-4, 1.0, 1e-4, 7.0).unwrap_err();
        assert!(matches!(err, BridgeError::InvalidGridParams(_)));
        let g = make_grid(GridKind::UniformWithBootStep, 1, 0.9, 1.0, 0.1, 7.0).unwrap();
        assert_eq!(g.times(), &[0.9, 1.0]);
    }

    #[test]
    fn grid_rejects_bad_params() {
        for (n, tmin, tmax, gap) in [
            (0, 1e-4, 1.0, 1e-4),
            (4, 0.0, 1.0, 1e-4),
            (4, 0.5, 0.4, 0.01),
            (4, 0.99995, 1.0, 1e-4),
        ] {
            assert!(make_grid(GridKind::UniformWithBootStep, n, tmin, tmax, gap, 7.0).is_err());
        }
    }

    #[test]
    fn lambda_grid_is_uniform_in_lambda() {
        let s = NoiseSchedule::vp(0.1, 2.0, 1.0).unwrap();
        let g = make_lambda_grid(&s, 9, 1e-4, 1.0, 1e-4).unwrap();
        assert_eq!(g.steps(), 9);
        assert_eq!(g.t(8), 1.0 - 1e-4);
        let lams: Vec<f64> = g.times()[..9].iter().map(|&t| s.lambda_of(t).unwrap()).collect();
        let h0 = lams[0] - lams[1];
        for w in lams.windows(2) {
            assert!(((w[0] - w[1]) - h0).abs() < 1e-8);
        }
    }

    #[test]
    fn f32_schedule_evaluates() {
        let s = NoiseSchedule::<f32>::brownian_bridge(1.0, 1.0).unwrap();
        let c = s.coeffs(0.25).unwrap();
        assert!((c.a - 0.25).abs() < 1e-6);
        assert!((c.b - 0.75).abs() < 1e-6);
        assert!((c.c - (0.1875f32).sqrt()).abs() < 1e-6);
    }
}
