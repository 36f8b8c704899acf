//! Jointly Gaussian endpoint models `x_0 | x_T ~ N(M x_T + m_0, S)` and the exact
//! data predictor they induce.

use crate::bridge::check_dims;
use crate::error::{BridgeError, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::noise::NoiseStream;
use crate::scalar::{vecops, Scalar};
use crate::schedule::NoiseSchedule;

/// Largest supported dimension.
pub const MAX_DIM: usize = 64;

const SYMMETRY_TOL: f64 = 1e-12;
const CHOLESKY_JITTER: f64 = 1e-10;

/// `x_0 | x_T ~ N(M x_T + m_0, S)`.
#[derive(Debug, Clone)]
pub struct GaussianBridgeProblem<T> {
    gain: Matrix<T>,
    offset: Vec<T>,
    cov: Matrix<T>,
    eigen: SymmetricEigen<T>,
    cov_sqrt: Matrix<T>,
}

impl<T: Scalar> GaussianBridgeProblem<T> {
    pub fn new(gain: Matrix<T>, offset: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        let d = offset.len();
        if d == 0 || d > MAX_DIM {
            return Err(BridgeError::InvalidProblem(format!(
                "dimension must be in 1..={MAX_DIM}, got {d}"
            )));
        }
        for (name, m) in [("M", &gain), ("S", &cov)] {
            if m.rows() != d || m.cols() != d {
                return Err(BridgeError::InvalidProblem(format!(
                    "{name} must be {d}x{d}, got {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if gain.max_abs().is_nan() || !gain.max_abs().is_finite() || offset.iter().any(|v| !v.is_finite()) {
            return Err(BridgeError::InvalidProblem("non-finite entries in M or m0".into()));
        }
        let asym = cov.asymmetry();
        if !(asym <= T::lit(SYMMETRY_TOL)) {
            return Err(BridgeError::InvalidProblem(format!(
                "S is not symmetric (max |S - S^T| = {asym})"
            )));
        }
        let cov = cov.symmetrized();
        let eigen = cov.symmetric_eigen()?;
        let min = eigen.min_value();
        if !(min >= -T::lit(SYMMETRY_TOL)) {
            return Err(BridgeError::InvalidProblem(format!(
                "S is not positive semi-definite (min eigenvalue {min})"
            )));
        }
        let cov_sqrt = eigen.map_values(|v| v.max(T::zero()).sqrt());
        Ok(Self {
            gain,
            offset,
            cov,
            eigen,
            cov_sqrt,
        })
    }

    /// Diagonal model `x_0 | x_T ~ N(gain x_T + offset, diag(variances))`.
    pub fn diagonal(gain: T, offset: Vec<T>, variances: Vec<T>) -> Result<Self> {
        let d = offset.len();
        check_dims(d, &[&variances])?;
        Self::new(Matrix::diagonal(&vec![gain; d]), offset, Matrix::diagonal(&variances))
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn gain(&self) -> &Matrix<T> {
        &self.gain
    }

    pub fn offset(&self) -> &[T] {
        &self.offset
    }

    pub fn cov(&self) -> &Matrix<T> {
        &self.cov
    }

    /// `m(x_T) = M x_T + m_0`
    pub fn prior_mean(&self, x_t: &[T]) -> Result<Vec<T>> {
        check_dims(self.dim(), &[x_t])?;
        let mut m = self.gain.mul_vec(x_t);
        vecops::axpy_in_place(&mut m, T::one(), &self.offset);
        Ok(m)
    }

    /// `m(x_T) + S^(1/2) eps`
    pub fn sample_x0(&self, x_t: &[T], eps: &[T]) -> Result<Vec<T>> {
        check_dims(self.dim(), &[eps])?;
        let mut x = self.prior_mean(x_t)?;
        vecops::axpy_in_place(&mut x, T::one(), &self.cov_sqrt.mul_vec(eps));
        Ok(x)
    }

    /// Bridge marginal `N(a_t x_T + b_t m, b_t^2 S + c_t^2 I)` with `x_0` integrated out.
    pub fn marginal_at(&self, schedule: &NoiseSchedule<T>, t: T, x_t: &[T]) -> Result<(Vec<T>, Matrix<T>)> {
        let k = schedule.coeffs(t)?;
        let m = self.prior_mean(x_t)?;
        let mean = vecops::lincomb(k.a, x_t, k.b, &m);
        let cov = self.cov.scaled(k.b * k.b).add_diagonal(k.c * k.c);
        Ok((mean, cov))
    }

    /// `grad_x log N(x; marginal_at(t))`, the bridge score of the Gaussian marginal.
    pub fn marginal_score(&self, schedule: &NoiseSchedule<T>, x: &[T], t: T, x_t: &[T]) -> Result<Vec<T>> {
        check_dims(self.dim(), &[x])?;
        let (mean, cov) = self.marginal_at(schedule, t, x_t)?;
        let chol = cov
            .cholesky()
            .map_err(|_| BridgeError::SingularSystem { t: t.to_f64_lossy() })?;
        Ok(vecops::scale(-T::one(), &chol.solve(&vecops::sub(x, &mean))))
    }

    /// Exact probability-flow map from `t_from` to `t_to`:
    /// `mu_to + Sigma_to^(1/2) Sigma_from^(-1/2) (x - mu_from)`.
    pub fn exact_flow(&self, schedule: &NoiseSchedule<T>, x: &[T], t_from: T, t_to: T, x_t: &[T]) -> Result<Vec<T>> {
        check_dims(self.dim(), &[x])?;
        let kf = schedule.coeffs(t_from)?;
        let kt = schedule.coeffs(t_to)?;
        if kf.c == T::zero() {
            return Err(BridgeError::DegenerateCoefficient {
                what: "c_t",
                t: t_from.to_f64_lossy(),
            });
        }
        let m = self.prior_mean(x_t)?;
        let mu_from = vecops::lincomb(kf.a, x_t, kf.b, &m);
        let mu_to = vecops::lincomb(kt.a, x_t, kt.b, &m);
        let ratio = self.eigen.map_values(|s| {
            let s = s.max(T::zero());
            ((kt.b * kt.b * s + kt.c * kt.c) / (kf.b * kf.b * s + kf.c * kf.c)).sqrt()
        });
        let mut out = ratio.mul_vec(&vecops::sub(x, &mu_from));
        vecops::axpy_in_place(&mut out, T::one(), &mu_to);
        Ok(out)
    }
}

/// Estimate of `E[x_0 | x_t, x_T]`.
pub trait DataPredictor<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn predict(&self, x: &[T], t: T, x_t: &[T]) -> Result<Vec<T>>;
}

impl<T: Scalar, P: DataPredictor<T> + ?Sized> DataPredictor<T> for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict(&self, x: &[T], t: T, x_t: &[T]) -> Result<Vec<T>> {
        (**self).predict(x, t, x_t)
    }
}

/// Exact posterior mean of a [`GaussianBridgeProblem`].
#[derive(Debug, Clone)]
pub struct GaussianOracle<T> {
    problem: GaussianBridgeProblem<T>,
    schedule: NoiseSchedule<T>,
}

impl<T: Scalar> GaussianOracle<T> {
    pub fn new(problem: GaussianBridgeProblem<T>, schedule: NoiseSchedule<T>) -> Self {
        Self { problem, schedule }
    }

    pub fn problem(&self) -> &GaussianBridgeProblem<T> {
        &self.problem
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.schedule
    }
}

impl<T: Scalar> DataPredictor<T> for GaussianOracle<T> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    /// `m + b S (b^2 S + c^2 I)^(-1) (x - a x_T - b m)`; the prior mean at `t = T`.
    fn predict(&self, x: &[T], t: T, x_t: &[T]) -> Result<Vec<T>> {
        check_dims(self.dim(), &[x, x_t])?;
        let k = self.schedule.coeffs(t)?;
        let mut m = self.problem.prior_mean(x_t)?;
        if k.b == T::zero() {
            return Ok(m);
        }
        let resid: Vec<T> = (0..m.len()).map(|i| x[i] - k.a * x_t[i] - k.b * m[i]).collect();
        let b2 = k.b * k.b;
        let c2 = k.c * k.c;
        let system = self.problem.cov.scaled(b2).add_diagonal(c2);
        let chol = match system.cholesky() {
            Ok(ch) => ch,
            Err(_) => system
                .add_diagonal(b2 * T::lit(CHOLESKY_JITTER))
                .cholesky()
                .map_err(|_| BridgeError::SingularSystem { t: t.to_f64_lossy() })?,
        };
        let w = self.problem.cov.mul_vec(&chol.solve(&resid));
        vecops::axpy_in_place(&mut m, k.b, &w);
        Ok(m)
    }
}

/// Wraps a predictor and adds a fixed bias vector to every prediction.
#[derive(Debug, Clone)]
pub struct PerturbedOracle<P, T> {
    inner: P,
    bias: Vec<T>,
}

impl<T: Scalar, P: DataPredictor<T>> PerturbedOracle<P, T> {
    /// Bias along a random direction (drawn from `seed`) with norm `eps_bias`.
    pub fn new(inner: P, eps_bias: T, seed: u64) -> Result<Self> {
        let dir: Vec<T> = NoiseStream::new(seed).gaussian(0, 0, inner.dim());
        let norm = vecops::norm(&dir);
        if norm == T::zero() {
            return Err(BridgeError::ZeroVector);
        }
        let bias = vecops::scale(eps_bias / norm, &dir);
        Ok(Self { inner, bias })
    }

    pub fn with_bias(inner: P, bias: Vec<T>) -> Result<Self> {
        check_dims(inner.dim(), &[&bias])?;
        Ok(Self { inner, bias })
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }
}

impl<T: Scalar, P: DataPredictor<T>> DataPredictor<T> for PerturbedOracle<P, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn predict(&self, x: &[T], t: T, x_t: &[T]) -> Result<Vec<T>> {
        let mut out = self.inner.predict(x, t, x_t)?;
        vecops::axpy_in_place(&mut out, T::one(), &self.bias);
        Ok(out)
    }
}

/// Predictor backed by a closure.
pub struct FnPredictor<F> {
    dim: usize,
    f: F,
}

impl<F> FnPredictor<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T, F> DataPredictor<T> for FnPredictor<F>
where
    T: Scalar,
    F: Fn(&[T], T, &[T]) -> Vec<T> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[T], t: T, x_t: &[T]) -> Result<Vec<T>> {
        check_dims(self.dim, &[x, x_t])?;
        Ok((self.f)(x, t, x_t))
    }
}

/// Bridge score from a data prediction: `-(x - a_t x_T - b_t x_hat) / c_t^2`.
pub fn score_from_predictor<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    x: &[T],
    t: T,
    x_t: &[T],
    x_hat: &[T],
) -> Result<Vec<T>> {
    check_dims(x.len(), &[x_t, x_hat])?;
    let k = schedule.coeffs(t)?;
    if k.c == T::zero() {
        return Err(BridgeError::DegenerateCoefficient {
            what: "c_t",
            t: t.to_f64_lossy(),
        });
    }
    let inv = -(k.c * k.c).recip();
    Ok((0..x.len())
        .map(|i| inv * (x[i] - k.a * x_t[i] - k.b * x_hat[i]))
        .collect())
}
