//! Distances between Gaussians, moment checks, order fits and diversity scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bridge::check_dims;
use crate::error::{BridgeError, Result};
use crate::linalg::Matrix;
use crate::scalar::{vecops, Scalar};

fn check_gaussian<T: Scalar>(mean: &[T], cov: &Matrix<T>) -> Result<()> {
    if cov.rows() != mean.len() || cov.cols() != mean.len() {
        return Err(BridgeError::DimensionMismatch {
            expected: mean.len(),
            got: cov.rows(),
        });
    }
    Ok(())
}

/// `KL(N(mean_a, cov_a) || N(mean_b, cov_b))`. Both covariances must be positive definite.
pub fn gaussian_kl<T: Scalar>(mean_a: &[T], cov_a: &Matrix<T>, mean_b: &[T], cov_b: &Matrix<T>) -> Result<T> {
    check_gaussian(mean_a, cov_a)?;
    check_gaussian(mean_b, cov_b)?;
    check_dims(mean_a.len(), &[mean_b])?;
    let d = mean_a.len();
    let chol_a = cov_a.cholesky()?;
    let chol_b = cov_b.cholesky()?;
    let inv_b = chol_b.inverse();
    let mut trace = T::zero();
    for i in 0..d {
        for j in 0..d {
            trace = trace + inv_b[(i, j)] * cov_a[(j, i)];
        }
    }
    let diff = vecops::sub(mean_b, mean_a);
    let maha = vecops::dot(&diff, &chol_b.solve(&diff));
    let dn = T::from_usize(d).unwrap();
    let kl = T::lit(0.5) * (trace + maha - dn + chol_b.log_det() - chol_a.log_det());
    Ok(kl.max(T::zero()))
}

/// 2-Wasserstein distance between Gaussians:
/// `sqrt(|mu_a - mu_b|^2 + tr(A + B - 2 (A^(1/2) B A^(1/2))^(1/2)))`.
pub fn wasserstein2_gaussian<T: Scalar>(mean_a: &[T], cov_a: &Matrix<T>, mean_b: &[T], cov_b: &Matrix<T>) -> Result<T> {
    check_gaussian(mean_a, cov_a)?;
    check_gaussian(mean_b, cov_b)?;
    check_dims(mean_a.len(), &[mean_b])?;
    let diff = vecops::sub(mean_a, mean_b);
    let root_a = cov_a.symmetrized().psd_sqrt()?;
    let cross = root_a
        .matmul(&cov_b.symmetrized())
        .matmul(&root_a)
        .symmetrized()
        .psd_sqrt()?;
    let bures = cov_a.trace() + cov_b.trace() - T::lit(2.0) * cross.trace();
    Ok((vecops::dot(&diff, &diff) + bures.max(T::zero())).sqrt())
}

/// Least-squares slope of `log error` against `log(1 / N)`.
pub fn fit_order<T: Scalar>(step_counts: &[usize], errors: &[T]) -> Result<T> {
    if step_counts.len() != errors.len() {
        return Err(BridgeError::DimensionMismatch {
            expected: step_counts.len(),
            got: errors.len(),
        });
    }
    if step_counts.len() < 3 {
        return Err(BridgeError::InvalidArgument("fit_order needs at least 3 points".into()));
    }
    if step_counts.contains(&0) || errors.iter().any(|e| !(*e > T::zero()) || !e.is_finite()) {
        return Err(BridgeError::InvalidArgument(
            "fit_order needs positive step counts and errors".into(),
        ));
    }
    let xs: Vec<f64> = step_counts.iter().map(|&n| -(n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.to_f64_lossy().ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(BridgeError::InvalidArgument(
            "fit_order needs distinct step counts".into(),
        ));
    }
    Ok(T::lit(sxy / sxx))
}

/// Per-coordinate population standard deviation, averaged over coordinates.
pub fn diversity_score<T: Scalar>(samples: &[Vec<T>]) -> Result<T> {
    if samples.len() < 2 {
        return Err(BridgeError::InvalidArgument(
            "diversity needs at least 2 samples".into(),
        ));
    }
    let d = samples[0].len();
    for s in samples {
        check_dims(d, &[s])?;
    }
    if d == 0 {
        return Err(BridgeError::InvalidArgument("samples have dimension 0".into()));
    }
    let n = T::from_usize(samples.len()).unwrap();
    let mut total = T::zero();
    for j in 0..d {
        let mean = samples.iter().map(|s| s[j]).sum::<T>() / n;
        let var = samples.iter().map(|s| (s[j] - mean) * (s[j] - mean)).sum::<T>() / n;
        total = total + var.sqrt();
    }
    Ok(total / T::from_usize(d).unwrap())
}

/// Sample mean and unbiased covariance.
pub fn empirical_moments<T: Scalar>(samples: &[Vec<T>]) -> Result<(Vec<T>, Matrix<T>)> {
    if samples.len() < 2 {
        return Err(BridgeError::InvalidArgument("moments need at least 2 samples".into()));
    }
    let d = samples[0].len();
    for s in samples {
        check_dims(d, &[s])?;
    }
    let n = T::from_usize(samples.len()).unwrap();
    let mut mean = vec![T::zero(); d];
    for s in samples {
        vecops::axpy_in_place(&mut mean, T::one(), s);
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut cov = Matrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] = cov[(i, j)] + di * (s[j] - mean[j]);
            }
        }
    }
    let denom = n - T::one();
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// Empirical against target moments at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport<T> {
    pub t: T,
    pub empirical_mean: Vec<T>,
    pub empirical_cov: Matrix<T>,
    pub target_mean: Vec<T>,
    pub target_cov: Matrix<T>,
    pub n_samples: usize,
    /// `(empirical - target) mean / (sigma / sqrt(n))` per coordinate.
    pub z_scores: Vec<T>,
}

impl<T: Scalar> MomentReport<T> {
    pub fn max_abs_z(&self) -> T {
        self.z_scores.iter().fold(T::zero(), |m, z| m.max(z.abs()))
    }

    /// Largest `|emp_var / tgt_var - 1|` over coordinates.
    pub fn max_var_rel_err(&self) -> T {
        (0..self.target_mean.len()).fold(T::zero(), |m, i| {
            let tgt = self.target_cov[(i, i)];
            m.max((self.empirical_cov[(i, i)] / tgt - T::one()).abs())
        })
    }
}

/// Compares a batch of samples with `N(target_mean, target_cov)`.
/// Standard errors use the target variance, or the empirical one where the target is zero.
pub fn moment_check<T: Scalar>(
    samples: &[Vec<T>],
    t: T,
    target_mean: &[T],
    target_cov: &Matrix<T>,
) -> Result<MomentReport<T>> {
    check_gaussian(target_mean, target_cov)?;
    let (mean, cov) = empirical_moments(samples)?;
    check_dims(target_mean.len(), &[&mean])?;
    let n = samples.len();
    let sqrt_n = T::from_usize(n).unwrap().sqrt();
    let z_scores = (0..mean.len())
        .map(|i| {
            let var = if target_cov[(i, i)] > T::zero() {
                target_cov[(i, i)]
            } else {
                cov[(i, i)]
            };
            let diff = mean[i] - target_mean[i];
            if var > T::zero() {
                diff / (var.sqrt() / sqrt_n)
            } else if diff == T::zero() {
                T::zero()
            } else {
                T::infinity()
            }
        })
        .collect();
    Ok(MomentReport {
        t,
        empirical_mean: mean,
        empirical_cov: cov,
        target_mean: target_mean.to_vec(),
        target_cov: target_cov.clone(),
        n_samples: n,
        z_scores,
    })
}

/// Machine-readable summary of a CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub wall_time_s: f64,
    pub predictor_calls: u64,
    pub predictor_calls_per_step: f64,
}

impl RunReport {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.metrics {
            if !v.is_finite() {
                return Err(BridgeError::InvalidArgument(format!("metric {k} is not finite ({v})")));
            }
        }
        Ok(())
    }
}
