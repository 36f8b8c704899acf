use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{Experiment, Resolved};
use crate::bridge::{simulate_inference_chain, VarianceParam};
use crate::error::{BridgeError, Result};
use crate::linalg::Matrix;
use crate::metrics::{diversity_score, empirical_moments, fit_order, moment_check, wasserstein2_gaussian};
use crate::noise::NoiseStream;
use crate::samplers::{decode, drift_dbim, drift_pfode, encode, sample, slerp_interpolate, Method};
use crate::scalar::vecops;

const CONDITION_SLOT: u32 = u32::MAX - 1;
const DATA_SLOT: u32 = u32::MAX - 2;
const POINT_SLOT: u32 = u32::MAX - 3;

/// A failed numerical operation, named for the error message.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub operation: &'static str,
    pub error: BridgeError,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.operation, self.error)
    }
}

trait Named<T> {
    fn op(self, operation: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Named<T> for Result<T> {
    fn op(self, operation: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { operation, error })
    }
}

/// Tabular result plus scalar metrics.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub metrics: BTreeMap<String, f64>,
    pub predictor_calls: u64,
    pub steps: u64,
}

fn coord_header(first: &str, d: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((0..d).map(|i| format!("coord_{i}")))
        .collect()
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

type Run = std::result::Result<Outcome, Failure>;

impl Resolved {
    fn noise(&self) -> NoiseStream {
        NoiseStream::new(self.config.seed)
    }

    /// Condition `c`: the configured `x_T`, or a standard normal draw.
    pub fn condition(&self, c: u64) -> Vec<f64> {
        match &self.config.condition {
            Some(v) => v.clone(),
            None => self.noise().gaussian(c, CONDITION_SLOT, self.dim()),
        }
    }

    /// Data point `k` drawn from `x_0 | x_T`.
    fn data_point(&self, x_t: &[f64], k: u64) -> Result<Vec<f64>> {
        let eps: Vec<f64> = self.noise().gaussian(k, DATA_SLOT, self.dim());
        self.problem.sample_x0(x_t, &eps)
    }

    pub fn run_experiment(&self) -> Run {
        match self.config.experiment {
            Experiment::Sample => self.run_sample(),
            Experiment::Marginals => self.run_marginals(),
            Experiment::DriftCheck => self.run_drift_check(),
            Experiment::Convergence => self.run_convergence(),
            Experiment::Roundtrip => self.run_roundtrip(),
            Experiment::Interpolate => self.run_interpolate(),
            Experiment::Diversity => self.run_diversity(),
        }
    }

    fn run_sample(&self) -> Run {
        let n = self.config.grid.steps;
        let cfg = self.sampler(self.config.sampler.method, n).op("sampler config")?;
        let x_t = self.condition(0);
        let trajs = (0..self.config.trajectories as u64)
            .into_par_iter()
            .map(|k| sample(&cfg, &self.schedule, &self.oracle, &x_t, k))
            .collect::<Result<Vec<_>>>()
            .op("sample")?;
        let mut out = Outcome {
            header: coord_header("traj_id", self.dim()),
            ..Default::default()
        };
        let terminals: Vec<Vec<f64>> = trajs.iter().map(|t| t.terminal().to_vec()).collect();
        for (k, x) in terminals.iter().enumerate() {
            out.rows.push(
                std::iter::once(k.to_string())
                    .chain(x.iter().map(|&v| num(v)))
                    .collect(),
            );
        }
        out.predictor_calls = trajs.iter().map(|t| t.predictor_calls as u64).sum();
        out.steps = (trajs.len() * n) as u64;
        if terminals.len() >= 2 {
            let (mean, cov) = empirical_moments(&terminals).op("moments")?;
            let target = self.problem.prior_mean(&x_t).op("prior mean")?;
            let w2 = wasserstein2_gaussian(&mean, &cov, &target, self.problem.cov()).op("wasserstein")?;
            out.metrics.insert("w2_to_posterior".into(), w2);
            out.metrics
                .insert("sqrt_trace_cov".into(), self.problem.cov().trace().sqrt());
        }
        Ok(out)
    }

    fn run_marginals(&self) -> Run {
        let grid = self.grid(self.config.grid.steps).op("grid")?;
        let rhos = VarianceParam::make_rhos(&self.schedule, &grid, self.config.sampler.eta).op("make_rhos")?;
        let x_t = self.condition(0);
        let x0 = match &self.config.x0 {
            Some(v) => v.clone(),
            None => self.data_point(&x_t, 0).op("sample x0")?,
        };
        let noise = self.noise();
        let chains = (0..self.config.trajectories as u64)
            .into_par_iter()
            .map(|k| simulate_inference_chain(&self.schedule, &grid, &rhos, &x0, &x_t, &noise, k))
            .collect::<Result<Vec<_>>>()
            .op("inference chain")?;
        let d = self.dim();
        let mut out = Outcome {
            header: ["t", "coord", "emp_mean", "tgt_mean", "emp_var", "tgt_var", "z"]
                .map(String::from)
                .to_vec(),
            ..Default::default()
        };
        let (mut max_z, mut max_var) = (0.0f64, 0.0f64);
        for i in (0..grid.steps()).rev() {
            let t = grid.t(i);
            let batch: Vec<Vec<f64>> = chains.iter().map(|c| c[i].clone()).collect();
            let k = self.schedule.coeffs(t).op("coeffs")?;
            let mean = vecops::lincomb(k.a, &x_t, k.b, &x0);
            let cov = Matrix::diagonal(&vec![k.c * k.c; d]);
            let rep = moment_check(&batch, t, &mean, &cov).op("moment check")?;
            for j in 0..d {
                out.rows.push(vec![
                    num(t),
                    j.to_string(),
                    num(rep.empirical_mean[j]),
                    num(rep.target_mean[j]),
                    num(rep.empirical_cov[(j, j)]),
                    num(rep.target_cov[(j, j)]),
                    num(rep.z_scores[j]),
                ]);
            }
            max_z = max_z.max(rep.max_abs_z());
            max_var = max_var.max(rep.max_var_rel_err());
        }
        out.metrics.insert("max_abs_z".into(), max_z);
        out.metrics.insert("max_var_rel_err".into(), max_var);
        Ok(out)
    }

    fn run_drift_check(&self) -> Run {
        let d = self.dim();
        let noise = self.noise();
        let horizon = self.schedule.horizon();
        let rows = (0..self.config.drift_points as u64)
            .into_par_iter()
            .map(|k| {
                let u = noise.uniform(k, POINT_SLOT, 1)[0];
                let t = horizon * (0.01 + 0.98 * u);
                let x: Vec<f64> = noise.gaussian(k, POINT_SLOT - 1, d);
                let x_t: Vec<f64> = noise.gaussian(k, POINT_SLOT - 2, d);
                let a = drift_dbim(&self.schedule, &self.oracle, &x, t, &x_t)?;
                let b = drift_pfode(&self.schedule, &self.oracle, &x, t, &x_t)?;
                Ok((t, relative_deviation(&a, &b)))
            })
            .collect::<Result<Vec<_>>>()
            .op("drift")?;
        let mut out = Outcome {
            header: ["point_id", "t", "rel_dev"].map(String::from).to_vec(),
            predictor_calls: 2 * rows.len() as u64,
            ..Default::default()
        };
        let mut worst = 0.0f64;
        for (k, (t, dev)) in rows.iter().enumerate() {
            out.rows.push(vec![k.to_string(), num(*t), num(*dev)]);
            worst = worst.max(*dev);
        }
        out.metrics.insert("max_rel_dev".into(), worst);
        Ok(out)
    }

    /// RMS terminal error against the exact probability flow from the boot state.
    pub fn terminal_error(&self, method: Method, steps: usize) -> std::result::Result<(f64, u64), Failure> {
        let cfg = self.sampler(method, steps).op("sampler config")?;
        if method == Method::SdeEulerMaruyama || (method == Method::Dbim1 && cfg.eta != 0.0) {
            return Err(Failure {
                operation: "convergence",
                error: BridgeError::InvalidConfig(format!("{method} with eta = {} is not deterministic", cfg.eta)),
            });
        }
        let grid = &cfg.grid;
        let x_t = self.condition(0);
        let per = (0..self.config.trajectories as u64)
            .into_par_iter()
            .map(|k| {
                let traj = sample(&cfg, &self.schedule, &self.oracle, &x_t, k)?;
                let exact = self.problem.exact_flow(
                    &self.schedule,
                    traj.at_index(steps - 1),
                    grid.t(steps - 1),
                    grid.t(0),
                    &x_t,
                )?;
                let diff = vecops::sub(traj.terminal(), &exact);
                Ok((vecops::dot(&diff, &diff), traj.predictor_calls as u64))
            })
            .collect::<Result<Vec<_>>>()
            .op("convergence")?;
        let mse = per.iter().map(|p| p.0).sum::<f64>() / per.len() as f64;
        Ok((mse.sqrt(), per.iter().map(|p| p.1).sum()))
    }

    fn run_convergence(&self) -> Run {
        let mut out = Outcome {
            header: ["method", "eta", "n_steps", "terminal_err"].map(String::from).to_vec(),
            ..Default::default()
        };
        for &m in &self.methods {
            let eta = if m.uses_eta() { self.config.sampler.eta } else { 0.0 };
            let mut errs = Vec::new();
            for &n in &self.sweep {
                let (err, calls) = self.terminal_error(m, n)?;
                out.rows
                    .push(vec![m.name().to_string(), num(eta), n.to_string(), num(err)]);
                out.predictor_calls += calls;
                out.steps += (n * self.config.trajectories) as u64;
                errs.push(err);
            }
            let slope = fit_order(&self.sweep, &errs).op("fit_order")?;
            out.metrics.insert(format!("slope_{}", m.name()), slope);
        }
        Ok(out)
    }

    fn run_roundtrip(&self) -> Run {
        let n = self.config.grid.steps;
        let grid = self.grid(n).op("grid")?;
        let x_t = self.condition(0);
        let errs = (0..self.config.trajectories as u64)
            .into_par_iter()
            .map(|k| -> std::result::Result<f64, Failure> {
                let x0 = self.data_point(&x_t, k).op("sample x0")?;
                let eps = encode(&self.schedule, &self.oracle, &x0, &x_t, &grid).op("encode")?;
                let back = decode(&self.schedule, &self.oracle, &x_t, &grid, &eps).op("decode")?;
                Ok(vecops::norm(&vecops::sub(&back, &x0)) / vecops::norm(&x0).max(f64::MIN_POSITIVE))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut out = Outcome {
            header: ["traj_id", "recon_rel_err"].map(String::from).to_vec(),
            predictor_calls: (errs.len() * n) as u64,
            steps: (errs.len() * n) as u64,
            ..Default::default()
        };
        let mut worst = 0.0f64;
        for (k, e) in errs.iter().enumerate() {
            out.rows.push(vec![k.to_string(), num(*e)]);
            worst = worst.max(*e);
        }
        out.metrics.insert("max_recon_rel_err".into(), worst);
        Ok(out)
    }

    fn run_interpolate(&self) -> Run {
        let n = self.config.grid.steps;
        let grid = self.grid(n).op("grid")?;
        let x_t = self.condition(0);
        let xa = self.data_point(&x_t, 0).op("sample x0")?;
        let xb = self.data_point(&x_t, 1).op("sample x0")?;
        let ea = encode(&self.schedule, &self.oracle, &xa, &x_t, &grid).op("encode")?;
        let eb = encode(&self.schedule, &self.oracle, &xb, &x_t, &grid).op("encode")?;
        let points = self.config.interpolation_points;
        let decoded = (0..points)
            .into_par_iter()
            .map(|k| {
                let w = k as f64 / (points - 1) as f64;
                let eps = slerp_interpolate(&ea, &eb, w)?;
                Ok((w, decode(&self.schedule, &self.oracle, &x_t, &grid, &eps)?))
            })
            .collect::<Result<Vec<_>>>()
            .op("interpolate")?;
        let da = decode(&self.schedule, &self.oracle, &x_t, &grid, &ea).op("decode")?;
        let db = decode(&self.schedule, &self.oracle, &x_t, &grid, &eb).op("decode")?;
        let mut out = Outcome {
            header: coord_header("w", self.dim()),
            predictor_calls: ((points + 2) * n) as u64,
            steps: ((points + 2) * n) as u64,
            ..Default::default()
        };
        for (w, x) in &decoded {
            out.rows
                .push(std::iter::once(num(*w)).chain(x.iter().map(|&v| num(v))).collect());
        }
        let end_a = vecops::norm(&vecops::sub(&decoded[0].1, &da));
        let end_b = vecops::norm(&vecops::sub(&decoded[points - 1].1, &db));
        out.metrics.insert("endpoint_a_abs_err".into(), end_a);
        out.metrics.insert("endpoint_b_abs_err".into(), end_b);
        out.metrics.insert(
            "recon_a_rel_err".into(),
            vecops::norm(&vecops::sub(&da, &xa)) / vecops::norm(&xa).max(f64::MIN_POSITIVE),
        );
        out.metrics.insert(
            "recon_b_rel_err".into(),
            vecops::norm(&vecops::sub(&db, &xb)) / vecops::norm(&xb).max(f64::MIN_POSITIVE),
        );
        Ok(out)
    }

    /// Diversity score per (condition, N); boot noises are shared across N.
    pub fn diversity_table(&self) -> std::result::Result<Vec<(u64, usize, f64, u64)>, Failure> {
        let per_cond = self.config.trajectories as u64;
        let mut table = Vec::new();
        for c in 0..self.config.conditions as u64 {
            let x_t = self.condition(c);
            for &n in &self.sweep {
                let cfg = self.sampler(Method::Dbim1, n).op("sampler config")?;
                let trajs = (0..per_cond)
                    .into_par_iter()
                    .map(|k| sample(&cfg, &self.schedule, &self.oracle, &x_t, c * per_cond + k))
                    .collect::<Result<Vec<_>>>()
                    .op("sample")?;
                let calls = trajs.iter().map(|t| t.predictor_calls as u64).sum();
                let samples: Vec<Vec<f64>> = trajs.iter().map(|t| t.terminal().to_vec()).collect();
                let score = diversity_score(&samples).op("diversity")?;
                table.push((c, n, score, calls));
            }
        }
        Ok(table)
    }

    fn run_diversity(&self) -> Run {
        let table = self.diversity_table()?;
        let eta = self.config.sampler.eta;
        let mut out = Outcome {
            header: ["condition_id", "n_steps", "eta", "score"].map(String::from).to_vec(),
            ..Default::default()
        };
        for &(c, n, score, calls) in &table {
            out.rows.push(vec![c.to_string(), n.to_string(), num(eta), num(score)]);
            out.predictor_calls += calls;
            out.steps += (n * self.config.trajectories) as u64;
        }
        for &n in &self.sweep {
            let scores: Vec<f64> = table.iter().filter(|r| r.1 == n).map(|r| r.2).collect();
            out.metrics.insert(
                format!("mean_score_n{n}"),
                scores.iter().sum::<f64>() / scores.len() as f64,
            );
        }
        out.metrics
            .insert("analytic_spread".into(), analytic_spread(self.problem.cov()));
        Ok(out)
    }
}

/// Mean over coordinates of `sqrt(S_ii)`.
pub fn analytic_spread(cov: &Matrix<f64>) -> f64 {
    let diag = cov.diag();
    diag.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>() / diag.len() as f64
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = vecops::norm(a).max(vecops::norm(b));
    if scale == 0.0 {
        0.0
    } else {
        vecops::norm(&vecops::sub(a, b)) / scale
    }
}
