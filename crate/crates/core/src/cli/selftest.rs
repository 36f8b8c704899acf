//! Fast built-in verification checks.

use super::experiments::relative_deviation;
use crate::bridge::{markov_x0_coefficient, markovian_rho};
use crate::error::Result;
use crate::noise::NoiseStream;
use crate::oracle::{GaussianBridgeProblem, GaussianOracle};
use crate::samplers::{decode, drift_dbim, drift_pfode, encode};
use crate::schedule::{GridKind, GridSpec, NoiseSchedule};

#[derive(Debug, Clone, Default)]
pub struct SelftestOptions {
    /// Replaces `lambda_t` by `(SNR_t - SNR_T) / 2` (no logarithm) to prove the checks can fail.
    pub corrupt_lambda: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn schedules() -> Vec<(&'static str, NoiseSchedule<f64>)> {
    vec![
        ("vp", NoiseSchedule::vp(0.1, 2.0, 1.0).unwrap()),
        ("brownian", NoiseSchedule::brownian_bridge(1.0, 1.0).unwrap()),
        ("ve", NoiseSchedule::ve(0.01, 2.0, 1.0).unwrap()),
    ]
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> Vec<CheckResult> {
    vec![
        check("drift-equivalence", drift_equivalence()),
        check("coefficient-identities", coefficient_identities(opts)),
        check("markov-boundary", markov_boundary()),
        check("round-trip", round_trip()),
        check("lambda-inverse", lambda_inverse(opts)),
    ]
}

fn drift_equivalence() -> Result<(bool, String)> {
    let noise = NoiseStream::new(101);
    let mut worst = 0.0f64;
    for (_, s) in schedules().into_iter().take(2) {
        let p = GaussianBridgeProblem::diagonal(0.5, vec![0.2, -0.4], vec![0.7, 1.3])?;
        let o = GaussianOracle::new(p, s);
        for k in 0..1000 {
            let t = 0.01 + 0.98 * noise.uniform(k, 0, 1)[0];
            let x: Vec<f64> = noise.gaussian(k, 1, 2);
            let xt: Vec<f64> = noise.gaussian(k, 2, 2);
            let a = drift_dbim(&s, &o, &x, t, &xt)?;
            let b = drift_pfode(&s, &o, &x, t, &xt)?;
            worst = worst.max(relative_deviation(&a, &b));
        }
    }
    Ok((worst <= 1e-9, format!("max rel dev {worst:.2e} (<= 1e-9)")))
}

fn lambda_value(s: &NoiseSchedule<f64>, t: f64, opts: &SelftestOptions) -> Result<f64> {
    if opts.corrupt_lambda {
        Ok(0.5 * (s.snr(t) - s.snr(s.horizon())))
    } else {
        s.lambda_of(t)
    }
}

fn coefficient_identities(opts: &SelftestOptions) -> Result<(bool, String)> {
    let noise = NoiseStream::new(102);
    let (mut id_err, mut lam_err) = (0.0f64, 0.0f64);
    let mut endpoint_ok = true;
    for (i, (_, s)) in schedules().into_iter().enumerate() {
        let end = s.coeffs(s.horizon())?;
        endpoint_ok &= end.a == 1.0 && end.b == 0.0 && end.c == 0.0;
        let ratio_end = s.alpha(s.horizon());
        for k in 0..200u64 {
            let t = 0.001 + 0.998 * noise.uniform(i as u64, k as u32, 1)[0];
            let c = s.coeffs(t)?;
            let alpha = s.alpha(t);
            id_err = id_err.max((c.a * ratio_end / alpha + c.b / alpha - 1.0).abs());
            let closed = 0.5 * (s.snr(t) - s.snr(s.horizon())).ln();
            let lam = lambda_value(&s, t, opts)?;
            lam_err = lam_err.max((lam - closed).abs() / closed.abs().max(1.0));
        }
    }
    let passed = endpoint_ok && id_err <= 1e-12 && lam_err <= 1e-10;
    Ok((
        passed,
        format!("identity err {id_err:.2e}, lambda err {lam_err:.2e}, endpoint ok {endpoint_ok}"),
    ))
}

fn markov_boundary() -> Result<(bool, String)> {
    let noise = NoiseStream::new(103);
    let (mut at_one, mut at_half) = (0.0f64, f64::INFINITY);
    for (_, s) in schedules().into_iter().take(2) {
        for k in 0..20u64 {
            let u = noise.uniform(k, 0, 2);
            let (lo, hi) = (0.01 + 0.98 * u[0].min(u[1]), 0.01 + 0.98 * u[0].max(u[1]));
            if hi - lo < 1e-3 {
                continue;
            }
            let rho = markovian_rho(&s, lo, hi)?;
            at_one = at_one.max(markov_x0_coefficient(&s, rho, lo, hi)?.abs());
            at_half = at_half.min(markov_x0_coefficient(&s, 0.5 * rho, lo, hi)?.abs());
        }
    }
    Ok((
        at_one <= 1e-12 && at_half > 1e-3,
        format!("|coef| at eta=1 {at_one:.2e}, min |coef| at eta=0.5 {at_half:.2e}"),
    ))
}

fn round_trip() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (_, s) in schedules().into_iter().take(2) {
        let p = GaussianBridgeProblem::diagonal(0.5, vec![0.2, -0.4], vec![0.7, 1.3])?;
        let o = GaussianOracle::new(p, s);
        let grid = GridSpec::new(GridKind::UniformWithBootStep, 200).build(&s)?;
        let xt = [0.8, -1.1];
        let x0 = [0.3, 1.7];
        let eps = encode(&s, &o, &x0, &xt, &grid)?;
        let back = decode(&s, &o, &xt, &grid, &eps)?;
        let err = relative_deviation(&back, &x0);
        worst = worst.max(err);
    }
    Ok((worst <= 1e-6, format!("max rel err {worst:.2e} at N = 200 (<= 1e-6)")))
}

fn lambda_inverse(opts: &SelftestOptions) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (_, s) in schedules() {
        for &t in &[0.01, 0.3, 0.5, 0.9] {
            let lam = lambda_value(&s, t, opts)?;
            let back = match s.time_of_lambda(lam) {
                Ok(v) => v,
                Err(_) => return Ok((false, format!("lambda {lam} not invertible at t = {t}"))),
            };
            worst = worst.max((back - t).abs() / t);
        }
    }
    Ok((worst <= 1e-10, format!("max rel err {worst:.2e} (<= 1e-10)")))
}

/// Formats results as a fixed-width table.
pub fn render_table(results: &[CheckResult]) -> String {
    let mut out = format!("{:<24} {:<6} {}\n", "check", "result", "detail");
    for r in results {
        out.push_str(&format!(
            "{:<24} {:<6} {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        ));
    }
    out
}
