//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bridgekit::bridge::{markov_x0_coefficient, markovian_rho, simulate_inference_chain, VarianceParam};
use bridgekit::linalg::Matrix;
use bridgekit::metrics::{diversity_score, empirical_moments, fit_order, moment_check, wasserstein2_gaussian};
use bridgekit::noise::NoiseStream;
use bridgekit::oracle::{GaussianBridgeProblem, GaussianOracle};
use bridgekit::samplers::{
    dbim_step, decode, drift_dbim, drift_pfode, encode, sample, sample_from_boot, slerp_interpolate, Method,
    SamplerConfig,
};
use bridgekit::schedule::{make_lambda_grid, GridKind, GridSpec, NoiseSchedule, TimeGrid};
use bridgekit::Result;
use rayon::prelude::*;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn vp() -> NoiseSchedule<f64> {
    NoiseSchedule::vp(0.1, 2.0, 1.0).unwrap()
}

fn brownian() -> NoiseSchedule<f64> {
    NoiseSchedule::brownian_bridge(1.0, 1.0).unwrap()
}

fn problem_2d() -> GaussianBridgeProblem<f64> {
    let gain = Matrix::from_rows(&[vec![0.5, 0.1], vec![-0.1, 0.4]]).unwrap();
    let cov = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.8]]).unwrap();
    GaussianBridgeProblem::new(gain, vec![0.2, -0.4], cov).unwrap()
}

fn problem_1d() -> GaussianBridgeProblem<f64> {
    GaussianBridgeProblem::diagonal(0.5, vec![0.3], vec![0.8]).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let s = norm(a).max(norm(b));
    if s == 0.0 {
        0.0
    } else {
        diff_norm(a, b) / s
    }
}

fn drift_equivalence() -> Result<Verdict> {
    let noise = NoiseStream::new(2024);
    let mut worst = 0.0f64;
    for (i, s) in [vp(), brownian()].into_iter().enumerate() {
        let o = GaussianOracle::new(problem_2d(), s);
        let devs = (0..1000u64)
            .into_par_iter()
            .map(|k| {
                let traj = 1000 * i as u64 + k;
                let t = 0.01 + 0.98 * noise.uniform(traj, 0, 1)[0];
                let x: Vec<f64> = noise.gaussian(traj, 1, 2);
                let xt: Vec<f64> = noise.gaussian(traj, 2, 2);
                Ok(rel_dev(
                    &drift_dbim(&s, &o, &x, t, &xt)?,
                    &drift_pfode(&s, &o, &x, t, &xt)?,
                ))
            })
            .collect::<Result<Vec<f64>>>()?;
        worst = devs.into_iter().fold(worst, f64::max);
    }
    Ok(verdict(worst <= 1e-9, format!("max rel dev {worst:.2e} (<= 1e-9)")))
}

fn marginal_preservation() -> Result<Verdict> {
    let noise = NoiseStream::new(7);
    let (x0, xt) = ([0.5, 2.0], [1.0, -1.0]);
    let n_traj = 100_000u64;
    let (mut max_z, mut max_var) = (0.0f64, 0.0f64);
    for s in [brownian(), vp()] {
        let grid = GridSpec::new(GridKind::UniformWithBootStep, 10).build(&s)?;
        for eta in [0.0, 0.5, 1.0] {
            let rhos = VarianceParam::make_rhos(&s, &grid, eta)?;
            let chains = (0..n_traj)
                .into_par_iter()
                .map(|k| simulate_inference_chain(&s, &grid, &rhos, &x0, &xt, &noise, k))
                .collect::<Result<Vec<_>>>()?;
            for n in 0..grid.steps() {
                let t = grid.t(n);
                let k = s.coeffs(t)?;
                let mean: Vec<f64> = (0..2).map(|i| k.a * xt[i] + k.b * x0[i]).collect();
                let cov = Matrix::diagonal(&[k.c * k.c; 2]);
                let xs: Vec<Vec<f64>> = chains.iter().map(|c| c[n].clone()).collect();
                let r = moment_check(&xs, t, &mean, &cov)?;
                max_z = max_z.max(r.max_abs_z());
                max_var = max_var.max(r.max_var_rel_err());
            }
        }
    }
    Ok(verdict(
        max_z <= 4.0 && max_var <= 0.03,
        format!(
            "max |z| {max_z:.2} (<= 4), max var rel err {:.2}% (<= 3%)",
            100.0 * max_var
        ),
    ))
}

fn markov_boundary() -> Result<Verdict> {
    let noise = NoiseStream::new(31);
    let (mut at_one, mut at_half) = (0.0f64, f64::INFINITY);
    let mut pairs = 0;
    for s in [vp(), brownian()] {
        let mut k = 0u64;
        let mut found = 0;
        while found < 20 {
            let u = noise.uniform(k, 0, 2);
            k += 1;
            let (lo, hi) = (0.01 + 0.98 * u[0].min(u[1]), 0.01 + 0.98 * u[0].max(u[1]));
            if hi - lo < 1e-3 {
                continue;
            }
            found += 1;
            let rho = markovian_rho(&s, lo, hi)?;
            at_one = at_one.max(markov_x0_coefficient(&s, rho, lo, hi)?.abs());
            at_half = at_half.min(markov_x0_coefficient(&s, 0.5 * rho, lo, hi)?.abs());
        }
        pairs += found;
    }
    Ok(verdict(
        at_one <= 1e-12 && at_half > 1e-3,
        format!(
            "{pairs} pairs: max |coef| at eta=1 {at_one:.2e} (<= 1e-12), min |coef| at eta=0.5 {at_half:.2e} (> 1e-3)"
        ),
    ))
}

/// RMS terminal error against the exact flow from the boot state.
fn flow_error(s: &NoiseSchedule<f64>, o: &GaussianOracle<f64>, method: Method, grid: &TimeGrid<f64>) -> Result<f64> {
    let xt = [0.8];
    let n = grid.steps();
    let cfg = SamplerConfig::new(method, 0.0, grid.clone(), 11)?;
    let sq = (0..20u64)
        .into_par_iter()
        .map(|k| {
            let tr = sample(&cfg, s, o, &xt, k)?;
            let exact = o
                .problem()
                .exact_flow(s, tr.at_index(n - 1), grid.t(n - 1), grid.t(0), &xt)?;
            Ok(diff_norm(tr.terminal(), &exact).powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

fn convergence_orders() -> Result<Verdict> {
    let steps = [8usize, 16, 32, 64, 128];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, s) in [("bb", brownian()), ("vp", vp())] {
        let o = GaussianOracle::new(problem_1d(), s);
        for (method, lo, hi) in [
            (Method::Dbim1, 0.8, 1.2),
            (Method::Dbim2, 1.7, 2.3),
            (Method::Dbim3, 2.5, f64::INFINITY),
        ] {
            let errs = steps
                .iter()
                .map(|&n| flow_error(&s, &o, method, &make_lambda_grid(&s, n, 1e-4, 1.0, 1e-4)?))
                .collect::<Result<Vec<f64>>>()?;
            let slope = fit_order(&steps, &errs)?;
            ok &= slope >= lo && slope <= hi;
            parts.push(format!("{label}/{method} {slope:.2}"));
        }
    }
    Ok(verdict(
        ok,
        format!("slopes {} (1.0+-0.2, 2.0+-0.3, >= 2.5)", parts.join(", ")),
    ))
}

fn euler_discretization() -> Result<Verdict> {
    let steps = [64usize, 128, 256, 512, 1024];
    let mut ok = true;
    let mut parts = Vec::new();
    let xt = [0.8];
    for (label, s) in [("bb", brownian()), ("vp", vp())] {
        let o = GaussianOracle::new(problem_1d(), s);
        let mut diffs = Vec::new();
        for &n in &steps {
            let grid = make_lambda_grid(&s, n, 1e-4, 1.0, 1e-4)?;
            let euler = SamplerConfig::new(Method::PfOdeEuler, 0.0, grid.clone(), 3)?;
            let dbim = SamplerConfig::new(Method::Dbim1, 0.0, grid, 3)?;
            let sq = (0..20u64)
                .into_par_iter()
                .map(|k| {
                    let a = sample(&euler, &s, &o, &xt, k)?;
                    let b = sample_from_boot(&dbim, &s, &o, &xt, a.boot_noise.clone(), k)?;
                    Ok(diff_norm(a.terminal(), b.terminal()).powi(2))
                })
                .collect::<Result<Vec<f64>>>()?;
            diffs.push((sq.iter().sum::<f64>() / sq.len() as f64).sqrt());
        }
        let slope = fit_order(&steps, &diffs)?;
        let c = steps.iter().zip(&diffs).map(|(&n, d)| n as f64 * d).fold(0.0, f64::max);
        ok &= (slope - 1.0).abs() <= 0.2;
        parts.push(format!("{label} slope {slope:.2} (C = {c:.3})"));
    }
    Ok(verdict(ok, format!("{} (1.0+-0.2)", parts.join(", "))))
}

fn posterior_correctness() -> Result<Verdict> {
    let s = vp();
    let p = problem_2d();
    let o = GaussianOracle::new(p.clone(), s);
    let xt = [0.7, -0.3];
    let m = p.prior_mean(&xt)?;
    let bound = 0.03 * p.cov().trace().sqrt();
    let mut ok = true;
    let mut parts = Vec::new();
    for (method, eta, n) in [
        (Method::Dbim1, 0.0, 400),
        (Method::Dbim1, 1.0, 400),
        (Method::SdeEulerMaruyama, 0.0, 2000),
    ] {
        let grid = GridSpec::new(GridKind::UniformWithBootStep, n).build(&s)?;
        let cfg = SamplerConfig::new(method, eta, grid, 41)?;
        let xs = (0..10_000u64)
            .into_par_iter()
            .map(|k| Ok(sample(&cfg, &s, &o, &xt, k)?.terminal().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let (em, ec) = empirical_moments(&xs)?;
        let w2 = wasserstein2_gaussian(&em, &ec, &m, p.cov())?;
        ok &= w2 <= bound;
        parts.push(format!("{method}(eta={eta},N={n}) {w2:.4}"));
    }
    Ok(verdict(ok, format!("W2 {} (<= {bound:.4})", parts.join(", "))))
}

fn round_trip() -> Result<Verdict> {
    let s = vp();
    let p = problem_2d();
    let o = GaussianOracle::new(p.clone(), s);
    let grid = GridSpec::new(GridKind::UniformWithBootStep, 1000).build(&s)?;
    let noise = NoiseStream::new(5);
    let xt = [0.7, -0.3];
    let errs = (0..16u64)
        .into_par_iter()
        .map(|k| {
            let x0 = p.sample_x0(&xt, &noise.gaussian::<f64>(k, 0, 2))?;
            let eps = encode(&s, &o, &x0, &xt, &grid)?;
            Ok(diff_norm(&decode(&s, &o, &xt, &grid, &eps)?, &x0) / norm(&x0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = errs.into_iter().fold(0.0, f64::max);
    let (ea, eb) = (noise.gaussian::<f64>(100, 0, 2), noise.gaussian::<f64>(101, 0, 2));
    let ends_exact = decode(&s, &o, &xt, &grid, &slerp_interpolate(&ea, &eb, 0.0)?)?
        == decode(&s, &o, &xt, &grid, &ea)?
        && decode(&s, &o, &xt, &grid, &slerp_interpolate(&ea, &eb, 1.0)?)? == decode(&s, &o, &xt, &grid, &eb)?;
    Ok(verdict(
        worst <= 1e-6 && ends_exact,
        format!("max recon rel err {worst:.2e} (<= 1e-6), slerp endpoint decodes exact: {ends_exact}"),
    ))
}

fn limits() -> Result<Verdict> {
    // SNR_T / SNR_t below 1e-8 on the tested times
    let s = NoiseSchedule::vp(0.1, 120.0, 1.0)?;
    let mut ddim = 0.0f64;
    let (x, xh, xt) = ([0.7, -1.2], [0.3, 0.4], [5.0, -3.0]);
    for &(ts, tt) in &[(0.1, 0.2), (0.2, 0.35), (0.3, 0.5), (0.45, 0.6)] {
        assert!(s.snr(1.0) / s.snr(tt) <= 1e-8);
        let got = dbim_step(&s, 0.0, &x, &xt, &xh, ts, tt, &[0.0, 0.0])?;
        let r = s.sigma(ts) / s.sigma(tt);
        let w = s.sigma(ts) * (s.alpha(ts) / s.sigma(ts) - s.alpha(tt) / s.sigma(tt));
        let want: Vec<f64> = (0..2).map(|i| r * x[i] + w * xh[i]).collect();
        ddim = ddim.max(diff_norm(&got, &want) / norm(&want));
    }

    let s = NoiseSchedule::brownian_bridge(1e-8, 1.0)?;
    let noise = NoiseStream::new(8);
    let (x0, xt) = ([1.2, -0.6, 2.0], [0.8, -1.0, 1.5]);
    let mut fm = 0.0f64;
    for k in 0..50u64 {
        let u = noise.uniform(k, 0, 2);
        let (ts, tt) = (0.05 + 0.9 * u[0].min(u[1]), 0.05 + 0.9 * u[0].max(u[1]));
        if tt - ts < 1e-3 {
            continue;
        }
        let x = bridgekit::bridge::forward_sample(&s, &x0, &xt, tt, &noise.gaussian::<f64>(k, 1, 3))?;
        let rho = markovian_rho(&s, ts, tt)?;
        let got = dbim_step(&s, rho, &x, &xt, &x0, ts, tt, &noise.gaussian::<f64>(k, 2, 3))?;
        let want: Vec<f64> = (0..3).map(|i| ts * xt[i] + (1.0 - ts) * x0[i]).collect();
        fm = fm.max(diff_norm(&got, &want) / norm(&want));
    }
    Ok(verdict(
        ddim <= 1e-6 && fm <= 1e-4,
        format!("DDIM rel err {ddim:.2e} (<= 1e-6), flow-matching rel err {fm:.2e} (<= 1e-4)"),
    ))
}

fn diversity_trend() -> Result<Verdict> {
    let s = brownian();
    let p = GaussianBridgeProblem::diagonal(0.5, vec![0.0, 0.0], vec![1.0, 0.5])?;
    let o = GaussianOracle::new(p.clone(), s);
    let noise = NoiseStream::new(9);
    let (conditions, per_cond) = (20u64, 2000u64);
    let sweep = [5usize, 10, 20, 50, 200];
    let mut means = Vec::new();
    for &n in &sweep {
        let grid = GridSpec::new(GridKind::UniformWithBootStep, n).build(&s)?;
        let cfg = SamplerConfig::new(Method::Dbim1, 0.0, grid, 9)?;
        let mut total = 0.0;
        for c in 0..conditions {
            let xt: Vec<f64> = noise.gaussian(c, u32::MAX - 1, 2);
            let xs = (0..per_cond)
                .into_par_iter()
                .map(|k| Ok(sample(&cfg, &s, &o, &xt, c * per_cond + k)?.terminal().to_vec()))
                .collect::<Result<Vec<_>>>()?;
            total += diversity_score(&xs)?;
        }
        means.push(total / conditions as f64);
    }
    let analytic = p.cov().diag().iter().map(|v| v.sqrt()).sum::<f64>() / 2.0;
    let monotone = means[..4].windows(2).all(|w| w[0] < w[1]);
    let rel = (means[4] - analytic).abs() / analytic;
    let table: Vec<String> = sweep
        .iter()
        .zip(&means)
        .map(|(n, m)| format!("N={n}: {m:.4}"))
        .collect();
    Ok(verdict(
        monotone && rel <= 0.05,
        format!(
            "{}; analytic {analytic:.4}, rel err at N=200 {:.2}% (<= 5%), monotone {monotone}",
            table.join(", "),
            100.0 * rel
        ),
    ))
}

fn thread_invariance() -> Result<Verdict> {
    let tmp = std::env::temp_dir().join(format!("bridgekit-acceptance-{}", std::process::id()));
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut same = true;
    let mut failed = Vec::new();
    for name in [
        "sample",
        "marginals",
        "drift_check",
        "convergence",
        "roundtrip",
        "interpolate",
        "diversity",
    ] {
        let cfg = configs.join(format!("{name}.json"));
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let out = tmp.join(format!("{name}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_bridgekit"))
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--threads", threads])
                .env_remove("BRIDGEKIT_THREADS")
                .status()
                .expect("spawn bridgekit");
            if !status.success() {
                failed.push(format!("{name}@{threads}"));
                continue;
            }
            let csv = std::fs::read_dir(&out)
                .expect("output dir")
                .filter_map(|e| e.ok().map(|e| e.path()))
                .find(|p| p.extension().is_some_and(|e| e == "csv"))
                .expect("csv output");
            outputs.push(std::fs::read(csv).expect("read csv"));
        }
        same &= outputs.len() == 2 && outputs[0] == outputs[1];
    }
    let _ = std::fs::remove_dir_all(&tmp);
    Ok(verdict(
        same && failed.is_empty(),
        format!("7 experiments byte-identical at 1 and 8 threads: {same}; failed runs: {failed:?}"),
    ))
}

type Criterion = (u32, &'static str, fn() -> Result<Verdict>, Option<f64>);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "drift equivalence", drift_equivalence, Some(5.0)),
        (2, "marginal preservation", marginal_preservation, Some(60.0)),
        (3, "markov boundary", markov_boundary, None),
        (4, "convergence orders", convergence_orders, Some(30.0)),
        (5, "euler discretization", euler_discretization, None),
        (6, "terminal posterior", posterior_correctness, None),
        (7, "round trip", round_trip, None),
        (8, "limits", limits, None),
        (9, "diversity trend", diversity_trend, None),
        (10, "thread invariance", thread_invariance, None),
    ];
    let mut failures = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let (passed, detail) = match result {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = budget.is_none_or(|b| secs < b);
        let budget_note = budget.map(|b| format!(" (< {b} s)")).unwrap_or_default();
        let ok = passed && in_time;
        if !ok {
            failures += 1;
        }
        println!(
            "C{id:<2} {} {name}: {detail}; {secs:.2} s{budget_note}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
