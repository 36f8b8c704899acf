use bridgekit::bridge::forward_sample;
use bridgekit::linalg::Matrix;
use bridgekit::metrics::moment_check;
use bridgekit::noise::NoiseStream;
use bridgekit::oracle::{
    score_from_predictor, DataPredictor, GaussianBridgeProblem, GaussianOracle, PerturbedOracle, MAX_DIM,
};
use bridgekit::schedule::NoiseSchedule;
use bridgekit::BridgeError;

fn correlated() -> GaussianBridgeProblem<f64> {
    let gain = Matrix::from_rows(&[vec![0.6, 0.1], vec![-0.2, 0.3]]).unwrap();
    let cov = Matrix::from_rows(&[vec![0.8, 0.3], vec![0.3, 0.5]]).unwrap();
    GaussianBridgeProblem::new(gain, vec![0.1, -0.2], cov).unwrap()
}

#[test]
fn rejects_invalid_problems() {
    let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
    let err = GaussianBridgeProblem::new(Matrix::identity(2), vec![0.0; 2], asym).unwrap_err();
    assert!(matches!(err, BridgeError::InvalidProblem(_)));
    let indefinite = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
    let err = GaussianBridgeProblem::new(Matrix::identity(2), vec![0.0; 2], indefinite).unwrap_err();
    assert!(matches!(err, BridgeError::InvalidProblem(_)));
    let d = MAX_DIM + 1;
    let err = GaussianBridgeProblem::diagonal(0.0, vec![0.0; d], vec![1.0; d]).unwrap_err();
    assert!(matches!(err, BridgeError::InvalidProblem(_)));
}

#[test]
fn singular_covariance_predicts_the_mean() {
    let s = NoiseSchedule::brownian_bridge(1.0, 1.0).unwrap();
    let p = GaussianBridgeProblem::diagonal(0.5, vec![0.3, 0.1], vec![0.0, 0.0]).unwrap();
    let o = GaussianOracle::new(p, s);
    let got: Vec<f64> = o.predict(&[4.0, -2.0], 0.5, &[1.0, 1.0]).unwrap();
    assert!((got[0] - 0.8).abs() <= 1e-12 && (got[1] - 0.6).abs() <= 1e-12);
}

#[test]
fn score_from_prediction_matches_marginal_score() {
    let p = correlated();
    let noise = NoiseStream::new(4);
    for s in [
        NoiseSchedule::vp(0.1, 2.0, 1.0).unwrap(),
        NoiseSchedule::ve(0.01, 3.0, 1.0).unwrap(),
        NoiseSchedule::brownian_bridge(1.0, 1.0).unwrap(),
    ] {
        let o = GaussianOracle::new(p.clone(), s);
        for k in 0..200u64 {
            let t = 0.01 + 0.98 * noise.uniform(k, 0, 1)[0];
            let x: Vec<f64> = noise.gaussian(k, 1, 2);
            let xt: Vec<f64> = noise.gaussian(k, 2, 2);
            let via_pred = score_from_predictor(&s, &x, t, &xt, &o.predict(&x, t, &xt).unwrap()).unwrap();
            let direct = p.marginal_score(&s, &x, t, &xt).unwrap();
            let scale = direct.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
            for i in 0..2 {
                assert!((via_pred[i] - direct[i]).abs() <= 1e-8 * scale, "t = {t}");
            }
        }
    }
}

#[test]
fn posterior_mean_matches_monte_carlo_regression() {
    let s = NoiseSchedule::vp(0.1, 2.0, 1.0).unwrap();
    let p = GaussianBridgeProblem::diagonal(0.4, vec![0.3], vec![0.9]).unwrap();
    let o = GaussianOracle::new(p.clone(), s);
    let noise = NoiseStream::new(17);
    let (xt, t) = ([0.7], 0.6);
    let n = 200_000u64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        let x0 = p.sample_x0(&xt, &noise.gaussian::<f64>(k, 0, 1)).unwrap();
        let x = forward_sample(&s, &x0, &xt, t, &noise.gaussian::<f64>(k, 1, 1)).unwrap();
        sx += x[0];
        sy += x0[0];
        sxx += x[0] * x[0];
        sxy += x[0] * x0[0];
    }
    let nf = n as f64;
    let slope = (sxy / nf - sx * sy / (nf * nf)) / (sxx / nf - sx * sx / (nf * nf));
    let intercept = sy / nf - slope * sx / nf;
    let at0 = o.predict(&[0.0], t, &xt).unwrap()[0];
    let at1 = o.predict(&[1.0], t, &xt).unwrap()[0];
    assert!(
        ((at1 - at0) - slope).abs() <= 0.02 * slope.abs(),
        "{slope} vs {}",
        at1 - at0
    );
    let mid = sx / nf;
    let fitted = intercept + slope * mid;
    let oracle = at0 + (at1 - at0) * mid;
    assert!((fitted - oracle).abs() <= 0.02 * oracle.abs().max(0.1));
}

#[test]
fn marginals_match_forward_samples() {
    let p = correlated();
    let noise = NoiseStream::new(23);
    let xt = [0.5, -1.0];
    for s in [
        NoiseSchedule::vp(0.1, 2.0, 1.0).unwrap(),
        NoiseSchedule::brownian_bridge(1.0, 1.0).unwrap(),
    ] {
        for &t in &[0.1, 0.5, 0.9] {
            let xs: Vec<Vec<f64>> = (0..20_000u64)
                .map(|k| {
                    let x0 = p.sample_x0(&xt, &noise.gaussian::<f64>(k, 0, 2)).unwrap();
                    forward_sample(&s, &x0, &xt, t, &noise.gaussian::<f64>(k, 1, 2)).unwrap()
                })
                .collect();
            let (mean, cov) = p.marginal_at(&s, t, &xt).unwrap();
            let r = moment_check(&xs, t, &mean, &cov).unwrap();
            assert!(r.max_abs_z() <= 4.0, "z {}", r.max_abs_z());
            assert!(r.max_var_rel_err() <= 0.05, "var {}", r.max_var_rel_err());
        }
    }
}

#[test]
fn perturbed_oracle_shifts_by_bias() {
    let s = NoiseSchedule::vp(0.1, 2.0, 1.0).unwrap();
    let o = GaussianOracle::new(correlated(), s);
    let po = PerturbedOracle::new(o.clone(), 0.25, 3).unwrap();
    let norm = po.bias().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 0.25).abs() <= 1e-15);
    let (x, xt) = ([0.3, 0.2], [1.0, -1.0]);
    let base = o.predict(&x, 0.4, &xt).unwrap();
    let shifted = po.predict(&x, 0.4, &xt).unwrap();
    for i in 0..2 {
        assert_eq!(shifted[i], base[i] + po.bias()[i]);
    }
}
