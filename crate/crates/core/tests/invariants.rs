use std::f64::consts::TAU;

use cdd_core::dynamics::{default_sample_times, run_ensemble, CurveKind, Estimator, ProtocolKind, ProtocolSpec};
use cdd_core::noise::{make_correlated_pair, make_ou_trace, stream_rng, NoiseConfig, OuParams, OuStepper, StreamRole};
use cdd_core::protocol::{DriveConfig, ShiftPolicy};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn free_spec(duration: f64, seed: u64) -> ProtocolSpec {
    let w1 = TAU * 2e6;
    let drive = DriveConfig::new(w1, 0.1 * w1, ShiftPolicy::Resonant).unwrap();
    let noise = NoiseConfig {
        delta: OuParams::new(25e-6, 2f64.sqrt() / 3.6e-6, 1e-9).unwrap(),
        eps: OuParams::new(500e-6, 0.005, 1e-9).unwrap(),
        c: 1.0,
        seed,
    };
    ProtocolSpec::new(ProtocolKind::Free, drive, noise, duration).unwrap()
}

/// Variance of `Σ_{i<n} x_i dt` for a sampled stationary OU sequence.
fn phase_variance(sigma: f64, tau: f64, dt: f64, n: usize) -> f64 {
    let rho = (-dt / tau).exp();
    let mut s = n as f64;
    let mut rk = 1.0;
    for k in 1..n {
        rk *= rho;
        s += 2.0 * (n - k) as f64 * rk;
    }
    sigma * sigma * dt * dt * s
}

#[test]
fn free_precession_matches_gaussian_phase_average() {
    let spec = free_spec(8e-6, 3);
    let times = default_sample_times(&spec, 30);
    let ens = run_ensemble(&spec, 2000, &times).unwrap();
    let curve = ens.curve(CurveKind::AvgFidelity, Estimator::Raw).unwrap();
    let sigma = 2f64.sqrt() / 3.6e-6;
    for ((t, f), se) in curve.times.iter().zip(&curve.values).zip(&curve.stderr) {
        let n = (t / spec.dt).round() as usize;
        let mean_cos = (-phase_variance(sigma, 25e-6, spec.dt, n) / 2.0).exp();
        let expect = (2.0 + mean_cos) / 3.0;
        assert!(
            (f - expect).abs() <= 3.0 * se + 1e-12,
            "t={t:e}: {f} vs {expect} (se {se})"
        );
    }
}

#[test]
fn average_fidelity_floor_is_two_thirds() {
    let spec = free_spec(60e-6, 4);
    let times: Vec<f64> = (40..=60)
        .map(|k| k as f64 * 1e-6)
        .map(|t| (t / spec.dt).round() * spec.dt)
        .collect();
    let ens = run_ensemble(&spec, 500, &times).unwrap();
    let curve = ens.curve(CurveKind::AvgFidelity, Estimator::Raw).unwrap();
    for v in &curve.values {
        assert!((v - 2.0 / 3.0).abs() < 0.02, "{v}");
    }
}

#[test]
fn ou_step_halving_keeps_marginal() {
    let (tau, sigma, dt) = (25e-6, 1.0, 10e-6);
    let d = 2.0 * sigma * sigma / tau;
    let full = OuStepper::new(dt, tau, d);
    let half = OuStepper::new(dt / 2.0, tau, d);
    let mut rng = stream_rng(9, 0, StreamRole::Delta);
    let x0 = 0.8;
    let n = 100_000;
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        a.push(full.step(x0, rng.sample(StandardNormal)));
        let mid = half.step(x0, rng.sample(StandardNormal));
        b.push(half.step(mid, rng.sample(StandardNormal)));
    }
    let m = (-dt / tau).exp();
    let mean = x0 * m;
    let var = sigma * sigma * (1.0 - m * m);
    let nf = n as f64;
    for s in [&a, &b] {
        let sm = s.iter().sum::<f64>() / nf;
        let sv = s.iter().map(|x| (x - sm).powi(2)).sum::<f64>() / (nf - 1.0);
        assert!((sm - mean).abs() < 4.0 * (var / nf).sqrt(), "mean {sm} vs {mean}");
        assert!((sv - var).abs() < 4.0 * var * (2.0 / nf).sqrt(), "var {sv} vs {var}");
    }
    // two-sample Kolmogorov-Smirnov statistic at the 0.1% level
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut ks) = (0, 0, 0f64);
    while i < n && j < n {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        ks = ks.max((i as f64 - j as f64).abs() / nf);
    }
    assert!(ks < 1.95 * (2.0 / nf).sqrt(), "KS {ks}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn correlated_marginal_is_ou(c in -1.0f64..=1.0, seed in 0u64..1000) {
        let tau = 10.0;
        let p = OuParams::new(tau, 0.3, 1.0).unwrap();
        let n = 200_000;
        let mut r1 = stream_rng(seed, 0, StreamRole::Eps1);
        let mut ri = stream_rng(seed, 0, StreamRole::EpsInd);
        let (e1, e2) = make_correlated_pair(&p, c, n, &mut r1, &mut ri).unwrap();
        let nf = n as f64;
        let rho = (-1.0 / tau).exp();
        let var_of = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / nf;
        let v2 = var_of(&e2.values);
        let se_var = 0.09 * (2.0 * (1.0 + rho * rho) / ((1.0 - rho * rho) * nf)).sqrt();
        prop_assert!((v2 - 0.09).abs() < 4.0 * se_var, "variance {}", v2);
        let lag = 10;
        let acf = e2.values[..n - lag].iter().zip(&e2.values[lag..]).map(|(a, b)| a * b).sum::<f64>() / ((nf - lag as f64) * v2);
        prop_assert!((acf - (-1.0f64).exp()).abs() < 0.03, "acf {}", acf);
        let cross = e1.values.iter().zip(&e2.values).map(|(a, b)| a * b).sum::<f64>() / nf;
        let corr = cross / (var_of(&e1.values) * v2).sqrt();
        prop_assert!((corr - c).abs() < 0.03, "corr {} vs {}", corr, c);
    }

    #[test]
    fn ou_trace_is_seed_deterministic(seed in any::<u64>(), realization in 0u64..10_000) {
        let p = OuParams::new(1.0, 1.0, 0.1).unwrap();
        let a = make_ou_trace(&p, 64, &mut stream_rng(seed, realization, StreamRole::Delta)).unwrap();
        let b = make_ou_trace(&p, 64, &mut stream_rng(seed, realization, StreamRole::Delta)).unwrap();
        prop_assert_eq!(a, b);
    }
}
