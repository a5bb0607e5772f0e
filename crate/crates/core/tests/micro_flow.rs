mod common;

use mfmarket::micro_flow::{
    combined_drift, drift_coeffs, drift_coeffs_series, flow_rate, impact, quartic_potential, soft_abs, FlowParams,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn generic() -> FlowParams {
    FlowParams { phi: 0.8, lambda: 1.5, kappa: 0.3, eta: 0.6, beta_impact: 3.0, a_hat: 0.5, abar_tau: 0.2, theta: 0.0 }
}

/// Taylor coefficients 1..=3 of `f` at zero by a scaled least-squares
/// polynomial fit.
fn taylor3<F: Fn(f64) -> f64>(f: F) -> [f64; 3] {
    let (half, deg, pts) = (0.05, 12, 401);
    let xs: Vec<f64> = (0..pts).map(|i| -1.0 + 2.0 * i as f64 / (pts - 1) as f64).collect();
    let x = DMatrix::from_fn(pts, deg + 1, |i, j| xs[i].powi(j as i32));
    let y = DVector::from_iterator(pts, xs.iter().map(|&x| f(x * half)));
    let c = x.svd(true, true).solve(&y, 1e-15).unwrap();
    [c[1] / half, c[2] / (half * half), c[3] / half.powi(3)]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn soft_abs_examples() {
    assert_eq!(soft_abs(2.0, 0.0), 0.0);
    assert!((soft_abs(2.0, 0.1) - 0.009_934_0).abs() < 5e-8);
    let v = soft_abs(50.0, 1.0);
    assert!((v - (1.0 - std::f64::consts::LN_2 / 50.0)).abs() < 1e-12);
    assert!((v - 1.0).abs() < 0.02);
    assert!((soft_abs(1e3, 5.0) - (5.0 - std::f64::consts::LN_2 / 1e3)).abs() < 1e-12);
}

#[test]
fn soft_abs_shape() {
    for beta in [0.5, 2.0, 40.0] {
        let zs: Vec<f64> = (0..=2000).map(|i| -2.0 + i as f64 * 0.002).collect();
        let h: Vec<f64> = zs.iter().map(|&z| soft_abs(beta, z)).collect();
        for (i, &z) in zs.iter().enumerate() {
            let gap = z.abs() - h[i];
            assert!(gap >= -1e-15 && gap <= std::f64::consts::LN_2 / beta + 1e-15);
            assert!((h[i] - soft_abs(beta, -z)).abs() < 1e-15);
            assert!(h[i] >= 0.0);
        }
        for w in h.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-14);
        }
    }
}

#[test]
fn flow_rate_examples() {
    let fp = FlowParams { phi: 1.0, lambda: 2.0, kappa: 0.0, ..generic() };
    assert_eq!(flow_rate(&fp, 0.0, 0.0), 0.0);
    assert!((flow_rate(&fp, 0.5, 0.0) - 0.75).abs() < 1e-15);
}

#[test]
fn impact_shape() {
    let fp = generic();
    let b = fp.b();
    assert_eq!(impact(&fp, 0.0), 0.0);
    assert!((impact(&fp, b) - fp.eta * soft_abs(fp.beta_impact, b)).abs() < 1e-15);
    for a in [b - 0.05, b + 0.05] {
        assert!(impact(&fp, a) < impact(&fp, b));
    }
    let sharp = FlowParams { beta_impact: 1e4, ..fp };
    assert!(impact(&sharp, 2.0 * b).abs() < 1e-3);
    let far = 1e3;
    assert!((impact(&fp, far) / (-fp.eta * far) - 1.0).abs() < 1e-3);
}

#[test]
fn taylor_coefficients_match_numerical_fit() {
    for fp in [
        generic(),
        FlowParams { eta: 1.4, beta_impact: 0.7, abar_tau: 0.9, ..generic() },
        FlowParams { kappa: 0.0, lambda: 0.2, ..generic() },
    ] {
        let c = drift_coeffs(&fp);
        let [c1, c2, c3] = taylor3(|y| combined_drift(&fp, y, 0.0));
        assert!(rel(c1, c.xi - c.g) < 1e-6, "{c1} vs {}", c.xi - c.g);
        assert!(rel(c2, c.rho) < 1e-6, "{c2} vs {}", c.rho);
        assert!(rel(c3, c.zeta) < 1e-6, "{c3} vs {}", c.zeta);
        let [d1, _, _] = taylor3(|m| combined_drift(&fp, 0.0, m));
        assert!(rel(d1, c.g) < 1e-6, "{d1} vs {}", c.g);
    }
}

#[test]
fn coefficient_special_cases() {
    let off = FlowParams { eta: 0.0, ..generic() };
    let c = drift_coeffs(&off);
    assert_eq!((c.xi, c.rho, c.zeta, c.g), (off.phi + off.kappa, 0.0, off.lambda, off.kappa));

    let at_threshold = FlowParams { abar_tau: 0.5, ..generic() };
    let c = drift_coeffs(&at_threshold);
    let fp = at_threshold;
    assert!((c.xi - (fp.phi + fp.kappa)).abs() < 1e-15);
    assert!((c.rho + 0.5 * fp.beta_impact * fp.eta * fp.phi * fp.phi).abs() < 1e-15);
    assert!((c.zeta - fp.lambda).abs() < 1e-15);
    assert_eq!(drift_coeffs_series(&fp), c);
}

#[test]
fn printed_series_departs_from_exact_coefficients() {
    // The printed gain 1 + eta x (1 + x^2/3) carries the flipped quartic sign:
    // it exceeds 1 + eta tanh(x) by eta (x + x^3/3 - tanh x) ~ 2 eta x^3 / 3.
    let fp = FlowParams { abar_tau: 0.45, ..generic() };
    let (exact, series) = (drift_coeffs(&fp), drift_coeffs_series(&fp));
    let x = fp.beta_impact * fp.b();
    let gap = fp.eta * (x + x.powi(3) / 3.0 - x.tanh()) * (fp.phi + fp.kappa);
    assert!(rel(series.xi - exact.xi, gap) < 1e-12, "{series:?} {exact:?}");
    assert!(rel(gap, 2.0 * fp.eta * x.powi(3) / 3.0 * (fp.phi + fp.kappa)) < 0.05);
    assert!(rel(series.zeta, exact.zeta) > 1e-3, "{series:?} {exact:?}");
}

#[test]
fn large_return_asymptote() {
    let fp = FlowParams { phi: 0.0, lambda: 1.0, kappa: 0.0, eta: 2.0, ..generic() };
    let y: f64 = 30.0;
    assert!((combined_drift(&fp, y, 0.0) / (-y.powi(3)) - 1.0).abs() < 1e-3);
    assert!((combined_drift(&fp, -y, 0.0) / (-3.0 * y.powi(3)) - 1.0).abs() < 1e-3);
}

#[test]
fn mean_field_response_of_drift() {
    let fp = generic();
    let c = drift_coeffs(&fp);
    let dm = 1e-4;
    let resp = (combined_drift(&fp, 0.0, dm) - combined_drift(&fp, 0.0, 0.0)) / dm;
    assert!(rel(resp, c.g) < 1e-3, "{resp} vs {}", c.g);
}

#[test]
fn quartic_potential_sketch() {
    let fp = FlowParams { kappa: 0.0, phi: 0.3, lambda: 0.5, eta: 0.3, beta_impact: 1.0, a_hat: 0.3, abar_tau: 0.2, theta: 0.0 };
    let c = drift_coeffs(&fp);
    for i in 0..=30 {
        let y = -0.3 + 0.02 * i as f64;
        let u = -common::integrate(|s| combined_drift(&fp, s, 0.0), 0.0, y, 1e-12);
        assert!((u - quartic_potential(&c, 0.0, y)).abs() < 1e-4, "y {y}: {u} vs {}", quartic_potential(&c, 0.0, y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn flow_rate_is_odd(
        phi in 0.0..5.0f64, lambda in 0.0..5.0f64, kappa in 0.0..5.0f64,
        y in -3.0..3.0f64, m in -3.0..3.0f64,
    ) {
        let fp = FlowParams { phi, lambda, kappa, ..generic() };
        prop_assert_eq!(flow_rate(&fp, -y, -m), -flow_rate(&fp, y, m));
    }
}
