//! Independent quadrature oracles shared by the integration tests.
#![allow(dead_code)]

use mfmarket::PotentialParams;
use rand::Rng;

/// Adaptive integration: double-exponential panels, bisected until the two
/// halves agree with the whole to `rel` times the integral of `|f|`.
pub fn integrate<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, rel: f64) -> f64 {
    fn de<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
        quadrature::double_exponential::integrate(f, a, b, 1e-300).integral
    }
    fn rec<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let (l, r) = (de(f, a, mid), de(f, mid, b));
        if depth >= 16 || (l + r - whole).abs() <= tol {
            return l + r;
        }
        rec(f, a, mid, l, tol, depth + 1) + rec(f, mid, b, r, tol, depth + 1)
    }
    let scale = de(|x| f(x).abs(), a, b).abs();
    if scale == 0.0 {
        return 0.0;
    }
    rec(f, a, b, de(f, a, b), rel * scale, 0)
}

/// Integrate over `breaks` (ascending), panel by panel.
pub fn integrate_panels<F: Fn(f64) -> f64 + Copy>(f: F, breaks: &[f64], tol: f64) -> f64 {
    breaks.windows(2).map(|w| integrate(f, w[0], w[1], tol)).sum()
}

fn ln_gauss(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (y - mean) * (y - mean) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// `log Psi0(y)` up to a constant, written out directly from the two-component
/// log-normal mixture.
pub fn ln_psi0(p: &PotentialParams, y: f64) -> f64 {
    let l1 = (1.0 - p.a).ln() + ln_gauss(y, p.mu1 * p.t, p.sigma1 * p.sigma1 * p.t);
    let l2 = p.a.ln() + ln_gauss(y, p.mu2 * p.t, p.sigma2 * p.sigma2 * p.t);
    let mx = l1.max(l2);
    mx + ((l1 - mx).exp() + (l2 - mx).exp()).ln()
}

/// Integration breakpoints: an outer window of 12 standard deviations past the
/// wells plus the well centres and any tilt centre.
pub fn breakpoints(p: &PotentialParams, extra: &[f64]) -> Vec<f64> {
    let smax = p.sigma1.max(p.sigma2) * p.t.sqrt();
    let (lo, hi) = (p.mu1.min(p.mu2) * p.t, p.mu1.max(p.mu2) * p.t);
    let mut v = vec![lo - 12.0 * smax, hi + 12.0 * smax, p.mu1 * p.t, p.mu2 * p.t];
    for &e in extra {
        v.push(e.clamp(lo - 12.0 * smax, hi + 12.0 * smax));
    }
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

/// Quadrature moments of `w(y) = Psi0^2(y) exp(-(2/h^2)(g y^2/2 - (g m + b) y))`.
pub struct Tilted {
    /// `log int w` with `Psi0^2` normalized to one.
    pub ln_z: f64,
    pub mean: f64,
    pub var: f64,
}

pub fn tilted(p: &PotentialParams, g: f64, m: f64, b: f64) -> Tilted {
    let h2 = p.h * p.h;
    let j = g * m + b;
    let ln_w = |y: f64| 2.0 * ln_psi0(p, y) - 2.0 / h2 * (0.5 * g * y * y - j * y);
    // Tilt moves each well; include the shifted centres as breakpoints.
    let shift = |mu: f64, s: f64| {
        let v = 0.5 * s * s * p.t;
        let prec = 1.0 / v + 2.0 * g / h2;
        (mu * p.t / v + 2.0 * j / h2) / prec
    };
    let br = breakpoints(p, &[shift(p.mu1, p.sigma1), shift(p.mu2, p.sigma2)]);
    let shift_ln = br
        .iter()
        .flat_map(|&a| (0..=64).map(move |k| a + (k as f64 - 32.0) * 1e-3))
        .map(ln_w)
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_norm = {
        let s = 2.0 * ln_psi0(p, p.mu1 * p.t).max(ln_psi0(p, p.mu2 * p.t));
        let z = integrate_panels(|y| (2.0 * ln_psi0(p, y) - s).exp(), &breakpoints(p, &[]), 1e-13);
        s + z.ln()
    };
    let w = |y: f64| (ln_w(y) - shift_ln).exp();
    let z0 = integrate_panels(w, &br, 1e-13);
    let z1 = integrate_panels(|y| y * w(y), &br, 1e-13);
    let mean = z1 / z0;
    let z2 = integrate_panels(|y| (y - mean) * (y - mean) * w(y), &br, 1e-13);
    Tilted { ln_z: shift_ln + z0.ln() - ln_norm, mean, var: z2 / z0 }
}

/// A random valid parameter set spanning drift, width and horizon scales.
pub fn random_params<R: Rng>(rng: &mut R) -> PotentialParams {
    PotentialParams {
        mu1: rng.random_range(-1.0..1.0),
        mu2: rng.random_range(-1.0..1.0),
        sigma1: rng.random_range(0.1..0.8),
        sigma2: rng.random_range(0.1..0.8),
        a: rng.random_range(0.1..0.9),
        t: rng.random_range(0.25..2.0),
        h: rng.random_range(0.1..1.0),
    }
}

/// Maximum Kolmogorov-Smirnov distance of `samples` (sorted in place) from `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Draws from the normalized `Psi0^2` by rejection: propose from the
/// two-component mixture `Psi0` and accept with probability `Psi0(y) / max Psi0`.
pub struct SquaredMixtureSampler {
    p: PotentialParams,
    ln_max: f64,
}

impl SquaredMixtureSampler {
    pub fn new(p: &PotentialParams) -> Self {
        let sd = p.sigma1.min(p.sigma2) * p.t.sqrt();
        let ln_max = [p.mu1 * p.t, p.mu2 * p.t]
            .iter()
            .flat_map(|&c| (-2000..=2000).map(move |k| c + k as f64 * sd * 1e-3))
            .map(|y| ln_psi0(p, y))
            .fold(f64::NEG_INFINITY, f64::max);
        // Slack for the grid missing the exact mode.
        Self { p: *p, ln_max: ln_max + 1e-6 }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let p = &self.p;
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let y = if rng.random::<f64>() < p.a {
                p.mu2 * p.t + p.sigma2 * p.t.sqrt() * z
            } else {
                p.mu1 * p.t + p.sigma1 * p.t.sqrt() * z
            };
            let ln_ratio = ln_psi0(p, y) - self.ln_max;
            assert!(ln_ratio <= 0.0, "envelope violated");
            if rng.random::<f64>().ln() < ln_ratio {
                return y;
            }
        }
    }
}

/// Monte-Carlo discounted price and its standard error.
pub fn monte_carlo_price<R: Rng>(
    sampler: &SquaredMixtureSampler,
    rng: &mut R,
    samples: usize,
    spot: f64,
    rate: f64,
    strike: f64,
    call: bool,
) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let st = spot * sampler.sample(rng).exp();
        let pay = if call { (st - strike).max(0.0) } else { (strike - st).max(0.0) };
        s += pay;
        s2 += pay * pay;
    }
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    let disc = (-rate * sampler.p.t).exp();
    (disc * mean, disc * (var / n).sqrt())
}
