//! Log-Gaussian-mixture single-asset potential.
//!
//! The ground-state amplitude is a two-component Gaussian mixture in the
//! period-`T` log-return `y`,
//!
//! ```text
//! Psi0(y) = C [ (1-a) N(y | mu1 T, sigma1^2 T) + a N(y | mu2 T, sigma2^2 T) ]
//! V(y)    = -h^2 log Psi0(y) + V0
//! ```
//!
//! so the stationary density `Psi0^2` is itself a three-component mixture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{golden_section, ln_normal_pdf, log_sum_exp, logistic, norm_cdf};

/// Parameters of the log-Gaussian-mixture potential.
///
/// Drifts are annualized (1/year), volatilities in 1/sqrt(year), `t` is the
/// horizon in years and `h` the Langevin noise amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub a: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub h: f64,
}

impl PotentialParams {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, a: f64, t: f64, h: f64) -> Result<Self> {
        let p = Self { mu1, mu2, sigma1, sigma2, a, t, h };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric potential with wells at `+-mu T`, equal widths and `a = 1/2`.
    pub fn symmetric(mu: f64, sigma: f64, t: f64, h: f64) -> Self {
        Self { mu1: mu, mu2: -mu, sigma1: sigma, sigma2: sigma, a: 0.5, t, h }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu1, self.mu2, self.sigma1, self.sigma2, self.a, self.t, self.h]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.sigma1 <= 0.0 || self.sigma2 <= 0.0 {
            return Err(Error::InvalidParams("sigma1 and sigma2 must be positive".into()));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::InvalidParams(format!("a = {} must lie in (0, 1)", self.a)));
        }
        if self.t <= 0.0 {
            return Err(Error::InvalidParams("T must be positive".into()));
        }
        if self.h <= 0.0 {
            return Err(Error::InvalidParams("h must be positive".into()));
        }
        Ok(())
    }

    /// Exact mirror symmetry `mu1 = -mu2`, `sigma1 = sigma2`, `a = 1/2`.
    pub fn is_symmetric(&self) -> bool {
        self.mu1 == -self.mu2 && self.sigma1 == self.sigma2 && self.a == 0.5
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma1.max(self.sigma2)
    }

    /// `log((1-a) N1(y) + a N2(y))`, the un-normalized log amplitude.
    pub fn ln_mixture(&self, y: f64) -> f64 {
        let t = self.t;
        log_sum_exp(&[
            (1.0 - self.a).ln() + ln_normal_pdf(y, self.mu1 * t, self.sigma1 * self.sigma1 * t),
            self.a.ln() + ln_normal_pdf(y, self.mu2 * t, self.sigma2 * self.sigma2 * t),
        ])
    }

    /// `d/dy log((1-a) N1 + a N2)`.
    pub fn d_ln_mixture(&self, y: f64) -> f64 {
        let t = self.t;
        let v1 = self.sigma1 * self.sigma1 * t;
        let v2 = self.sigma2 * self.sigma2 * t;
        let l1 = (1.0 - self.a).ln() + ln_normal_pdf(y, self.mu1 * t, v1);
        let l2 = self.a.ln() + ln_normal_pdf(y, self.mu2 * t, v2);
        let r1 = logistic(l1 - l2);
        let r2 = 1.0 - r1;
        -(r1 * (y - self.mu1 * t) / v1 + r2 * (y - self.mu2 * t) / v2)
    }
}

/// One Gaussian component of the stationary density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    /// Mean of `y` (already multiplied by `T`).
    pub mean: f64,
    /// Variance of `y`.
    pub variance: f64,
}

/// The stationary density `Psi0^2(y)` as a normalized three-component mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureStationary {
    /// Normalization constant of `Psi0`.
    pub c: f64,
    pub omega: f64,
    /// Components in the order (first well, second well, cross term).
    pub components: [MixtureComponent; 3],
}

impl MixtureStationary {
    pub fn weights(&self) -> [f64; 3] {
        [self.components[0].weight, self.components[1].weight, self.components[2].weight]
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + ln_normal_pdf(y, c.mean, c.variance))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * norm_cdf((y - c.mean) / c.variance.sqrt()))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.variance + (c.mean - m) * (c.mean - m)))
            .sum()
    }
}

/// Closed-form three-component representation of `Psi0^2`.
pub fn stationary_density(p: &PotentialParams) -> MixtureStationary {
    let t = p.t;
    let s1 = p.sigma1 * p.sigma1;
    let s2 = p.sigma2 * p.sigma2;
    let ssum = s1 + s2;
    let dmu = p.mu1 - p.mu2;
    let ln_w = [
        2.0 * (1.0 - p.a).ln() - p.sigma1.ln(),
        2.0 * p.a.ln() - p.sigma2.ln(),
        std::f64::consts::LN_2 + p.a.ln() + (1.0 - p.a).ln()
            - dmu * dmu * t / (2.0 * ssum)
            - 0.5 * (0.5 * ssum).ln(),
    ];
    let ln_omega = log_sum_exp(&ln_w);
    let omega = ln_omega.exp();
    let c = (2.0 * (std::f64::consts::PI * t).sqrt() / omega).sqrt();
    let mu3 = (p.mu1 * s2 + p.mu2 * s1) / ssum;
    let var3 = s1 * s2 / ssum * t;
    MixtureStationary {
        c,
        omega,
        components: [
            MixtureComponent { weight: (ln_w[0] - ln_omega).exp(), mean: p.mu1 * t, variance: 0.5 * s1 * t },
            MixtureComponent { weight: (ln_w[1] - ln_omega).exp(), mean: p.mu2 * t, variance: 0.5 * s2 * t },
            MixtureComponent { weight: (ln_w[2] - ln_omega).exp(), mean: mu3 * t, variance: var3 },
        ],
    }
}

/// The potential with its additive constant fixed so that `min V = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub params: PotentialParams,
    /// `V0` in `V = -h^2 log Psi0 + V0`.
    pub v0: f64,
    /// Location of the global minimum.
    pub argmin: f64,
    ln_c: f64,
}

impl Potential {
    pub fn new(p: &PotentialParams) -> Self {
        const N: usize = 4001;
        let t = p.t;
        let width = 8.0 * p.sigma_max() * t.sqrt();
        let lo = p.mu1.min(p.mu2) * t - width;
        let hi = p.mu1.max(p.mu2) * t + width;
        let dy = (hi - lo) / (N - 1) as f64;
        let raw = |y: f64| -p.ln_mixture(y);
        let mut best = (lo, raw(lo));
        for i in 1..N {
            let y = lo + dy * i as f64;
            let v = raw(y);
            if v < best.1 {
                best = (y, v);
            }
        }
        let (y_star, v_star) = golden_section(raw, best.0 - dy, best.0 + dy, 1e-13);
        let (y_star, v_star) = if v_star <= best.1 { (y_star, v_star) } else { best };
        let ln_c = stationary_density(p).c.ln();
        // -h^2 (ln C + ln mix(y*)) + V0 = 0
        let v0 = p.h * p.h * (ln_c - v_star);
        Self { params: *p, v0, argmin: y_star, ln_c }
    }

    pub fn value(&self, y: f64) -> f64 {
        let p = &self.params;
        -p.h * p.h * (self.ln_c + p.ln_mixture(y)) + self.v0
    }

    /// `V'(y)`.
    pub fn derivative(&self, y: f64) -> f64 {
        let p = &self.params;
        -p.h * p.h * p.d_ln_mixture(y)
    }
}

/// `V(y)` with `V0` chosen so that the minimum over a dense grid is zero.
pub fn potential(p: &PotentialParams, y: f64) -> f64 {
    Potential::new(p).value(y)
}

/// Symmetric base plus small asymmetries, and the equivalent linear field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricDecomposition {
    pub mu: f64,
    pub sigma: f64,
    pub eps_a: f64,
    pub eps_mu: f64,
    pub eps_sigma: f64,
    /// Linear-term coefficient `B0` in `V(y) ~ V_s(y) - B0 y`.
    pub b0: f64,
    /// Set when any perturbation exceeds the threshold, i.e. the linearization is doubtful.
    pub warning: bool,
}

impl SymmetricDecomposition {
    pub fn symmetric_params(&self, t: f64, h: f64) -> PotentialParams {
        PotentialParams::symmetric(self.mu, self.sigma, t, h)
    }
}

/// Default relative threshold for the linearization warning.
pub const SYMMETRIZE_THRESHOLD: f64 = 0.2;

pub fn symmetrize(p: &PotentialParams) -> SymmetricDecomposition {
    symmetrize_with_threshold(p, SYMMETRIZE_THRESHOLD)
}

/// Midpoint decomposition of `p` into a symmetric potential plus perturbations.
///
/// `B0` is the exact first-order coefficient of `y` in `V - V_s` at `y = 0`:
///
/// ```text
/// B0 = h^2/sigma^2 (1 - mu^2 T/sigma^2) eps_mu
///    + h^2 (mu^3 T/(2 sigma^6) - 3 mu/(2 sigma^4)) eps_sigma
///    - 2 mu h^2/sigma^2 eps_a
/// ```
///
/// The warning threshold is relative to `1/2` for `eps_a`, to
/// `max(|mu|, sigma)` for `eps_mu` and to `sigma^2` for `eps_sigma`.
pub fn symmetrize_with_threshold(p: &PotentialParams, threshold: f64) -> SymmetricDecomposition {
    let mu = 0.5 * (p.mu1 - p.mu2);
    let eps_mu = 0.5 * (p.mu1 + p.mu2);
    let s2 = 0.5 * (p.sigma1 * p.sigma1 + p.sigma2 * p.sigma2);
    let eps_sigma = 0.5 * (p.sigma1 * p.sigma1 - p.sigma2 * p.sigma2);
    let eps_a = p.a - 0.5;
    let h2 = p.h * p.h;
    let t = p.t;
    let b0 = h2 / s2 * (1.0 - mu * mu * t / s2) * eps_mu
        + h2 * (mu.powi(3) * t / (2.0 * s2.powi(3)) - 1.5 * mu / (s2 * s2)) * eps_sigma
        - 2.0 * mu * h2 / s2 * eps_a;
    let warning = eps_a.abs() > threshold * 0.5
        || eps_mu.abs() > threshold * mu.abs().max(s2.sqrt())
        || eps_sigma.abs() > threshold * s2;
    SymmetricDecomposition { mu, sigma: s2.sqrt(), eps_a, eps_mu, eps_sigma, b0, warning }
}

/// Interaction-dressed parameters and the additive constant `V_hat(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedParams {
    /// Barred parameters; `t` and `h` are carried over unchanged.
    pub barred: PotentialParams,
    pub v_hat: f64,
}

/// Absorb the Curie-Weiss term `g (y^2/2 - m y)` into the mixture parameters.
///
/// `V(y) + g (y^2/2 - m y) = -h^2 log mix_bar(y) - h^2 V_hat(m)` up to the
/// normalization constants of the two potentials.
pub fn renormalize(p: &PotentialParams, g: f64, m: f64) -> Result<RenormalizedParams> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidInput(format!("coupling g = {g} must be finite and >= 0")));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("mean field m must be finite".into()));
    }
    let h2 = p.h * p.h;
    let t = p.t;
    let d1 = h2 + g * p.sigma1 * p.sigma1 * t;
    let d2 = h2 + g * p.sigma2 * p.sigma2 * t;
    let e1 = g * (m - p.mu1 * t).powi(2) / (2.0 * d1);
    let e2 = g * (m - p.mu2 * t).powi(2) / (2.0 * d2);
    let ln_s1 = (1.0 - p.a).ln() + 0.5 * (h2 / d1).ln() - e1;
    let ln_s2 = p.a.ln() + 0.5 * (h2 / d2).ln() - e2;
    let v_hat = g * m * m / (2.0 * h2) + log_sum_exp(&[ln_s1, ln_s2]);
    let a_bar = logistic(ln_s2 - ln_s1);
    let barred = PotentialParams {
        mu1: (h2 * p.mu1 + g * p.sigma1 * p.sigma1 * m) / d1,
        mu2: (h2 * p.mu2 + g * p.sigma2 * p.sigma2 * m) / d2,
        sigma1: (h2 / d1).sqrt() * p.sigma1,
        sigma2: (h2 / d2).sqrt() * p.sigma2,
        a: a_bar,
        t,
        h: p.h,
    };
    Ok(RenormalizedParams { barred, v_hat })
}

/// Recover bare parameters from barred ones at coupling `g` and mean field `m`.
///
/// Requires `g < h^2 / (sigma_bar_k^2 T)` for both components.
pub fn invert_renormalization(barred: &PotentialParams, g: f64, m: f64) -> Result<PotentialParams> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidInput(format!("coupling g = {g} must be finite and >= 0")));
    }
    let h2 = barred.h * barred.h;
    let t = barred.t;
    let k1 = 1.0 - g * barred.sigma1 * barred.sigma1 * t / h2;
    let k2 = 1.0 - g * barred.sigma2 * barred.sigma2 * t / h2;
    if k1 <= 0.0 || k2 <= 0.0 {
        return Err(Error::ConstraintViolation(format!(
            "g = {g} must be below h^2/(sigma_bar_k^2 T) = {:.6}",
            (h2 / (barred.sigma1.max(barred.sigma2).powi(2) * t))
        )));
    }
    let s1 = barred.sigma1 * barred.sigma1 / k1;
    let s2 = barred.sigma2 * barred.sigma2 / k2;
    let mu1 = (barred.mu1 - g * barred.sigma1 * barred.sigma1 * m / h2) / k1;
    let mu2 = (barred.mu2 - g * barred.sigma2 * barred.sigma2 * m / h2) / k2;
    let d1 = h2 + g * s1 * t;
    let d2 = h2 + g * s2 * t;
    let e1 = g * (m - mu1 * t).powi(2) / (2.0 * d1);
    let e2 = g * (m - mu2 * t).powi(2) / (2.0 * d2);
    let logit_bar = barred.a.ln() - (1.0 - barred.a).ln();
    // logit(a_bar) = logit(a) - [ln sqrt(d2/d1) + e2 - e1]
    let a = logistic(logit_bar + 0.5 * (d2 / d1).ln() + e2 - e1);
    let p = PotentialParams {
        mu1,
        mu2,
        sigma1: s1.sqrt(),
        sigma2: s2.sqrt(),
        a,
        t,
        h: barred.h,
    };
    p.validate()?;
    Ok(p)
}
