//! Investor flow rule, soft-absolute-value price impact and the resulting
//! small-return drift expansion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub phi: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub eta: f64,
    pub beta_impact: f64,
    /// Saturation threshold of the cumulative flow.
    pub a_hat: f64,
    /// Cumulative prior inflow.
    pub abar_tau: f64,
    #[serde(default)]
    pub theta: f64,
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.phi < 0.0 || self.lambda < 0.0 || self.kappa < 0.0 {
            return Err(Error::InvalidParams("phi, lambda and kappa must be non-negative".into()));
        }
        if !(self.eta >= 0.0) || !(self.beta_impact > 0.0) {
            return Err(Error::InvalidParams("need eta >= 0 and beta_impact > 0".into()));
        }
        Ok(())
    }

    /// Distance to saturation `b = a_hat - abar_tau`.
    pub fn b(&self) -> f64 {
        self.a_hat - self.abar_tau
    }
}

/// `phi y + lambda y^3 + kappa mean_y`.
pub fn flow_rate(fp: &FlowParams, y: f64, mean_y: f64) -> f64 {
    fp.phi * y + fp.lambda * y * y * y + fp.kappa * mean_y
}

/// `H_beta(z) = log(cosh(beta z)) / beta`, overflow-safe for large `|beta z|`.
pub fn soft_abs(beta: f64, z: f64) -> f64 {
    let x = (beta * z).abs();
    if x > 30.0 {
        z.abs() - std::f64::consts::LN_2 / beta + (-2.0 * x).exp().ln_1p() / beta
    } else {
        x.cosh().ln() / beta
    }
}

/// Impact `f(a) = -eta (H(a - b) - H(-b))`.
pub fn impact(fp: &FlowParams, a: f64) -> f64 {
    let b = fp.b();
    -fp.eta * (soft_abs(fp.beta_impact, a - b) - soft_abs(fp.beta_impact, -b))
}

/// `a + f(a)` with `a` the flow rate.
pub fn combined_drift(fp: &FlowParams, y: f64, mean_y: f64) -> f64 {
    let a = flow_rate(fp, y, mean_y);
    a + impact(fp, a)
}

/// Coefficients of `xi y + rho y^2 + zeta y^3 + g (mean_y - y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCoeffs {
    pub xi: f64,
    pub rho: f64,
    pub zeta: f64,
    pub g: f64,
}

/// Exact small-return coefficients of [`combined_drift`].
///
/// With `x = beta b` the impact expands as
/// `f(a) = eta tanh(x) a - (eta beta/2) sech^2(x) a^2 - (eta beta^2/3) sech^2(x) tanh(x) a^3 + ...`.
pub fn drift_coeffs(fp: &FlowParams) -> DriftCoeffs {
    let (beta, eta) = (fp.beta_impact, fp.eta);
    let x = beta * fp.b();
    let th = x.tanh();
    let sech2 = 1.0 - th * th;
    let k = 1.0 + eta * th;
    let c2 = -0.5 * eta * beta * sech2;
    let c3 = -eta * beta * beta / 3.0 * sech2 * th;
    DriftCoeffs {
        xi: (fp.phi + fp.kappa) * k,
        rho: c2 * fp.phi * fp.phi,
        zeta: fp.lambda * k + c3 * fp.phi.powi(3),
        g: fp.kappa * k,
    }
}

/// Series form expanded to third order in `beta b`, using the quartic
/// log-cosh term with a `+` sign. Agrees with [`drift_coeffs`] only at `b = 0`
/// or `eta = 0`; kept for comparison.
pub fn drift_coeffs_series(fp: &FlowParams) -> DriftCoeffs {
    let (beta, eta, b) = (fp.beta_impact, fp.eta, fp.b());
    let k = 1.0 + eta * beta * b * (1.0 + beta * beta * b * b / 3.0);
    DriftCoeffs {
        xi: (fp.phi + fp.kappa) * k,
        rho: -0.5 * beta * eta * (1.0 + beta * beta * b * b) * fp.phi * fp.phi,
        zeta: beta.powi(3) * b * eta * fp.phi.powi(3) / 3.0 + fp.lambda * k,
        g: fp.kappa * k,
    }
}

/// Quartic self-potential `-theta y - xi y^2/2 - rho y^3/3 - zeta y^4/4`.
pub fn quartic_potential(c: &DriftCoeffs, theta: f64, y: f64) -> f64 {
    -theta * y - c.xi * y * y / 2.0 - c.rho * y.powi(3) / 3.0 - c.zeta * y.powi(4) / 4.0
}
