//! Homogeneous-market stationary state: partition function, self-consistency
//! and free energy.
//!
//! With coupling `g` and external field `B` the single-asset Boltzmann weight
//! is `Psi0^2(y) exp(-(2/h^2)(g y^2/2 - (g m + B) y))`. Multiplying a Gaussian
//! component by that tilt gives another Gaussian, so every quantity here is a
//! closed-form sum over the three stationary components.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, log_sum_exp};
use crate::potential::{renormalize, stationary_density, MixtureStationary, PotentialParams};

/// Coupling constant, external field and asset count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketCoupling {
    pub g: f64,
    #[serde(rename = "B", default)]
    pub b: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
}

fn default_n() -> usize {
    500
}

impl MarketCoupling {
    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(Error::InvalidParams(format!("g = {} must be finite and >= 0", self.g)));
        }
        if !self.b.is_finite() {
            return Err(Error::InvalidParams("B must be finite".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidParams("N must be at least 2".into()));
        }
        Ok(())
    }
}

/// The stationary mixture multiplied by `exp(-alpha y^2 + beta y)`.
#[derive(Debug, Clone, Copy)]
pub struct TiltedMixture {
    /// Log of each component's integral after tilting.
    pub ln_mass: [f64; 3],
    pub means: [f64; 3],
    pub variances: [f64; 3],
}

impl TiltedMixture {
    pub fn new(stat: &MixtureStationary, alpha: f64, beta: f64) -> Self {
        let mut ln_mass = [0.0; 3];
        let mut means = [0.0; 3];
        let mut variances = [0.0; 3];
        for (k, c) in stat.components.iter().enumerate() {
            let (mu, v) = (c.mean, c.variance);
            let q = 1.0 + 2.0 * alpha * v;
            ln_mass[k] = c.weight.ln() - 0.5 * q.ln()
                + (2.0 * mu * beta + beta * beta * v - 2.0 * alpha * mu * mu) / (2.0 * q);
            means[k] = (mu + beta * v) / q;
            variances[k] = v / q;
        }
        Self { ln_mass, means, variances }
    }

    /// Tilt produced by coupling `g`, mean field `m` and field `b`.
    pub fn for_field(p: &PotentialParams, g: f64, m: f64, b: f64) -> Self {
        Self::from_stationary(&stationary_density(p), p, g, m, b)
    }

    pub fn from_stationary(stat: &MixtureStationary, p: &PotentialParams, g: f64, m: f64, b: f64) -> Self {
        let h2 = p.h * p.h;
        Self::new(stat, g / h2, 2.0 * (g * m + b) / h2)
    }

    pub fn ln_total(&self) -> f64 {
        log_sum_exp(&self.ln_mass)
    }

    fn probabilities(&self) -> [f64; 3] {
        let lt = self.ln_total();
        [
            (self.ln_mass[0] - lt).exp(),
            (self.ln_mass[1] - lt).exp(),
            (self.ln_mass[2] - lt).exp(),
        ]
    }

    pub fn mean(&self) -> f64 {
        let w = self.probabilities();
        (0..3).map(|k| w[k] * self.means[k]).sum()
    }

    pub fn variance(&self) -> f64 {
        let w = self.probabilities();
        let m = self.mean();
        (0..3)
            .map(|k| w[k] * (self.variances[k] + (self.means[k] - m).powi(2)))
            .sum()
    }
}

/// `log Z(m; B)` with `Z = int Psi0^2(y) exp(-(2/h^2)(g y^2/2 - (g m + B) y)) dy`,
/// `Psi0^2` normalized to one.
pub fn log_partition(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    TiltedMixture::for_field(p, g, m, b).ln_total()
}

/// `d log Z / dm` for the exact partition function; equals `(2g/h^2) <y>`.
pub fn d_log_partition(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    2.0 * g / (p.h * p.h) * mean_return(p, g, m, b)
}

/// `<y>` under the tilted stationary density.
pub fn mean_return(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    TiltedMixture::for_field(p, g, m, b).mean()
}

/// Log of the closed-form partition function in its conventional
/// normalization, `e^{2 V_hat(m)}` times the barred `Omega` sum.
///
/// For a symmetric potential the `1/sigma` prefactor convention is used. Both
/// differ from [`log_partition`] by an `m`-independent constant.
pub fn ln_partition_function(p: &PotentialParams, g: f64, m: f64) -> f64 {
    if p.is_symmetric() {
        let (mu, s2, t, h2) = (p.mu1, p.sigma1 * p.sigma1, p.t, p.h * p.h);
        let d = h2 + g * s2 * t;
        let u = g * mu * t * m / d;
        let bb = (-h2 * mu * mu * t / (s2 * d)).exp();
        let v_hat = g * m * m / (2.0 * h2) - g * (m * m + mu * mu * t * t) / (2.0 * d)
            + ln_cosh(u)
            + 0.5 * (h2 / d).ln();
        // 1 - (1-b)/(2 cosh^2 u) = (cosh 2u + b) / (2 cosh^2 u)
        let bracket = ln_cosh_plus(2.0 * u, bb) - std::f64::consts::LN_2 - 2.0 * ln_cosh(u);
        -p.sigma1.ln() + 2.0 * v_hat + bracket
    } else {
        match renormalize(p, g, m) {
            Ok(r) => 2.0 * r.v_hat + stationary_density(&r.barred).omega.ln(),
            Err(_) => f64::NAN,
        }
    }
}

pub fn partition_function(p: &PotentialParams, g: f64, m: f64) -> f64 {
    ln_partition_function(p, g, m).exp()
}

/// `log cosh z` without overflow.
pub fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `log(cosh z + b)` without overflow.
pub fn ln_cosh_plus(z: f64, b: f64) -> f64 {
    let a = z.abs();
    let e = (-a).exp();
    a - std::f64::consts::LN_2 + (e * e + 2.0 * b * e).ln_1p()
}

/// `log((cosh z + b) / (1 + b))`, accurate near `z = 0`.
fn ln_cosh_plus_rel(z: f64, b: f64) -> f64 {
    if z.abs() < 20.0 {
        let s = (0.5 * z).sinh();
        (2.0 * s * s / (1.0 + b)).ln_1p()
    } else {
        ln_cosh_plus(z, b) - b.ln_1p()
    }
}

/// `sinh z / (cosh z + b)` without overflow.
fn hyperbolic_ratio(z: f64, b: f64) -> f64 {
    let a = z.abs();
    let e = (-a).exp();
    let e2 = e * e;
    z.signum() * (1.0 - e2) / (1.0 + e2 + 2.0 * b * e)
}

/// Symmetric-potential quantities `D = h^2 + g sigma^2 T` and the overlap factor `b`.
fn symmetric_parts(p: &PotentialParams, g: f64) -> (f64, f64) {
    let (mu, s2, t, h2) = (p.mu1, p.sigma1 * p.sigma1, p.t, p.h * p.h);
    let d = h2 + g * s2 * t;
    (d, (-h2 * mu * mu * t / (s2 * d)).exp())
}

/// Right-hand side of the self-consistency equation `m = rhs(m)`.
///
/// Symmetric potentials use the bounded hyperbolic form
/// `sigma^2 T B / h^2 + mu T sinh(z)/(cosh(z) + b)` with
/// `z = 2 mu T (g m + B)/(h^2 + g sigma^2 T)`. Other potentials use `<y>`
/// under the tilted stationary density; both forms share the same roots.
pub fn self_consistency_rhs(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    if p.is_symmetric() {
        let (d, bb) = symmetric_parts(p, g);
        let (mu, s2, t, h2) = (p.mu1, p.sigma1 * p.sigma1, p.t, p.h * p.h);
        let z = 2.0 * mu * t * (g * m + b) / d;
        s2 * t * b / h2 + mu * t * hyperbolic_ratio(z, bb)
    } else {
        mean_return(p, g, m, b)
    }
}

/// Closed-form `d log Z/dm` for a symmetric potential with field `b`.
pub fn d_log_partition_symmetric(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    let (d, bb) = symmetric_parts(p, g);
    let (mu, s2, t, h2) = (p.mu1, p.sigma1 * p.sigma1, p.t, p.h * p.h);
    let j = g * m + b;
    2.0 * g * s2 * t * j / (h2 * d) + 2.0 * g * mu * t / d * hyperbolic_ratio(2.0 * mu * t * j / d, bb)
}

/// Free energy `F(m) = -(h^2/2) log Z(m; B) + g m^2 / 2` with `Z` as in
/// [`log_partition`].
pub fn free_energy(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    -0.5 * p.h * p.h * log_partition(p, g, m, b) + 0.5 * g * m * m
}

/// `F(m) - F(0)`. Symmetric potentials use a cancellation-free closed form.
pub fn free_energy_difference(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    if p.is_symmetric() {
        let (d, bb) = symmetric_parts(p, g);
        let (mu, s2, t, h2) = (p.mu1, p.sigma1 * p.sigma1, p.t, p.h * p.h);
        let z = 2.0 * mu * t * (g * m + b) / d;
        let z0 = 2.0 * mu * t * b / d;
        g * h2 * m * m / (2.0 * d) - g * s2 * t * b * m / d
            - 0.5 * h2 * (ln_cosh_plus_rel(z, bb) - ln_cosh_plus_rel(z0, bb))
    } else {
        free_energy(p, g, m, b) - free_energy(p, g, 0.0, b)
    }
}

/// `d^2 F / dm^2 = g (1 - (2g/h^2) Var(y))` under the tilted density.
pub fn free_energy_curvature(p: &PotentialParams, g: f64, m: f64, b: f64) -> f64 {
    let var = TiltedMixture::for_field(p, g, m, b).variance();
    g * (1.0 - 2.0 * g / (p.h * p.h) * var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub m: f64,
    pub stability: Stability,
    /// Free energy relative to the root closest to zero.
    pub free_energy: f64,
    /// `m - rhs(m)`.
    pub residual: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistencyResult {
    /// Roots in ascending order.
    pub roots: Vec<Root>,
    /// Half-width of the scanned interval.
    pub m_max: f64,
}

impl SelfConsistencyResult {
    pub fn stable_roots(&self) -> impl Iterator<Item = &Root> {
        self.roots.iter().filter(|r| r.stability == Stability::Stable)
    }

    /// Root with the lowest free energy.
    pub fn ground_state(&self) -> Option<&Root> {
        self.roots
            .iter()
            .min_by(|a, b| a.free_energy.total_cmp(&b.free_energy))
    }

    pub fn largest(&self) -> Option<&Root> {
        self.roots.last()
    }
}

pub const ROOT_GRID: usize = 2001;
pub const ROOT_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Half-width of the interval that contains every root.
pub fn root_search_bound(p: &PotentialParams, b: f64) -> f64 {
    let smax = p.sigma_max();
    p.mu1.abs().max(p.mu2.abs()) * p.t
        + (b * smax * smax * p.t / (p.h * p.h)).abs()
        + 10.0 * smax * p.t.sqrt()
}

/// Every root of `m = rhs(m)`, found by a sign-change scan followed by bisection.
pub fn solve_self_consistency(p: &PotentialParams, g: f64, b: f64) -> Result<SelfConsistencyResult> {
    p.validate()?;
    if !(g >= 0.0) || !g.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParams(format!("invalid coupling g = {g} or field B = {b}")));
    }
    let m_max = root_search_bound(p, b);
    let f = |m: f64| m - self_consistency_rhs(p, g, m, b);
    let step = 2.0 * m_max / (ROOT_GRID - 1) as f64;
    let grid: Vec<f64> = (0..ROOT_GRID)
        .map(|i| if i == (ROOT_GRID - 1) / 2 { 0.0 } else { -m_max + step * i as f64 })
        .collect();
    let values: Vec<f64> = grid.par_iter().map(|&m| f(m)).collect();

    let mut found: Vec<f64> = Vec::new();
    for i in 0..ROOT_GRID {
        if values[i] == 0.0 {
            found.push(grid[i]);
        }
        if i + 1 < ROOT_GRID && values[i] * values[i + 1] < 0.0 {
            found.push(bisect(f, grid[i], grid[i + 1], ROOT_TOL));
        }
    }

    let mut roots = Vec::with_capacity(found.len());
    for m in found {
        let residual = f(m);
        if residual.abs() >= RESIDUAL_TOL {
            return Err(Error::NonConvergence {
                what: format!("self-consistency root near m = {m}"),
                iterations: 200,
                residual: residual.abs(),
            });
        }
        let curvature = free_energy_curvature(p, g, m, b);
        let stability = if curvature < 0.0 { Stability::Unstable } else { Stability::Stable };
        roots.push(Root { m, stability, free_energy: free_energy_difference(p, g, m, b), residual, curvature });
    }
    if let Some(anchor) = roots
        .iter()
        .min_by(|a, b| a.m.abs().total_cmp(&b.m.abs()))
        .map(|r| r.free_energy)
    {
        for r in &mut roots {
            r.free_energy -= anchor;
        }
    }
    Ok(SelfConsistencyResult { roots, m_max })
}

/// Mixture first moment of barred parameters; at a self-consistent `m` with
/// `renormalize(p, g, m + B/g)` it reproduces `m`.
pub fn closed_form_mean(barred: &PotentialParams) -> f64 {
    let s = stationary_density(barred);
    let (s1, s2) = (barred.sigma1 * barred.sigma1, barred.sigma2 * barred.sigma2);
    let w = s.weights();
    (w[0] + w[2] * s2 / (s1 + s2)) * barred.mu1 * barred.t
        + (w[1] + w[2] * s1 / (s1 + s2)) * barred.mu2 * barred.t
}
