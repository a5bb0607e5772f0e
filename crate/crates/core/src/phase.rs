//! Critical volatility, bifurcation sweeps, critical exponents, specific heat
//! and susceptibility for a symmetric potential.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mean_field::{free_energy_difference, solve_self_consistency, Root, Stability};
use crate::numerics::golden_section;
use crate::potential::PotentialParams;

/// Overlap factor `b(h) = exp(-h^2 mu^2 T / (sigma^2 (h^2 + g sigma^2 T)))`.
pub fn overlap_factor(mu: f64, sigma: f64, t: f64, g: f64, h: f64) -> f64 {
    let (h2, s2) = (h * h, sigma * sigma);
    (-h2 * mu * mu * t / (s2 * (h2 + g * s2 * t))).exp()
}

/// `2 g mu^2 T^2/(1 + b(h)) - g sigma^2 T`, the squared critical volatility
/// evaluated with the overlap factor at `h`.
pub fn critical_volatility_sq_at(mu: f64, sigma: f64, t: f64, g: f64, h: f64) -> f64 {
    let b = overlap_factor(mu, sigma, t, g, h);
    2.0 * g * mu * mu * t * t / (1.0 + b) - g * sigma * sigma * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub h_c: f64,
    /// Overlap factor at `h_c`.
    pub b: f64,
    pub iterations: usize,
}

/// Solve `h^2 = 2 g mu^2 T^2/(1 + b(h)) - g sigma^2 T` by damped fixed-point
/// iteration in `h`, starting from the `b = 0` value.
pub fn critical_volatility(mu: f64, sigma: f64, t: f64, g: f64) -> Result<CriticalPoint> {
    if !(sigma > 0.0) || !(t > 0.0) || !(g > 0.0) || !mu.is_finite() || !g.is_finite() {
        return Err(Error::InvalidParams(format!(
            "critical volatility needs sigma > 0, T > 0, g > 0 (got sigma={sigma}, T={t}, g={g})"
        )));
    }
    let x0 = 2.0 * g * mu * mu * t * t - g * sigma * sigma * t;
    if x0 <= 0.0 {
        return Err(Error::NonCritical(format!("2 mu^2 T / sigma^2 = {} < 1", 2.0 * mu * mu * t / (sigma * sigma))));
    }
    let mut h = x0.sqrt();
    const MAX_ITER: usize = 10_000;
    for it in 1..=MAX_ITER {
        let x = critical_volatility_sq_at(mu, sigma, t, g, h);
        if x <= 0.0 {
            return Err(Error::NonCritical(format!("fixed-point map left the real axis at h = {h}")));
        }
        let next = 0.5 * h + 0.5 * x.sqrt();
        let done = (next - h).abs() < 1e-12;
        h = next;
        if done {
            let b = overlap_factor(mu, sigma, t, g, h);
            if 2.0 * mu * mu * t / (sigma * sigma) < 1.0 + b {
                return Err(Error::NonCritical("bifurcation constraint fails at the fixed point".into()));
            }
            return Ok(CriticalPoint { h_c: h, b, iterations: it });
        }
    }
    Err(Error::NonConvergence { what: "critical volatility".into(), iterations: MAX_ITER, residual: f64::NAN })
}

fn require_symmetric(p: &PotentialParams) -> Result<()> {
    p.validate()?;
    if !p.is_symmetric() {
        return Err(Error::InvalidParams(
            "a symmetric potential is required (mu2 = -mu1, sigma1 = sigma2, a = 0.5)".into(),
        ));
    }
    Ok(())
}

/// Coefficients of `F(m) ~ -f1 B m + f2 m^2 + f4 m^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandauCoefficients {
    pub f1: f64,
    pub f2: f64,
    pub f4: f64,
    pub b: f64,
}

pub fn landau_coefficients(mu: f64, sigma: f64, t: f64, g: f64, h: f64) -> LandauCoefficients {
    let (h2, s2) = (h * h, sigma * sigma);
    let d = h2 + g * s2 * t;
    let b = overlap_factor(mu, sigma, t, g, h);
    let f1 = g * s2 * t / d * (1.0 + h2 * mu * mu * t * t / ((1.0 + b) * d));
    let f2 = g * h2 / (2.0 * d) * (1.0 - 2.0 * g * mu * mu * t * t / ((1.0 + b) * d));
    let f4 = h2 * (2.0 - b) / (3.0 * (1.0 + b) * (1.0 + b)) * (g * mu * t / d).powi(4);
    LandauCoefficients { f1, f2, f4, b }
}

/// Coefficient of `(h_c^2 - h^2)^{1/2}` in the order parameter just below `h_c`.
pub fn critical_amplitude(mu: f64, sigma: f64, t: f64, g: f64, cp: &CriticalPoint) -> f64 {
    let d = cp.h_c * cp.h_c + g * sigma * sigma * t;
    let b = cp.b;
    d / (2.0 * (g * mu * t).powi(2)) * (3.0 * g * (1.0 + b).powi(2) / (2.0 - b)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub h: f64,
    pub roots: std::result::Result<Vec<Root>, String>,
}

impl BranchPoint {
    pub fn root_count(&self) -> Option<usize> {
        self.roots.as_ref().ok().map(|r| r.len())
    }
}

/// All self-consistency roots at each `h` of an ascending grid. Solver
/// failures are recorded per point.
pub fn bifurcation_sweep(p: &PotentialParams, g: f64, h_grid: &[f64]) -> Result<Vec<BranchPoint>> {
    require_symmetric(p)?;
    if h_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("h grid must be strictly ascending".into()));
    }
    if h_grid.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidInput("h grid values must be positive and finite".into()));
    }
    Ok(h_grid
        .par_iter()
        .map(|&h| BranchPoint {
            h,
            roots: solve_self_consistency(&p.with_h(h), g, 0.0)
                .map(|r| r.roots)
                .map_err(|e| e.to_string()),
        })
        .collect())
}

/// `n` values of `h` below `h_c` with `1 - h/h_c` log-spaced in `[lo, hi]`,
/// returned in ascending order.
pub fn near_critical_grid(h_c: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            h_c * (1.0 - (a + (b - a) * s).exp())
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub h_c: f64,
    /// Closed-form amplitude of the square-root law.
    pub amplitude_closed_form: f64,
    /// `m / sqrt(h_c^2 - h^2)` at the point closest to `h_c`.
    pub amplitude_near_critical: f64,
}

/// Fit `log m = beta log(h_c^2 - h^2) + c` on the positive branch for
/// `h in [0.9 h_c, 0.999 h_c]`.
pub fn beta_exponent(p: &PotentialParams, g: f64) -> Result<BetaFit> {
    require_symmetric(p)?;
    let (mu, sigma, t) = (p.mu1, p.sigma1, p.t);
    let cp = critical_volatility(mu, sigma, t, g)?;
    let grid = near_critical_grid(cp.h_c, 1e-3, 0.1, 40);
    let sweep = bifurcation_sweep(p, g, &grid)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut nearest: Option<(f64, f64)> = None;
    for bp in &sweep {
        let Ok(roots) = &bp.roots else { continue };
        let Some(top) = roots.last() else { continue };
        if top.m <= 1e-9 {
            continue;
        }
        let gap = cp.h_c * cp.h_c - bp.h * bp.h;
        xs.push(gap.ln());
        ys.push(top.m.ln());
        if nearest.is_none_or(|(g0, _)| gap < g0) {
            nearest = Some((gap, top.m));
        }
    }
    if xs.len() < 5 {
        return Err(Error::InsufficientBranch { found: xs.len(), needed: 5 });
    }
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    let (gap, m) = nearest.expect("at least five points");
    Ok(BetaFit {
        slope,
        intercept,
        r_squared,
        points: xs.len(),
        h_c: cp.h_c,
        amplitude_closed_form: critical_amplitude(mu, sigma, t, g, &cp),
        amplitude_near_critical: m / gap.sqrt(),
    })
}

/// Ordinary least squares `y = slope x + intercept`; returns `(slope, intercept, R^2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, intercept, 1.0 - ss_res / syy)
}

/// Global minimum of `F(m) - F(0)` at noise level `h`, by golden-section
/// search in the basin of each stable root.
pub fn minimized_free_energy(p: &PotentialParams, g: f64, h: f64) -> Result<f64> {
    let q = p.with_h(h);
    let res = solve_self_consistency(&q, g, 0.0)?;
    let roots = &res.roots;
    let mut best = f64::INFINITY;
    for (i, r) in roots.iter().enumerate() {
        if r.stability != Stability::Stable {
            continue;
        }
        let lo = if i == 0 { -res.m_max } else { roots[i - 1].m };
        let hi = if i + 1 == roots.len() { res.m_max } else { roots[i + 1].m };
        let (_, v) = golden_section(|m| free_energy_difference(&q, g, m, 0.0), lo, hi, 1e-11);
        best = best.min(v);
    }
    if !best.is_finite() {
        return Err(Error::NonConvergence { what: "free-energy minimization".into(), iterations: 0, residual: f64::NAN });
    }
    Ok(best)
}

/// `C_H = -h^2 d^2 F_min / d(h^2)^2` by a central second difference with step `dx` in `h^2`.
pub fn specific_heat(p: &PotentialParams, g: f64, h: f64, dx: f64) -> Result<f64> {
    require_symmetric(p)?;
    let x = h * h;
    if dx <= 0.0 || dx >= x {
        return Err(Error::InvalidInput("step in h^2 must be in (0, h^2)".into()));
    }
    let f = |xx: f64| minimized_free_energy(p, g, xx.sqrt());
    let (fm, f0, fp) = (f(x - dx)?, f(x)?, f(x + dx)?);
    Ok(-x * (fp - 2.0 * f0 + fm) / (dx * dx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecificHeatJump {
    pub h_c: f64,
    pub b: f64,
    pub closed_form: f64,
    /// `C_H` just below and just above `h_c` from minimized free energies.
    pub below: f64,
    pub above: f64,
    pub numerical: f64,
}

/// Relative distance of the finite-difference stencils from `h_c^2`.
pub const SPECIFIC_HEAT_OFFSET: f64 = 5e-4;

/// `(3/8) (1+b)^2/(2-b) h_c^4/(g^2 mu^4 T^4)`.
pub fn specific_heat_jump_closed_form(h_c: f64, b: f64, g: f64, mu: f64, t: f64) -> f64 {
    0.375 * (1.0 + b).powi(2) / (2.0 - b) * h_c.powi(4) / (g * g * (mu * t).powi(4))
}

/// Closed-form jump `(3/8) (1+b)^2/(2-b) h_c^4/(g^2 mu^4 T^4)` and its
/// numerical counterpart from minimized free energies on both sides of `h_c`.
pub fn specific_heat_jump(p: &PotentialParams, g: f64) -> Result<SpecificHeatJump> {
    require_symmetric(p)?;
    let (mu, sigma, t) = (p.mu1, p.sigma1, p.t);
    let cp = critical_volatility(mu, sigma, t, g)?;
    let b = cp.b;
    let closed_form = specific_heat_jump_closed_form(cp.h_c, b, g, mu, t);
    let xc = cp.h_c * cp.h_c;
    let eps = SPECIFIC_HEAT_OFFSET * xc;
    let below = specific_heat(p, g, (xc - 2.0 * eps).sqrt(), eps)?;
    let above = specific_heat(p, g, (xc + 2.0 * eps).sqrt(), eps)?;
    Ok(SpecificHeatJump { h_c: cp.h_c, b, closed_form, below, above, numerical: below - above })
}

/// Per-asset linear-response coefficient `A` and the ratio `A/g`, which stays
/// finite as `g -> 0`.
///
/// `A = (h^2 h_c^2 + 2 g h^2 sigma^2 T + g^2 sigma^4 T^2)/(h^2 + g sigma^2 T)^2`
/// with `h_c^2` evaluated using the overlap factor at the given `h`.
pub fn response_coefficient(mu: f64, sigma: f64, t: f64, g: f64, h: f64) -> (f64, f64) {
    let (h2, s2) = (h * h, sigma * sigma);
    let d = h2 + g * s2 * t;
    let b = overlap_factor(mu, sigma, t, g, h);
    let a_over_g = (h2 * (2.0 * mu * mu * t * t / (1.0 + b) + s2 * t) + g * s2 * s2 * t * t) / (d * d);
    (g * a_over_g, a_over_g)
}

/// Below this `|h^2 - h_c^2|` the susceptibility is reported as divergent.
pub const CRITICAL_GAP: f64 = 1e-6;

/// Homogeneous susceptibility `chi = dm/dB` at `B = 0` for noise level `h`
/// (the `h` stored in `p` is ignored).
pub fn susceptibility(p: &PotentialParams, g: f64, h: f64) -> Result<f64> {
    require_symmetric(p)?;
    if !(g >= 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParams(format!("need g >= 0 and h > 0 (got g={g}, h={h})")));
    }
    let (mu, sigma, t) = (p.mu1, p.sigma1, p.t);
    let hc2 = critical_volatility_sq_at(mu, sigma, t, g, h);
    let gap = h * h - hc2;
    if gap.abs() < CRITICAL_GAP {
        return Err(Error::CriticalDivergence { gap: gap.abs(), threshold: CRITICAL_GAP });
    }
    if gap < 0.0 {
        return Err(Error::OrderedPhase { h, h_c: hc2.max(0.0).sqrt() });
    }
    let (h2, s2) = (h * h, sigma * sigma);
    let b = overlap_factor(mu, sigma, t, g, h);
    Ok((h2 * (2.0 * mu * mu * t * t / (1.0 + b) + s2 * t) + g * s2 * s2 * t * t) / (h2 * gap))
}

/// Summary emitted by the `phase-diagnostics` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnostics {
    pub h_c: f64,
    pub b: f64,
    pub beta: f64,
    pub beta_r_squared: f64,
    #[serde(rename = "delta_CH")]
    pub delta_ch: f64,
    #[serde(rename = "delta_CH_numerical")]
    pub delta_ch_numerical: f64,
    pub chi: Option<f64>,
    pub chi_h: Option<f64>,
}

pub fn phase_diagnostics(p: &PotentialParams, g: f64, chi_h: Option<f64>) -> Result<PhaseDiagnostics> {
    let beta = beta_exponent(p, g)?;
    let jump = specific_heat_jump(p, g)?;
    let chi = match chi_h {
        Some(h) => Some(susceptibility(p, g, h)?),
        None => None,
    };
    Ok(PhaseDiagnostics {
        h_c: jump.h_c,
        b: jump.b,
        beta: beta.slope,
        beta_r_squared: beta.r_squared,
        delta_ch: jump.closed_form,
        delta_ch_numerical: jump.numerical,
        chi,
        chi_h,
    })
}
