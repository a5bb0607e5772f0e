//! Heterogeneous market: per-asset symmetric potentials coupled through the
//! equal-weight mean field.
//!
//! Linearizing each asset's self-consistency condition around zero field gives
//! `m_i = A_i psi_i` with local field `psi_i = mean(m) + B_i/g`, i.e. the
//! linear system `G m = (A o B)/g` with a rank-one perturbed identity `G`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::phase::{overlap_factor, response_coefficient, susceptibility};
use crate::potential::PotentialParams;

/// Whether an asset's local field includes its own return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldConvention {
    /// `psi_i = (1/N) sum_j m_j + B_i/g`; matches the particle force `g (y_i - mean y)`.
    #[default]
    SelfInclusive,
    /// `psi_i = (1/N) sum_{j != i} m_j + B_i/g`.
    SelfExcluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneousMarket {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// External fields `B_i`.
    pub field: Vec<f64>,
    pub g: f64,
    pub h: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default)]
    pub convention: MeanFieldConvention,
}

impl HeterogeneousMarket {
    /// `n` identical assets with zero field.
    pub fn homogeneous(n: usize, mu: f64, sigma: f64, g: f64, h: f64, t: f64) -> Self {
        Self {
            mu: vec![mu; n],
            sigma: vec![sigma; n],
            field: vec![0.0; n],
            g,
            h,
            t,
            convention: MeanFieldConvention::SelfInclusive,
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mu.len();
        if n < 2 {
            return Err(Error::InvalidInput("at least two assets are required".into()));
        }
        if self.sigma.len() != n || self.field.len() != n {
            return Err(Error::InvalidInput(format!(
                "per-asset arrays differ in length: mu {}, sigma {}, B {}",
                n,
                self.sigma.len(),
                self.field.len()
            )));
        }
        if self.sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("all sigma_i must be positive".into()));
        }
        if self.mu.iter().chain(&self.field).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mu_i and B_i must be finite".into()));
        }
        if !(self.g >= 0.0) || !(self.h > 0.0) || !(self.t > 0.0) || !self.g.is_finite() {
            return Err(Error::InvalidInput("need g >= 0, h > 0 and T > 0".into()));
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.mu.iter().all(|&m| m == self.mu[0]) && self.sigma.iter().all(|&s| s == self.sigma[0])
    }

    /// Symmetric single-asset potential of asset `i`.
    pub fn asset_params(&self, i: usize) -> PotentialParams {
        PotentialParams::symmetric(self.mu[i], self.sigma[i], self.t, self.h)
    }
}

/// Inverse of `diag(d) - u v^T` by the Sherman-Morrison formula.
pub fn sherman_morrison_inverse(d: &[f64], u: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    let n = d.len();
    let du: Vec<f64> = u.iter().zip(d).map(|(u, d)| u / d).collect();
    let vd: Vec<f64> = v.iter().zip(d).map(|(v, d)| v / d).collect();
    let denom = 1.0 - pairwise_sum(&v.iter().zip(&du).map(|(v, x)| v * x).collect::<Vec<_>>());
    if denom.abs() < 1e-8 {
        return Err(Error::NearSingular { margin: denom });
    }
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (dui, di) = (du[i], d[i]);
            let vd = &vd;
            (0..n).map(move |j| dui * vd[j] / denom + if i == j { 1.0 / di } else { 0.0 })
        })
        .collect();
    Ok(DMatrix::from_row_slice(n, n, &rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearResponse {
    pub a: Vec<f64>,
    /// `A_i / g`, finite at zero coupling.
    pub a_over_g: Vec<f64>,
    pub mean_a: f64,
    pub g: DMatrix<f64>,
    /// Exact Sherman-Morrison inverse of `g`.
    pub g_inv: DMatrix<f64>,
    /// Large-`N` form `delta_ij + A_i/(N (1 - <A>))`.
    pub g_inv_large_n: DMatrix<f64>,
    /// Printed exact form for the self-excluded convention, whose
    /// denominator is `1 - <A>` instead of `1 - sum_k A_k/(N + A_k)`.
    pub g_inv_printed: DMatrix<f64>,
    pub chi: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub convention: MeanFieldConvention,
}

/// Linear response of the local mean fields to the external fields.
pub fn linear_response(mkt: &HeterogeneousMarket) -> Result<LinearResponse> {
    mkt.validate()?;
    let n = mkt.n();
    let nf = n as f64;
    let (a, a_over_g): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| response_coefficient(mkt.mu[i], mkt.sigma[i], mkt.t, mkt.g, mkt.h))
        .unzip();
    let mean_a = pairwise_sum(&a) / nf;
    if 1.0 - mean_a < 1e-8 {
        return Err(Error::NearSingular { margin: 1.0 - mean_a });
    }
    let u: Vec<f64> = a.iter().map(|x| x / nf).collect();
    let ones = vec![1.0; n];
    let d: Vec<f64> = match mkt.convention {
        MeanFieldConvention::SelfInclusive => ones.clone(),
        MeanFieldConvention::SelfExcluded => a.iter().map(|x| 1.0 + x / nf).collect(),
    };
    let g_mat = DMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 } - u[i]);
    let g_inv = sherman_morrison_inverse(&d, &u, &ones)?;
    let g_inv_large_n =
        DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + a[i] / (nf * (1.0 - mean_a)));
    let g_inv_printed = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { 1.0 / (1.0 + a[j] / nf) } else { 0.0 };
        diag + a[i] / (nf + a[i]) * nf / (nf + a[j]) / (1.0 - mean_a)
    });
    let chi = DMatrix::from_fn(n, n, |i, j| g_inv[(i, j)] * a_over_g[j]);
    let half_h2 = 0.5 * mkt.h * mkt.h;
    let cov = chi.map(|x| half_h2 * x);
    Ok(LinearResponse {
        a,
        a_over_g,
        mean_a,
        g: g_mat,
        g_inv,
        g_inv_large_n,
        g_inv_printed,
        chi,
        cov,
        convention: mkt.convention,
    })
}

/// `<y>` of a symmetric single-asset density tilted by the field `j = g psi`.
fn asset_mean(mu: f64, sigma: f64, t: f64, g: f64, h: f64, j: f64) -> f64 {
    let (h2, s2) = (h * h, sigma * sigma);
    let d = h2 + g * s2 * t;
    let b = overlap_factor(mu, sigma, t, g, h);
    let z = 2.0 * mu * t * j / d;
    let a = z.abs();
    let e = (-a).exp();
    let ratio = z.signum() * (1.0 - e * e) / (1.0 + e * e + 2.0 * b * e);
    (s2 * t * j + h2 * mu * t * ratio) / d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMeanFields {
    pub m: Vec<f64>,
    pub iterations: usize,
    /// `max_i |m_i - rhs_i(m)|`.
    pub residual: f64,
}

pub const LOCAL_DAMPING: f64 = 0.5;
pub const LOCAL_MAX_ITER: usize = 10_000;
pub const LOCAL_TOL: f64 = 1e-10;

pub fn solve_local_mean_fields(mkt: &HeterogeneousMarket) -> Result<LocalMeanFields> {
    solve_local_mean_fields_from(mkt, &vec![0.0; mkt.n()])
}

/// Damped fixed-point iteration of the coupled self-consistency conditions
/// starting from `m0`.
pub fn solve_local_mean_fields_from(mkt: &HeterogeneousMarket, m0: &[f64]) -> Result<LocalMeanFields> {
    mkt.validate()?;
    let n = mkt.n();
    if m0.len() != n {
        return Err(Error::InvalidInput("initial guess has the wrong length".into()));
    }
    let nf = n as f64;
    let excl = matches!(mkt.convention, MeanFieldConvention::SelfExcluded);
    let rhs = |m: &[f64]| -> Vec<f64> {
        let mean = pairwise_sum(m) / nf;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let psi_g = mkt.g * (mean - if excl { m[i] / nf } else { 0.0 });
                asset_mean(mkt.mu[i], mkt.sigma[i], mkt.t, mkt.g, mkt.h, psi_g + mkt.field[i])
            })
            .collect()
    };
    let mut m = m0.to_vec();
    let mut residual = f64::INFINITY;
    for it in 0..=LOCAL_MAX_ITER {
        let f = rhs(&m);
        residual = m.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual < 0.01 * LOCAL_TOL {
            return Ok(LocalMeanFields { m, iterations: it, residual });
        }
        for (mi, fi) in m.iter_mut().zip(&f) {
            *mi = (1.0 - LOCAL_DAMPING) * *mi + LOCAL_DAMPING * fi;
        }
    }
    if residual < LOCAL_TOL {
        return Ok(LocalMeanFields { m, iterations: LOCAL_MAX_ITER, residual });
    }
    Err(Error::NonConvergence { what: "local mean fields".into(), iterations: LOCAL_MAX_ITER, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: f64,
    /// `(1/N^2) sum_ij C_ij` from the covariance matrix.
    pub mean_cov: f64,
    /// `(h^2 / 2N) chi` with the closed-form homogeneous susceptibility.
    pub response_side: f64,
    pub chi: f64,
    pub relative_error: f64,
    /// Annualized mean single-asset volatility.
    pub mean_vol: f64,
    /// Mean pairwise correlation `A / (N (1 - A))`.
    pub mean_corr: f64,
    /// Mean off-diagonal correlation read from the covariance matrix.
    pub matrix_mean_corr: f64,
    /// Index-variance proxy `sigma_m^2 / sigma_M^2`.
    pub rho_proxy: f64,
}

/// Compare the mean covariance with the susceptibility for a homogeneous market.
pub fn fluctuation_response_check(mkt: &HeterogeneousMarket) -> Result<FluctuationReport> {
    mkt.validate()?;
    if !mkt.is_homogeneous() {
        return Err(Error::InvalidInput("fluctuation-response check needs identical assets".into()));
    }
    let lr = linear_response(mkt)?;
    let n = mkt.n();
    let nf = n as f64;
    let mean_cov = pairwise_sum(lr.cov.as_slice()) / (nf * nf);
    let chi = susceptibility(&mkt.asset_params(0), mkt.g, mkt.h)?;
    let response_side = mkt.h * mkt.h / (2.0 * nf) * chi;
    let a = lr.a[0];
    let mean_vol = mkt.h / mkt.t.sqrt() * (0.5 * lr.a_over_g[0]).sqrt();
    let mean_corr = a / (nf * (1.0 - a));
    let mut off = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off.push(lr.cov[(i, j)] / (lr.cov[(i, i)] * lr.cov[(j, j)]).sqrt());
            }
        }
    }
    let matrix_mean_corr = pairwise_sum(&off) / off.len() as f64;
    let rho_proxy = (mean_cov / mkt.t) / (mean_vol * mean_vol);
    Ok(FluctuationReport {
        n,
        a,
        mean_cov,
        response_side,
        chi,
        relative_error: (mean_cov - response_side).abs() / response_side.abs(),
        mean_vol,
        mean_corr,
        matrix_mean_corr,
        rho_proxy,
    })
}

/// Invert the mean-correlation and mean-volatility relations:
/// `A = N rho/(1 + N rho)` and `g = h^2 A/(2 sigma_M^2 T)`.
pub fn coupling_from_correlation(n: usize, rho: f64, sigma_m: f64, h: f64, t: f64) -> (f64, f64) {
    let nr = n as f64 * rho;
    let a = nr / (1.0 + nr);
    (a, h * h * a / (2.0 * sigma_m * sigma_m * t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_has_no_cross_covariance() {
        let mkt = HeterogeneousMarket {
            mu: vec![0.1, 0.2, 0.05],
            sigma: vec![0.2, 0.3, 0.25],
            field: vec![0.0; 3],
            g: 0.0,
            h: 0.3,
            t: 1.0,
            convention: MeanFieldConvention::SelfInclusive,
        };
        let lr = linear_response(&mkt).unwrap();
        for i in 0..3 {
            assert!(lr.cov[(i, i)] > 0.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(lr.cov[(i, j)], 0.0);
                }
            }
        }
        // single-asset variance of the symmetric stationary mixture
        let p = mkt.asset_params(1);
        let var = crate::potential::stationary_density(&p).variance();
        assert!((lr.cov[(1, 1)] - var).abs() < 1e-12);
    }

    #[test]
    fn mean_correlation_inversion() {
        let (a, _) = coupling_from_correlation(500, 0.4, 0.2, 0.3, 1.0);
        assert!((a - 200.0 / 201.0).abs() < 1e-15);
        assert!((a / (500.0 * (1.0 - a)) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_zero_field_stays_at_zero() {
        let mkt = HeterogeneousMarket::homogeneous(10, 0.4, 0.1, 0.2, 0.3, 1.0);
        let r = solve_local_mean_fields(&mkt).unwrap();
        assert!(r.m.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut mkt = HeterogeneousMarket::homogeneous(4, 0.4, 0.1, 0.2, 0.3, 1.0);
        mkt.field.pop();
        assert!(matches!(linear_response(&mkt), Err(Error::InvalidInput(_))));
    }
}
