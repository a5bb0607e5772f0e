//! Option pricing under the stationary mixture density, multi-start
//! calibration of the effective parameters, and the derived coupling and
//! equilibrium market log-return.

use std::io::Read;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mean_field::closed_form_mean;
use crate::numerics::{bisect, halton, logistic, nelder_mead, norm_cdf, pairwise_sum, SimplexResult};
use crate::potential::{invert_renormalization, stationary_density, PotentialParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionType {
    #[serde(rename = "C")]
    Call,
    #[serde(rename = "P")]
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub quote_date: NaiveDate,
    pub expiry_date: NaiveDate,
    #[serde(rename = "type")]
    pub option_type: OptionType,
    pub strike: f64,
    pub mid_price: f64,
    pub spot: f64,
    pub rate: f64,
}

impl OptionQuote {
    /// ACT/365 year fraction between quote and expiry.
    pub fn year_fraction(&self) -> f64 {
        year_fraction(self.quote_date, self.expiry_date)
    }

    pub fn validate(&self) -> Result<()> {
        if self.expiry_date <= self.quote_date {
            return Err(Error::InvalidInput(format!("expiry {} is not after quote date {}", self.expiry_date, self.quote_date)));
        }
        if !(self.strike > 0.0) || !(self.spot > 0.0) {
            return Err(Error::InvalidInput(format!("strike and spot must be positive (strike {})", self.strike)));
        }
        if !(self.mid_price >= 0.0) || !self.rate.is_finite() {
            return Err(Error::InvalidInput(format!("bad mid price {} or rate {}", self.mid_price, self.rate)));
        }
        Ok(())
    }
}

pub fn year_fraction(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / 365.0
}

/// Reads quotes with header `quote_date,expiry_date,type,strike,mid_price,spot,rate`.
pub fn read_quotes<R: Read>(reader: R) -> Result<Vec<OptionQuote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = ["quote_date", "expiry_date", "type", "strike", "mid_price", "spot", "rate"];
    let headers = rdr.headers().map_err(|e| Error::InvalidInput(format!("quote CSV: {e}")))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidInput(format!("quote CSV header must be {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.deserialize::<OptionQuote>().enumerate() {
        let q = rec.map_err(|e| Error::InvalidInput(format!("quote CSV row {}: {e}", line + 1)))?;
        q.validate()?;
        out.push(q);
    }
    Ok(out)
}

pub fn write_quotes<W: std::io::Write>(writer: W, quotes: &[OptionQuote]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for q in quotes {
        w.serialize(q).map_err(|e| Error::InvalidInput(format!("quote CSV: {e}")))?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("quote CSV: {e}")))?;
    Ok(())
}

/// Discounted European price with terminal log-return `y` drawn from the
/// stationary mixture of `barred` (component k: mean `mu_k T`, variance
/// `sigma_k^2 T / 2`, cross term included). `barred.t` is the tenor.
pub fn price_european(barred: &PotentialParams, spot: f64, rate: f64, strike: f64, option_type: OptionType) -> f64 {
    let s = stationary_density(barred);
    let disc = (-rate * barred.t).exp();
    let k_log = (strike / spot).ln();
    let terms: Vec<f64> = s
        .components
        .iter()
        .map(|c| {
            let sd = c.variance.sqrt();
            let d2 = (c.mean - k_log) / sd;
            let d1 = d2 + sd;
            let fwd = spot * (c.mean + 0.5 * c.variance).exp();
            c.weight
                * match option_type {
                    OptionType::Call => fwd * norm_cdf(d1) - strike * norm_cdf(d2),
                    OptionType::Put => strike * norm_cdf(-d2) - fwd * norm_cdf(-d1),
                }
        })
        .collect();
    disc * terms.iter().sum::<f64>()
}

/// Undiscounted forward `spot * E[e^y]` under the mixture.
pub fn mixture_forward(barred: &PotentialParams, spot: f64) -> f64 {
    let s = stationary_density(barred);
    spot * s.components.iter().map(|c| c.weight * (c.mean + 0.5 * c.variance).exp()).sum::<f64>()
}

/// `g = h^2 / (2 sigma_M^2 T)` with `sigma_M^2 = max_k(sigma_k^2 / 2) + delta_sigma2`.
pub fn estimate_coupling(sigma1: f64, sigma2: f64, h: f64, t: f64, delta_sigma2: f64) -> f64 {
    let sm2 = (0.5 * sigma1 * sigma1).max(0.5 * sigma2 * sigma2) + delta_sigma2;
    h * h / (2.0 * sm2 * t)
}

/// Default margin used by [`estimate_coupling`].
pub const DEFAULT_DELTA_SIGMA2: f64 = 0.05;

/// Closed-form equilibrium market log-return of the effective parameters.
pub fn equilibrium_return(barred: &PotentialParams) -> f64 {
    closed_form_mean(barred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Calls,
    Puts,
}

impl Side {
    pub fn option_type(self) -> OptionType {
        match self {
            Side::Calls => OptionType::Call,
            Side::Puts => OptionType::Put,
        }
    }
}

/// Box constraints of the calibrated effective parameters.
pub const MU_BOUNDS: (f64, f64) = (-3.0, 3.0);
pub const SIGMA_BOUNDS: (f64, f64) = (0.01, 3.0);
pub const A_BOUNDS: (f64, f64) = (0.02, 0.98);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Noise level; prices do not depend on it, it enters `g` and the bare parameters.
    pub h: f64,
    #[serde(default = "default_delta_sigma2")]
    pub delta_sigma2: f64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_delta_sigma2() -> f64 {
    DEFAULT_DELTA_SIGMA2
}
fn default_starts() -> usize {
    64
}
fn default_max_iter() -> usize {
    4000
}

impl CalibrationConfig {
    pub fn new(h: f64) -> Self {
        Self { h, delta_sigma2: DEFAULT_DELTA_SIGMA2, starts: default_starts(), seed: 0, max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub side: Side,
    /// Fitted effective parameters (with `T` from the chain and the configured `h`).
    pub barred: PotentialParams,
    /// Mean absolute percentage pricing error, in percent.
    pub mape: f64,
    pub g: f64,
    /// Whether the bare parameters exist for this `g`.
    pub g_valid: bool,
    pub m: f64,
    pub bare: Option<PotentialParams>,
    pub quotes: usize,
    pub best_start: usize,
    /// Best MAPE after each accepted iteration of the winning start.
    pub loss_history: Vec<f64>,
}

fn to_box(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * logistic(u)
}

fn from_box(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let s = ((x - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
    (s / (1.0 - s)).ln()
}

fn decode(u: &[f64], t: f64, h: f64) -> PotentialParams {
    PotentialParams {
        mu1: to_box(u[0], MU_BOUNDS),
        mu2: to_box(u[1], MU_BOUNDS),
        sigma1: to_box(u[2], SIGMA_BOUNDS),
        sigma2: to_box(u[3], SIGMA_BOUNDS),
        a: to_box(u[4], A_BOUNDS),
        t,
        h,
    }
}

/// Relabels components so that `mu1 >= mu2`; the density is unchanged.
pub fn canonicalize(p: &PotentialParams) -> PotentialParams {
    if p.mu1 >= p.mu2 {
        *p
    } else {
        PotentialParams { mu1: p.mu2, mu2: p.mu1, sigma1: p.sigma2, sigma2: p.sigma1, a: 1.0 - p.a, ..*p }
    }
}

/// MAPE in percent of `barred` against `quotes`.
pub fn mape(barred: &PotentialParams, quotes: &[OptionQuote]) -> f64 {
    let errs: Vec<f64> = quotes
        .iter()
        .map(|q| {
            let model = price_european(barred, q.spot, q.rate, q.strike, q.option_type);
            (model - q.mid_price).abs() / q.mid_price
        })
        .collect();
    100.0 * pairwise_sum(&errs) / quotes.len() as f64
}

/// Mean squared relative pricing error.
pub fn mean_squared_relative_error(barred: &PotentialParams, quotes: &[OptionQuote]) -> f64 {
    let errs: Vec<f64> = quotes
        .iter()
        .map(|q| {
            let model = price_european(barred, q.spot, q.rate, q.strike, q.option_type);
            let e = (model - q.mid_price) / q.mid_price;
            e * e
        })
        .collect();
    pairwise_sum(&errs) / quotes.len() as f64
}

/// Nelder-Mead restarted around the incumbent until a restart stops improving.
fn restarted<F: Fn(&[f64]) -> f64 + Copy>(f: F, x0: &[f64], max_iter: usize, step: f64) -> SimplexResult {
    let mut best = nelder_mead(f, x0, step, max_iter, 1e-13);
    let mut history = best.history.clone();
    for _ in 0..RESTARTS {
        let next = nelder_mead(f, &best.x, step, max_iter, 1e-13);
        if next.value < best.value {
            history.extend(next.history.iter().copied());
            best = next;
        } else {
            break;
        }
    }
    SimplexResult { history, ..best }
}

const RESTARTS: usize = 10;

/// Starts that go on to full refinement after the screening pass.
const REFINED_STARTS: usize = 8;

/// Minimum number of quotes on the calibrated side.
pub const MIN_QUOTES: usize = 6;

/// Fits the five effective parameters to one side of a single-expiry chain.
pub fn calibrate(chain: &[OptionQuote], side: Side, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    let quotes: Vec<OptionQuote> = chain.iter().filter(|q| q.option_type == side.option_type()).copied().collect();
    if quotes.len() < MIN_QUOTES {
        return Err(Error::InsufficientQuotes { found: quotes.len(), needed: MIN_QUOTES });
    }
    for q in &quotes {
        q.validate()?;
        if !(q.mid_price > 0.0) {
            return Err(Error::InvalidInput(format!("zero mid price at strike {}", q.strike)));
        }
    }
    let t = quotes[0].year_fraction();
    if quotes.iter().any(|q| q.quote_date != quotes[0].quote_date || q.expiry_date != quotes[0].expiry_date) {
        return Err(Error::InvalidInput("calibration needs a single quote date and expiry".into()));
    }
    if !(cfg.h > 0.0) || cfg.starts == 0 || !(cfg.delta_sigma2 > 0.0) {
        return Err(Error::InvalidInput("need h > 0, delta_sigma2 > 0 and at least one start".into()));
    }

    let objective = |u: &[f64]| {
        let v = mape(&decode(u, t, cfg.h), &quotes);
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shift: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
    let starts: Vec<Vec<f64>> = (0..cfg.starts)
        .map(|i| {
            let bounds = [MU_BOUNDS, MU_BOUNDS, SIGMA_BOUNDS, SIGMA_BOUNDS, A_BOUNDS];
            halton(i + 1, 5)
                .iter()
                .zip(&shift)
                .zip(bounds)
                .map(|((h, s), b)| from_box(b.0 + (b.1 - b.0) * (h + s).fract(), b))
                .collect()
        })
        .collect();

    // Stage one runs on the smooth mean squared relative error, stage two
    // polishes the absolute-error loss that is reported.
    let smooth = |u: &[f64]| {
        let v = mean_squared_relative_error(&decode(u, t, cfg.h), &quotes);
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    };
    let screened: Vec<(usize, SimplexResult)> = starts
        .par_iter()
        .map(|x0| nelder_mead(smooth, x0, 0.5, cfg.max_iter, 1e-10))
        .enumerate()
        .collect();
    let mut order: Vec<usize> = (0..screened.len()).collect();
    order.sort_by(|&i, &j| screened[i].1.value.total_cmp(&screened[j].1.value).then(i.cmp(&j)));
    order.truncate(REFINED_STARTS);
    order.sort_unstable();

    let runs: Vec<_> = order
        .par_iter()
        .map(|&i| {
            let warm = restarted(smooth, &screened[i].1.x, cfg.max_iter, 0.2);
            let r = nelder_mead(objective, &warm.x, 0.1, cfg.max_iter, 1e-13);
            let mut history = r.history.clone();
            let polished = restarted(objective, &r.x, cfg.max_iter, 0.05);
            let r = if polished.value < r.value {
                history.extend(polished.history.iter().copied());
                polished
            } else {
                r
            };
            (i, (r.x, r.value, history))
        })
        .collect();

    let (best_start, (x, value, history)) = runs
        .into_iter()
        .fold(None, |acc: Option<(usize, (Vec<f64>, f64, Vec<f64>))>, (i, r)| match acc {
            Some((j, b)) if b.1 <= r.1 => Some((j, b)),
            _ => Some((i, r)),
        })
        .expect("at least one start");
    if !(value < f64::MAX) {
        return Err(Error::OptimizerFailure { best_loss: value, detail: "no start produced a finite loss".into() });
    }

    let barred = canonicalize(&decode(&x, t, cfg.h));
    let fitted_mape = mape(&barred, &quotes);
    let g = estimate_coupling(barred.sigma1, barred.sigma2, cfg.h, t, cfg.delta_sigma2);
    let m = equilibrium_return(&barred);
    let bare = invert_renormalization(&barred, g, m).ok();
    Ok(CalibrationResult {
        side,
        barred,
        mape: fitted_mape,
        g,
        g_valid: bare.is_some(),
        m,
        bare,
        quotes: quotes.len(),
        best_start,
        loss_history: history,
    })
}

/// Inverse of the mixture CDF by bisection.
pub fn mixture_quantile(barred: &PotentialParams, prob: f64) -> f64 {
    let s = stationary_density(barred);
    let spread = 12.0 * s.variance().sqrt() + s.mean().abs() + 1.0;
    bisect(|y| s.cdf(y) - prob, s.mean() - spread, s.mean() + spread, 1e-14)
}

/// Noiseless chain priced by [`price_european`], with strikes at mixture
/// quantiles evenly spaced over `prob_range`.
pub fn synthetic_chain(
    barred: &PotentialParams,
    spot: f64,
    rate: f64,
    quote_date: NaiveDate,
    expiry_date: NaiveDate,
    side: Side,
    n: usize,
    prob_range: (f64, f64),
) -> Vec<OptionQuote> {
    let p = PotentialParams { t: year_fraction(quote_date, expiry_date), ..*barred };
    let (lo, hi) = prob_range;
    (0..n)
        .map(|i| {
            let prob = lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64;
            let strike = spot * mixture_quantile(&p, prob).exp();
            let option_type = side.option_type();
            OptionQuote {
                quote_date,
                expiry_date,
                option_type,
                strike,
                mid_price: price_european(&p, spot, rate, strike, option_type),
                spot,
                rate,
            }
        })
        .collect()
}
