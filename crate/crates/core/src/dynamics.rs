//! Finite-N interacting Langevin particles and a one-dimensional
//! McKean-Vlasov density solver.
//!
//! Each return follows `dy_i = [-V'(y_i) - g (y_i - ybar)] dt + h dW_i`. The
//! pairwise Curie-Weiss force `(g/N) sum_j (y_i - y_j)` collapses to the
//! mean-field form `g (y_i - ybar)`, so a step costs O(N). The stationary law
//! of a single particle is `exp(-2 U / h^2)`, which is the factor-of-two
//! Boltzmann convention used by the mean-field module.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::potential::PotentialParams;

/// Particle count above which the position update runs on the rayon pool.
const PARALLEL_THRESHOLD: usize = 4096;

/// Initial condition for every particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    PointMass { y: f64 },
    Gaussian { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    /// Steps discarded before stationary statistics are accumulated.
    pub burn_in: usize,
    pub init: InitSpec,
    /// Stride of the recorded time series.
    pub record_every: usize,
}

/// `min(1e-3, 0.1 sigma_min^2 T / h^2)`.
pub fn default_dt(p: &PotentialParams) -> f64 {
    let s = p.sigma1.min(p.sigma2);
    (0.1 * s * s * p.t / (p.h * p.h)).min(1e-3)
}

/// Largest admissible step `min(sigma_min^2 T / h^2, 1/g)`.
pub fn max_stable_dt(p: &PotentialParams, g: f64) -> f64 {
    let s = p.sigma1.min(p.sigma2);
    let relax = s * s * p.t / (p.h * p.h);
    if g > 0.0 {
        relax.min(1.0 / g)
    } else {
        relax
    }
}

impl SimConfig {
    /// Default step, 20% burn-in and a record stride of 10.
    pub fn standard(p: &PotentialParams, n: usize, steps: usize, seed: u64, init: InitSpec) -> Self {
        Self { n, dt: default_dt(p), steps, seed, burn_in: steps / 5, init, record_every: 10 }
    }

    pub fn validate(&self, p: &PotentialParams, g: f64) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("N must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        let bound = max_stable_dt(p, g);
        if self.dt >= bound {
            return Err(Error::InvalidInput(format!("dt = {} is not below the stability bound {bound}", self.dt)));
        }
        if self.burn_in >= self.steps {
            return Err(Error::InvalidInput("burn_in must be smaller than steps".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be positive".into()));
        }
        if let InitSpec::Gaussian { sd, .. } = self.init {
            if !(sd >= 0.0) {
                return Err(Error::InvalidInput("initial sd must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Confinement sanity bound `max|mu_k| T + 20 sigma_max sqrt(T)`.
pub fn confinement_bound(p: &PotentialParams) -> f64 {
    p.mu1.abs().max(p.mu2.abs()) * p.t + 20.0 * p.sigma_max() * p.t.sqrt()
}

/// Mean-field force `-V'(y_i) - g (y_i - ybar)` for every particle.
pub fn mean_field_force(p: &PotentialParams, g: f64, y: &[f64]) -> Vec<f64> {
    let ybar = pairwise_sum(y) / y.len() as f64;
    let h2 = p.h * p.h;
    y.iter().map(|&yi| h2 * p.d_ln_mixture(yi) - g * (yi - ybar)).collect()
}

/// Brute-force `-V'(y_i) - (g/N) sum_j (y_i - y_j)`.
pub fn pairwise_force(p: &PotentialParams, g: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let h2 = p.h * p.h;
    y.iter()
        .map(|&yi| {
            let diffs: Vec<f64> = y.iter().map(|&yj| yi - yj).collect();
            h2 * p.d_ln_mixture(yi) - g / n * pairwise_sum(&diffs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceCheck {
    pub mean_field: Vec<f64>,
    pub pairwise: Vec<f64>,
    pub max_abs_diff: f64,
}

/// Compares the O(N) and O(N^2) interaction forces.
pub fn force_equivalence(p: &PotentialParams, g: f64, y: &[f64]) -> Result<ForceCheck> {
    if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("need a non-empty finite vector".into()));
    }
    let mean_field = mean_field_force(p, g, y);
    let pairwise = pairwise_force(p, g, y);
    let max_abs_diff = mean_field.iter().zip(&pairwise).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ForceCheck { mean_field, pairwise, max_abs_diff })
}

/// Euler-Maruyama particle ensemble. Noise is drawn serially from one seeded
/// stream, so trajectories do not depend on the thread count.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    params: PotentialParams,
    g: f64,
    dt: f64,
    y: Vec<f64>,
    noise: Vec<f64>,
    rng: ChaCha8Rng,
    step: usize,
    bound: f64,
}

impl ParticleSystem {
    pub fn new(p: &PotentialParams, g: f64, n: usize, dt: f64, seed: u64, init: InitSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = match init {
            InitSpec::PointMass { y } => vec![y; n],
            InitSpec::Gaussian { mean, sd } => (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + sd * z
                })
                .collect(),
        };
        Self { params: *p, g, dt, y, noise: vec![0.0; n], rng, step: 0, bound: confinement_bound(p) }
    }

    pub fn positions(&self) -> &[f64] {
        &self.y
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.y) / self.y.len() as f64
    }

    /// Unbiased cross-sectional variance (zero for a single particle).
    pub fn cross_variance(&self, mean: f64) -> f64 {
        let n = self.y.len();
        if n < 2 {
            return 0.0;
        }
        let sq: Vec<f64> = self.y.iter().map(|&v| (v - mean) * (v - mean)).collect();
        pairwise_sum(&sq) / (n - 1) as f64
    }

    pub fn step(&mut self) -> Result<()> {
        let ybar = self.mean();
        for z in self.noise.iter_mut() {
            *z = StandardNormal.sample(&mut self.rng);
        }
        let p = self.params;
        let (g, dt) = (self.g, self.dt);
        let h2 = p.h * p.h;
        let amp = p.h * dt.sqrt();
        let update = |(yi, &z): (&mut f64, &f64)| {
            let drift = h2 * p.d_ln_mixture(*yi) - g * (*yi - ybar);
            *yi += drift * dt + amp * z;
        };
        if self.y.len() >= PARALLEL_THRESHOLD {
            self.y.par_iter_mut().zip(self.noise.par_iter()).for_each(update);
        } else {
            self.y.iter_mut().zip(self.noise.iter()).for_each(update);
        }
        self.step += 1;
        let worst = self.y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !(worst <= self.bound) {
            return Err(Error::UnstableStep { step: self.step, value: worst, bound: self.bound });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
}

/// Time averages over the post-burn-in steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryStats {
    pub samples: usize,
    /// Time-averaged ensemble mean.
    pub mean: f64,
    /// Batch-means standard error of `mean` (20 batches).
    pub mean_se: f64,
    /// Time-averaged cross-sectional variance.
    pub cross_var: f64,
    /// Temporal variance of the ensemble mean; equals the all-pairs mean covariance.
    pub mean_cov_all: f64,
    /// Mean covariance over distinct pairs.
    pub mean_cov_offdiag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub series: Vec<SimSample>,
    pub stats: StationaryStats,
    pub final_positions: Vec<f64>,
}

const BATCHES: usize = 20;

/// Runs the particle system and accumulates stationary statistics.
pub fn simulate_particles(p: &PotentialParams, g: f64, cfg: &SimConfig) -> Result<SimResult> {
    p.validate()?;
    if !(g >= 0.0) {
        return Err(Error::InvalidParams("g must be non-negative".into()));
    }
    cfg.validate(p, g)?;
    let n = cfg.n;
    let mut sys = ParticleSystem::new(p, g, n, cfg.dt, cfg.seed, cfg.init);
    let mut series = Vec::with_capacity(cfg.steps / cfg.record_every + 2);
    let m0 = sys.mean();
    series.push(SimSample { t: 0.0, mean: m0, var: sys.cross_variance(m0) });

    let kept = cfg.steps - cfg.burn_in;
    let mut means = Vec::with_capacity(kept);
    let mut cross_vars = Vec::with_capacity(kept);
    let mut sum_y = vec![0.0; n];
    let mut sum_y2 = vec![0.0; n];
    for k in 1..=cfg.steps {
        sys.step()?;
        let m = sys.mean();
        let v = sys.cross_variance(m);
        if k % cfg.record_every == 0 {
            series.push(SimSample { t: k as f64 * cfg.dt, mean: m, var: v });
        }
        if k > cfg.burn_in {
            means.push(m);
            cross_vars.push(v);
            for ((s, s2), &yi) in sum_y.iter_mut().zip(sum_y2.iter_mut()).zip(sys.positions()) {
                *s += yi;
                *s2 += yi * yi;
            }
        }
    }

    let kf = kept as f64;
    let mean = pairwise_sum(&means) / kf;
    let dev2: Vec<f64> = means.iter().map(|&m| (m - mean) * (m - mean)).collect();
    let mean_cov_all = pairwise_sum(&dev2) / kf;
    let per_particle: Vec<f64> = sum_y.iter().zip(&sum_y2).map(|(s, s2)| s2 / kf - (s / kf) * (s / kf)).collect();
    let diag = pairwise_sum(&per_particle);
    let nf = n as f64;
    let mean_cov_offdiag = if n > 1 { (nf * nf * mean_cov_all - diag) / (nf * (nf - 1.0)) } else { 0.0 };
    let stats = StationaryStats {
        samples: kept,
        mean,
        mean_se: batch_standard_error(&means),
        cross_var: pairwise_sum(&cross_vars) / kf,
        mean_cov_all,
        mean_cov_offdiag,
    };
    Ok(SimResult { series, stats, final_positions: sys.positions().to_vec() })
}

/// Standard error of the mean of a correlated series from `BATCHES` batch means.
pub fn batch_standard_error(xs: &[f64]) -> f64 {
    let len = xs.len() / BATCHES;
    if len == 0 {
        return f64::NAN;
    }
    let bm: Vec<f64> = xs.chunks_exact(len).take(BATCHES).map(|c| pairwise_sum(c) / len as f64).collect();
    let mu = pairwise_sum(&bm) / BATCHES as f64;
    let var = bm.iter().map(|b| (b - mu) * (b - mu)).sum::<f64>() / (BATCHES - 1) as f64;
    (var / BATCHES as f64).sqrt()
}

/// Uniform node grid for the density solver. Nodes carry trapezoid weights,
/// so the discrete mass and first moment are trapezoid sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub y_min: f64,
    pub y_max: f64,
    /// Number of nodes.
    pub n_cells: usize,
    pub dt: f64,
}

impl GridConfig {
    /// Domain `+-10 sigma_max sqrt(T)` beyond the outer means, with the step
    /// set to `safety` times the explicit stability limit over
    /// `m in [-max|mu| T, max|mu| T]`.
    pub fn covering(p: &PotentialParams, g: f64, n_cells: usize, safety: f64) -> Self {
        let pad = 10.0 * p.sigma_max() * p.t.sqrt();
        let lo = (p.mu1 * p.t).min(p.mu2 * p.t) - pad;
        let hi = (p.mu1 * p.t).max(p.mu2 * p.t) + pad;
        let mut grid = Self { y_min: lo, y_max: hi, n_cells, dt: 1.0 };
        let solver = DensitySolver::new(p, g, &grid);
        let reach = p.mu1.abs().max(p.mu2.abs()) * p.t;
        let rate = [-reach, 0.0, reach].iter().map(|&m| solver.courant_rate(m)).fold(0.0, f64::max);
        grid.dt = safety / rate;
        grid
    }

    pub fn spacing(&self) -> f64 {
        (self.y_max - self.y_min) / (self.n_cells - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let d = self.spacing();
        (0..self.n_cells).map(|i| self.y_min + i as f64 * d).collect()
    }

    pub fn validate(&self, p: &PotentialParams) -> Result<()> {
        if self.n_cells < 3 || !(self.y_max > self.y_min) || !(self.dt > 0.0) {
            return Err(Error::InvalidInput("grid needs n_cells >= 3, y_max > y_min and dt > 0".into()));
        }
        let pad = 10.0 * p.sigma_max() * p.t.sqrt();
        let lo = (p.mu1 * p.t).min(p.mu2 * p.t) - pad;
        let hi = (p.mu1 * p.t).max(p.mu2 * p.t) + pad;
        if self.y_min > lo || self.y_max < hi {
            return Err(Error::InvalidInput(format!(
                "grid [{}, {}] must cover [{lo}, {hi}]",
                self.y_min, self.y_max
            )));
        }
        Ok(())
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let d = self.spacing();
        let mut w = vec![d; self.n_cells];
        w[0] = 0.5 * d;
        w[self.n_cells - 1] = 0.5 * d;
        w
    }
}

/// `x / (e^x - 1)`.
fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

/// Scharfetter-Gummel finite-volume discretization of
/// `dp/dt = d/dy [ (V' + g (y - m)) p + (h^2/2) dp/dy ]` with zero-flux ends.
/// Its discrete steady state is exactly `exp(-Phi)` at the nodes, with
/// `Phi = -2 ln Psi_0 + g (y - m)^2 / h^2`.
struct DensitySolver {
    y: Vec<f64>,
    w: Vec<f64>,
    base: Vec<f64>,
    coef: f64,
    tilt: f64,
    dt: f64,
}

impl DensitySolver {
    fn new(p: &PotentialParams, g: f64, grid: &GridConfig) -> Self {
        let y = grid.nodes();
        let base = y.iter().map(|&v| -2.0 * p.ln_mixture(v)).collect();
        let d = grid.spacing();
        Self { w: grid.weights(), base, coef: 0.5 * p.h * p.h / d, tilt: g / (p.h * p.h), dt: grid.dt, y }
    }

    fn phi(&self, m: f64) -> Vec<f64> {
        self.y.iter().zip(&self.base).map(|(&y, &b)| b + self.tilt * (y - m) * (y - m)).collect()
    }

    /// Largest `(1/w_i) sum |outflow coefficients|`; the step is positivity
    /// preserving when `dt` times this is at most one.
    fn courant_rate(&self, m: f64) -> f64 {
        self.courant_rate_from(&self.phi(m))
    }

    fn first_moment(&self, p: &[f64]) -> f64 {
        let t: Vec<f64> = self.w.iter().zip(&self.y).zip(p).map(|((w, y), q)| w * y * q).collect();
        pairwise_sum(&t)
    }

    fn mass(&self, p: &[f64]) -> f64 {
        let t: Vec<f64> = self.w.iter().zip(p).map(|(w, q)| w * q).collect();
        pairwise_sum(&t)
    }

    /// One explicit step; returns the Courant number used.
    fn step(&self, p: &mut [f64], m: f64, flux: &mut [f64]) -> Result<f64> {
        let phi = self.phi(m);
        let courant = self.dt * self.courant_rate_from(&phi);
        if courant > 1.0 {
            return Err(Error::CflViolation { courant });
        }
        let n = p.len();
        for i in 0..n - 1 {
            let dphi = phi[i + 1] - phi[i];
            flux[i] = self.coef * (bernoulli(dphi) * p[i] - bernoulli(-dphi) * p[i + 1]);
        }
        for i in 0..n {
            let right = if i + 1 < n { flux[i] } else { 0.0 };
            let left = if i > 0 { flux[i - 1] } else { 0.0 };
            p[i] -= self.dt * (right - left) / self.w[i];
        }
        Ok(courant)
    }

    fn courant_rate_from(&self, phi: &[f64]) -> f64 {
        let n = self.y.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut out = 0.0;
            if i + 1 < n {
                out += self.coef * bernoulli(phi[i + 1] - phi[i]);
            }
            if i > 0 {
                out += self.coef * bernoulli(phi[i - 1] - phi[i]);
            }
            worst = worst.max(out / self.w[i]);
        }
        worst
    }
}

/// Normalized `exp(-Phi)` at the grid nodes for a frozen mean `m`.
pub fn boltzmann_density(p: &PotentialParams, g: f64, m: f64, grid: &GridConfig) -> Vec<f64> {
    let solver = DensitySolver::new(p, g, grid);
    let phi = solver.phi(m);
    let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let mut q: Vec<f64> = phi.iter().map(|f| (lo - f).exp()).collect();
    let mass = solver.mass(&q);
    q.iter_mut().for_each(|v| *v /= mass);
    q
}

/// Normalized Gaussian sampled at the nodes.
pub fn gaussian_density(mean: f64, sd: f64, grid: &GridConfig) -> Vec<f64> {
    let mut q: Vec<f64> = grid.nodes().iter().map(|&y| (-0.5 * ((y - mean) / sd).powi(2)).exp()).collect();
    let w = grid.weights();
    let mass: f64 = pairwise_sum(&q.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>());
    q.iter_mut().for_each(|v| *v /= mass);
    q
}

/// Trapezoid `integral |p - q| dy`.
pub fn l1_distance(p: &[f64], q: &[f64], grid: &GridConfig) -> f64 {
    let w = grid.weights();
    let t: Vec<f64> = p.iter().zip(q).zip(&w).map(|((a, b), w)| w * (a - b).abs()).collect();
    pairwise_sum(&t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub t: f64,
    pub mean: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTrajectory {
    pub y: Vec<f64>,
    pub density: Vec<f64>,
    pub snapshots: Vec<DensitySnapshot>,
    pub steps: usize,
    /// Largest one-step change of the trapezoid mass.
    pub max_mass_drift: f64,
    pub min_density: f64,
    pub max_courant: f64,
    pub final_mean: f64,
}

/// Explicit integration of the McKean-Vlasov equation up to `t_end`. The
/// self-consistent mean is recomputed from the density before every step.
pub fn evolve_mckean_vlasov(
    p: &PotentialParams,
    g: f64,
    grid: &GridConfig,
    init: &[f64],
    t_end: f64,
    record_every: usize,
) -> Result<DensityTrajectory> {
    p.validate()?;
    grid.validate(p)?;
    if init.len() != grid.n_cells {
        return Err(Error::InvalidInput(format!("init has {} values, grid has {} nodes", init.len(), grid.n_cells)));
    }
    if init.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("initial density must be finite and non-negative".into()));
    }
    let solver = DensitySolver::new(p, g, grid);
    let mass0 = solver.mass(init);
    if (mass0 - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!("initial density has mass {mass0}, expected 1")));
    }
    if !(t_end >= 0.0) || record_every == 0 {
        return Err(Error::InvalidInput("need t_end >= 0 and record_every > 0".into()));
    }
    let steps = (t_end / grid.dt).round() as usize;
    let mut dens = init.to_vec();
    let mut flux = vec![0.0; grid.n_cells - 1];
    let mut snapshots = Vec::new();
    let mut mass = mass0;
    let mut max_mass_drift: f64 = 0.0;
    let mut min_density = dens.iter().copied().fold(f64::INFINITY, f64::min);
    let mut max_courant: f64 = 0.0;
    let mut m = solver.first_moment(&dens);
    snapshots.push(DensitySnapshot { t: 0.0, mean: m, mass });
    for k in 1..=steps {
        max_courant = max_courant.max(solver.step(&mut dens, m, &mut flux)?);
        let new_mass = solver.mass(&dens);
        max_mass_drift = max_mass_drift.max((new_mass - mass).abs());
        mass = new_mass;
        min_density = dens.iter().copied().fold(min_density, f64::min);
        m = solver.first_moment(&dens);
        if k % record_every == 0 || k == steps {
            snapshots.push(DensitySnapshot { t: k as f64 * grid.dt, mean: m, mass });
        }
    }
    Ok(DensityTrajectory {
        y: solver.y.clone(),
        density: dens,
        snapshots,
        steps,
        max_mass_drift,
        min_density,
        max_courant,
        final_mean: m,
    })
}
