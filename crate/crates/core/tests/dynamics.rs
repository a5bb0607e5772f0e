mod common;

use mfmarket::dynamics::{
    boltzmann_density, evolve_mckean_vlasov, force_equivalence, gaussian_density, l1_distance, mean_field_force,
    simulate_particles, GridConfig, InitSpec, ParticleSystem, SimConfig,
};
use mfmarket::mean_field::solve_self_consistency;
use mfmarket::phase::susceptibility;
use mfmarket::potential::stationary_density;
use mfmarket::{Error, PotentialParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference(h: f64) -> PotentialParams {
    PotentialParams::symmetric(0.4, 0.1, 1.0, h)
}

fn skewed() -> PotentialParams {
    PotentialParams { mu1: 0.1, mu2: -0.05, sigma1: 0.3, sigma2: 0.2, a: 0.4, t: 1.0, h: 0.5 }
}

/// Interaction part of the force from the explicit double loop.
fn brute_force_interaction(g: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    y.iter().map(|&yi| -g / n * y.iter().map(|&yj| yi - yj).sum::<f64>()).collect()
}

#[test]
fn force_forms_agree() {
    let p = reference(0.2);
    let c = force_equivalence(&p, 0.2, &[0.1, -0.2, 0.4]).unwrap();
    assert!(c.max_abs_diff < 1e-15, "{c:?}");

    let same = mean_field_force(&p, 0.9, &[-0.3; 7]);
    assert_eq!(same, mean_field_force(&p, 0.0, &[-0.3; 7]));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = force_equivalence(&p, 0.7, &y).unwrap();
    assert!(c.max_abs_diff < 1e-12, "{}", c.max_abs_diff);
    let bare = mean_field_force(&p, 0.0, &y);
    for ((f, b), i) in c.mean_field.iter().zip(&bare).zip(brute_force_interaction(0.7, &y)) {
        assert!((f - b - i).abs() < 1e-12);
    }
    assert!(matches!(force_equivalence(&p, 0.2, &[]), Err(Error::InvalidInput(_))));
    assert!(matches!(force_equivalence(&p, 0.2, &[f64::NAN]), Err(Error::InvalidInput(_))));
}

#[test]
fn uncoupled_particles_sample_the_stationary_mixture() {
    let p = skewed();
    let dens = stationary_density(&p);
    // The library cdf against quadrature of the normalized density.
    for y in [-0.5, 0.0, 0.1, 0.6] {
        let q = common::integrate(|s| dens.pdf(s), -6.0, y, 1e-12);
        assert!((q - dens.cdf(y)).abs() < 1e-10, "{y}: {q} vs {}", dens.cdf(y));
    }
    let mut sys = ParticleSystem::new(&p, 0.0, 1000, 1e-3, 17, InitSpec::PointMass { y: 0.0 });
    for _ in 0..3000 {
        sys.step().unwrap();
    }
    let mut samples = Vec::with_capacity(100_000);
    for _ in 0..100 {
        for _ in 0..300 {
            sys.step().unwrap();
        }
        samples.extend_from_slice(sys.positions());
    }
    let ks = common::ks_distance(&mut samples, |y| dens.cdf(y));
    assert!(ks < 0.02, "K-S distance {ks}");
}

#[test]
fn variance_of_ensemble_mean_matches_linear_response() {
    let (mu, sigma, h, g, n) = (0.1, 0.3, 0.4, 0.5, 20);
    let p = PotentialParams::symmetric(mu, sigma, 1.0, h);
    let predicted = h * h / (2.0 * n as f64) * susceptibility(&p, g, h).unwrap();
    let seeds = 8;
    let vals: Vec<f64> = (0..seeds)
        .map(|seed| {
            let cfg = SimConfig::standard(&p, n, 200_000, seed, InitSpec::PointMass { y: 0.0 });
            simulate_particles(&p, g, &cfg).unwrap().stats.mean_cov_all
        })
        .collect();
    let k = seeds as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
    assert!((mean - predicted).abs() < 3.0 * se, "{mean} +- {se} vs {predicted}");
}

#[test]
fn ensemble_mean_approaches_root_as_n_grows() {
    let p = PotentialParams::symmetric(0.4, 0.2, 1.0, 0.14);
    let g = 0.2;
    let root = solve_self_consistency(&p, g, 0.0).unwrap().largest().unwrap().m;
    let rms = |n: usize| {
        let seeds = 4;
        let total: f64 = (0..seeds)
            .map(|seed| {
                let cfg = SimConfig::standard(&p, n, 10_000, seed, InitSpec::PointMass { y: root });
                let s = simulate_particles(&p, g, &cfg).unwrap().stats;
                (s.mean - root).powi(2) + s.mean_cov_all
            })
            .sum();
        (total / seeds as f64).sqrt()
    };
    let r: Vec<f64> = [50, 200, 500].into_iter().map(rms).collect();
    assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
    assert!(r[2] < 0.5 * r[0], "{r:?}");
}

#[test]
fn seeded_runs_repeat_exactly_across_thread_counts() {
    let p = reference(0.35);
    let cfg = SimConfig::standard(&p, 5000, 40, 9, InitSpec::Gaussian { mean: 0.0, sd: 0.3 });
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_particles(&p, 0.2, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
}

#[test]
fn particle_errors() {
    let p = reference(0.35);
    let far = SimConfig::standard(&p, 4, 10, 0, InitSpec::PointMass { y: 50.0 });
    assert!(matches!(simulate_particles(&p, 0.2, &far), Err(Error::UnstableStep { .. })));
    let coarse = SimConfig { dt: 0.5, ..SimConfig::standard(&p, 4, 10, 0, InitSpec::PointMass { y: 0.0 }) };
    assert!(matches!(simulate_particles(&p, 0.2, &coarse), Err(Error::InvalidInput(_))));
    let empty = SimConfig { n: 0, ..far };
    assert!(matches!(simulate_particles(&p, 0.2, &empty), Err(Error::InvalidInput(_))));
}

#[test]
fn uncoupled_stationary_density_stays_put() {
    let p = skewed();
    let grid = GridConfig::covering(&p, 0.0, 401, 0.5);
    let init = boltzmann_density(&p, 0.0, 0.0, &grid);
    // At g = 0 the discrete Boltzmann state is the sampled mixture density.
    let dens = stationary_density(&p);
    let sampled: Vec<f64> = grid.nodes().iter().map(|&y| dens.pdf(y)).collect();
    assert!(l1_distance(&init, &sampled, &grid) < 1e-6);

    let traj = evolve_mckean_vlasov(&p, 0.0, &grid, &init, 1000.0 * grid.dt, 100).unwrap();
    assert_eq!(traj.steps, 1000);
    assert!(l1_distance(&traj.density, &init, &grid) < 1e-6);
    assert!(traj.max_mass_drift < 1e-10);
    assert!(traj.min_density >= 0.0);
    assert!(traj.max_courant <= 0.5 + 1e-12);
}

#[test]
fn density_relaxes_into_positive_basin() {
    let p = reference(0.15);
    let g = 0.2;
    let root = solve_self_consistency(&p, g, 0.0).unwrap().largest().unwrap().m;
    let grid = GridConfig::covering(&p, g, 801, 0.5);
    let init = gaussian_density(0.3, 0.05, &grid);
    let traj = evolve_mckean_vlasov(&p, g, &grid, &init, 20.0, 1000).unwrap();
    assert!(traj.max_mass_drift < 1e-10 && traj.min_density >= 0.0);
    assert!(traj.snapshots.iter().all(|s| (s.mass - 1.0).abs() < 1e-9));
    assert!((traj.final_mean - root).abs() < 0.01, "{} vs {root}", traj.final_mean);
    let ordered = boltzmann_density(&p, g, root, &grid);
    let mixture = boltzmann_density(&p, 0.0, 0.0, &grid);
    let (d_ord, d_mix) = (l1_distance(&traj.density, &ordered, &grid), l1_distance(&traj.density, &mixture, &grid));
    assert!(d_ord < 0.05 && d_mix > 0.5, "{d_ord} {d_mix}");
}

#[test]
fn density_solver_rejects_bad_inputs() {
    let p = reference(0.2);
    let grid = GridConfig::covering(&p, 0.2, 201, 0.5);
    let init = gaussian_density(0.0, 0.1, &grid);
    let mut unnormalized = init.clone();
    unnormalized[100] += 1.0;
    assert!(matches!(evolve_mckean_vlasov(&p, 0.2, &grid, &unnormalized, 1.0, 1), Err(Error::InvalidInput(_))));
    let mut negative = init.clone();
    negative[5] = -1e-3;
    assert!(matches!(evolve_mckean_vlasov(&p, 0.2, &grid, &negative, 1.0, 1), Err(Error::InvalidInput(_))));
    let narrow = GridConfig { y_min: -0.5, y_max: 0.5, ..grid };
    assert!(matches!(evolve_mckean_vlasov(&p, 0.2, &narrow, &init, 1.0, 1), Err(Error::InvalidInput(_))));
    let fast = GridConfig { dt: grid.dt * 10.0, ..grid };
    assert!(matches!(evolve_mckean_vlasov(&p, 0.2, &fast, &init, 1.0, 1), Err(Error::CflViolation { .. })));
}
