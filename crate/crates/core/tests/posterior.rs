use std::sync::Arc;

use implicit_bed::lfire::LfireConfig;
use implicit_bed::posterior::{
    compute_weights, exact_death_posterior, kde_fit, resample, total_variation, GridDensity, KdeDensity,
    PosteriorSamples, WeightedPrior, EXACT_GRID_POINTS, EXACT_GRID_UPPER,
};
use implicit_bed::simulators::{death_log_likelihood, simulate_death, DeathConfig, DeathModel};
use implicit_bed::special::norm_pdf;
use implicit_bed::utility::{estimate_mi_with_models, RngPolicy, UtilityObjective};
use implicit_bed::{DesignPoint, ParameterDraw, PriorSpec, RngSeed};
use proptest::prelude::*;
use proptest::test_runner::RngSeed as PropSeed;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn draws(n: usize) -> Vec<ParameterDraw> {
    (0..n).map(|i| ParameterDraw::new(vec![i as f64])).collect()
}

#[test]
fn two_kernel_density_matches_hand_sum() {
    let kde = KdeDensity::with_bandwidths(&[vec![-1.0], vec![1.0]], vec![1.0]).unwrap();
    let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((kde.density(&[0.0]) - phi1).abs() < 1e-15);
    for x in [0.3, 0.8, 2.5] {
        assert!((kde.density(&[x]) - kde.density(&[-x])).abs() < 1e-15);
    }
    let at_one = 0.5 * (norm_pdf(0.0) + norm_pdf(2.0));
    assert!((kde.density(&[1.0]) - at_one).abs() < 1e-15);
}

fn weighted_bank(seed: u64) -> (WeightedPrior, Vec<f64>) {
    let prior = PriorSpec::sir_default();
    let mut rng = RngSeed(seed).rng();
    let bank = implicit_bed::sample_prior(&prior, 1000, &mut rng).unwrap();
    let logw: Vec<f64> = bank
        .iter()
        .map(|d| -((d.theta[0] - 0.15) / 0.03).powi(2) - ((d.theta[1] - 0.1) / 0.05).powi(2))
        .collect();
    (WeightedPrior::from_log_weights(bank, logw).unwrap(), vec![0.5, 0.5])
}

#[test]
fn kde_mass_is_one_in_two_dimensions() {
    let (wp, ranges) = weighted_bank(41);
    let samples = resample(&wp, 10_000, &mut RngSeed(42).rng()).unwrap();
    let kde = kde_fit(&samples, &ranges).unwrap();
    let (a0, b0) = kde.padded_range(0, 6.0);
    let (a1, b1) = kde.padded_range(1, 6.0);
    let n = 300;
    let (h0, h1) = ((b0 - a0) / n as f64, (b1 - a1) / n as f64);
    let mut mass = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
            mass += w * kde.density(&[a0 + i as f64 * h0, a1 + j as f64 * h1]);
        }
    }
    mass *= h0 * h1;
    assert!((mass - 1.0).abs() < 0.01, "{mass}");
    let mut rng = RngSeed(43).rng();
    for _ in 0..1000 {
        let x = [rng.random_range(-1.0..1.5), rng.random_range(-1.0..1.5)];
        assert!(kde.density(&x) >= 0.0);
    }
}

#[test]
fn kde_marginal_mass_is_one() {
    let (wp, ranges) = weighted_bank(44);
    let samples = resample(&wp, 10_000, &mut RngSeed(45).rng()).unwrap();
    let kde = kde_fit(&samples, &ranges).unwrap();
    for j in 0..2 {
        let (a, b) = kde.padded_range(j, 6.0);
        let grid: Vec<f64> = (0..=2000).map(|k| a + (b - a) * k as f64 / 2000.0).collect();
        let g = GridDensity { density: grid.iter().map(|&x| kde.marginal_density(j, x)).collect(), grid };
        assert!((g.trapezoid_mass() - 1.0).abs() < 0.01);
    }
}

#[test]
fn constant_dimension_gets_a_floored_bandwidth() {
    let samples = PosteriorSamples::from_draws(vec![vec![0.2, 0.1], vec![0.3, 0.1], vec![0.25, 0.1]]);
    let kde = kde_fit(&samples, &[0.5, 0.5]).unwrap();
    assert_eq!(kde.floored(), &[false, true]);
    assert!((kde.bandwidths()[1] - 5e-4).abs() < 1e-18);
    assert!(kde.is_flagged());
}

#[test]
fn lfire_weights_are_close_to_exact_weights() {
    let cfg = DeathConfig::default();
    let sim = Arc::new(DeathModel::new(cfg.clone()).unwrap());
    let prior = PriorSpec::death_default();
    let obj = UtilityObjective::new(sim, prior, 1000, LfireConfig::default(), RngSeed(46), RngPolicy::Common).unwrap();
    let d = DesignPoint::single(1.4).unwrap();
    let (_, models) = estimate_mi_with_models(&obj, &d, obj.evaluation_seed(0)).unwrap();
    let mut rng = RngSeed(47).rng();
    for _ in 0..5 {
        let y = simulate_death(1.5, &d, &cfg, &mut rng).unwrap();
        let lfire = compute_weights(&models, &y.to_f64(), obj.bank(), 30.0).unwrap();
        let exact_log: Vec<f64> = obj.bank().iter().map(|t| death_log_likelihood(t.theta[0], &d, &y.values, &cfg)).collect();
        let exact = WeightedPrior::from_log_weights(obj.bank().to_vec(), exact_log).unwrap();
        let tv = total_variation(&lfire.weights, &exact.weights);
        assert!(tv < 0.15, "observation {:?}: TV {tv}", y.values);
    }
}

#[test]
fn exact_posterior_is_normalised_and_concentrates() {
    let cfg = DeathConfig::default();
    let grid = GridDensity::uniform_grid(EXACT_GRID_UPPER, EXACT_GRID_POINTS);
    let d = DesignPoint::single(1.4).unwrap();
    let post = exact_death_posterior(&[44], &d, &PriorSpec::death_default(), &cfg, &grid).unwrap();
    assert!((post.trapezoid_mass() - 1.0).abs() < 1e-6);
    assert!(post.quantile(0.025) < 1.5 && 1.5 < post.quantile(0.975));
}

fn prior_on_grid(grid: &[f64]) -> GridDensity {
    let prior = PriorSpec::death_default();
    GridDensity { grid: grid.to_vec(), density: grid.iter().map(|&b| prior.density(&[b])).collect() }.normalised().unwrap()
}

#[test]
fn uninformative_observation_leaves_the_prior_in_place() {
    let grid = GridDensity::uniform_grid(EXACT_GRID_UPPER, EXACT_GRID_POINTS);
    let d = DesignPoint::single(0.01).unwrap();
    let prior = prior_on_grid(&grid);
    let single = DeathConfig { population: 1, ..DeathConfig::default() };
    let post = exact_death_posterior(&[0], &d, &PriorSpec::death_default(), &single, &grid).unwrap();
    assert!(post.total_variation(&prior).unwrap() < 0.05);

    // with fifty susceptibles, seeing no infection in one step still moves the posterior
    let post = exact_death_posterior(&[0], &d, &PriorSpec::death_default(), &DeathConfig::default(), &grid).unwrap();
    let tv = post.total_variation(&prior).unwrap();
    assert!((tv - 0.1501).abs() < 0.002, "{tv}");
}

fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(stat)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, rng_seed: PropSeed::Fixed(48), ..ProptestConfig::default() })]

    #[test]
    fn weights_are_normalised(logw in prop::collection::vec(-40.0..40.0f64, 1..200)) {
        let n = logw.len();
        let wp = WeightedPrior::from_log_weights(draws(n), logw).unwrap();
        prop_assert!((wp.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(wp.weights.iter().all(|w| *w >= 0.0));
        prop_assert!(wp.ess >= 1.0 - 1e-12 && wp.ess <= n as f64 + 1e-9);
    }

    #[test]
    fn resampling_follows_the_weights(raw in prop::collection::vec(0.05..1.0f64, 2..12), seed in any::<u64>()) {
        let logw: Vec<f64> = raw.iter().map(|w| w.ln()).collect();
        let wp = WeightedPrior::from_log_weights(draws(raw.len()), logw).unwrap();
        let count = 20_000;
        let s = resample(&wp, count, &mut RngSeed(seed).rng()).unwrap();
        let mut observed = vec![0.0; raw.len()];
        for &i in &s.indices {
            observed[i] += 1.0;
        }
        let expected: Vec<f64> = wp.weights.iter().map(|w| w * count as f64).collect();
        prop_assert!(chi_square_p(&observed, &expected) > 1e-3);
        prop_assert!(s.draws.iter().all(|d| wp.draws.iter().any(|b| b.theta == *d)));
    }
}
