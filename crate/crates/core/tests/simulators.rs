use implicit_bed::simulators::{
    death_log_likelihood, simulate_death, simulate_death_stepwise, simulate_sir, DeathConfig, SirConfig,
};
use implicit_bed::{sample_prior, DesignPoint, PriorSpec, RngSeed};
use proptest::prelude::*;
use proptest::test_runner::RngSeed as PropSeed;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    // pool the tail cells until each expected count reaches 5
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += acc.0;
        last.1 += acc.1;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((cells.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn truncated_normal_mean_matches_closed_form() {
    let prior = PriorSpec::death_default();
    let draws = sample_prior(&prior, 100_000, &mut RngSeed(11).rng()).unwrap();
    let x: Vec<f64> = draws.iter().map(|d| d.theta[0]).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let z = Normal::new(0.0, 1.0).unwrap();
    let alpha = -1.0;
    let lambda = statrs::distribution::Continuous::pdf(&z, alpha) / (1.0 - z.cdf(alpha));
    let exact = 1.0 + lambda;
    assert!((mean - exact).abs() < 3.0 * sd / n.sqrt(), "mean {mean} vs {exact}");
    assert!(x.iter().all(|&b| b > 0.0));
}

#[test]
fn death_mean_matches_exponential_infection_times() {
    let cfg = DeathConfig::default();
    let d = DesignPoint::single(1.0).unwrap();
    let mut rng = RngSeed(12).rng();
    let y: Vec<f64> = (0..100_000)
        .map(|_| f64::from(simulate_death(1.5, &d, &cfg, &mut rng).unwrap().values[0]))
        .collect();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let exact = 50.0 * (1.0 - (-1.5f64).exp());
    assert!((mean - exact).abs() < 3.0 * sd / n.sqrt(), "mean {mean} vs {exact}");
}

#[test]
fn death_frequencies_match_likelihood() {
    let cfg = DeathConfig::default();
    let d = DesignPoint::single(1.0).unwrap();
    let draws = 1_000_000usize;
    let mut counts = vec![0.0; 51];
    let mut rng = RngSeed(13).rng();
    for _ in 0..draws {
        counts[simulate_death(1.5, &d, &cfg, &mut rng).unwrap().values[0] as usize] += 1.0;
    }
    let probs: Vec<f64> = (0..=50u32).map(|i| death_log_likelihood(1.5, &d, &[i], &cfg).exp()).collect();
    for (i, (&c, &p)) in counts.iter().zip(&probs).enumerate() {
        let e = draws as f64 * p;
        let band = 3.0 * (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((c - e).abs() <= band.max(1.0), "outcome {i}: {c} vs {e}");
    }
    let expected: Vec<f64> = probs.iter().map(|p| p * draws as f64).collect();
    assert!(chi_square_p(&counts, &expected) > 1e-3);
}

#[test]
fn stepwise_chain_matches_likelihood_for_two_times() {
    let cfg = DeathConfig::default();
    let d = DesignPoint::new(vec![0.4, 1.3]).unwrap();
    let draws = 100_000usize;
    let mut rng = RngSeed(14).rng();
    let mut counts = vec![0.0; 51 * 51];
    for _ in 0..draws {
        let y = simulate_death_stepwise(0.9, &d, &cfg, &mut rng).unwrap().values;
        counts[y[0] as usize * 51 + y[1] as usize] += 1.0;
    }
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    for i in 0..=50u32 {
        for j in i..=50u32 {
            observed.push(counts[i as usize * 51 + j as usize]);
            expected.push(draws as f64 * death_log_likelihood(0.9, &d, &[i, j], &cfg).exp());
        }
    }
    assert!(chi_square_p(&observed, &expected) > 1e-3);
}

#[test]
fn death_likelihood_sums_to_one() {
    let cfg = DeathConfig::default();
    let one = DesignPoint::single(0.7).unwrap();
    let total: f64 = (0..=50u32).map(|i| death_log_likelihood(2.1, &one, &[i], &cfg).exp()).sum();
    assert!((total - 1.0).abs() < 1e-10, "{total}");

    let three = DesignPoint::new(vec![0.2, 0.9, 2.5]).unwrap();
    let mut total = 0.0;
    for i in 0..=50u32 {
        for j in i..=50 {
            for k in j..=50 {
                total += death_log_likelihood(1.1, &three, &[i, j, k], &cfg).exp();
            }
        }
    }
    assert!((total - 1.0).abs() < 1e-10, "{total}");
}

#[test]
fn inconsistent_death_data_has_zero_likelihood() {
    let cfg = DeathConfig::default();
    let d = DesignPoint::new(vec![0.5, 1.0]).unwrap();
    assert_eq!(death_log_likelihood(1.0, &d, &[10, 9], &cfg), f64::NEG_INFINITY);
    assert_eq!(death_log_likelihood(1.0, &d, &[10, 51], &cfg), f64::NEG_INFINITY);
    assert_eq!(death_log_likelihood(1.0, &d, &[10], &cfg), f64::NEG_INFINITY);
}

/// Straightforward per-step chain with one Bernoulli trial per individual.
fn sir_oracle(beta: f64, gamma: f64, steps: u64, n: u32, rng: &mut impl Rng) -> (u32, u32, u32) {
    let (mut s, mut i, mut r) = (n - 1, 1, 0);
    for _ in 0..steps {
        let p_inf = beta * f64::from(i) / f64::from(n);
        let new_inf = (0..s).filter(|_| rng.random::<f64>() < p_inf).count() as u32;
        let new_rec = (0..i).filter(|_| rng.random::<f64>() < gamma).count() as u32;
        s -= new_inf;
        i = i + new_inf - new_rec;
        r += new_rec;
    }
    (s, i, r)
}

#[test]
fn sir_means_match_scalar_oracle() {
    let cfg = SirConfig::default();
    let d = DesignPoint::single(0.5).unwrap();
    let reps = 100_000;
    let mut fast = [Vec::with_capacity(reps), Vec::with_capacity(reps), Vec::with_capacity(reps)];
    let mut slow = [Vec::with_capacity(reps), Vec::with_capacity(reps), Vec::with_capacity(reps)];
    let mut rng = RngSeed(15).rng();
    let mut oracle_rng = RngSeed(16).rng();
    for _ in 0..reps {
        let y = simulate_sir(0.15, 0.05, &d, &cfg, &mut rng).unwrap().values;
        let (s, i, r) = sir_oracle(0.15, 0.05, 50, 50, &mut oracle_rng);
        for k in 0..3 {
            fast[k].push(f64::from(y[k]));
        }
        slow[0].push(f64::from(s));
        slow[1].push(f64::from(i));
        slow[2].push(f64::from(r));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n)
    };
    for k in 0..3 {
        let (ma, va) = stats(&fast[k]);
        let (mb, vb) = stats(&slow[k]);
        assert!((ma - mb).abs() < 3.0 * (va + vb).sqrt(), "compartment {k}: {ma} vs {mb}");
    }
}

#[test]
fn ten_thousand_sir_trajectories_conserve_population() {
    let cfg = SirConfig::default();
    let d = DesignPoint::new(vec![0.1, 0.4, 0.8, 1.2, 1.7, 2.1, 2.6, 3.0]).unwrap();
    let mut rng = RngSeed(17).rng();
    let prior = PriorSpec::sir_default();
    for _ in 0..10_000 {
        let theta = prior.sample_one(&mut rng).unwrap().theta;
        let y = simulate_sir(theta[0], theta[1], &d, &cfg, &mut rng).unwrap().values;
        for triple in y.chunks(3) {
            assert_eq!(triple.iter().sum::<u32>(), 50);
        }
    }
}

fn ordered_times(max_len: usize, upper: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001..1.0f64, 1..=max_len).prop_map(move |incs| {
        let total: f64 = incs.iter().sum::<f64>() * 1.01;
        let mut acc = 0.0;
        incs.iter()
            .map(|v| {
                acc += v;
                upper * acc / total
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, rng_seed: PropSeed::Fixed(18), ..ProptestConfig::default() })]

    #[test]
    fn sir_triples_conserve_and_move_one_way(
        beta in 0.0..=1.0f64,
        gamma in 0.0..=1.0f64,
        times in ordered_times(8, 3.0),
        seed in any::<u64>(),
    ) {
        let d = DesignPoint::new(times).unwrap();
        let y = simulate_sir(beta, gamma, &d, &SirConfig::default(), &mut RngSeed(seed).rng()).unwrap().values;
        let triples: Vec<&[u32]> = y.chunks(3).collect();
        for t in &triples {
            prop_assert_eq!(t[0] + t[1] + t[2], 50);
        }
        for w in triples.windows(2) {
            prop_assert!(w[1][0] <= w[0][0]);
            prop_assert!(w[1][2] >= w[0][2]);
        }
    }

    #[test]
    fn death_counts_are_monotone_and_bounded(
        b in 0.0..10.0f64,
        times in ordered_times(8, 4.0),
        seed in any::<u64>(),
    ) {
        let d = DesignPoint::new(times).unwrap();
        let y = simulate_death(b, &d, &DeathConfig::default(), &mut RngSeed(seed).rng()).unwrap().values;
        prop_assert!(y.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(y.iter().all(|&i| i <= 50));
    }

    #[test]
    fn prior_draws_stay_in_support(seed in any::<u64>(), mean in -1.0..3.0f64, variance in 0.1..4.0f64) {
        let tn = PriorSpec::TruncatedNormal { mean, variance, lower: 0.0 };
        let draws = sample_prior(&tn, 200, &mut RngSeed(seed).rng()).unwrap();
        prop_assert!(draws.iter().all(|d| tn.contains(&d.theta) && d.theta[0] > 0.0));
        let sir = PriorSpec::sir_default();
        let draws = sample_prior(&sir, 200, &mut RngSeed(seed).rng()).unwrap();
        prop_assert!(draws.iter().all(|d| d.theta.iter().all(|t| (0.0..=0.5).contains(t))));
    }
}
