use approx::assert_relative_eq;
use sketchpost::fitting::dp_log_likelihood;
use sketchpost::hashing::Sketch;
use sketchpost::simulate::{
    binomial, partition_oracle, poisson, rng_from_seed, sample_crm_jumps, sample_ibp, sample_pyp_sequence,
    sample_zipf, DEFAULT_MASS_TOL, ORACLE_MAX_N,
};
use sketchpost::specialfns::CrmSpec;
use sketchpost::species::{DpParams, PypParams, SpeciesPrior};
use sketchpost::Error;

fn pyp(alpha: f64, gamma: f64) -> SpeciesPrior {
    SpeciesPrior::Pyp(PypParams::new(alpha, gamma).unwrap())
}

fn dp(theta: f64) -> SpeciesPrior {
    SpeciesPrior::Dp(DpParams::new(theta).unwrap())
}

fn within(p_hat: f64, p: f64, trials: usize, k: f64) -> bool {
    (p_hat - p).abs() <= k * (p * (1.0 - p) / trials as f64).sqrt()
}

#[test]
fn one_draw_one_label() {
    assert_eq!(sample_pyp_sequence(pyp(0.5, 1.0), 1, 3), vec![0]);
    assert!(sample_pyp_sequence(dp(1.0), 0, 3).is_empty());
}

#[test]
fn second_draw_new_probability() {
    let (alpha, gamma) = (0.3, 2.0);
    let trials = 40_000;
    let new = (0..trials).filter(|&s| sample_pyp_sequence(pyp(alpha, gamma), 2, s as u64)[1] == 1).count();
    let p = (gamma + alpha) / (gamma + 1.0);
    assert!(within(new as f64 / trials as f64, p, trials, 3.0), "{new}/{trials} vs {p}");
}

#[test]
fn fourth_draw_new_given_two_species() {
    // α=0.5, γ=1, two species among three draws: (1 + 2·0.5)/(1 + 3) = 0.5.
    let (mut hits, mut total) = (0usize, 0usize);
    for s in 0..60_000u64 {
        let l = sample_pyp_sequence(pyp(0.5, 1.0), 4, s);
        if l[..3].iter().max() == Some(&1) {
            total += 1;
            hits += usize::from(l[3] == 2);
        }
    }
    assert!(total > 10_000);
    assert!(within(hits as f64 / total as f64, 0.5, total, 3.0), "{hits}/{total}");
}

#[test]
fn labels_are_first_appearance_order() {
    let l = sample_pyp_sequence(pyp(0.6, 5.0), 2_000, 8);
    let mut next = 0;
    for &x in &l {
        assert!(x <= next);
        if x == next {
            next += 1;
        }
    }
    assert_eq!(l, sample_pyp_sequence(pyp(0.6, 5.0), 2_000, 8));
}

#[test]
fn zipf_top_item_probability() {
    let n = 100_000;
    let draws = sample_zipf(2.0, n, None, 17).unwrap();
    let p = 6.0 / std::f64::consts::PI.powi(2);
    let hat = draws.iter().filter(|&&k| k == 1).count() as f64 / n as f64;
    assert!(within(hat, p, n, 3.0), "{hat} vs {p}");
    assert!(draws.iter().all(|&k| k >= 1));
    assert_eq!(draws, sample_zipf(2.0, n, None, 17).unwrap());
}

#[test]
fn zipf_finite_support_and_errors() {
    let d = sample_zipf(1.0, 5_000, Some(10), 1).unwrap();
    assert!(d.iter().all(|&k| (1..=10).contains(&k)));
    assert!(matches!(sample_zipf(1.0, 10, None, 1), Err(Error::Divergence(_))));
    assert!(sample_zipf(2.0, 10, Some(0), 1).is_err());
}

#[test]
fn ibp_tiny_rate_gives_empty_rows() {
    let spec = CrmSpec::gamma(2.0).unwrap();
    let s = sample_ibp(&spec, 1e-12, 50, 1_000, 4).unwrap();
    assert!(s.levels.iter().all(|p| p.is_empty()));
    assert!(s.atom_totals().iter().all(|&t| t == 0));
}

#[test]
fn ibp_gamma_total_level_mean() {
    // E[Σ levels] = n λ θ; Var = n λ θ + n² λ² θ.
    let (theta, lambda, n) = (3.0, 2.0, 5usize);
    let spec = CrmSpec::gamma(theta).unwrap();
    let reps = 3_000;
    let totals: Vec<f64> = (0..reps)
        .map(|s| sample_ibp(&spec, lambda, n, 1_000, s as u64).unwrap().atom_totals().iter().sum::<u64>() as f64)
        .collect();
    let mean = totals.iter().sum::<f64>() / reps as f64;
    let want = n as f64 * lambda * theta;
    let var = want + (n as f64 * lambda).powi(2) * theta;
    let se = (var / reps as f64).sqrt();
    assert!((mean - want).abs() <= 3.0 * se, "{mean} vs {want} ± {se}");
}

#[test]
fn ibp_validation_and_truncation_warning() {
    let spec = CrmSpec::gamma(1.0).unwrap();
    assert!(sample_ibp(&spec, 1.0, 3, 10, 0).is_err());
    assert!(sample_ibp(&spec, 0.0, 3, 100, 0).is_err());
    // A heavy-tailed process leaves mass behind at the jump cap.
    let gg = CrmSpec::generalized_gamma(0.9, 1.0, 5.0).unwrap();
    let s = sample_ibp(&gg, 1.0, 2, 100, 0).unwrap();
    assert_eq!(s.jumps.len(), 100);
    assert!(s.warning.is_some());
}

#[test]
fn stable_beta_jumps_in_unit_interval() {
    let spec = CrmSpec::stable_beta(0.7, 2.0).unwrap();
    let mut rng = rng_from_seed(5);
    let d = sample_crm_jumps(&spec, 5_000, DEFAULT_MASS_TOL, &mut rng).unwrap();
    assert!(!d.jumps.is_empty());
    assert!(d.jumps.iter().all(|&x| x > 0.0 && x < 1.0));
    assert!(d.jumps.windows(2).all(|w| w[0] >= w[1]));
    let s = sample_ibp(&spec, 0.0, 10, 5_000, 5).unwrap();
    assert!(s.levels.iter().flatten().all(|&(_, a)| a == 1));
}

#[test]
fn poisson_and_binomial_means() {
    let mut rng = rng_from_seed(1);
    assert_eq!(poisson(0.0, &mut rng), 0);
    for mean in [0.3, 4.0, 60.0] {
        let m: f64 = (0..20_000).map(|_| poisson(mean, &mut rng) as f64).sum::<f64>() / 20_000.0;
        assert!((m - mean).abs() <= 4.0 * (mean / 20_000.0).sqrt(), "{m} vs {mean}");
    }
    let m: f64 = (0..20_000).map(|_| binomial(30, 0.2, &mut rng) as f64).sum::<f64>() / 20_000.0;
    assert!((m - 6.0).abs() <= 4.0 * (30.0 * 0.2 * 0.8 / 20_000.0f64).sqrt());
}

#[test]
fn oracle_single_token() {
    // One sketched token, one bucket: the query shares its species with probability 1/(θ+1).
    let theta = 2.5;
    let o = partition_oracle(1, 1, dp(theta)).unwrap();
    assert_relative_eq!(o.total_mass(), 1.0, epsilon = 1e-14);
    let p = o.conditional_freq(&[1], 0).unwrap();
    assert_relative_eq!(p[1], 1.0 / (theta + 1.0), epsilon = 1e-14);
    assert_relative_eq!(p[0], theta / (theta + 1.0), epsilon = 1e-14);
}

#[test]
fn oracle_marginal_matches_dp_likelihood() {
    let theta = 1.3;
    let o = partition_oracle(5, 3, dp(theta)).unwrap();
    assert_relative_eq!(o.total_mass(), 1.0, epsilon = 1e-12);
    let mut seen = 0;
    for counts in o.sketches() {
        let s = Sketch::from_counts(counts.clone(), 0).unwrap();
        assert_relative_eq!(o.marginal(counts), dp_log_likelihood(&s, theta).exp(), max_relative = 1e-10);
        seen += 1;
    }
    // Compositions of 5 into 3 parts.
    assert_eq!(seen, 21);
}

#[test]
fn oracle_size_gate() {
    assert!(matches!(partition_oracle(ORACLE_MAX_N + 1, 2, dp(1.0)), Err(Error::TooLarge(_))));
    assert!(matches!(partition_oracle(3, 0, dp(1.0)), Err(Error::InvalidWidth)));
}
