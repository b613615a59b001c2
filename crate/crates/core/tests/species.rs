use approx::assert_relative_eq;
use sketchpost::hashing::Sketch;
use sketchpost::simulate::partition_oracle;
use sketchpost::specialfns::{ln_gamma, CrmSpec};
use sketchpost::species::{
    cms_baseline, dp_freq_posterior, dp_mean, pk_freq_posterior_numeric, pyp_freq_posterior_exact,
    pyp_freq_posterior_mc, pyp_mean_asymptotic, summarize, DpParams, Method, PkTilt, PosteriorPmf, PypParams,
    SpeciesPrior, PYP_EXACT_GATE,
};
use sketchpost::Error;

fn dp(theta: f64) -> DpParams {
    DpParams::new(theta).unwrap()
}

fn pyp(alpha: f64, gamma: f64) -> PypParams {
    PypParams::new(alpha, gamma).unwrap()
}

/// Beta–Binomial(c; 1, t) pmf written out with Gamma functions.
fn beta_binomial(c: u64, t: f64) -> Vec<f64> {
    let lb = |a: f64, b: f64| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let cf = c as f64;
    (0..=c)
        .map(|l| {
            let lf = l as f64;
            let lbin = ln_gamma(cf + 1.0) - ln_gamma(lf + 1.0) - ln_gamma(cf - lf + 1.0);
            (lbin + lb(lf + 1.0, cf - lf + t) - lb(1.0, t)).exp()
        })
        .collect()
}

#[test]
fn parameter_validation() {
    assert!(DpParams::new(0.0).is_err());
    assert!(DpParams::new(f64::NAN).is_err());
    assert!(PypParams::new(0.0, 1.0).is_err());
    assert!(PypParams::new(1.0, 1.0).is_err());
    assert!(PypParams::new(0.5, 0.0).is_err());
}

#[test]
fn dp_examples() {
    assert_eq!(dp_freq_posterior(0, dp(1.0), 10).unwrap().probs(), vec![1.0]);
    let pmf = dp_freq_posterior(5, dp(1.0), 10).unwrap();
    assert_eq!(pmf.method, Method::DpExact);
    assert_relative_eq!(pmf.prob(0), 0.1 / 5.1, epsilon = 1e-12);
    assert_relative_eq!(pmf.prob(5), 0.801_41, epsilon = 5e-6);
    // Beta–Binomial(5; 1, 0.1) has mean 5/1.1.
    assert_relative_eq!(pmf.mean(), 5.0 / 1.1, epsilon = 1e-12);
    assert_relative_eq!(dp_mean(5, dp(1.0), 10), 5.0 / 1.1, epsilon = 1e-12);
}

#[test]
fn dp_matches_beta_binomial() {
    for c in [1u64, 2, 7, 40, 300] {
        for t in [0.01, 0.5, 3.0, 80.0] {
            let width = 4;
            let got = dp_freq_posterior(c, dp(t * width as f64), width).unwrap().probs();
            let want = beta_binomial(c, t);
            for (a, b) in got.iter().zip(&want) {
                assert_relative_eq!(*a, *b, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn dp_matches_oracle_small() {
    for theta in [0.5, 3.0] {
        let oracle = partition_oracle(5, 2, SpeciesPrior::Dp(dp(theta))).unwrap();
        assert_relative_eq!(oracle.total_mass(), 1.0, epsilon = 1e-12);
        for counts in oracle.sketches() {
            for j in 0..2 {
                if let Some(truth) = oracle.conditional_freq(counts, j) {
                    let got = dp_freq_posterior(counts[j], dp(theta), 2).unwrap().probs();
                    for (a, b) in got.iter().zip(&truth) {
                        assert_relative_eq!(*a, *b, epsilon = 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn pyp_exact_examples() {
    for (alpha, gamma) in [(0.1, 0.3), (0.5, 1.0), (0.9, 20.0)] {
        let s = Sketch::from_counts(vec![1, 0], 0).unwrap();
        let p = pyp_freq_posterior_exact(&s, 1, pyp(alpha, gamma)).unwrap().probs();
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
    let s = Sketch::from_counts(vec![2, 1], 0).unwrap();
    let p = pyp_freq_posterior_exact(&s, 1, pyp(1e-6, 1.0)).unwrap().probs();
    let d = dp_freq_posterior(1, dp(1.0), 2).unwrap().probs();
    for (a, b) in p.iter().zip(&d) {
        assert!((a - b).abs() < 1e-3);
    }

    let s = Sketch::from_counts(vec![3, 1], 0).unwrap();
    let oracle = partition_oracle(4, 2, SpeciesPrior::Pyp(pyp(0.5, 1.0))).unwrap();
    let truth = oracle.conditional_freq(&[3, 1], 1).unwrap();
    let got = pyp_freq_posterior_exact(&s, 1, pyp(0.5, 1.0)).unwrap().probs();
    for (a, b) in got.iter().zip(&truth) {
        assert_relative_eq!(*a, *b, epsilon = 1e-8);
    }
}

#[test]
fn pyp_exact_gate() {
    let s = Sketch::from_counts(vec![100; 4], 0).unwrap();
    assert!(102f64.powi(4) > PYP_EXACT_GATE);
    let err = pyp_freq_posterior_exact(&s, 0, pyp(0.5, 1.0)).unwrap_err();
    assert!(matches!(err, Error::TooLarge(_)));
    assert!(err.is_numeric_gate());
}

#[test]
fn pyp_mc_single_occupied_bucket() {
    let s = Sketch::from_counts(vec![0, 4, 0], 0).unwrap();
    let params = pyp(0.4, 2.0);
    let exact = pyp_freq_posterior_exact(&s, 1, params).unwrap().probs();
    let mc = pyp_freq_posterior_mc(&s, 1, params, 50_000, 5).unwrap();
    let se = mc.stderr.clone().unwrap();
    for (l, p) in mc.probs().iter().enumerate() {
        assert!((p - exact[l]).abs() <= 3.0 * se[l], "l={l}: {p} vs {}", exact[l]);
    }
}

#[test]
fn pyp_mc_is_deterministic() {
    let s = Sketch::from_counts(vec![3, 2, 2], 0).unwrap();
    let a = pyp_freq_posterior_mc(&s, 1, pyp(0.5, 1.0), 3_000, 42).unwrap();
    let b = pyp_freq_posterior_mc(&s, 1, pyp(0.5, 1.0), 3_000, 42).unwrap();
    assert_eq!(a, b);
    let c = pyp_freq_posterior_mc(&s, 1, pyp(0.5, 1.0), 3_000, 43).unwrap();
    assert_ne!(a, c);
    assert!(pyp_freq_posterior_mc(&s, 1, pyp(0.5, 1.0), 0, 42).is_err());
}

#[test]
fn pyp_asymptotic_examples() {
    assert_eq!(pyp_mean_asymptotic(0, pyp(0.5, 1.0), 2).unwrap(), 0.0);
    assert_relative_eq!(pyp_mean_asymptotic(100, pyp(0.5, 1.0), 2).unwrap(), 40.0, epsilon = 1e-12);
    assert_relative_eq!(pyp_mean_asymptotic(100, pyp(0.5, 1.0), 10).unwrap(), 100.0 / 6.5, epsilon = 1e-12);
}

#[test]
fn pk_gamma_reduces_to_dp() {
    let s = Sketch::from_counts(vec![3, 2], 0).unwrap();
    let spec = CrmSpec::gamma(1.5).unwrap();
    for j in 0..2 {
        let pk = pk_freq_posterior_numeric(&spec, PkTilt::NONE, &s, j).unwrap().probs();
        let d = dp_freq_posterior(s.counts[j], dp(1.5), 2).unwrap().probs();
        for (a, b) in pk.iter().zip(&d) {
            assert_relative_eq!(*a, *b, epsilon = 1e-8);
        }
    }
}

#[test]
fn pk_gamma_ignores_exponential_tilt() {
    let s = Sketch::from_counts(vec![3, 2], 0).unwrap();
    let spec = CrmSpec::gamma(1.5).unwrap();
    let base = pk_freq_posterior_numeric(&spec, PkTilt::NONE, &s, 0).unwrap().probs();
    let tilted =
        pk_freq_posterior_numeric(&spec, PkTilt { gamma_tilt: 0.0, beta_tilt: 2.0 }, &s, 0).unwrap().probs();
    for (a, b) in base.iter().zip(&tilted) {
        assert_relative_eq!(*a, *b, epsilon = 1e-8);
    }
}

#[test]
fn pk_stable_tilt_matches_pyp() {
    // Pitman–Yor(α, γ) as the α-stable process tilted by t^{−γ}; τ≈0 approximates the stable case.
    let (alpha, gamma) = (0.5, 1.0);
    let s = Sketch::from_counts(vec![2, 1], 0).unwrap();
    let spec = CrmSpec::generalized_gamma(alpha, 1e-8, 1.0).unwrap();
    let tilt = PkTilt { gamma_tilt: gamma, beta_tilt: 0.0 };
    for j in 0..2 {
        let pk = pk_freq_posterior_numeric(&spec, tilt, &s, j).unwrap().probs();
        let exact = pyp_freq_posterior_exact(&s, j, pyp(alpha, gamma)).unwrap().probs();
        for (a, b) in pk.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-4, "bucket {j}: {pk:?} vs {exact:?}");
        }
    }
}

#[test]
fn pk_gates() {
    let spec = CrmSpec::gamma(1.0).unwrap();
    let big = Sketch::from_counts(vec![40, 40], 0).unwrap();
    assert!(matches!(pk_freq_posterior_numeric(&spec, PkTilt::NONE, &big, 0), Err(Error::TooLarge(_))));
}

#[test]
fn summaries() {
    let point = PosteriorPmf::from_log_weights(vec![0.0], Method::DpExact).unwrap();
    let s = summarize(&point, 0.95);
    assert_eq!((s.mean, s.median, s.mode, s.credible_interval), (0.0, 0, 0, (0, 0)));

    let uniform = PosteriorPmf::from_log_weights(vec![0.0; 5], Method::DpExact).unwrap();
    let s = uniform.summarize(0.95);
    assert_relative_eq!(s.mean, 2.0, epsilon = 1e-12);
    assert_eq!(s.median, 2);
    assert_eq!(s.mode, 0);
    assert_eq!(s.credible_interval, (0, 4));
    let s = uniform.summarize(0.6);
    assert_eq!(s.credible_interval, (0, 2));

    let pmf = dp_freq_posterior(5, dp(1.0), 10).unwrap();
    let s = pmf.summarize(0.9);
    assert_eq!(s.mode, 5);
    let j = pmf.to_json(0.9);
    assert_eq!(j["support_max"], 5);
    assert_eq!(j["method"], "dp-exact");
    assert!(j["stderr"].is_null());
    assert_eq!(j["probs"].as_array().unwrap().len(), 6);
}

#[test]
fn cms_is_bucket_count() {
    let s = Sketch::from_counts(vec![4, 0, 9], 0).unwrap();
    assert_eq!(cms_baseline(&s, 2).unwrap(), 9);
    assert!(cms_baseline(&s, 3).is_err());
}
