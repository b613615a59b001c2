use proptest::prelude::*;
use sketchpost::cardinality::{dp_cardinality, dp_unconditional_freq};
use sketchpost::fitting::dp_log_likelihood;
use sketchpost::hashing::{new_hash, sketch_stream, Sketch};
use sketchpost::specialfns::{log_rising, log_sum_exp};
use sketchpost::species::{dp_freq_posterior, dp_mean, pyp_freq_posterior_exact, DpParams, PypParams};

fn counts_strategy(max_width: usize, max_count: u64) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0..=max_count, 1..=max_width)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hash_in_range(seed in any::<u64>(), width in 1usize..10_000, key in prop::collection::vec(any::<u8>(), 1..40)) {
        let h = new_hash(seed, width).unwrap();
        prop_assert!(h.bucket(&key).unwrap() < width);
    }

    #[test]
    fn merge_commutes_and_adds(seed in any::<u64>(), a in prop::collection::vec(0u16..500, 0..200), b in prop::collection::vec(0u16..500, 0..200)) {
        let h = new_hash(seed, 17).unwrap();
        let ka: Vec<[u8; 2]> = a.iter().map(|x| x.to_le_bytes()).collect();
        let kb: Vec<[u8; 2]> = b.iter().map(|x| x.to_le_bytes()).collect();
        let (sa, sb) = (sketch_stream(&ka, &h).unwrap(), sketch_stream(&kb, &h).unwrap());
        let mut ab = sa.clone();
        ab.merge(&sb).unwrap();
        let mut ba = sb.clone();
        ba.merge(&sa).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(ab.total_n as usize, a.len() + b.len());
        prop_assert_eq!(ab.counts.iter().sum::<u64>(), ab.total_n);
    }

    #[test]
    fn dp_posterior_normalized(c in 0u64..2_000, theta in 1e-3f64..1e4, width in 1usize..5_000) {
        let pmf = dp_freq_posterior(c, DpParams::new(theta).unwrap(), width).unwrap();
        let p = pmf.probs();
        prop_assert_eq!(p.len() as u64, c + 1);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        // Posterior mean c/(1 + θ/J) never exceeds the bucket count.
        let m = dp_mean(c, DpParams::new(theta).unwrap(), width);
        prop_assert!((pmf.mean() - m).abs() <= 1e-8 * (1.0 + m));
        prop_assert!(m <= c as f64);
    }

    #[test]
    fn pyp_exact_normalized(counts in counts_strategy(3, 12), alpha in 0.05f64..0.95, gamma in 0.1f64..20.0) {
        let s = Sketch::from_counts(counts.clone(), 0).unwrap();
        let p = pyp_freq_posterior_exact(&s, 0, PypParams::new(alpha, gamma).unwrap()).unwrap().probs();
        prop_assert_eq!(p.len() as u64, counts[0] + 1);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cardinality_consistent(counts in counts_strategy(8, 60), theta in 0.05f64..200.0, rot in 0usize..8) {
        let s = Sketch::from_counts(counts.clone(), 0).unwrap();
        let prior = DpParams::new(theta).unwrap();
        let est = dp_cardinality(&s, prior).unwrap();
        let sum: f64 = (1..=s.total_n).map(|l| est.m(l)).sum();
        prop_assert!((est.k_hat - sum).abs() <= 1e-8 * (1.0 + est.k_hat));
        if let Some(cf) = est.k_hat_closed_form {
            prop_assert!((est.k_hat - cf).abs() <= 1e-7 * (1.0 + est.k_hat));
        }
        prop_assert!(est.k_hat <= s.total_n as f64 + 1e-9);
        prop_assert!(s.total_n == 0 || est.k_hat >= 1.0 - 1e-9 || counts.iter().filter(|&&c| c > 0).count() == 0);

        let mut rotated = counts.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let r = dp_cardinality(&Sketch::from_counts(rotated, 0).unwrap(), prior).unwrap();
        prop_assert!((r.k_hat - est.k_hat).abs() <= 1e-9 * (1.0 + est.k_hat));
    }

    #[test]
    fn unconditional_freq_in_unit_interval(counts in counts_strategy(6, 30), theta in 0.1f64..50.0, l in 1u64..40) {
        let s = Sketch::from_counts(counts, 0).unwrap();
        let prior = DpParams::new(theta).unwrap();
        if l > s.total_n {
            prop_assert!(dp_unconditional_freq(&s, prior, l).is_err());
        } else {
            let p = dp_unconditional_freq(&s, prior, l).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
            // Pr[f ≥ 1] summed over all l stays below one.
            let total: f64 = (1..=s.total_n).map(|k| dp_unconditional_freq(&s, prior, k).unwrap()).sum();
            prop_assert!(total <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn likelihood_relabel_invariant(counts in counts_strategy(10, 40), theta in 0.01f64..1e3) {
        let a = Sketch::from_counts(counts.clone(), 0).unwrap();
        let mut rev = counts;
        rev.reverse();
        let b = Sketch::from_counts(rev, 0).unwrap();
        prop_assert_eq!(dp_log_likelihood(&a, theta), dp_log_likelihood(&b, theta));
        prop_assert!(dp_log_likelihood(&a, theta) <= 1e-12);
    }

    #[test]
    fn rising_recurrence(x in 0.01f64..100.0, n in 0u64..200) {
        // (x)_(n+1) = (x)_(n) · (x + n)
        let lhs = log_rising(x, n + 1).unwrap();
        let rhs = log_rising(x, n).unwrap() + (x + n as f64).ln();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn log_sum_exp_bounds(v in prop::collection::vec(-700.0f64..700.0, 1..30)) {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = log_sum_exp(&v);
        prop_assert!(s >= m - 1e-12);
        prop_assert!(s <= m + (v.len() as f64).ln() + 1e-12);
    }
}
