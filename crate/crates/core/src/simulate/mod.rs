//! Data generators and the exact partition-enumeration oracle.

mod crm;
mod oracle;

pub use crm::{
    binomial, crm_tail, poisson, sample_crm_jumps, sample_ibp, truncated_mass, CrmDraw, IbpSample, DEFAULT_MASS_TOL,
};
pub use oracle::{partition_oracle, PartitionOracleResult, ORACLE_MAX_N, ORACLE_MAX_WIDTH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zeta, Zipf};

use crate::error::{Error, Result};
use crate::species::SpeciesPrior;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sequential two-parameter seating: a new label with probability (γ + kα)/(γ + i),
/// otherwise an existing label with probability ∝ (n_i − α).
pub fn sample_pyp_sequence(prior: SpeciesPrior, n: usize, seed: u64) -> Vec<u32> {
    let mut rng = rng_from_seed(seed);
    sample_pyp_sequence_with(prior, n, &mut rng)
}

pub fn sample_pyp_sequence_with<R: Rng>(prior: SpeciesPrior, n: usize, rng: &mut R) -> Vec<u32> {
    let (alpha, gamma) = prior.discount_mass();
    let mut labels: Vec<u32> = Vec::with_capacity(n);
    let mut sizes: Vec<u64> = Vec::new();
    for i in 0..n {
        let k = sizes.len() as f64;
        let p_new = if i == 0 { 1.0 } else { (gamma + k * alpha) / (gamma + i as f64) };
        if rng.random::<f64>() < p_new {
            labels.push(sizes.len() as u32);
            sizes.push(1);
            continue;
        }
        // Size-biased pick through a uniformly chosen earlier draw, thinned by (n_i − α)/n_i.
        loop {
            let label = labels[rng.random_range(0..i)];
            let size = sizes[label as usize] as f64;
            if alpha == 0.0 || rng.random::<f64>() * size < size - alpha {
                labels.push(label);
                sizes[label as usize] += 1;
                break;
            }
        }
    }
    labels
}

/// Zipf(c) draws: item k with probability k^{−c}/ζ(c), or the finite-support law
/// k^{−c}/H_{N,c} when `n_items` is given. Exact rejection samplers, no tail cap.
pub fn sample_zipf(c_param: f64, n: usize, n_items: Option<u64>, seed: u64) -> Result<Vec<u64>> {
    if !(c_param > 1.0) && n_items.is_none() {
        return Err(Error::Divergence(format!("Zipf exponent must exceed 1, got {c_param}")));
    }
    let mut rng = rng_from_seed(seed);
    Ok(match n_items {
        Some(items) => {
            if items == 0 {
                return Err(Error::Domain("Zipf support must be nonempty".into()));
            }
            let d = Zipf::new(items as f64, c_param).map_err(|e| Error::Domain(e.to_string()))?;
            (0..n).map(|_| d.sample(&mut rng) as u64).collect()
        }
        None => {
            let d = Zeta::new(c_param).map_err(|e| Error::Domain(e.to_string()))?;
            (0..n).map(|_| {
                let v: f64 = d.sample(&mut rng);
                if v >= u64::MAX as f64 { u64::MAX } else { v as u64 }
            })
            .collect()
        }
    })
}
