use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::species::SpeciesPrior;
use crate::specialfns::{ln_factorial, log_rising_pos};

pub const ORACLE_MAX_N: usize = 7;
pub const ORACLE_MAX_WIDTH: usize = 3;

/// Exact joint law of (sketch, bucket of the next draw, its frequency among the first n)
/// under idealized hashing, by enumeration of the set partitions of [n+1].
#[derive(Debug, Clone)]
pub struct PartitionOracleResult {
    pub n: usize,
    pub width: usize,
    pub prior: SpeciesPrior,
    /// (counts, query bucket, f) → probability.
    pub joint_table: BTreeMap<(Vec<u64>, usize, u64), f64>,
    marginal: BTreeMap<Vec<u64>, f64>,
    /// counts → Σ Pr[·] M_l over l = 0..=n (index 0 unused).
    ml_mass: BTreeMap<Vec<u64>, Vec<f64>>,
}

impl PartitionOracleResult {
    pub fn total_mass(&self) -> f64 {
        self.joint_table.values().sum()
    }

    pub fn marginal(&self, counts: &[u64]) -> f64 {
        self.marginal.get(counts).copied().unwrap_or(0.0)
    }

    pub fn sketches(&self) -> impl Iterator<Item = &Vec<u64>> {
        self.marginal.keys()
    }

    /// Pr[h = j | C = c].
    pub fn bucket_prob(&self, counts: &[u64], j: usize) -> Option<f64> {
        let m = self.marginal(counts);
        if m == 0.0 {
            return None;
        }
        let s: f64 = (0..=counts[j]).filter_map(|f| self.joint_table.get(&(counts.to_vec(), j, f))).sum();
        Some(s / m)
    }

    /// Pr[f = l | C = c, h = j] for l = 0..=c_j.
    pub fn conditional_freq(&self, counts: &[u64], j: usize) -> Option<Vec<f64>> {
        let row: Vec<f64> = (0..=counts[j])
            .map(|f| self.joint_table.get(&(counts.to_vec(), j, f)).copied().unwrap_or(0.0))
            .collect();
        let z: f64 = row.iter().sum();
        (z > 0.0).then(|| row.iter().map(|v| v / z).collect())
    }

    /// Pr[f = l | C = c] marginalized over the bucket, l = 0..=n.
    pub fn unconditional_freq(&self, counts: &[u64]) -> Option<Vec<f64>> {
        let m = self.marginal(counts);
        if m == 0.0 {
            return None;
        }
        let mut out = vec![0.0; self.n + 1];
        for j in 0..self.width {
            for f in 0..=counts[j] {
                if let Some(p) = self.joint_table.get(&(counts.to_vec(), j, f)) {
                    out[f as usize] += p / m;
                }
            }
        }
        Some(out)
    }

    /// E[M_l | C = c] for l = 0..=n (entry 0 is zero).
    pub fn expected_ml(&self, counts: &[u64]) -> Option<Vec<f64>> {
        let m = self.marginal(counts);
        let mass = self.ml_mass.get(counts)?;
        Some(mass.iter().map(|v| v / m).collect())
    }
}

/// log of the exchangeable partition probability of a partition with the given block sizes.
fn log_eppf(prior: SpeciesPrior, sizes: &[usize]) -> f64 {
    let total: usize = sizes.iter().sum();
    let k = sizes.len();
    match prior {
        SpeciesPrior::Dp(p) => {
            k as f64 * p.theta.ln() - log_rising_pos(p.theta, total as u64)
                + sizes.iter().map(|&s| ln_factorial(s as u64 - 1)).sum::<f64>()
        }
        SpeciesPrior::Pyp(p) => {
            (1..k).map(|i| (p.gamma + i as f64 * p.alpha).ln()).sum::<f64>()
                - log_rising_pos(p.gamma + 1.0, total as u64 - 1)
                + sizes.iter().map(|&s| log_rising_pos(1.0 - p.alpha, s as u64 - 1)).sum::<f64>()
        }
    }
}

pub fn partition_oracle(n: usize, width: usize, prior: SpeciesPrior) -> Result<PartitionOracleResult> {
    if n > ORACLE_MAX_N || width > ORACLE_MAX_WIDTH {
        return Err(Error::TooLarge(format!(
            "partition oracle limited to n <= {ORACLE_MAX_N}, J <= {ORACLE_MAX_WIDTH}"
        )));
    }
    if width == 0 {
        return Err(Error::InvalidWidth);
    }
    let total = n + 1;
    let mut joint_table = BTreeMap::new();
    let mut marginal = BTreeMap::new();
    let mut ml_mass: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();

    // Restricted-growth strings: rgs[0] = 0, rgs[i] ≤ 1 + max(rgs[..i]).
    let mut rgs = vec![0usize; total];
    loop {
        let k = rgs.iter().max().unwrap() + 1;
        let mut sizes = vec![0usize; k];
        for &b in &rgs {
            sizes[b] += 1;
        }
        let w = log_eppf(prior, &sizes).exp() / (width as f64).powi(k as i32);
        let query_block = rgs[n];
        let f = (sizes[query_block] - 1) as u64;
        // Every assignment of the k blocks to buckets is equally likely.
        let mut assign = vec![0usize; k];
        loop {
            let mut counts = vec![0u64; width];
            for (b, &s) in sizes.iter().enumerate() {
                let own = if b == query_block { s - 1 } else { s };
                counts[assign[b]] += own as u64;
            }
            *joint_table.entry((counts.clone(), assign[query_block], f)).or_insert(0.0) += w;
            *marginal.entry(counts.clone()).or_insert(0.0) += w;
            let ml = ml_mass.entry(counts).or_insert_with(|| vec![0.0; n + 1]);
            for (b, &s) in sizes.iter().enumerate() {
                let own = if b == query_block { s - 1 } else { s };
                if own > 0 {
                    ml[own] += w;
                }
            }
            let mut d = 0;
            while d < k {
                assign[d] += 1;
                if assign[d] < width {
                    break;
                }
                assign[d] = 0;
                d += 1;
            }
            if d == k {
                break;
            }
        }
        // Next restricted-growth string.
        let mut i = total - 1;
        loop {
            if i == 0 {
                return Ok(PartitionOracleResult { n, width, prior, joint_table, marginal, ml_mass });
            }
            let max_prefix = rgs[..i].iter().max().copied().unwrap();
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}
