//! Frequency-stratified error reports for sketch-based frequency estimators.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitting::{fit_dp_theta, fit_pyp_prefix, FittedParams};
use crate::hashing::{new_hash, HashFunction, Sketch};
use crate::species::{dp_mean, pyp_mean_asymptotic, DpParams, PypParams};

/// Exact ground truth needs every distinct token in memory; beyond this, subsample.
pub const MAX_CORPUS_TOKENS: usize = 50_000_000;

/// (0,1], (1,2], (2,4], … up to the first upper edge ≥ `max_f`.
pub fn dyadic_bins(max_f: u64) -> Vec<(u64, u64)> {
    let mut bins = vec![(0, 1)];
    let mut hi = 1u64;
    while hi < max_f {
        bins.push((hi, hi * 2));
        hi *= 2;
    }
    bins
}

pub fn bin_index(bins: &[(u64, u64)], f: u64) -> Option<usize> {
    bins.iter().position(|&(lo, hi)| f > lo && f <= hi)
}

/// Mean |f − estimate| within each bin, and the number of symbols per bin. Empty bins
/// report NaN.
pub fn stratified_mae<I: IntoIterator<Item = (u64, f64)>>(pairs: I, bins: &[(u64, u64)]) -> (Vec<f64>, Vec<u64>) {
    let mut sum = vec![0.0; bins.len()];
    let mut count = vec![0u64; bins.len()];
    for (f, est) in pairs {
        if let Some(b) = bin_index(bins, f) {
            sum[b] += (f as f64 - est).abs();
            count[b] += 1;
        }
    }
    let mae = sum.iter().zip(&count).map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect();
    (mae, count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum EvalEstimator {
    Dp { theta: f64 },
    /// DP with θ fitted to each sketch by marginal likelihood.
    DpFit,
    /// Large-count PYP estimator with fixed parameters.
    Pyp { alpha: f64, gamma: f64 },
    /// Large-count PYP estimator with (α, γ) fitted on the first `prefix` tokens.
    PypFit { prefix: usize },
}

impl EvalEstimator {
    pub fn label(&self) -> &'static str {
        match self {
            EvalEstimator::Dp { .. } => "dp",
            EvalEstimator::DpFit => "dp-fit",
            EvalEstimator::Pyp { .. } => "pyp-asymptotic",
            EvalEstimator::PypFit { .. } => "pyp-asymptotic-fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolEstimate {
    pub symbol: String,
    pub true_freq: u64,
    pub bucket: usize,
    pub bucket_count: u64,
    pub estimate: f64,
}

/// One (J, seed) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalCell {
    pub width: usize,
    pub seed: u64,
    pub params: FittedParams,
    pub mae_per_bin: Vec<f64>,
    pub symbols: Vec<SymbolEstimate>,
}

/// Stratified MAE for one width, averaged over hash seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub bins: Vec<(u64, u64)>,
    pub mae_per_bin: Vec<f64>,
    pub counts_per_bin: Vec<u64>,
    pub method: String,
    #[serde(rename = "J")]
    pub width: usize,
    pub seeds: Vec<u64>,
}

impl EvalReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "method,J,bin_lower,bin_upper,count,mae"
    }

    /// One CSV row per bin, without header.
    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        for (b, &(lo, hi)) in self.bins.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.method, self.width, lo, hi, self.counts_per_bin[b], self.mae_per_bin[b]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutcome {
    pub reports: Vec<EvalReport>,
    pub cells: Vec<EvalCell>,
}

impl EvalOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", EvalReport::csv_header());
        for r in &self.reports {
            out.push_str(&r.to_csv_rows());
        }
        out
    }
}

/// Sketches the corpus for every (J, seed), estimates each distinct token's frequency
/// from its bucket, and reports stratified MAE averaged over seeds.
pub fn evaluate<T: AsRef<[u8]> + Sync>(
    tokens: &[T],
    widths: &[usize],
    seeds: &[u64],
    estimator: EvalEstimator,
    bins: Option<Vec<(u64, u64)>>,
) -> Result<EvalOutcome> {
    if tokens.len() > MAX_CORPUS_TOKENS {
        return Err(Error::TooLarge(format!(
            "corpus has {} tokens; exact ground truth is limited to {MAX_CORPUS_TOKENS}, evaluate a random subsample",
            tokens.len()
        )));
    }
    if widths.is_empty() || seeds.is_empty() {
        return Err(Error::Domain("need at least one width and one seed".into()));
    }
    let mut freq: HashMap<&[u8], u64> = HashMap::new();
    for t in tokens {
        *freq.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut truth: Vec<(&[u8], u64)> = freq.into_iter().collect();
    truth.sort_unstable();
    let max_f = truth.iter().map(|t| t.1).max().unwrap_or(1);
    let bins = bins.unwrap_or_else(|| dyadic_bins(max_f));

    let grid: Vec<(usize, u64)> = widths.iter().flat_map(|&w| seeds.iter().map(move |&s| (w, s))).collect();
    let cells: Vec<EvalCell> = grid
        .par_iter()
        .map(|&(width, seed)| eval_cell(tokens, &truth, width, seed, estimator, &bins))
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for &width in widths {
        let mine: Vec<&EvalCell> = cells.iter().filter(|c| c.width == width).collect();
        let mut mae = vec![0.0; bins.len()];
        for c in &mine {
            for (m, v) in mae.iter_mut().zip(&c.mae_per_bin) {
                *m += v / mine.len() as f64;
            }
        }
        let (_, counts) = stratified_mae(truth.iter().map(|t| (t.1, 0.0)), &bins);
        reports.push(EvalReport {
            bins: bins.clone(),
            mae_per_bin: mae,
            counts_per_bin: counts,
            method: estimator.label().to_string(),
            width,
            seeds: seeds.to_vec(),
        });
    }
    Ok(EvalOutcome { reports, cells })
}

fn eval_cell<T: AsRef<[u8]>>(
    tokens: &[T],
    truth: &[(&[u8], u64)],
    width: usize,
    seed: u64,
    estimator: EvalEstimator,
    bins: &[(u64, u64)],
) -> Result<EvalCell> {
    let h: HashFunction = new_hash(seed, width)?;
    let mut sketch = Sketch::empty(width, seed)?;
    let mut buckets = Vec::with_capacity(truth.len());
    for &(key, f) in truth {
        let j = h.bucket(key)?;
        sketch.counts[j] += f;
        sketch.total_n += f;
        buckets.push(j);
    }
    let params = match estimator {
        EvalEstimator::Dp { theta } => FittedParams::Dp(DpParams::new(theta)?),
        EvalEstimator::DpFit => fit_dp_theta(&sketch)?.params_hat,
        EvalEstimator::Pyp { alpha, gamma } => FittedParams::Pyp(PypParams::new(alpha, gamma)?),
        EvalEstimator::PypFit { prefix } => {
            fit_pyp_prefix(&tokens[..prefix.min(tokens.len())], &h, None)?.params_hat
        }
    };
    let scale = match params {
        FittedParams::Dp(p) => dp_mean(1, p, width),
        FittedParams::Pyp(p) => pyp_mean_asymptotic(1, p, width)?,
        FittedParams::Ibp { .. } => unreachable!("not a species estimator"),
    };
    let symbols: Vec<SymbolEstimate> = truth
        .iter()
        .zip(&buckets)
        .map(|(&(key, f), &j)| SymbolEstimate {
            symbol: String::from_utf8_lossy(key).into_owned(),
            true_freq: f,
            bucket: j,
            bucket_count: sketch.counts[j],
            estimate: scale * sketch.counts[j] as f64,
        })
        .collect();
    let (mae_per_bin, _) = stratified_mae(symbols.iter().map(|s| (s.true_freq, s.estimate)), bins);
    Ok(EvalCell { width, seed, params, mae_per_bin, symbols })
}
