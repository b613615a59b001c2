//! Posterior laws of the empirical frequency of a new draw given the sketch.

mod pk;
mod pyp;

pub use pk::{pk_freq_posterior_numeric, PkTilt, PK_MAX_TOTAL, PK_MAX_WIDTH};
pub use pyp::{
    pyp_exact_log_probs_raw, pyp_freq_posterior_exact, pyp_freq_posterior_mc, pyp_mean_asymptotic,
    PYP_EXACT_GATE,
};
pub(crate) use pyp::crp_table_path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::Sketch;
use crate::specialfns::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub theta: f64,
}

impl DpParams {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("DP mass must be positive, got {theta}")));
        }
        Ok(DpParams { theta })
    }
}

/// Pitman–Yor discount α ∈ (0,1) and mass γ > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PypParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl PypParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("PYP discount must lie in (0,1), got {alpha}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("PYP mass must be positive, got {gamma}")));
        }
        Ok(PypParams { alpha, gamma })
    }
}

/// Species prior: DP or Pitman–Yor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prior", rename_all = "snake_case")]
pub enum SpeciesPrior {
    Dp(DpParams),
    Pyp(PypParams),
}

impl SpeciesPrior {
    /// (discount, mass) of the two-parameter seating rule; the DP has zero discount.
    pub fn discount_mass(&self) -> (f64, f64) {
        match *self {
            SpeciesPrior::Dp(p) => (0.0, p.theta),
            SpeciesPrior::Pyp(p) => (p.alpha, p.gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DpExact,
    PypExact,
    PypMc,
    PkNumeric,
    TraitsPoissonGamma,
    TraitsPoissonGg,
    TraitsPoissonGeneral,
    TraitsBernoulli,
}

/// Finite law on {0, …, support_max}, stored as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPmf {
    pub support_max: u64,
    pub log_probs: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: u64,
    pub mode: u64,
    pub ci_level: f64,
    pub credible_interval: (u64, u64),
}

#[derive(Serialize)]
struct PmfJson<'a> {
    support_max: u64,
    probs: Vec<f64>,
    stderr: Option<&'a [f64]>,
    method: Method,
    summaries: Summary,
}

impl PosteriorPmf {
    /// Normalizes log-weights into a pmf.
    pub fn from_log_weights(mut log_w: Vec<f64>, method: Method) -> Result<Self> {
        let z = log_sum_exp(&log_w);
        if !z.is_finite() {
            return Err(Error::Domain("posterior weights are not normalizable".into()));
        }
        for v in &mut log_w {
            *v -= z;
        }
        Ok(PosteriorPmf { support_max: log_w.len() as u64 - 1, log_probs: log_w, stderr: None, method })
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|v| v.exp()).collect()
    }

    pub fn prob(&self, l: u64) -> f64 {
        self.log_probs.get(l as usize).map_or(0.0, |v| v.exp())
    }

    pub fn mean(&self) -> f64 {
        self.log_probs.iter().enumerate().map(|(l, v)| l as f64 * v.exp()).sum()
    }

    pub fn summarize(&self, ci_level: f64) -> Summary {
        summarize(self, ci_level)
    }

    pub fn to_json(&self, ci_level: f64) -> serde_json::Value {
        serde_json::to_value(PmfJson {
            support_max: self.support_max,
            probs: self.probs(),
            stderr: self.stderr.as_deref(),
            method: self.method,
            summaries: self.summarize(ci_level),
        })
        .expect("pmf serializes")
    }
}

/// Mean, lower median, smallest-l mode and the shortest central run of support points
/// holding at least `ci_level` mass (ties → left-most).
pub fn summarize(pmf: &PosteriorPmf, ci_level: f64) -> Summary {
    const SLACK: f64 = 1e-12;
    let p = pmf.probs();
    let mean = pmf.mean();
    let mut cdf = 0.0;
    let mut median = pmf.support_max;
    for (l, &q) in p.iter().enumerate() {
        cdf += q;
        if cdf >= 0.5 - SLACK {
            median = l as u64;
            break;
        }
    }
    let mut mode = 0;
    for (l, &q) in p.iter().enumerate() {
        if q > p[mode] {
            mode = l;
        }
    }
    let mut prefix = vec![0.0; p.len() + 1];
    for (l, &q) in p.iter().enumerate() {
        prefix[l + 1] = prefix[l] + q;
    }
    let mut best = (0usize, p.len() - 1);
    let mut right = 0usize;
    for left in 0..p.len() {
        right = right.max(left);
        while right < p.len() - 1 && prefix[right + 1] - prefix[left] < ci_level - SLACK {
            right += 1;
        }
        if prefix[right + 1] - prefix[left] < ci_level - SLACK {
            break;
        }
        if right - left < best.1 - best.0 {
            best = (left, right);
        }
    }
    Summary { mean, median, mode: mode as u64, ci_level, credible_interval: (best.0 as u64, best.1 as u64) }
}

/// Count-min estimate with a single row: the bucket count itself.
pub fn cms_baseline(sketch: &Sketch, j: usize) -> Result<u64> {
    sketch.check_bucket(j)?;
    Ok(sketch.counts[j])
}

/// Beta–Binomial(c_j; 1, θ/J) posterior of the DP prior, which depends on the sketch only
/// through c_j.
pub fn dp_freq_posterior(c_j: u64, params: DpParams, width: usize) -> Result<PosteriorPmf> {
    if width == 0 {
        return Err(Error::InvalidWidth);
    }
    let t = params.theta / width as f64;
    let c = c_j as f64;
    // P(0) = ϑ/(ϑ+c); P(l)/P(l−1) = (c−l+1)/(ϑ+c−l). Compensated running sum of the log-ratios.
    let base = t.ln() - (t + c).ln();
    let mut log_probs = Vec::with_capacity(c_j as usize + 1);
    log_probs.push(base);
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for l in 1..=c_j {
        let step = -((t - 1.0) / (c - l as f64 + 1.0)).ln_1p();
        let next = sum + step;
        comp += if sum.abs() >= step.abs() { (sum - next) + step } else { (step - next) + sum };
        sum = next;
        log_probs.push(base + (sum + comp));
    }
    Ok(PosteriorPmf { support_max: c_j, log_probs, stderr: None, method: Method::DpExact })
}

/// Posterior mean c_j/(1 + θ/J) of the DP posterior.
pub fn dp_mean(c_j: u64, params: DpParams, width: usize) -> f64 {
    c_j as f64 / (1.0 + params.theta / width as f64)
}
