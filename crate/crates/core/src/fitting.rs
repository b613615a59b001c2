//! Hyperparameter estimation: DP empirical Bayes from the sketch, PYP from a token prefix.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hashing::{HashFunction, Sketch};
use crate::optimize::{brent, nelder_mead};
use crate::species::{pyp_mean_asymptotic, DpParams, PypParams};
use crate::specialfns::{ln_factorial, log_rising_pos};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedParams {
    Dp(DpParams),
    Pyp(PypParams),
    Ibp { theta: f64, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub params_hat: FittedParams,
    /// (parameters, objective) for every evaluation, in evaluation order.
    pub objective_trace: Vec<(Vec<f64>, f64)>,
    pub converged: bool,
    /// The optimum sits on the edge of the search box.
    pub boundary_hit: bool,
    pub n_prefix: Option<usize>,
}

impl FitReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("fit report serializes")
    }

    /// Smallest objective value in the trace.
    pub fn best_objective(&self) -> f64 {
        self.objective_trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min)
    }
}

pub const LOG_THETA_MIN: f64 = -6.907_755_278_982_137; // ln 1e-3
pub const LOG_THETA_MAX: f64 = 18.420_680_743_952_367; // ln 1e8

/// Grid scan over [lo, hi] followed by Brent inside the bracket around the best node.
/// Minimizes `f`; returns (x, f(x), converged, boundary).
pub(crate) fn grid_brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    nodes: usize,
    trace: &mut Vec<(Vec<f64>, f64)>,
) -> (f64, f64, bool, bool) {
    let step = (hi - lo) / (nodes - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..nodes {
        let x = lo + step * i as f64;
        let v = f(x);
        trace.push((vec![x], v));
        if v < best.1 {
            best = (i, v);
        }
    }
    let a = lo + step * best.0.saturating_sub(1) as f64;
    let b = lo + step * (best.0 + 1).min(nodes - 1) as f64;
    let m = brent(
        |x| {
            let v = f(x);
            trace.push((vec![x], v));
            v
        },
        a,
        b,
        1e-10,
        200,
    );
    let (x, fx) = if m.fx <= best.1 { (m.x, m.fx) } else { (lo + step * best.0 as f64, best.1) };
    let boundary = (x - lo).abs() < 1e-6 * step.max(1.0) || (hi - x).abs() < 1e-6 * step.max(1.0);
    (x, fx, m.converged, boundary)
}

/// log Pr[C = c] under the DP: log n! − log(θ)_(n) + Σ_j [log(θ/J)_(c_j) − log c_j!].
pub fn dp_log_likelihood(sketch: &Sketch, theta: f64) -> f64 {
    let t = theta / sketch.width as f64;
    // Summed in sorted order so relabeled buckets give bit-identical values.
    let mut counts: Vec<u64> = sketch.counts.iter().cloned().filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let mut ll = ln_factorial(sketch.total_n) - log_rising_pos(theta, sketch.total_n);
    for c in counts {
        ll += log_rising_pos(t, c) - ln_factorial(c);
    }
    ll
}

/// Maximum marginal likelihood estimate of the DP mass from the sketch alone.
pub fn fit_dp_theta(sketch: &Sketch) -> Result<FitReport> {
    if sketch.total_n == 0 {
        return Err(Error::InsufficientData("cannot fit theta to an empty sketch".into()));
    }
    let mut trace = Vec::new();
    let (x, _, converged, boundary) =
        grid_brent(|lt| -dp_log_likelihood(sketch, lt.exp()), LOG_THETA_MIN, LOG_THETA_MAX, 52, &mut trace);
    Ok(FitReport {
        params_hat: FittedParams::Dp(DpParams { theta: x.exp() }),
        objective_trace: trace,
        converged,
        boundary_hit: boundary,
        n_prefix: None,
    })
}

/// Prefix statistics for the PYP fit: the prefix sketch and, for every distinct symbol,
/// its bucket and true prefix frequency.
#[derive(Debug, Clone)]
pub struct PrefixData {
    pub sketch: Sketch,
    pub symbols: Vec<(usize, u64)>,
}

impl PrefixData {
    pub fn new<T: AsRef<[u8]>>(tokens: &[T], h: &HashFunction) -> Result<Self> {
        let mut sketch = Sketch::empty(h.width, h.seed)?;
        let mut freq: HashMap<&[u8], (usize, u64)> = HashMap::new();
        for t in tokens {
            let key = t.as_ref();
            let j = sketch.insert(h, key)?;
            freq.entry(key).or_insert((j, 0)).1 += 1;
        }
        let mut symbols: Vec<(usize, u64)> = freq.into_values().collect();
        symbols.sort_unstable();
        Ok(PrefixData { sketch, symbols })
    }

    /// Mean |f_s − estimate(bucket, c_bucket, f_s)| over the distinct prefix symbols.
    /// Passing the true frequency through the estimator gives exactly zero.
    pub fn mae<E: Fn(usize, u64, u64) -> f64>(&self, estimate: E) -> f64 {
        let total: f64 = self
            .symbols
            .iter()
            .map(|&(j, f)| (f as f64 - estimate(j, self.sketch.counts[j], f)).abs())
            .sum();
        total / self.symbols.len() as f64
    }
}

pub fn prefix_mae<T: AsRef<[u8]>, E: Fn(usize, u64, u64) -> f64>(
    tokens: &[T],
    h: &HashFunction,
    estimate: E,
) -> Result<f64> {
    Ok(PrefixData::new(tokens, h)?.mae(estimate))
}

/// Search grid for the PYP prefix fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PypGrid {
    pub alphas: Vec<f64>,
    pub log_gammas: Vec<f64>,
}

impl Default for PypGrid {
    fn default() -> Self {
        PypGrid {
            alphas: (1..=19).map(|i| i as f64 * 0.05).collect(),
            log_gammas: (0..=16).map(|i| -2.0 + 0.5 * i as f64).collect(),
        }
    }
}

pub const MIN_PREFIX: usize = 100;

/// Fits (α, γ) by minimizing the prefix MAE of the large-count estimator
/// c_j (γ/α)(1−α)/(γ + Jα − α + 1): grid scan, then Nelder–Mead from the best node.
///
/// The estimator depends on (α, γ) only through that scalar multiplier, so the
/// objective is constant along curves in the plane; ties resolve to the
/// lexicographically smallest grid point.
pub fn fit_pyp_prefix<T: AsRef<[u8]>>(tokens: &[T], h: &HashFunction, grid: Option<&PypGrid>) -> Result<FitReport> {
    if tokens.len() < MIN_PREFIX {
        return Err(Error::InsufficientData(format!(
            "prefix has {} tokens, need at least {MIN_PREFIX}",
            tokens.len()
        )));
    }
    let data = PrefixData::new(tokens, h)?;
    if data.symbols.len() < 2 {
        return Err(Error::InsufficientData("prefix needs at least two distinct tokens".into()));
    }
    let default_grid = PypGrid::default();
    let grid = grid.unwrap_or(&default_grid);
    let width = h.width;
    let objective = |alpha: f64, log_gamma: f64| -> f64 {
        let Ok(p) = PypParams::new(alpha, log_gamma.exp()) else { return f64::INFINITY };
        let Ok(k) = pyp_mean_asymptotic(1, p, width) else { return f64::INFINITY };
        data.mae(|_, c, _| k * c as f64)
    };

    let mut trace = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    let mut alphas = grid.alphas.clone();
    let mut log_gammas = grid.log_gammas.clone();
    alphas.sort_by(f64::total_cmp);
    log_gammas.sort_by(f64::total_cmp);
    for &a in &alphas {
        for &lg in &log_gammas {
            let v = objective(a, lg);
            trace.push((vec![a, lg], v));
            if best.is_none_or(|b| v < b.2) {
                best = Some((a, lg, v));
            }
        }
    }
    let (a0, lg0, f0) = best.ok_or_else(|| Error::DegenerateFit("empty search grid".into()))?;
    if !f0.is_finite() {
        return Err(Error::DegenerateFit("objective is not finite anywhere on the grid".into()));
    }
    let refined = nelder_mead(
        |x| {
            let v = objective(x[0], x[1]);
            trace.push((x.to_vec(), v));
            v
        },
        &[a0, lg0],
        &[0.025, 0.25],
        1e-10,
        400,
    );
    // Refinement is kept only if it does not make things worse.
    let (alpha, log_gamma, converged) =
        if refined.fx <= f0 { (refined.x[0], refined.x[1], refined.converged) } else { (a0, lg0, refined.converged) };
    let edge = |v: f64, g: &[f64]| (v - g[0]).abs() < 1e-12 || (v - g[g.len() - 1]).abs() < 1e-12;
    Ok(FitReport {
        params_hat: FittedParams::Pyp(PypParams { alpha, gamma: log_gamma.exp() }),
        objective_trace: trace,
        converged,
        boundary_hit: edge(alpha, &alphas) || edge(log_gamma, &log_gammas),
        n_prefix: Some(tokens.len()),
    })
}
