//! Posterior estimates of the number of distinct symbols and of the l-cardinalities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::hashing::Sketch;
use crate::species::{pyp_freq_posterior_exact, DpParams, PypParams, PYP_EXACT_GATE};
use crate::specialfns::{digamma, gfc_table, ln_binomial, log_add_exp, log_rising_pos, log_sum_exp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CardinalityMethod {
    Dp,
    PypExact,
    PypMc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CardinalityEstimate {
    pub k_hat: f64,
    /// m_hat[l − 1] estimates M_l for l = 1..=l_max.
    pub m_hat: Vec<f64>,
    pub l_max: u64,
    pub method: CardinalityMethod,
    /// Closed-form k̂ (DP only), reported next to the summation.
    pub k_hat_closed_form: Option<f64>,
    /// Monte Carlo standard errors of m_hat (PYP Monte Carlo only).
    pub m_hat_stderr: Option<Vec<f64>>,
}

impl CardinalityEstimate {
    pub fn m(&self, l: u64) -> f64 {
        if l == 0 || l > self.l_max { 0.0 } else { self.m_hat[l as usize - 1] }
    }

    pub fn to_json(&self, params: serde_json::Value) -> serde_json::Value {
        let m: serde_json::Map<String, serde_json::Value> =
            self.m_hat.iter().enumerate().map(|(i, v)| ((i + 1).to_string(), json!(v))).collect();
        let mut out = json!({ "k_hat": self.k_hat, "m_hat": m, "method": self.method });
        if let (Some(obj), serde_json::Value::Object(p)) = (out.as_object_mut(), params) {
            obj.extend(p);
        }
        if let Some(k) = self.k_hat_closed_form {
            out["k_hat_closed_form"] = json!(k);
        }
        if let Some(se) = &self.m_hat_stderr {
            out["m_hat_stderr"] = json!(se);
        }
        out
    }
}

fn l_max(sketch: &Sketch) -> u64 {
    sketch.counts.iter().cloned().max().unwrap_or(0)
}

/// Σ_j (c_j−l+1)_(l)/(ϑ+c_j−l)_(l), the bucket sum shared by the DP formulas.
fn dp_bucket_sum(sketch: &Sketch, vartheta: f64, l: u64) -> f64 {
    sketch
        .counts
        .iter()
        .filter(|&&c| c >= l)
        .map(|&c| (log_rising_pos((c - l + 1) as f64, l) - log_rising_pos(vartheta + (c - l) as f64, l)).exp())
        .sum()
}

/// Pr[f = l | C = c] under the DP, marginalized over the bucket of the new draw.
pub fn dp_unconditional_freq(sketch: &Sketch, params: DpParams, l: u64) -> Result<f64> {
    if l == 0 || l > sketch.total_n {
        return Err(Error::Domain(format!("l must lie in [1, {}], got {l}", sketch.total_n)));
    }
    let vartheta = params.theta / sketch.width as f64;
    Ok(vartheta / (params.theta + sketch.total_n as f64) * dp_bucket_sum(sketch, vartheta, l))
}

/// m̂_l = (ϑ/l) Σ_j (c_j−l+1)_(l)/(ϑ+c_j−l)_(l) and k̂ = Σ_l m̂_l; the closed form
/// ϑ Σ_j [ψ(ϑ+c_j) − ψ(ϑ)] is reported alongside.
pub fn dp_cardinality(sketch: &Sketch, params: DpParams) -> Result<CardinalityEstimate> {
    let vartheta = params.theta / sketch.width as f64;
    let lm = l_max(sketch);
    let m_hat: Vec<f64> = (1..=lm).map(|l| vartheta / l as f64 * dp_bucket_sum(sketch, vartheta, l)).collect();
    let k_hat = m_hat.iter().sum();
    let psi0 = digamma(vartheta)?;
    let mut closed = 0.0;
    for &c in sketch.counts.iter().filter(|&&c| c > 0) {
        closed += digamma(vartheta + c as f64)? - psi0;
    }
    Ok(CardinalityEstimate {
        k_hat,
        m_hat,
        l_max: lm,
        method: CardinalityMethod::Dp,
        k_hat_closed_form: Some(vartheta * closed),
        m_hat_stderr: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PypCardinalityMode {
    Exact,
    MonteCarlo { iters: usize, seed: u64 },
}

pub fn pyp_cardinality(sketch: &Sketch, params: PypParams, mode: PypCardinalityMode) -> Result<CardinalityEstimate> {
    match mode {
        PypCardinalityMode::Exact => pyp_cardinality_exact(sketch, params),
        PypCardinalityMode::MonteCarlo { iters, seed } => pyp_cardinality_mc(sketch, params, iters, seed),
    }
}

/// log Σ_i (a)_(|i|) J^{−|i|} Π_k 𝒞(m_k, i_k; α) via the bucket-wise convolution of the
/// coefficient rows (same sum as the multi-index enumeration, grouped by |i|).
fn grouped_sum(m: &[u64], a: f64, alpha: f64) -> Result<f64> {
    let table = gfc_table(m.iter().cloned().max().unwrap_or(0) as usize, alpha)?;
    let mut acc = vec![0.0_f64]; // log weights by total, starting from the empty product
    for &mk in m {
        let row = table.row(mk as usize);
        let mut next = vec![f64::NEG_INFINITY; acc.len() + mk as usize];
        for (t, &lt) in acc.iter().enumerate() {
            if lt == f64::NEG_INFINITY {
                continue;
            }
            for (i, &lc) in row.iter().enumerate() {
                if lc == f64::NEG_INFINITY {
                    continue;
                }
                let slot = &mut next[t + i];
                *slot = log_add_exp(*slot, lt + lc);
            }
        }
        acc = next;
    }
    let lw = (m.len() as f64).ln();
    let terms: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(t, &v)| v + log_rising_pos(a, t as u64) - t as f64 * lw)
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Pr[h(X_{n+1}) = j | C = c] = S_j / ((γ+n) S_0) for the Pitman–Yor prior.
pub fn pyp_bucket_posterior(sketch: &Sketch, params: PypParams) -> Result<Vec<f64>> {
    let size: f64 = sketch.counts.iter().map(|&c| c as f64 + 2.0).product();
    if size > PYP_EXACT_GATE {
        return Err(Error::TooLarge(format!(
            "exact bucket posterior over ~{size:.3e} multi-indices; use Monte Carlo mode"
        )));
    }
    let a = params.gamma / params.alpha;
    let log_s0 = grouped_sum(&sketch.counts, a, params.alpha)?;
    let scale = (params.gamma + sketch.total_n as f64).ln();
    let mut m = sketch.counts.clone();
    (0..sketch.width)
        .map(|j| {
            m[j] += 1;
            let v = grouped_sum(&m, a, params.alpha);
            m[j] -= 1;
            Ok((v? - log_s0 - scale).exp())
        })
        .collect()
}

fn pyp_cardinality_exact(sketch: &Sketch, params: PypParams) -> Result<CardinalityEstimate> {
    let lm = l_max(sketch);
    let weights = pyp_bucket_posterior(sketch, params)?;
    let mut uncond = vec![0.0; lm as usize + 1];
    for j in 0..sketch.width {
        if sketch.counts[j] == 0 {
            continue;
        }
        let pmf = pyp_freq_posterior_exact(sketch, j, params)?;
        for (l, lp) in pmf.log_probs.iter().enumerate() {
            uncond[l] += weights[j] * lp.exp();
        }
    }
    let scale = params.gamma + sketch.total_n as f64;
    let m_hat: Vec<f64> = (1..=lm as usize).map(|l| scale / (l as f64 - params.alpha) * uncond[l]).collect();
    Ok(CardinalityEstimate {
        k_hat: m_hat.iter().sum(),
        m_hat,
        l_max: lm,
        method: CardinalityMethod::PypExact,
        k_hat_closed_form: None,
        m_hat_stderr: None,
    })
}

const MC_CHUNK: usize = 256;

/// Monte Carlo form of the unconditional frequency law:
/// Pr[f=l | C] = (γ/J)/(γ+n) (1−α)_(l) Σ_j C(c_j,l) (γ)_(c_j−l)/(γ)_(c_j) · N_{j,l}/E_0,
/// with N_{j,l} and E_0 expectations over independent table-count paths, one per bucket,
/// shared by every (j, l).
fn pyp_cardinality_mc(sketch: &Sketch, params: PypParams, iters: usize, seed: u64) -> Result<CardinalityEstimate> {
    if iters == 0 {
        return Err(Error::Domain("Monte Carlo needs at least one iteration".into()));
    }
    let (alpha, gamma) = (params.alpha, params.gamma);
    let lm = l_max(sketch) as usize;
    let n = sketch.total_n as usize;
    let ln_w = (sketch.width as f64).ln();
    let lr_num: Vec<f64> = (0..=n + 1).map(|k| log_rising_pos((gamma + alpha) / alpha, k as u64)).collect();
    let lr_base: Vec<f64> = (0..=n + 1).map(|k| log_rising_pos(gamma / alpha, k as u64)).collect();
    let occupied: Vec<usize> = (0..sketch.width).filter(|&k| sketch.counts[k] > 0).collect();
    // Per (bucket, l) deterministic log-prefactor C(c_j,l)(γ)_(c_j−l)/(γ)_(c_j).
    let pref: Vec<Vec<f64>> = occupied
        .iter()
        .map(|&j| {
            let c = sketch.counts[j];
            (0..=c)
                .map(|l| ln_binomial(c, l) + log_rising_pos(gamma, c - l) - log_rising_pos(gamma, c))
                .collect()
        })
        .collect();

    // Each iteration yields, in a shared shift, the weights w0 and w_l = Σ_j pref·N_{j,l}.
    struct Acc {
        shift: f64,
        s0: f64,
        s: Vec<f64>,
        s_sq: Vec<f64>,
        s_x0: Vec<f64>,
        s0_sq: f64,
        count: usize,
    }
    impl Acc {
        fn new(d: usize) -> Self {
            Acc { shift: f64::NEG_INFINITY, s0: 0.0, s: vec![0.0; d], s_sq: vec![0.0; d], s_x0: vec![0.0; d], s0_sq: 0.0, count: 0 }
        }
        fn rescale(&mut self, to: f64) {
            if self.shift == f64::NEG_INFINITY {
                self.shift = to;
                return;
            }
            let f = (self.shift - to).exp();
            let f2 = f * f;
            self.s0 *= f;
            self.s0_sq *= f2;
            for l in 0..self.s.len() {
                self.s[l] *= f;
                self.s_sq[l] *= f2;
                self.s_x0[l] *= f2;
            }
            self.shift = to;
        }
        fn merge(mut self, mut o: Acc) -> Acc {
            if o.shift > self.shift { self.rescale(o.shift) } else if self.shift > o.shift { o.rescale(self.shift) }
            self.s0 += o.s0;
            self.s0_sq += o.s0_sq;
            for l in 0..self.s.len() {
                self.s[l] += o.s[l];
                self.s_sq[l] += o.s_sq[l];
                self.s_x0[l] += o.s_x0[l];
            }
            self.count += o.count;
            self
        }
    }

    let n_chunks = iters.div_ceil(MC_CHUNK);
    let acc = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let todo = MC_CHUNK.min(iters - chunk * MC_CHUNK);
            let mut acc = Acc::new(lm + 1);
            let mut paths: Vec<Vec<u32>> = vec![Vec::new(); occupied.len()];
            let mut log_terms: Vec<Vec<f64>> = vec![Vec::new(); lm + 1];
            for _ in 0..todo {
                let mut k_tot = 0usize;
                let mut lr_sum = 0.0;
                for (p, &k) in paths.iter_mut().zip(&occupied) {
                    crate::species::crp_table_path(&mut rng, sketch.counts[k] as usize, params, p);
                    let kk = *p.last().unwrap() as usize;
                    k_tot += kk;
                    lr_sum += lr_base[kk];
                }
                let lw0 = lr_base[k_tot] - k_tot as f64 * ln_w - lr_sum;
                for t in log_terms.iter_mut() {
                    t.clear();
                }
                for (b, &k) in occupied.iter().enumerate() {
                    let c = sketch.counts[k] as usize;
                    let kc = paths[b][c] as usize;
                    for l in 1..=c {
                        let kl = paths[b][c - l] as usize;
                        let kt = k_tot - kc + kl;
                        log_terms[l].push(
                            pref[b][l] + lr_num[kt] - kt as f64 * ln_w - (lr_sum - lr_base[kc] + lr_base[kl]),
                        );
                    }
                }
                let lw: Vec<f64> = log_terms.iter().map(|t| log_sum_exp(t)).collect();
                let top = lw.iter().cloned().fold(lw0, f64::max);
                if top > acc.shift {
                    acc.rescale(top);
                }
                let x0 = (lw0 - acc.shift).exp();
                acc.s0 += x0;
                acc.s0_sq += x0 * x0;
                for l in 1..=lm {
                    let x = (lw[l] - acc.shift).exp();
                    acc.s[l] += x;
                    acc.s_sq[l] += x * x;
                    acc.s_x0[l] += x * x0;
                }
                acc.count += 1;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(Acc::merge)
        .expect("at least one chunk");

    if !(acc.s0 > 0.0 && acc.s0.is_finite()) {
        return Err(Error::DegenerateMc("denominator estimate vanished; increase the number of iterations".into()));
    }
    let nf = acc.count as f64;
    let lead = (gamma / sketch.width as f64).ln() - (gamma + n as f64).ln();
    let mean0 = acc.s0 / nf;
    let mut m_hat = Vec::with_capacity(lm);
    let mut stderr = Vec::with_capacity(lm);
    for l in 1..=lm {
        let ratio = acc.s[l] / acc.s0;
        let factor = (lead + log_rising_pos(1.0 - alpha, l as u64)).exp() * (gamma + n as f64) / (l as f64 - alpha);
        m_hat.push(factor * ratio);
        let v = (acc.s_sq[l] - 2.0 * ratio * acc.s_x0[l] + ratio * ratio * acc.s0_sq) / nf;
        stderr.push(factor * (v.max(0.0) / nf).sqrt() / mean0);
    }
    Ok(CardinalityEstimate {
        k_hat: m_hat.iter().sum(),
        m_hat,
        l_max: lm as u64,
        method: CardinalityMethod::PypMc,
        k_hat_closed_form: None,
        m_hat_stderr: Some(stderr),
    })
}
