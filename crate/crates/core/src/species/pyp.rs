use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Method, PosteriorPmf, PypParams};
use crate::error::{Error, Result};
use crate::hashing::Sketch;
use crate::specialfns::{gfc_table, ln_binomial, ln_gamma, log_rising_pos, log_sum_exp, GfcTable};

/// Upper bound on Π_k (c_k + 2) for exact Pitman–Yor evaluation.
pub const PYP_EXACT_GATE: f64 = 1e7;

/// log Σ_{i} Γ(a + |i|) J^{−|i|} Π_k 𝒞(m_k, i_k; α) over the box Π_k {0..m_k}.
///
/// Terms with i_k = 0 < m_k vanish, so the odometer only visits the nonzero ones and
/// bins them by |i|.
fn multi_index_sum(m: &[usize], a: f64, table: &GfcTable) -> f64 {
    let width = m.len() as f64;
    let lo: Vec<usize> = m.iter().map(|&mk| usize::from(mk > 0)).collect();
    let row_max: Vec<f64> = m
        .iter()
        .map(|&mk| table.row(mk).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shift: f64 = row_max.iter().sum();
    let total_max: usize = m.iter().sum();
    let mut by_total = vec![0.0_f64; total_max + 1];
    let mut idx = lo.clone();
    'outer: loop {
        let mut lw = -shift;
        let mut t = 0;
        for (k, &i) in idx.iter().enumerate() {
            lw += table.log_c(m[k], i);
            t += i;
        }
        by_total[t] += lw.exp();
        for k in 0..idx.len() {
            if idx[k] < m[k] {
                idx[k] += 1;
                continue 'outer;
            }
            idx[k] = lo[k];
        }
        break;
    }
    let terms: Vec<f64> = by_total
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(t, &s)| shift + s.ln() + ln_gamma(a + t as f64) - t as f64 * width.ln())
        .collect();
    log_sum_exp(&terms)
}

fn exact_gate(sketch: &Sketch) -> Result<()> {
    let size: f64 = sketch.counts.iter().map(|&c| c as f64 + 2.0).product();
    if size > PYP_EXACT_GATE {
        return Err(Error::TooLarge(format!(
            "exact Pitman-Yor evaluation needs a sum over ~{size:.3e} multi-indices (limit {PYP_EXACT_GATE:.0e}); \
             use the Monte Carlo estimator (mode mc) instead"
        )));
    }
    Ok(())
}

/// Unnormalized log-probabilities from the closed form, with prefactor α/J.
/// Their exponentials sum to one up to rounding.
pub fn pyp_exact_log_probs_raw(sketch: &Sketch, j: usize, params: PypParams) -> Result<Vec<f64>> {
    sketch.check_bucket(j)?;
    exact_gate(sketch)?;
    let (alpha, gamma) = (params.alpha, params.gamma);
    let c_j = sketch.counts[j] as usize;
    let n_max = sketch.counts.iter().cloned().max().unwrap_or(0) as usize + 1;
    let table = gfc_table(n_max, alpha)?;
    let mut m: Vec<usize> = sketch.counts.iter().map(|&c| c as usize).collect();
    m[j] = c_j + 1;
    let log_den = multi_index_sum(&m, gamma / alpha, &table);
    let lead = (alpha / sketch.width as f64).ln();
    let mut out = Vec::with_capacity(c_j + 1);
    for l in 0..=c_j {
        m[j] = c_j - l;
        let log_num = multi_index_sum(&m, (gamma + alpha) / alpha, &table);
        out.push(
            lead + ln_binomial(c_j as u64, l as u64) + log_rising_pos(1.0 - alpha, l as u64) + log_num - log_den,
        );
    }
    Ok(out)
}

/// Exact Pitman–Yor posterior by summation over the multi-index set (tiny sketches only).
pub fn pyp_freq_posterior_exact(sketch: &Sketch, j: usize, params: PypParams) -> Result<PosteriorPmf> {
    let raw = pyp_exact_log_probs_raw(sketch, j, params)?;
    PosteriorPmf::from_log_weights(raw, Method::PypExact)
}

/// c_j (γ/α)(1−α)/(γ + Jα − α + 1): the large-count limit of the posterior mean.
pub fn pyp_mean_asymptotic(c_j: u64, params: PypParams, width: usize) -> Result<f64> {
    if !(params.alpha > 0.0) {
        return Err(Error::Domain("asymptotic mean requires alpha > 0".into()));
    }
    if width == 0 {
        return Err(Error::InvalidWidth);
    }
    let (a, g, w) = (params.alpha, params.gamma, width as f64);
    Ok(c_j as f64 * (g / a) * (1.0 - a) / (g + w * a - a + 1.0))
}

/// Table counts K_0..K_len of one two-parameter seating sequence.
pub(crate) fn crp_table_path<R: Rng>(rng: &mut R, len: usize, params: PypParams, out: &mut Vec<u32>) {
    out.clear();
    out.push(0);
    let mut k = 0u32;
    for i in 0..len {
        let p_new = if i == 0 { 1.0 } else { (params.gamma + k as f64 * params.alpha) / (params.gamma + i as f64) };
        if rng.random::<f64>() < p_new {
            k += 1;
        }
        out.push(k);
    }
}

const MC_CHUNK: usize = 1024;

/// Shifted running moments for the delta-method standard errors.
#[derive(Clone)]
struct Moments {
    shift: f64,
    sum_w: Vec<f64>,
    sum_w2: Vec<f64>,
    sum_ws: Vec<f64>,
    sum_s2: f64,
    count: usize,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Moments {
            shift: f64::NEG_INFINITY,
            sum_w: vec![0.0; dim],
            sum_w2: vec![0.0; dim],
            sum_ws: vec![0.0; dim],
            sum_s2: 0.0,
            count: 0,
        }
    }

    fn rescale(&mut self, new_shift: f64) {
        if self.shift == f64::NEG_INFINITY {
            self.shift = new_shift;
            return;
        }
        let f = (self.shift - new_shift).exp();
        let f2 = f * f;
        for l in 0..self.sum_w.len() {
            self.sum_w[l] *= f;
            self.sum_w2[l] *= f2;
            self.sum_ws[l] *= f2;
        }
        self.sum_s2 *= f2;
        self.shift = new_shift;
    }

    fn push(&mut self, log_w: &[f64], scratch: &mut Vec<f64>) {
        let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m > self.shift {
            self.rescale(m);
        }
        scratch.clear();
        scratch.extend(log_w.iter().map(|v| (v - self.shift).exp()));
        let s: f64 = scratch.iter().sum();
        for (l, &w) in scratch.iter().enumerate() {
            self.sum_w[l] += w;
            self.sum_w2[l] += w * w;
            self.sum_ws[l] += w * s;
        }
        self.sum_s2 += s * s;
        self.count += 1;
    }

    fn merge(mut self, mut other: Moments) -> Moments {
        if other.shift > self.shift {
            self.rescale(other.shift);
        } else if self.shift > other.shift {
            other.rescale(self.shift);
        }
        for l in 0..self.sum_w.len() {
            self.sum_w[l] += other.sum_w[l];
            self.sum_w2[l] += other.sum_w2[l];
            self.sum_ws[l] += other.sum_ws[l];
        }
        self.sum_s2 += other.sum_s2;
        self.count += other.count;
        self
    }
}

/// Monte Carlo evaluation of the Pitman–Yor posterior.
///
/// Each iteration draws one table-count path per bucket (the query bucket's path has
/// length c_j + 1, so a single path serves every l). The common denominator of the
/// ratio-of-expectations form cancels on renormalization; standard errors follow from
/// the delta method for the ratio of means.
pub fn pyp_freq_posterior_mc(
    sketch: &Sketch,
    j: usize,
    params: PypParams,
    iters: usize,
    seed: u64,
) -> Result<PosteriorPmf> {
    sketch.check_bucket(j)?;
    if iters == 0 {
        return Err(Error::Domain("Monte Carlo needs at least one iteration".into()));
    }
    let (alpha, gamma) = (params.alpha, params.gamma);
    let c_j = sketch.counts[j] as usize;
    let n = sketch.total_n as usize;
    let ln_w = (sketch.width as f64).ln();
    let a_num = (gamma + alpha) / alpha;
    let a_base = gamma / alpha;
    let lr_num: Vec<f64> = (0..=n + 1).map(|k| log_rising_pos(a_num, k as u64)).collect();
    let lr_base: Vec<f64> = (0..=n + 1).map(|k| log_rising_pos(a_base, k as u64)).collect();
    let pref: Vec<f64> = (0..=c_j)
        .map(|l| {
            ln_binomial(c_j as u64, l as u64)
                + log_rising_pos(1.0 - alpha, l as u64)
                + log_rising_pos(gamma, (c_j - l) as u64)
        })
        .collect();
    let others: Vec<usize> = (0..sketch.width).filter(|&k| k != j && sketch.counts[k] > 0).collect();

    let n_chunks = iters.div_ceil(MC_CHUNK);
    let moments = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let todo = MC_CHUNK.min(iters - chunk * MC_CHUNK);
            let mut acc = Moments::new(c_j + 1);
            let mut path = Vec::with_capacity(c_j + 2);
            let mut log_w = vec![0.0; c_j + 1];
            let mut scratch = Vec::with_capacity(c_j + 1);
            for _ in 0..todo {
                let mut k_rest = 0usize;
                let mut lr_rest = 0.0;
                for &k in &others {
                    crp_table_path(&mut rng, sketch.counts[k] as usize, params, &mut path);
                    let kk = *path.last().unwrap() as usize;
                    k_rest += kk;
                    lr_rest += lr_base[kk];
                }
                crp_table_path(&mut rng, c_j, params, &mut path);
                for l in 0..=c_j {
                    let kj = path[c_j - l] as usize;
                    let kt = k_rest + kj;
                    log_w[l] = pref[l] + lr_num[kt] - kt as f64 * ln_w - lr_rest - lr_base[kj];
                }
                acc.push(&log_w, &mut scratch);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(Moments::merge)
        .expect("at least one chunk");

    let nf = moments.count as f64;
    let total: f64 = moments.sum_w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateMc(format!(
            "denominator estimate is {total}; increase the number of iterations"
        )));
    }
    let mut log_probs = Vec::with_capacity(c_j + 1);
    let mut stderr = Vec::with_capacity(c_j + 1);
    let mean_s = total / nf;
    for l in 0..=c_j {
        let p = moments.sum_w[l] / total;
        log_probs.push(p.ln());
        // Var(w_l − p s) with E[w_l − p s] = 0 at the plug-in ratio.
        let v = (moments.sum_w2[l] - 2.0 * p * moments.sum_ws[l] + p * p * moments.sum_s2) / nf;
        stderr.push((v.max(0.0) / nf).sqrt() / mean_s);
    }
    Ok(PosteriorPmf { support_max: c_j as u64, log_probs, stderr: Some(stderr), method: Method::PypMc })
}
