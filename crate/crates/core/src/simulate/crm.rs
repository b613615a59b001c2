use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson};
use statrs::function::gamma::gamma_lr;

use super::rng_from_seed;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_inf, Tolerance};
use crate::specialfns::{expint_e1, ln_gamma, CrmKind, CrmSpec};

/// Default stopping level for the expected mass of the jumps not generated.
pub const DEFAULT_MASS_TOL: f64 = 1e-10;

/// Jumps of a CRM in decreasing order (inverse-Lévy / Ferguson–Klass).
#[derive(Debug, Clone)]
pub struct CrmDraw {
    pub jumps: Vec<f64>,
    /// Expected total size of the jumps below the last one generated.
    pub truncated_mass: f64,
    /// True when the jump-count cap, not the mass tolerance, ended the draw.
    pub hit_cap: bool,
}

const TAIL_TOL: Tolerance = Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 2000 };

/// Tail of the Lévy measure, N(x) = θ ∫_x^∞ ρ(s) ds.
pub fn crm_tail(spec: &CrmSpec, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Ok(f64::INFINITY);
    }
    let th = spec.theta;
    Ok(match spec.kind {
        CrmKind::Gamma => th * expint_e1(x),
        CrmKind::GeneralizedGamma { alpha, tau } if alpha == 0.0 => th * expint_e1(tau * x),
        CrmKind::GeneralizedGamma { alpha, tau } => {
            // s = x e^v.
            let z = tau * x;
            let inner = integrate_to_inf(|v| (-alpha * v - z * v.exp()).exp(), 0.0, TAIL_TOL)?;
            th * (alpha.ln() - ln_gamma(1.0 - alpha) - alpha * x.ln()).exp() * inner
        }
        CrmKind::StableBeta { beta } => {
            if x >= 1.0 {
                0.0
            } else if beta == 1.0 {
                -th * x.ln()
            } else if x < 0.5 {
                // ∫_x^{1/2} (1−s)^{β−1}/s ds with s = e^v, plus the fixed upper piece.
                let lower = integrate(|v| ((beta - 1.0) * (-v.exp()).ln_1p()).exp(), x.ln(), 0.5f64.ln(), TAIL_TOL)?;
                th * (lower + stable_beta_upper(beta, 0.5)?)
            } else {
                th * stable_beta_upper(beta, x)?
            }
        }
    })
}

/// ∫_x^1 (1−s)^{β−1}/s ds for x ≥ 1/2 through w = (1−s)^β.
fn stable_beta_upper(beta: f64, x: f64) -> Result<f64> {
    let inv = 1.0 / beta;
    let top = (1.0 - x).powf(beta);
    Ok(inv * integrate(|w| 1.0 / (1.0 - w.powf(inv)), 0.0, top, TAIL_TOL)?)
}

/// Expected total size of all jumps smaller than x: θ ∫_0^x s ρ(s) ds.
pub fn truncated_mass(spec: &CrmSpec, x: f64) -> f64 {
    let th = spec.theta;
    match spec.kind {
        CrmKind::Gamma => -th * (-x).exp_m1(),
        CrmKind::GeneralizedGamma { alpha, tau } if alpha == 0.0 => -th * (-tau * x).exp_m1() / tau,
        CrmKind::GeneralizedGamma { alpha, tau } => th * alpha * tau.powf(alpha - 1.0) * gamma_lr(1.0 - alpha, tau * x),
        CrmKind::StableBeta { beta } => th * -(beta * (-x.min(1.0)).ln_1p()).exp_m1() / beta,
    }
}

/// Solves N(x) = y for x by bisection on log x, polished by Newton steps
/// (dN/d log x = −θ x ρ(x)).
fn invert_tail(spec: &CrmSpec, y: f64, hint: f64) -> Result<f64> {
    if let CrmKind::StableBeta { beta } = spec.kind {
        if beta == 1.0 {
            return Ok((-y / spec.theta).exp());
        }
    }
    let (mut lo, mut hi) = (-745.0_f64, 40.0_f64);
    if matches!(spec.kind, CrmKind::StableBeta { .. }) {
        hi = 0.0;
    }
    let mut z = hint.ln().clamp(lo, hi);
    for _ in 0..200 {
        let x = z.exp();
        let g = crm_tail(spec, x)? - y;
        if g > 0.0 { lo = z } else { hi = z }
        let slope = -spec.theta * x * spec.rho(x);
        let mut next = if slope < 0.0 && slope.is_finite() { z - g / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() < 1e-13 * (1.0 + z.abs()) || hi - lo < 1e-13 {
            return Ok(next.exp());
        }
        z = next;
    }
    Ok(z.exp())
}

/// Ferguson–Klass draw of the largest `cap` jumps, stopping earlier once the expected
/// mass of everything below the current jump falls under `mass_tol`.
pub fn sample_crm_jumps<R: Rng>(spec: &CrmSpec, cap: usize, mass_tol: f64, rng: &mut R) -> Result<CrmDraw> {
    let mut jumps = Vec::new();
    let mut arrival = 0.0;
    let mut last = 1.0;
    loop {
        if jumps.len() >= cap {
            let tm = truncated_mass(spec, last);
            return Ok(CrmDraw { jumps, truncated_mass: tm, hit_cap: true });
        }
        let e: f64 = Exp1.sample(rng);
        arrival += e;
        let x = invert_tail(spec, arrival, last)?;
        if !(x > 0.0) {
            return Ok(CrmDraw { jumps, truncated_mass: truncated_mass(spec, last), hit_cap: false });
        }
        jumps.push(x);
        last = x;
        let tm = truncated_mass(spec, x);
        if tm < mass_tol {
            return Ok(CrmDraw { jumps, truncated_mass: tm, hit_cap: false });
        }
    }
}

/// Generalized IBP draw: Poisson(λ J_k) levels (Bernoulli(J_k) for stable-beta) for
/// each of `n` points on every retained atom.
#[derive(Debug, Clone)]
pub struct IbpSample {
    pub jumps: Vec<f64>,
    /// Per point: (atom index, positive level).
    pub levels: Vec<Vec<(u32, u32)>>,
    pub truncated_mass: f64,
    /// Set when the jump cap ended the draw with non-negligible mass left out.
    pub warning: Option<String>,
}

impl IbpSample {
    /// Total level of every atom over all points.
    pub fn atom_totals(&self) -> Vec<u64> {
        let mut t = vec![0u64; self.jumps.len()];
        for point in &self.levels {
            for &(k, a) in point {
                t[k as usize] += a as u64;
            }
        }
        t
    }
}

pub fn sample_ibp(spec: &CrmSpec, lambda_rate: f64, n: usize, truncation: usize, seed: u64) -> Result<IbpSample> {
    if truncation < 100 {
        return Err(Error::Domain(format!("truncation must be at least 100, got {truncation}")));
    }
    let bernoulli = matches!(spec.kind, CrmKind::StableBeta { .. });
    if !bernoulli && !(lambda_rate > 0.0) {
        return Err(Error::Domain(format!("Poisson rate must be positive, got {lambda_rate}")));
    }
    let mut rng = rng_from_seed(seed);
    let draw = sample_crm_jumps(spec, truncation, DEFAULT_MASS_TOL, &mut rng)?;
    let warning = (draw.hit_cap && draw.truncated_mass > 1e-6 * spec.theta).then(|| {
        format!(
            "truncation at {truncation} jumps leaves expected mass {:.3e} unrepresented",
            draw.truncated_mass
        )
    });
    let mut levels = vec![Vec::new(); n];
    for (k, &x) in draw.jumps.iter().enumerate() {
        for point in levels.iter_mut() {
            let a = if bernoulli {
                u32::from(rng.random::<f64>() < x)
            } else {
                poisson(lambda_rate * x, &mut rng)
            };
            if a > 0 {
                point.push((k as u32, a));
            }
        }
    }
    Ok(IbpSample { jumps: draw.jumps, levels, truncated_mass: draw.truncated_mass, warning })
}

/// Poisson draw that tolerates a zero mean; CDF inversion for small means.
pub fn poisson<R: Rng>(mean: f64, rng: &mut R) -> u32 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 10.0 {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cum = p;
        let mut k = 0u32;
        while u > cum && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cum += p;
        }
        return k;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u32).unwrap_or(0)
}

/// Binomial draw with success probability p.
pub fn binomial<R: Rng>(trials: u64, p: f64, rng: &mut R) -> u64 {
    Binomial::new(trials, p.clamp(0.0, 1.0)).map(|d| d.sample(rng)).unwrap_or(0)
}
