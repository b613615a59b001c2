//! Posterior of a trait's cumulative level in the generalized Indian buffet process,
//! given the bucket total c, the new point's bucket increment b and its level a.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{grid_brent, FitReport, FittedParams, LOG_THETA_MAX, LOG_THETA_MIN};
use crate::hashing::Sketch;
use crate::quadrature::{integrate_to_inf, Tolerance};
use crate::species::{Method, PosteriorPmf};
use crate::specialfns::{
    crm_kappa, crm_psi, ein, gfc_table, ln_binomial, ln_factorial, ln_gamma, log_rising_pos, log_sum_exp,
    phi_derivatives, CrmKind, CrmSpec,
};

/// Largest c + b accepted by the generalized-gamma closed form.
pub const GG_MAX_TOTAL: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitQuery {
    /// Bucket total C_j.
    pub c: u64,
    /// Increment B_j of the new point to the same bucket.
    pub b: u64,
    /// Level of the new point on the queried trait, 1 ≤ a ≤ b.
    pub a: u64,
    /// Number of sketched points.
    pub n: u64,
}

impl TraitQuery {
    pub fn new(c: u64, b: u64, a: u64, n: u64) -> Result<Self> {
        if a == 0 {
            return Err(Error::Divergence("a = 0 needs kappa(u, 0), which is infinite".into()));
        }
        if a > b {
            return Err(Error::Domain(format!("level a = {a} exceeds the bucket increment b = {b}")));
        }
        if n == 0 {
            return Err(Error::Domain("n must be positive".into()));
        }
        Ok(TraitQuery { c, b, a, n })
    }

    fn check(&self) -> Result<()> {
        TraitQuery::new(self.c, self.b, self.a, self.n).map(|_| ())
    }
}

/// Poisson(λJ_k) levels on a gamma or generalized-gamma CRM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbpPoissonParams {
    pub crm: CrmSpec,
    pub lambda_rate: f64,
}

impl IbpPoissonParams {
    pub fn new(crm: CrmSpec, lambda_rate: f64) -> Result<Self> {
        if matches!(crm.kind, CrmKind::StableBeta { .. }) {
            return Err(Error::Domain("Poisson trait parameters take a gamma or generalized-gamma CRM".into()));
        }
        if !(lambda_rate > 0.0 && lambda_rate.is_finite()) {
            return Err(Error::Domain(format!("lambda must be positive, got {lambda_rate}")));
        }
        Ok(IbpPoissonParams { crm, lambda_rate })
    }

    pub fn theta(&self) -> f64 {
        self.crm.theta
    }
}

fn vartheta(theta: f64, width: usize) -> Result<f64> {
    if width == 0 {
        return Err(Error::InvalidWidth);
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    Ok(theta / width as f64)
}

/// Joint log-probabilities of (f = l, level = a), l = 0..=c, gamma CRM:
/// ϑ C(c,l) C(b,a) (l+a−1)! Γ(ϑ+c+b−l−a)/Γ(ϑ+c+b).
pub fn poisson_gamma_joint_log_weights(q: &TraitQuery, theta: f64, width: usize) -> Result<Vec<f64>> {
    q.check()?;
    let t = vartheta(theta, width)?;
    let lead = t.ln() + ln_binomial(q.b, q.a);
    Ok((0..=q.c)
        .map(|l| {
            let rest = q.c + q.b - l - q.a;
            lead + ln_binomial(q.c, l) + ln_factorial(l + q.a - 1) - log_rising_pos(t + rest as f64, l + q.a)
        })
        .collect())
}

pub fn poisson_gamma_posterior(q: &TraitQuery, theta: f64, width: usize) -> Result<PosteriorPmf> {
    PosteriorPmf::from_log_weights(poisson_gamma_joint_log_weights(q, theta, width)?, Method::TraitsPoissonGamma)
}

/// Joint log-probabilities under the generalized-gamma CRM, with the ratio of
/// derivatives written as gfc sums Σ_i ϑ^i 𝒞(m,i;α)(τ+u)^{αi−m}.
pub fn poisson_gg_joint_log_weights(q: &TraitQuery, params: &IbpPoissonParams, width: usize) -> Result<Vec<f64>> {
    q.check()?;
    let (alpha, tau) = match params.crm.kind {
        CrmKind::GeneralizedGamma { alpha, tau } => (alpha, tau),
        _ => return Err(Error::Domain("poisson_gg_posterior needs a generalized-gamma CRM".into())),
    };
    if alpha == 0.0 {
        // ρ(s) = s⁻¹e^{−τs}: every power of (τ+u) cancels and the gamma form applies.
        return poisson_gamma_joint_log_weights(q, params.theta(), width);
    }
    let total = q.c + q.b;
    if total > GG_MAX_TOTAL {
        return Err(Error::TooLarge(format!("c + b = {total} exceeds {GG_MAX_TOTAL}")));
    }
    let t = vartheta(params.theta(), width)?;
    let u = (q.n + 1) as f64 * params.lambda_rate;
    let ltu = (tau + u).ln();
    let table = gfc_table(total as usize, alpha)?;
    let lt = t.ln();
    let gfc_sum = |m: u64| -> f64 {
        let terms: Vec<f64> = (0..=m as usize)
            .map(|i| i as f64 * lt + table.log_c(m as usize, i) + (alpha * i as f64 - m as f64) * ltu)
            .collect();
        log_sum_exp(&terms)
    };
    let den = gfc_sum(total);
    let lead = lt + ln_binomial(q.b, q.a) + alpha.ln();
    Ok((0..=q.c)
        .map(|l| {
            let k = l + q.a;
            lead + ln_binomial(q.c, l) + log_rising_pos(1.0 - alpha, k - 1) + (alpha - k as f64) * ltu
                + gfc_sum(total - k)
                - den
        })
        .collect())
}

pub fn poisson_gg_posterior(q: &TraitQuery, params: &IbpPoissonParams, width: usize) -> Result<PosteriorPmf> {
    PosteriorPmf::from_log_weights(poisson_gg_joint_log_weights(q, params, width)?, Method::TraitsPoissonGg)
}

/// Joint log-probabilities from the kernel triple at u = (n+1)λ:
/// ϑ C(c,l) C(b,a) κ(u, l+a) φ^{(c−l+b−a)}(u) / φ^{(c+b)}(u).
pub fn poisson_general_joint_log_weights(
    q: &TraitQuery,
    crm: &CrmSpec,
    lambda_rate: f64,
    width: usize,
) -> Result<Vec<f64>> {
    q.check()?;
    if !(lambda_rate > 0.0 && lambda_rate.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda_rate}")));
    }
    let t = vartheta(crm.theta, width)?;
    let u = (q.n + 1) as f64 * lambda_rate;
    let total = q.c + q.b;
    let lphi = phi_derivatives(crm, t, u, total as usize)?;
    let lead = t.ln() + ln_binomial(q.b, q.a) - lphi[total as usize];
    (0..=q.c)
        .map(|l| {
            let k = l + q.a;
            Ok(lead + ln_binomial(q.c, l) + crm_kappa(crm, u, k)? + lphi[(total - k) as usize])
        })
        .collect()
}

pub fn poisson_general_posterior(
    q: &TraitQuery,
    crm: &CrmSpec,
    lambda_rate: f64,
    width: usize,
) -> Result<PosteriorPmf> {
    PosteriorPmf::from_log_weights(
        poisson_general_joint_log_weights(q, crm, lambda_rate, width)?,
        Method::TraitsPoissonGeneral,
    )
}

/// Per-l kernel of the Bernoulli-level approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BernoulliKernel {
    /// C(n,l) n^{−l} ∫ s^{l+1}(1−s)^{n−l} ρ(s) ds: the exact per-atom Bernoulli likelihood
    /// of (l among n, present in the new point), with the n^{c−l} factor of the
    /// Poissonized remainder.
    #[default]
    Binomial,
    /// C(n,l) ∫ (s^{l+1} − s^{n+1}) ρ(s) ds, without the n^{−l} factor.
    Difference,
}

fn stable_beta(crm: &CrmSpec) -> Result<f64> {
    match crm.kind {
        CrmKind::StableBeta { beta } => Ok(beta),
        _ => Err(Error::Domain(
            "Bernoulli levels need jumps in (0,1); use a stable-beta CRM".into(),
        )),
    }
}

fn ln_beta(x: f64, y: f64) -> f64 {
    ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)
}

/// Approximate posterior of the level f (a = 1), replacing the Poisson-binomial bucket
/// remainders by Poisson variables with the same conditional means:
/// ∝ (c−l+1)_(l) φ^{(c+b−l−1)}(n+1) · kernel(l), l = 0..=min(c, n).
pub fn bernoulli_approx_posterior(q: &TraitQuery, crm: &CrmSpec, width: usize) -> Result<PosteriorPmf> {
    bernoulli_approx_posterior_with(q, crm, width, BernoulliKernel::Binomial)
}

pub fn bernoulli_approx_posterior_with(
    q: &TraitQuery,
    crm: &CrmSpec,
    width: usize,
    kernel: BernoulliKernel,
) -> Result<PosteriorPmf> {
    q.check()?;
    if q.a != 1 {
        return Err(Error::Domain(format!("Bernoulli levels are 0/1, got a = {}", q.a)));
    }
    let beta = stable_beta(crm)?;
    let t = vartheta(crm.theta, width)?;
    let top = q.c.min(q.n);
    let total = (q.c + q.b - 1) as usize;
    let lphi = phi_derivatives(crm, t, (q.n + 1) as f64, total)?;
    let nf = q.n as f64;
    let mut log_w = Vec::with_capacity(top as usize + 1);
    for l in 0..=top {
        let lf = l as f64;
        // ∫ s^l (1−s)^{n−l+β−1} ds  or  ∫ (s^l − s^n)(1−s)^{β−1} ds.
        let integral = match kernel {
            BernoulliKernel::Binomial => ln_beta(lf + 1.0, nf - lf + beta) - lf * nf.ln(),
            BernoulliKernel::Difference => {
                let hi = ln_beta(lf + 1.0, beta);
                let lo = ln_beta(nf + 1.0, beta);
                hi + (-(lo - hi).exp()).ln_1p()
            }
        };
        log_w.push(
            log_rising_pos((q.c - l + 1) as f64, l)
                + ln_binomial(q.n, l)
                + lphi[total - l as usize]
                + integral,
        );
    }
    PosteriorPmf::from_log_weights(log_w, Method::TraitsBernoulli)
}

const TV_TOL: Tolerance = Tolerance { abs: 1e-8, rel: 1e-10, max_intervals: 4000 };

/// (2θ/J) ∫_0^∞ e^{−ψ(u)} κ(u, 2) du.
pub fn bernoulli_tv_bound(crm: &CrmSpec, width: usize) -> Result<f64> {
    tv_integral(crm, width, 1.0)
}

/// The same integral with the Laplace transform of the bucket's total mass,
/// e^{−(θ/J)ψ(u)}, in place of e^{−ψ(u)}.
pub fn bernoulli_tv_bound_bucket_exponent(crm: &CrmSpec, width: usize) -> Result<f64> {
    let t = vartheta(crm.theta, width)?;
    tv_integral(crm, width, t)
}

fn tv_integral(crm: &CrmSpec, width: usize, exponent: f64) -> Result<f64> {
    let beta = stable_beta(crm)?;
    let t = vartheta(crm.theta, width)?;
    let integral = if beta == 1.0 {
        // ψ = Ein(u); κ(u,2) = ∫_0^1 s e^{−us} ds.
        integrate_to_inf(|u| (-exponent * ein(u)).exp() * kappa2_uniform(u), 0.0, TV_TOL)?
    } else {
        let mut failure = None;
        let v = integrate_to_inf(
            |u| match (crm_psi(crm, u), crm_kappa(crm, u, 2)) {
                (Ok(p), Ok(k)) => (k - exponent * p).exp(),
                (Err(e), _) | (_, Err(e)) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            TV_TOL,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        v
    };
    Ok(2.0 * t * integral)
}

/// ∫_0^1 s e^{−us} ds = (1 − e^{−u}(1+u))/u².
fn kappa2_uniform(u: f64) -> f64 {
    if u < 0.05 {
        // Σ_k (−u)^k / (k! (k+2)).
        let mut term = 1.0;
        let mut sum = 0.5;
        for k in 1..12 {
            term *= -u / k as f64;
            sum += term / (k + 2) as f64;
        }
        sum
    } else {
        (-(-u).exp_m1() - u * (-u).exp()) / (u * u)
    }
}

/// log Pr[C = c] for Poisson(λJ_k) levels on a gamma CRM: per bucket a negative binomial,
/// (nλ)^{c_j} (1+nλ)^{−ϑ−c_j} (ϑ)_(c_j)/c_j!.
pub fn ibp_poisson_gamma_log_likelihood(sketch: &Sketch, n: u64, theta: f64, lambda_rate: f64) -> f64 {
    let t = theta / sketch.width as f64;
    let q = n as f64 * lambda_rate;
    let (lq, l1q) = (q.ln(), q.ln_1p());
    sketch
        .counts
        .iter()
        .map(|&c| {
            let cf = c as f64;
            cf * lq - (t + cf) * l1q + log_rising_pos(t, c) - ln_factorial(c)
        })
        .sum()
}

/// Maximum likelihood (θ, λ) for Poisson levels on a gamma CRM. For fixed θ the
/// likelihood peaks at nλ = Σc/θ, so only θ is searched (on log scale).
pub fn fit_ibp_poisson_gamma(sketch: &Sketch, n: u64) -> Result<FitReport> {
    let total = sketch.total_n;
    if total == 0 {
        return Err(Error::DegenerateFit("all-zero sketch carries no information on (theta, lambda)".into()));
    }
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    let s = total as f64;
    let lambda_at = |theta: f64| s / (theta * n as f64);
    let mut trace = Vec::new();
    let (x, _, converged, boundary) = grid_brent(
        |lt| {
            let th = lt.exp();
            -ibp_poisson_gamma_log_likelihood(sketch, n, th, lambda_at(th))
        },
        LOG_THETA_MIN,
        LOG_THETA_MAX,
        52,
        &mut trace,
    );
    for entry in trace.iter_mut() {
        let th = entry.0[0].exp();
        entry.0.push(lambda_at(th).ln());
    }
    let theta = x.exp();
    Ok(FitReport {
        params_hat: FittedParams::Ibp { theta, lambda: lambda_at(theta) },
        objective_trace: trace,
        converged,
        boundary_hit: boundary,
        n_prefix: None,
    })
}
