use serde::{Deserialize, Serialize};

use super::{gfc_table, ln_binomial, ln_gamma, log_rising_pos, log_sum_exp};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};

/// Lévy-intensity family of a homogeneous completely random measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CrmKind {
    /// ρ(s) = s⁻¹ e^{−s}.
    Gamma,
    /// ρ(s) = α/Γ(1−α) s^{−1−α} e^{−τs}; α = 0 is read as the gamma intensity s⁻¹e^{−τs}.
    GeneralizedGamma { alpha: f64, tau: f64 },
    /// ρ(s) = s⁻¹ (1−s)^{β−1} on (0, 1).
    StableBeta { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrmSpec {
    pub kind: CrmKind,
    /// Total-mass parameter θ of the intensity θρ(s)ds.
    pub theta: f64,
}

const PSI_TOL: Tolerance = Tolerance { abs: 1e-12, rel: 1e-12, max_intervals: 4000 };
const KAPPA_TOL: Tolerance = Tolerance { abs: 0.0, rel: 1e-11, max_intervals: 4000 };

impl CrmSpec {
    pub fn new(kind: CrmKind, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("theta must be positive, got {theta}")));
        }
        match kind {
            CrmKind::Gamma => {}
            CrmKind::GeneralizedGamma { alpha, tau } => {
                if !(0.0..1.0).contains(&alpha) || !(tau > 0.0) {
                    return Err(Error::Domain(format!(
                        "generalized gamma needs alpha in [0,1) and tau > 0, got ({alpha}, {tau})"
                    )));
                }
            }
            CrmKind::StableBeta { beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::Domain(format!("stable-beta needs beta > 0, got {beta}")));
                }
            }
        }
        Ok(CrmSpec { kind, theta })
    }

    pub fn gamma(theta: f64) -> Result<Self> {
        Self::new(CrmKind::Gamma, theta)
    }

    pub fn generalized_gamma(alpha: f64, tau: f64, theta: f64) -> Result<Self> {
        Self::new(CrmKind::GeneralizedGamma { alpha, tau }, theta)
    }

    pub fn stable_beta(beta: f64, theta: f64) -> Result<Self> {
        Self::new(CrmKind::StableBeta { beta }, theta)
    }

    /// ρ(s) itself (without θ); zero outside the support.
    pub fn rho(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self.kind {
            CrmKind::Gamma => (-s).exp() / s,
            CrmKind::GeneralizedGamma { alpha, tau } if alpha == 0.0 => (-tau * s).exp() / s,
            CrmKind::GeneralizedGamma { alpha, tau } => {
                (alpha.ln() - ln_gamma(1.0 - alpha) - (1.0 + alpha) * s.ln() - tau * s).exp()
            }
            CrmKind::StableBeta { beta } => {
                if s >= 1.0 {
                    0.0
                } else {
                    (1.0 - s).powf(beta - 1.0) / s
                }
            }
        }
    }
}

/// ∫_0^1 g(s) (1−s)^{β−1} ds, removing the endpoint singularity at s = 1 when β < 1
/// through w = (1−s)^β on the upper half.
pub(crate) fn integrate_stable_beta<G: Fn(f64) -> f64>(
    g: G,
    beta: f64,
    split_hint: f64,
    tol: Tolerance,
) -> Result<f64> {
    let weight = |s: f64| if beta == 1.0 { 1.0 } else { (1.0 - s).powf(beta - 1.0) };
    let mut total = 0.0;
    let upper = if beta < 1.0 { 0.5 } else { 1.0 };
    // Concentrated integrands (large damping) get an extra breakpoint near the origin.
    let cut = split_hint.clamp(0.0, upper);
    if cut > 0.0 && cut < upper {
        total += integrate(|s| g(s) * weight(s), 0.0, cut, tol)?;
        total += integrate(|s| g(s) * weight(s), cut, upper, tol)?;
    } else {
        total += integrate(|s| g(s) * weight(s), 0.0, upper, tol)?;
    }
    if beta < 1.0 {
        let inv = 1.0 / beta;
        let top = 0.5_f64.powf(beta);
        total += inv * integrate(|w| g(1.0 - w.powf(inv)), 0.0, top, tol)?;
    }
    Ok(total)
}

fn split_for(u: f64) -> f64 {
    if u > 16.0 { 8.0 / u } else { 0.0 }
}

/// Laplace exponent ψ(u) = ∫ (1 − e^{−us}) ρ(s) ds.
pub fn crm_psi(spec: &CrmSpec, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("psi needs u >= 0, got {u}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(match spec.kind {
        CrmKind::Gamma => u.ln_1p(),
        CrmKind::GeneralizedGamma { alpha, tau } if alpha == 0.0 => (u / tau).ln_1p(),
        CrmKind::GeneralizedGamma { alpha, tau } => tau.powf(alpha) * (alpha * (u / tau).ln_1p()).exp_m1(),
        CrmKind::StableBeta { beta } => integrate_stable_beta(
            |s| -(-u * s).exp_m1() / s,
            beta,
            split_for(u),
            PSI_TOL,
        )?,
    })
}

/// log κ(u, m) = log ∫ e^{−us} s^m ρ(s) ds.
pub fn crm_kappa(spec: &CrmSpec, u: f64, m: u64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("kappa needs u >= 0, got {u}")));
    }
    if m == 0 {
        return Err(Error::Divergence("kappa(u, 0) = ∫ e^{-us} rho(s) ds is infinite".into()));
    }
    let mf = m as f64;
    Ok(match spec.kind {
        CrmKind::Gamma => ln_gamma(mf) - mf * u.ln_1p(),
        CrmKind::GeneralizedGamma { alpha, tau } if alpha == 0.0 => ln_gamma(mf) - mf * (tau + u).ln(),
        CrmKind::GeneralizedGamma { alpha, tau } => {
            alpha.ln() + log_rising_pos(1.0 - alpha, m - 1) + (alpha - mf) * (tau + u).ln()
        }
        CrmKind::StableBeta { beta } => {
            let v = integrate_stable_beta(
                |s| (-u * s).exp() * s.powi(m as i32 - 1),
                beta,
                split_for(u) * mf.max(1.0),
                KAPPA_TOL,
            )?;
            if !(v > 0.0) {
                return Err(Error::Accuracy { achieved: f64::INFINITY, requested: KAPPA_TOL.rel });
            }
            v.ln()
        }
    })
}

/// log φ^{(m)}(u), m = 0..=m_max, by the Leibniz recurrence
/// φ^{(m+1)} = ϑ Σ_i C(m,i) κ(u, m+1−i) φ^{(i)}, with φ^{(0)} = e^{−ϑψ(u)}.
pub fn phi_derivatives(spec: &CrmSpec, theta_over_j: f64, u: f64, m_max: usize) -> Result<Vec<f64>> {
    if !(theta_over_j > 0.0) {
        return Err(Error::Domain(format!("theta/J must be positive, got {theta_over_j}")));
    }
    let mut lk = vec![0.0; m_max + 1];
    for (k, slot) in lk.iter_mut().enumerate().skip(1) {
        *slot = crm_kappa(spec, u, k as u64)?;
    }
    let mut lphi = Vec::with_capacity(m_max + 1);
    lphi.push(-theta_over_j * crm_psi(spec, u)?);
    let lt = theta_over_j.ln();
    let mut terms = Vec::with_capacity(m_max + 1);
    for m in 0..m_max {
        terms.clear();
        for i in 0..=m {
            terms.push(ln_binomial(m as u64, i as u64) + lk[m + 1 - i] + lphi[i]);
        }
        lphi.push(lt + log_sum_exp(&terms));
    }
    Ok(lphi)
}

/// Closed-form log φ^{(m)}(u) for the gamma and generalized-gamma families.
pub fn phi_derivatives_closed_form(
    spec: &CrmSpec,
    theta_over_j: f64,
    u: f64,
    m_max: usize,
) -> Result<Vec<f64>> {
    if !(theta_over_j > 0.0) || !(u >= 0.0) {
        return Err(Error::Domain("phi needs theta/J > 0 and u >= 0".into()));
    }
    let t = theta_over_j;
    match spec.kind {
        CrmKind::Gamma => Ok((0..=m_max)
            .map(|m| log_rising_pos(t, m as u64) - (t + m as f64) * u.ln_1p())
            .collect()),
        CrmKind::GeneralizedGamma { alpha, tau } if alpha == 0.0 => Ok((0..=m_max)
            .map(|m| log_rising_pos(t, m as u64) - t * (u / tau).ln_1p() - m as f64 * (tau + u).ln())
            .collect()),
        CrmKind::GeneralizedGamma { alpha, tau } => {
            let table = gfc_table(m_max, alpha)?;
            let base = -t * crm_psi(spec, u)?;
            let ltu = (tau + u).ln();
            let lt = t.ln();
            let mut out = Vec::with_capacity(m_max + 1);
            let mut terms = Vec::with_capacity(m_max + 1);
            for m in 0..=m_max {
                terms.clear();
                for i in 0..=m {
                    terms.push(i as f64 * lt + table.log_c(m, i) + (alpha * i as f64 - m as f64) * ltu);
                }
                out.push(base + log_sum_exp(&terms));
            }
            Ok(out)
        }
        CrmKind::StableBeta { .. } => {
            Err(Error::Domain("no closed form for stable-beta derivatives; use phi_derivatives".into()))
        }
    }
}
