use serde::{Deserialize, Serialize};

use super::{Method, PosteriorPmf};
use crate::error::{Error, Result};
use crate::hashing::Sketch;
use crate::quadrature::{integrate_vec, Tolerance};
use crate::specialfns::{crm_kappa, ln_binomial, log_sum_exp, phi_derivatives, CrmSpec};

/// Total-count gate of the numeric evaluator.
pub const PK_MAX_TOTAL: u64 = 64;
/// Width gate of the numeric evaluator.
pub const PK_MAX_WIDTH: usize = 8;

/// Tilt g(t) ∝ t^{−γ} e^{−βt} of the total-mass density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PkTilt {
    pub gamma_tilt: f64,
    pub beta_tilt: f64,
}

impl PkTilt {
    pub const NONE: PkTilt = PkTilt { gamma_tilt: 0.0, beta_tilt: 0.0 };
}

const GRID: usize = 256;

/// Posterior of the frequency under a tilted Poisson–Kingman prior, by one-dimensional
/// quadrature of the mixing integrals over u ∈ (0, ∞).
pub fn pk_freq_posterior_numeric(spec: &CrmSpec, tilt: PkTilt, sketch: &Sketch, j: usize) -> Result<PosteriorPmf> {
    sketch.check_bucket(j)?;
    if sketch.total_n > PK_MAX_TOTAL || sketch.width > PK_MAX_WIDTH {
        return Err(Error::TooLarge(format!(
            "numeric evaluator limited to n <= {PK_MAX_TOTAL} and J <= {PK_MAX_WIDTH}"
        )));
    }
    if !(tilt.beta_tilt >= 0.0) {
        return Err(Error::Domain("tilt beta must be nonnegative".into()));
    }
    let n = sketch.total_n as f64;
    let power = n + tilt.gamma_tilt;
    if !(power > -1.0) {
        return Err(Error::Divergence(format!("tilt gamma {} not integrable at the origin", tilt.gamma_tilt)));
    }
    let c_j = sketch.counts[j] as usize;
    let m_max = sketch.counts.iter().cloned().max().unwrap_or(0) as usize + 1;
    let vartheta = spec.theta / sketch.width as f64;
    let dim = c_j + 2;

    // Component l ≤ c_j: numerator for l; component c_j+1: denominator.
    let log_integrand = |t: f64, out: &mut [f64]| -> Result<()> {
        let one_minus = 1.0 - t;
        let u = t / one_minus;
        let shifted = u + tilt.beta_tilt;
        let lphi = phi_derivatives(spec, vartheta, shifted, m_max)?;
        let common = power * u.ln() - 2.0 * one_minus.ln()
            + sketch
                .counts
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &c)| lphi[c as usize])
                .sum::<f64>();
        for l in 0..=c_j {
            out[l] = common + lphi[c_j - l] + crm_kappa(spec, shifted, l as u64 + 1)?;
        }
        out[c_j + 1] = common + lphi[c_j + 1];
        Ok(())
    };

    // Per-component log scale from a grid scan keeps each integrand O(1) at its peak.
    let mut scale = vec![f64::NEG_INFINITY; dim];
    let mut buf = vec![0.0; dim];
    for g in 1..GRID {
        let t = g as f64 / GRID as f64;
        log_integrand(t, &mut buf)?;
        for d in 0..dim {
            if buf[d].is_finite() {
                scale[d] = scale[d].max(buf[d]);
            }
        }
    }
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(Error::Divergence("integrand vanishes or overflows on the whole grid".into()));
    }

    let mut failure = None;
    let tol = Tolerance { abs: 1e-14, rel: 1e-10, max_intervals: 4000 };
    let integrals = integrate_vec(
        |t, out| {
            if failure.is_some() {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            if let Err(e) = log_integrand(t, &mut buf) {
                failure = Some(e);
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            for d in 0..dim {
                out[d] = (buf[d] - scale[d]).exp();
            }
        },
        0.0,
        1.0,
        dim,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let integrals = integrals?;
    if integrals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Divergence("mixing integral is not finite and positive".into()));
    }
    let log_den = scale[c_j + 1] + integrals[c_j + 1].ln();
    let raw: Vec<f64> = (0..=c_j)
        .map(|l| vartheta.ln() + ln_binomial(c_j as u64, l as u64) + scale[l] + integrals[l].ln() - log_den)
        .collect();
    // The un-normalized values must already sum to one; a gross miss signals a
    // non-normalizable tilt or an unresolved integrand.
    let total = log_sum_exp(&raw).exp();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Accuracy { achieved: (total - 1.0).abs(), requested: 1e-6 });
    }
    PosteriorPmf::from_log_weights(raw, Method::PkNumeric)
}
