//! Numerically stable primitives shared by the posterior and simulation code.

mod crm;
mod gfc;

pub use crm::{
    crm_kappa, crm_psi, phi_derivatives, phi_derivatives_closed_form, CrmKind, CrmSpec,
};
pub use gfc::{gfc_table, GfcTable, GFC_MAX_N};
pub use statrs::function::factorial::{ln_binomial, ln_factorial};
pub use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// log |(a)_(n)| = log Γ(a+n) − log Γ(a), the log rising factorial.
///
/// Errors on a pole (a + i = 0) and on a negative product.
pub fn log_rising(a: f64, n: u64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("log_rising: non-finite base {a}")));
    }
    let mut acc = 0.0;
    let mut negative = false;
    let mut i = 0u64;
    // Walk through non-positive factors one at a time.
    while i < n && a + (i as f64) <= 0.0 {
        let v = a + i as f64;
        if v == 0.0 {
            return Err(Error::Pole(a));
        }
        acc += (-v).ln();
        negative = !negative;
        i += 1;
    }
    if negative {
        return Err(Error::Domain(format!("(a)_(n) is negative for a={a}, n={n}")));
    }
    Ok(acc + log_rising_pos(a + i as f64, n - i))
}

/// Infallible version for a > 0.
pub(crate) fn log_rising_pos(mut a: f64, mut n: u64) -> f64 {
    debug_assert!(a > 0.0);
    let mut acc = 0.0;
    // Short products are summed directly; long ones go through a Stirling difference
    // once the base is large enough for the correction series to be accurate.
    while n > 0 && (a < 20.0 || n <= 16) {
        acc += a.ln();
        a += 1.0;
        n -= 1;
    }
    if n == 0 {
        return acc;
    }
    let nf = n as f64;
    let b = a + nf;
    acc + (a - 0.5) * (nf / a).ln_1p() + nf * b.ln() - nf + stirling_corr(b) - stirling_corr(a)
}

fn stirling_corr(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0))))
}

/// Digamma ψ(x): upward shift to x ≥ 8, then the asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("digamma of NaN".into()));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(Error::Pole(x));
    }
    if x < 0.0 {
        // Reflection: ψ(1−x) − ψ(x) = π cot(πx).
        let pi = std::f64::consts::PI;
        return Ok(digamma(1.0 - x)? - pi / (pi * x).tan());
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 8.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const B: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
        -3617.0 / 8160.0,
    ];
    let r2 = 1.0 / (x * x);
    let mut series = 0.0;
    for &b in B.iter().rev() {
        series = (series + b) * r2;
    }
    Ok(shift + x.ln() - 0.5 / x - series)
}

/// Exponential integral E1(x) for x > 0.
pub fn expint_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let t = -term / k as f64;
            sum += t;
            if t.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // Modified Lentz continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Ein(x) = ∫_0^x (1 − e^{−t})/t dt = γ + ln x + E1(x).
pub fn ein(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 2.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..80 {
            term *= x / k as f64;
            let t = if k % 2 == 1 { term } else { -term } / k as f64;
            sum += t;
            if t.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        EULER_GAMMA + x.ln() + expint_e1(x)
    }
}

/// log Σ exp(v) over a slice; −∞ for an empty or all −∞ input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// log(e^a + e^b).
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
