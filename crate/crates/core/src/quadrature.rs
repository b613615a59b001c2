//! Globally adaptive Gauss–Kronrod (7/15) quadrature, scalar and vector-valued.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-10, rel: 1e-9, max_intervals: 4000 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, ..Default::default() }
    }
}

struct Segment {
    a: f64,
    b: f64,
    val: Vec<f64>,
    err: Vec<f64>,
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for i in 0..8 {
        let pts: &[f64] = if i == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in pts {
            f(c + s * h * XGK[i], buf);
            for d in 0..dim {
                k[d] += WGK[i] * buf[d];
                if i % 2 == 1 {
                    g[d] += WG[i / 2] * buf[d];
                }
            }
        }
    }
    let mut err = vec![0.0; dim];
    for d in 0..dim {
        k[d] *= h;
        g[d] *= h;
        err[d] = (k[d] - g[d]).abs();
        if !k[d].is_finite() {
            err[d] = f64::INFINITY;
        }
    }
    Segment { a, b, val: k, err }
}

fn ratio(err: f64, limit: f64) -> f64 {
    if err == 0.0 { 0.0 } else { err / limit }
}

/// Integrates a vector-valued function over [a, b]; every component must meet the tolerance.
pub fn integrate_vec<F>(mut f: F, a: f64, b: f64, dim: usize, tol: Tolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    let mut segs = vec![gk15(&mut f, a, b, dim, &mut buf)];
    loop {
        let mut total = vec![0.0; dim];
        let mut total_err = vec![0.0; dim];
        for s in &segs {
            for d in 0..dim {
                total[d] += s.val[d];
                total_err[d] += s.err[d];
            }
        }
        let limits: Vec<f64> = total.iter().map(|v| tol.abs.max(tol.rel * v.abs())).collect();
        let worst = (0..dim)
            .map(|d| ratio(total_err[d], limits[d]))
            .fold(0.0_f64, |m, r| if r.is_nan() { f64::INFINITY } else { m.max(r) });
        if worst <= 1.0 {
            return Ok(total);
        }
        if segs.len() >= tol.max_intervals {
            let d = (0..dim)
                .max_by(|&x, &y| ratio(total_err[x], limits[x]).total_cmp(&ratio(total_err[y], limits[y])))
                .unwrap_or(0);
            return Err(Error::Accuracy { achieved: total_err[d], requested: limits[d] });
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let score = (0..dim).map(|d| ratio(s.err[d], limits[d])).fold(0.0_f64, f64::max);
                (i, if score.is_nan() { f64::INFINITY } else { score })
            })
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        let s = segs.swap_remove(idx);
        let mid = 0.5 * (s.a + s.b);
        if !(mid > s.a && mid < s.b) {
            return Err(Error::Accuracy { achieved: s.err.iter().cloned().fold(0.0, f64::max), requested: tol.abs });
        }
        segs.push(gk15(&mut f, s.a, mid, dim, &mut buf));
        segs.push(gk15(&mut f, mid, s.b, dim, &mut buf));
    }
}

/// Integrates a scalar function over [a, b].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, tol).map(|v| v[0])
}

/// Integrates over [a, ∞) through the map x = a + t/(1−t).
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: Tolerance) -> Result<f64> {
    integrate(
        |t| {
            let s = 1.0 - t;
            let v = f(a + t / s);
            if v == 0.0 { 0.0 } else { v / (s * s) }
        },
        0.0,
        1.0,
        tol,
    )
}
