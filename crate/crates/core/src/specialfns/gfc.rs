use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::log_add_exp;
use crate::error::{Error, Result};

/// Largest supported row index of a generalized factorial coefficient table.
pub const GFC_MAX_N: usize = 10_000;

/// Log generalized factorial coefficients log 𝒞(n, k; α), 0 ≤ k ≤ n ≤ n_max.
///
/// Convention: 𝒞(0,0) = 1 and 𝒞(n,0) = 0 for n ≥ 1 (stored as −∞).
#[derive(Debug)]
pub struct GfcTable {
    n_max: usize,
    alpha: f64,
    log_values: Vec<f64>,
}

impl GfcTable {
    fn build(n_max: usize, alpha: f64) -> Self {
        let mut log_values = vec![f64::NEG_INFINITY; (n_max + 1) * (n_max + 2) / 2];
        log_values[0] = 0.0;
        let la = alpha.ln();
        for n in 0..n_max {
            let (prev, next) = (n * (n + 1) / 2, (n + 1) * (n + 2) / 2);
            for k in 1..=n + 1 {
                let stay = if k <= n {
                    ((n as f64) - (k as f64) * alpha).ln() + log_values[prev + k]
                } else {
                    f64::NEG_INFINITY
                };
                let grow = la + log_values[prev + k - 1];
                log_values[next + k] = log_add_exp(stay, grow);
            }
        }
        GfcTable { n_max, alpha, log_values }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// log 𝒞(n, k; α); −∞ outside the support (k > n, or k = 0 < n).
    pub fn log_c(&self, n: usize, k: usize) -> f64 {
        assert!(n <= self.n_max, "gfc row {n} beyond table size {}", self.n_max);
        if k > n {
            f64::NEG_INFINITY
        } else {
            self.log_values[n * (n + 1) / 2 + k]
        }
    }

    /// Row n as a slice indexed by k = 0..=n.
    pub fn row(&self, n: usize) -> &[f64] {
        let s = n * (n + 1) / 2;
        &self.log_values[s..s + n + 1]
    }
}

type Cache = Mutex<HashMap<u64, Arc<GfcTable>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Memoized table for (n_max, α); a cached table with a larger n_max is reused.
pub fn gfc_table(n_max: usize, alpha: f64) -> Result<Arc<GfcTable>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("gfc table needs alpha in (0,1), got {alpha}")));
    }
    if n_max > GFC_MAX_N {
        return Err(Error::TooLarge(format!(
            "generalized factorial table of size {n_max} exceeds the cap of {GFC_MAX_N}"
        )));
    }
    let key = alpha.to_bits();
    if let Some(t) = cache().lock().unwrap().get(&key) {
        if t.n_max >= n_max {
            return Ok(t.clone());
        }
    }
    let table = Arc::new(GfcTable::build(n_max, alpha));
    let mut guard = cache().lock().unwrap();
    if guard.len() >= 32 {
        guard.clear();
    }
    let entry = guard.entry(key).or_insert_with(|| table.clone());
    if entry.n_max < n_max {
        *entry = table.clone();
    }
    Ok(entry.clone())
}
