//! Strongly-universal hashing into J buckets and count-sketch construction.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mersenne prime 2^61 − 1.
pub const MERSENNE_61: u64 = (1u64 << 61) - 1;

/// h(x) = ((a·enc(x) + b) mod p) mod J, where enc is a seeded 64-bit byte mixer
/// reduced modulo p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashFunction {
    pub prime_modulus: u64,
    pub coeff_a: u64,
    pub coeff_b: u64,
    pub width: usize,
    pub seed: u64,
    mixer_key: u64,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn new_hash(seed: u64, width: usize) -> Result<HashFunction> {
    if width == 0 {
        return Err(Error::InvalidWidth);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixer_key = rng.next_u64();
    let coeff_a = rng.random_range(1..MERSENNE_61);
    let coeff_b = rng.random_range(0..MERSENNE_61);
    Ok(HashFunction { prime_modulus: MERSENNE_61, coeff_a, coeff_b, width, seed, mixer_key })
}

impl HashFunction {
    /// Seeded 64-bit encoding of a byte string, reduced into [0, p).
    pub fn encode(&self, key: &[u8]) -> u64 {
        let mut h = mix64(self.mixer_key ^ (key.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for chunk in key.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            h = mix64(h ^ u64::from_le_bytes(word));
        }
        h % self.prime_modulus
    }

    pub fn bucket(&self, key: &[u8]) -> Result<usize> {
        if key.is_empty() {
            return Err(Error::InvalidKey);
        }
        let p = self.prime_modulus as u128;
        let v = (self.coeff_a as u128 * self.encode(key) as u128 + self.coeff_b as u128) % p;
        Ok((v % self.width as u128) as usize)
    }
}

pub fn hash_key(h: &HashFunction, key: &[u8]) -> Result<usize> {
    h.bucket(key)
}

/// Bucket counts of a single-row count sketch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sketch {
    #[serde(rename = "J")]
    pub width: usize,
    #[serde(rename = "n")]
    pub total_n: u64,
    #[serde(rename = "seed")]
    pub hash_seed: u64,
    pub counts: Vec<u64>,
}

impl Sketch {
    pub fn empty(width: usize, hash_seed: u64) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidWidth);
        }
        Ok(Sketch { width, total_n: 0, hash_seed, counts: vec![0; width] })
    }

    pub fn from_counts(counts: Vec<u64>, hash_seed: u64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidWidth);
        }
        Ok(Sketch { width: counts.len(), total_n: counts.iter().sum(), hash_seed, counts })
    }

    pub fn insert(&mut self, h: &HashFunction, key: &[u8]) -> Result<usize> {
        let j = h.bucket(key)?;
        self.counts[j] += 1;
        self.total_n += 1;
        Ok(j)
    }

    /// Adds another sketch built with the same hash (sharded ingestion).
    pub fn merge(&mut self, other: &Sketch) -> Result<()> {
        if other.width != self.width || other.hash_seed != self.hash_seed {
            return Err(Error::Mismatch("sketches differ in width or hash seed".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_n += other.total_n;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.counts.len() != self.width {
            return Err(Error::Mismatch(format!(
                "width {} does not match {} counts",
                self.width,
                self.counts.len()
            )));
        }
        if self.counts.iter().sum::<u64>() != self.total_n {
            return Err(Error::Mismatch("counts do not sum to n".into()));
        }
        Ok(())
    }

    pub fn check_bucket(&self, j: usize) -> Result<()> {
        if j >= self.width {
            return Err(Error::Domain(format!("bucket {j} out of range for width {}", self.width)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sketch serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Sketch = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// One count per line, preceded by a `# seed=` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# seed={}\n", self.hash_seed);
        for c in &self.counts {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut seed = 0;
        let mut counts = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("seed=") {
                    seed = v.trim().parse().map_err(|_| Error::Parse(format!("bad seed line: {line}")))?;
                }
                continue;
            }
            counts.push(line.parse().map_err(|_| Error::Parse(format!("bad count: {line}")))?);
        }
        Sketch::from_counts(counts, seed)
    }
}

pub fn sketch_stream<I, T>(tokens: I, h: &HashFunction) -> Result<Sketch>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let mut s = Sketch::empty(h.width, h.seed)?;
    for t in tokens {
        s.insert(h, t.as_ref())?;
    }
    Ok(s)
}
