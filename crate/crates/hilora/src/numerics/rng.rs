//! Seeded, stream-addressed randomness.
//!
//! Every stochastic stage owns an [`RngStream`] identified by
//! `(seed, stream_id)`. The same pair yields the same draw sequence on every
//! run and platform. Parallel work never shares a stream; it derives child
//! streams with distinct stream ids instead.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::NumericsError;

/// Identifier of the underlying generator algorithm.
pub const RNG_ALGORITHM: &str = "chacha8";

/// A single-owner deterministic random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for a parallel or nested stage.
    ///
    /// The child id mixes the parent id and the salt through splitmix64, so
    /// nested derivations stay collision-resistant without bookkeeping.
    pub fn derive(&self, salt: u64) -> RngStream {
        RngStream::new(self.seed, splitmix64(self.stream_id ^ splitmix64(salt)))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn standard_normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn usize_below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable 64-bit hash of a byte string, for deriving stream ids from names.
pub(crate) fn hash_bytes(bytes: &[u8]) -> u64 {
    // FNV-1a, 64-bit.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Multinomial draw of `n` items over `probs` by sequential conditional
/// binomials: O(categories) per draw and exactly reproducible from the
/// stream.
pub fn multinomial_sample(
    n: u64,
    probs: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<u64>, NumericsError> {
    if probs.is_empty() {
        return Err(NumericsError::InvalidProbabilities {
            reason: "empty".into(),
        });
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(NumericsError::InvalidProbabilities {
            reason: "negative or non-finite entry".into(),
        });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(NumericsError::InvalidProbabilities {
            reason: format!("sum {sum} not within 1e-9 of 1"),
        });
    }

    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut rest = 1.0_f64;
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == probs.len() - 1 || rest <= p {
            counts[k] = remaining;
            break;
        }
        let cond = (p / rest).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, cond)
            .expect("conditional probability is in [0, 1]")
            .sample(&mut *rng);
        counts[k] = draw;
        remaining -= draw;
        rest -= p;
    }
    Ok(counts)
}
