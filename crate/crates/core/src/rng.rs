//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, domain, index)`: the seed and a domain tag
//! form the ChaCha key, and the index selects the 64-bit stream id. Any index
//! can be drawn without touching the others, so parallel and serial callers
//! observe identical values.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tag for per-sample dropout decisions.
pub const DOMAIN_DROPOUT: u64 = 0x6472_6f70_6f75_7401;
/// Domain tag for bootstrap replicates of a median.
pub const DOMAIN_BOOTSTRAP: u64 = 0x626f_6f74_7374_7201;
/// Domain tag for the Bland-Altman bias bootstrap.
pub const DOMAIN_BLAND_ALTMAN: u64 = 0x626c_616e_6461_6c01;

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// First uniform draw in `[0, 1)` of the addressed stream.
pub fn uniform(seed: u64, domain: u64, index: u64) -> f64 {
    stream(seed, domain, index).random::<f64>()
}

/// Fills `out` with indices drawn uniformly from `0..n`, with replacement.
pub fn resample_indices(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<usize>) {
    out.clear();
    // u64 ranges keep the draw sequence independent of pointer width
    out.extend((0..n).map(|_| rng.random_range(0..n as u64) as usize));
}
