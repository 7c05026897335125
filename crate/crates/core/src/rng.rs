use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Stream identifiers. Each consumer of randomness owns a disjoint ChaCha
// stream so that adding draws in one place never perturbs another.
pub(crate) const STREAM_APD_CASCADE: u64 = 1;
pub(crate) const STREAM_MONITOR_BACKFLASH: u64 = 2;
pub(crate) const STREAM_MONITOR_DARK: u64 = 3;
pub(crate) const STREAM_DARK_SWEEP: u64 = 4;
pub(crate) const STREAM_DERIVE: u64 = 5;
/// Reflection point `i` uses `STREAM_REFLECTION_BASE + i`.
pub(crate) const STREAM_REFLECTION_BASE: u64 = 1 << 16;
/// Gate block `b` uses `STREAM_APD_BLOCK_BASE + b`.
pub(crate) const STREAM_APD_BLOCK_BASE: u64 = 1 << 32;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent child seed from `seed` and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_DERIVE);
    rng.set_word_pos(u128::from(label) * 16);
    rng.next_u64()
}
