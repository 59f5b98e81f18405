//! Seed derivation and the RNG used throughout the crate.
//!
//! Every run owns a master seed. Subsystems (sampler chains, flow fitting,
//! proposal draws) derive their own independent streams from it with
//! [`derive_seed`], so results are reproducible no matter how work is
//! scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; good avalanche behaviour, cheap, stable across platforms.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a master seed and a stream index.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut s = master ^ 0x6a09_e667_f3bc_c908;
    let a = splitmix64(&mut s);
    let mut t = stream.wrapping_add(a.rotate_left(17));
    splitmix64(&mut t)
}

/// The crate's deterministic RNG.
pub type Rng = ChaCha8Rng;

/// Construct the RNG for a given derived seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
