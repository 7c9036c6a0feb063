//! Sub-seed derivation. Every random stream in a run is keyed by the global
//! seed XOR a stable 64-bit hash of a role string (e.g. `"partition"`,
//! `"lp/client/3/round/7"`), so one seed fixes the whole run regardless of
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn role_hash(role: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    role.bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

pub fn derive_seed(seed: u64, role: &str) -> u64 {
    seed ^ role_hash(role)
}

pub fn rng_for(seed: u64, role: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, role))
}
