//! Deterministic random-number streams.
//!
//! Every stochastic operation in this crate takes an explicit `u64` seed and
//! derives its generator through [`stream_rng`], so results are bit-identical
//! across runs and platforms for a fixed seed.  Independent units of work
//! (replica `i`, toy `t`, chain block ...) get their own `(stream, substream)`
//! coordinates; this keeps parallel replica loops deterministic regardless of
//! scheduling, because each unit owns a generator derived only from its index.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step: a well-mixed 64-bit sequence from a simple counter.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a ChaCha generator from a user seed and a stream coordinate.
///
/// The mapping `(seed, stream, substream) -> key` is injective in practice
/// (full 64-bit mixing of all three words), so distinct coordinates yield
/// statistically independent streams.
pub fn stream_rng(seed: u64, stream: u64, substream: u64) -> ChaCha8Rng {
    let mut state = seed;
    // Absorb the coordinates; the asymmetric constants keep (a, b) and
    // (b, a) from colliding.
    state ^= splitmix64(&mut { stream ^ 0xA076_1D64_78BD_642F }).wrapping_add(stream);
    let mut mixer = state
        .wrapping_add(0xE703_7ED1_A0B4_28DB_u64.wrapping_mul(substream.wrapping_add(1)));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut mixer).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derive a fresh `u64` seed for a sub-task of a seeded operation, so that
/// sibling sub-tasks (tagged, indexed) never share a generator with each
/// other or with their parent.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut state = seed
        ^ splitmix64(&mut { tag ^ 0x9FB2_1C65_1E98_DF25 })
        ^ splitmix64(&mut { index.wrapping_add(0x6A09_E667_F3BC_C909) });
    splitmix64(&mut state)
}
