//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator, which is counter based: the 256-bit key
//! and the 64-bit stream id select an independent keystream, and drawing
//! numbers only advances a block counter. Streams are addressed by
//! `(master seed, replication, lane)`:
//!
//! - the key is four successive outputs of SplitMix64 started from
//!   `mix64(seed) ^ mix64(replication ^ REPLICATION_SALT)`;
//! - the lane is used verbatim as the ChaCha stream id.
//!
//! Lanes below [`SCENARIO_LANE_BASE`] belong to player noise (lane `j` is the
//! Brownian motion of player `j`). Because the layout depends only on the
//! addresses and never on the grid or on worker scheduling, results are
//! bit-identical across thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Lane of the mediator's draws in a replication.
pub const SCENARIO_LANE: u64 = 1 << 62;
/// Lanes `SCENARIO_LANE_BASE + j` carry player `j`'s recommendation draw.
pub const SCENARIO_LANE_BASE: u64 = 1 << 60;
/// Lanes `INITIAL_LANE_BASE + j` carry player `j`'s initial state draw.
pub const INITIAL_LANE_BASE: u64 = 1 << 61;
/// Lanes `PILOT_LANE_BASE + k` are used by calibration runs.
pub const PILOT_LANE_BASE: u64 = 3 << 60;

const REPLICATION_SALT: u64 = 0x5851_f42d_4c95_7f2d;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `(seed, replication, lane)`.
pub fn stream(seed: u64, replication: u64, lane: u64) -> ChaCha8Rng {
    let mut state = mix64(seed) ^ mix64(replication ^ REPLICATION_SALT);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(lane);
    rng
}
