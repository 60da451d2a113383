//! Seed derivation. One master seed fans out to per-stage and per-sample
//! seeds through SplitMix64, so parallel execution order can never reorder
//! randomness.

/// SplitMix64 step; a full-period mixer over u64.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stage seed: mixes the master seed with a stage tag.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut acc = splitmix64(master);
    for byte in stage.bytes() {
        acc = splitmix64(acc ^ u64::from(byte));
    }
    acc
}

/// Per-item seed within a stage (e.g. one attack run per sample index).
pub fn item_seed(stage: u64, index: u64) -> u64 {
    splitmix64(stage ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}
