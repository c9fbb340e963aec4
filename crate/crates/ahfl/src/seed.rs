//! Deterministic derivation of independent seed streams from a master seed.
//!
//! Timing, dataset generation, and per-client SGD draw from separate
//! generators so that, for a fixed master seed, the event timeline is
//! identical whether or not any learning happens on top of it.

/// One round of the splitmix64 output function.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds the parts into a single well-mixed seed. Order matters.
pub fn mix(parts: &[u64]) -> u64 {
    let mut state = 0x51_7C_C1_B7_27_22_0A_95u64;
    for &part in parts {
        state = splitmix64(state ^ part);
    }
    splitmix64(state)
}
