//! Deterministic seed derivation.
//!
//! A single user seed fans out to component seeds through SplitMix64 mixing, so
//! every sub-experiment can be reproduced on its own.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `(a, b)` of a stream rooted at `seed`: `seed ^ mix(a, b)`.
pub fn derive(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ mix64(mix64(a).wrapping_add(b))
}

/// Seed for a named component, e.g. `derive_named(seed, "eval")`.
pub fn derive_named(seed: u64, name: &str) -> u64 {
    let h = name
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3));
    derive(seed, h, 0)
}
