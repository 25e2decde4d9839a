//! Deterministic seed derivation for fan-out work (per-sample noise seeds,
//! per-cell scans).

/// Derive an independent stream seed from a base seed and an index.
///
/// One round of SplitMix64 over `seed ^ (index * golden)`; collisions
/// between (seed, index) pairs used in one run are practically impossible
/// and results are stable across platforms.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
