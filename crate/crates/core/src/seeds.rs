//! Seed derivation, so that every search, episode and network in a run gets
//! its own reproducible stream.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seed for the sub-task `tag` of the task seeded with `base`.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    mix(mix(base).wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for base in 0..50 {
            for tag in 0..50 {
                assert!(seen.insert(derive_seed(base, tag)));
            }
        }
    }
}
