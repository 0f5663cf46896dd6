//! Deterministic seed derivation.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent child seed for stream `stream` of `base`.
pub fn derive(base: u64, stream: u64) -> u64 {
    mix(mix(base) ^ mix(stream.wrapping_mul(0xd6e8_feb8_6659_fd93)))
}

/// Child seed for a labeled stream, e.g. `derive_named(seed, "augment", i)`.
pub fn derive_named(base: u64, name: &str, index: u64) -> u64 {
    let tag = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3));
    derive(derive(base, tag), index)
}
