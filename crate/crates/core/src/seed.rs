//! Seed derivation for independent deterministic RNG streams.

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a stream tag (e.g. a component id, an epoch, or a
/// purpose constant) into an independent stream seed.
pub fn mix(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base).wrapping_add(stream))
}
