//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a u64 derived here, so independent stages never share a stream.

/// SplitMix64 finalizer.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from a base seed and two indices (domain, item).
pub(crate) fn derive(base: u64, domain: u64, item: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ domain) ^ item)
}

pub(crate) const DOMAIN_OPTIMIZER: u64 = 0x01;
pub(crate) const DOMAIN_ASSIGN: u64 = 0x02;
pub(crate) const DOMAIN_EPISODE: u64 = 0x03;
