//! Stateless keyed pseudo-randomness for the scripted backend.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key tuple.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5ca1_ab1e_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Uniform in [0, 1).
pub(crate) fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Keys a time on a microsecond grid so nearby float noise hashes the same.
pub(crate) fn time_key(seconds: f64) -> u64 {
    (seconds * 1e6).round() as u64
}
