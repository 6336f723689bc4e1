//! Counter-based pseudo-random primitives.
//!
//! Every random quantity in the crate is derived by hashing a key tuple
//! (master seed, stream, index) through a strong 64-bit mixer, so any element
//! of any stream can be regenerated independently of iteration order. This is
//! what makes flip vectors and simulation replicates reproducible under any
//! parallel schedule.

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed from a seed and one stream label.
#[inline]
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Derives a child seed from a seed and two stream labels.
#[inline]
pub fn derive2(seed: u64, a: u64, b: u64) -> u64 {
    derive(derive(seed, a), b)
}

/// A Rademacher sign keyed by (seed, flip index, observation index).
#[inline]
pub fn rademacher_sign(seed: u64, flip_index: u64, obs_index: u64) -> f64 {
    let z = mix64(derive2(seed, flip_index, obs_index));
    if z >> 63 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Stable 64-bit hash of a string (FNV-1a folded through the mixer), used to
/// key per-scenario streams by name.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in s.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signs_are_deterministic_and_index_addressable() {
        let a = rademacher_sign(42, 3, 17);
        let b = rademacher_sign(42, 3, 17);
        assert_eq!(a, b);
        assert!(a == 1.0 || a == -1.0);
    }

    #[test]
    fn sign_balance_is_plausible() {
        let n = 100_000;
        let sum: f64 = (0..n).map(|i| rademacher_sign(7, 1, i)).sum();
        // 4 sigma band for a fair coin
        assert!(sum.abs() < 4.0 * (n as f64).sqrt(), "sum = {sum}");
    }

    #[test]
    fn streams_do_not_collide_trivially() {
        let x: Vec<f64> = (0..64).map(|i| rademacher_sign(1, 0, i)).collect();
        let y: Vec<f64> = (0..64).map(|i| rademacher_sign(1, 1, i)).collect();
        assert_ne!(x, y);
    }

    #[test]
    fn string_hash_is_stable() {
        assert_eq!(hash_str("poisson_correct"), hash_str("poisson_correct"));
        assert_ne!(hash_str("poisson_correct"), hash_str("logistic_correct"));
    }
}
