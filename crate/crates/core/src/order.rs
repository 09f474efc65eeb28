//! Per-participant deck order.
//!
//! The order is a pure function of `(study_id, participant_id, n)`:
//! the first eight bytes (big-endian) of
//! `SHA-256(study_id || 0x1F || participant_id)` seed a SplitMix64 stream
//! which drives a descending Fisher-Yates shuffle of `0..n`. The pipeline is
//! fixed bit-for-bit so any implementation reproduces the same order.

use sha2::{Digest, Sha256};
use thiserror::Error;

const SEPARATOR: u8 = 0x1F;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("cannot order an empty deck")]
    InvalidCount,
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

pub fn order_seed(study_id: &str, participant_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(study_id.as_bytes());
    h.update([SEPARATOR]);
    h.update(participant_id.as_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest.as_slice()[..8]);
    u64::from_be_bytes(first)
}

/// Returns a permutation of `0..n` specific to this participant and study.
pub fn build_order(study_id: &str, participant_id: &str, n: usize) -> Result<Vec<usize>, OrderError> {
    if n == 0 {
        return Err(OrderError::InvalidCount);
    }
    let mut rng = SplitMix64::new(order_seed(study_id, participant_id));
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_invalid() {
        assert_eq!(build_order("s", "p", 0), Err(OrderError::InvalidCount));
    }

    #[test]
    fn singleton() {
        assert_eq!(build_order("anything", "anyone", 1).unwrap(), vec![0]);
    }

    #[test]
    fn repeatable() {
        assert_eq!(
            build_order("s1", "p1", 50).unwrap(),
            build_order("s1", "p1", 50).unwrap()
        );
    }

    #[test]
    fn splitmix_reference_outputs() {
        // Published reference stream for seed 0.
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn separator_matters() {
        // "ab"+"c" and "a"+"bc" must not collide.
        assert_ne!(order_seed("ab", "c"), order_seed("a", "bc"));
    }
}
