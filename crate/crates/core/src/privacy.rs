//! Privacy amplification by Toeplitz hashing.
//!
//! The `(l - m) x l` matrix has entry `(i, j) = seed[i - j + l - 1]`, so the
//! seed holds the diagonals from the top-right corner (index 0) to the
//! bottom-left (index `2l - m - 2`). Serialized seeds are hex, LSB-first
//! within each byte.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToeplitzSpec {
    pub l: usize,
    pub m: usize,
    pub seed: BitString,
}

impl ToeplitzSpec {
    pub fn seed_len(l: usize, m: usize) -> usize {
        (l + (l - m)).saturating_sub(1)
    }

    pub fn new(l: usize, m: usize, seed: BitString) -> Result<ToeplitzSpec> {
        if m > l {
            return Err(Error::InvalidParameter(format!("cannot remove {m} bits from {l}")));
        }
        let expected = Self::seed_len(l, m);
        if seed.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: seed.len(),
            });
        }
        Ok(ToeplitzSpec { l, m, seed })
    }

    pub fn output_len(&self) -> usize {
        self.l - self.m
    }
}

pub fn draw_seed<R: RngCore + ?Sized>(l: usize, m: usize, rng: &mut R) -> Result<ToeplitzSpec> {
    if m > l {
        return Err(Error::InvalidParameter(format!("cannot remove {m} bits from {l}")));
    }
    ToeplitzSpec::new(l, m, BitString::random(ToeplitzSpec::seed_len(l, m), rng))
}

/// `M_p key`. With the key reversed, output bit `i` is the inner product of
/// the reversed key with the seed window starting at `i`, which is read a
/// word at a time.
pub fn toeplitz_hash(spec: &ToeplitzSpec, key: &BitString) -> Result<BitString> {
    let l = spec.l;
    if key.len() != l {
        return Err(Error::LengthMismatch {
            expected: l,
            actual: key.len(),
        });
    }
    let reversed: BitString = (0..l).map(|t| key.get(l - 1 - t)).collect();
    let rw = reversed.words();
    (0..spec.output_len())
        .map(|i| {
            let acc = rw
                .iter()
                .enumerate()
                .fold(0u64, |acc, (w, &kw)| acc ^ (spec.seed.word_at(i + 64 * w) & kw));
            Ok(acc.count_ones() & 1 == 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StageRng;

    fn dense(spec: &ToeplitzSpec, key: &BitString) -> BitString {
        let l = spec.l;
        (0..spec.output_len())
            .map(|i| (0..l).fold(false, |acc, j| acc ^ (spec.seed.get(i + l - 1 - j) && key.get(j))))
            .collect()
    }

    #[test]
    fn hand_evaluated_four_bit_case() {
        // seed written s4 s3 s2 s1 s0 = 1 0 1 1 0
        let seed = BitString::from_bools(&[false, true, true, false, true]);
        let spec = ToeplitzSpec::new(4, 2, seed).unwrap();
        // rows: i=0 -> [s3 s2 s1 s0] = 0 1 1 0; i=1 -> [s4 s3 s2 s1] = 1 0 1 1
        // key k0..k3 = 1 0 1 1: row0 . key = 0+0+1+0 = 1; row1 . key = 1+0+1+1 = 1
        let key = BitString::from_bools(&[true, false, true, true]);
        let out = toeplitz_hash(&spec, &key).unwrap();
        assert_eq!(out, BitString::from_bools(&[true, true]));
        assert_eq!(out, dense(&spec, &key));
    }

    #[test]
    fn matches_dense_product_on_long_keys() {
        let mut rng = StageRng::from_seed_u64(5);
        for (l, m) in [(1, 0), (63, 10), (64, 64), (200, 37), (1000, 500)] {
            let spec = draw_seed(l, m, &mut rng).unwrap();
            let key = BitString::random(l, &mut rng);
            assert_eq!(toeplitz_hash(&spec, &key).unwrap(), dense(&spec, &key), "l={l} m={m}");
        }
    }

    #[test]
    fn trivial_shapes() {
        let mut rng = StageRng::from_seed_u64(6);
        let spec = draw_seed(100, 40, &mut rng).unwrap();
        assert_eq!(spec.seed.len(), 159);
        assert_eq!(toeplitz_hash(&spec, &BitString::zeros(100)).unwrap().count_ones(), 0);
        let all = draw_seed(30, 30, &mut rng).unwrap();
        assert!(toeplitz_hash(&all, &BitString::random(30, &mut rng)).unwrap().is_empty());
        assert!(toeplitz_hash(&spec, &BitString::zeros(99)).is_err());
        assert!(draw_seed(3, 4, &mut rng).is_err());
    }

    #[test]
    fn deterministic_streams() {
        let a = draw_seed(50, 10, &mut StageRng::from_seed_u64(1)).unwrap();
        let b = draw_seed(50, 10, &mut StageRng::from_seed_u64(1)).unwrap();
        assert_eq!(a, b);
        let mut same = 0;
        for s in 0..10_000u64 {
            let x = draw_seed(50, 10, &mut StageRng::from_seed_u64(2 * s)).unwrap();
            let y = draw_seed(50, 10, &mut StageRng::from_seed_u64(2 * s + 1)).unwrap();
            same += usize::from(x == y);
        }
        assert_eq!(same, 0);
    }

    #[test]
    fn linear_in_key() {
        let mut rng = StageRng::from_seed_u64(7);
        let spec = draw_seed(300, 120, &mut rng).unwrap();
        for _ in 0..200 {
            let a = BitString::random(300, &mut rng);
            let b = BitString::random(300, &mut rng);
            let lhs = toeplitz_hash(&spec, &a.xor(&b).unwrap()).unwrap();
            let rhs = toeplitz_hash(&spec, &a).unwrap().xor(&toeplitz_hash(&spec, &b).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn collision_rate_near_universal_bound() {
        // l = 12, m = 6: collisions should occur with probability 2^-6.
        let mut rng = StageRng::from_seed_u64(8);
        let x = BitString::random(12, &mut rng);
        let mut y = x.clone();
        y.flip(3);
        let trials = 50_000;
        let mut hits = 0;
        for _ in 0..trials {
            let spec = draw_seed(12, 6, &mut rng).unwrap();
            hits += usize::from(toeplitz_hash(&spec, &x).unwrap() == toeplitz_hash(&spec, &y).unwrap());
        }
        let p = 1.0 / 64.0;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - trials as f64 * p).abs() < 4.0 * sd, "{hits}");
    }
}
