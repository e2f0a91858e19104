//! Probabilistic primality testing and prime generation over `BigUint`.

use crate::error::{CryptoError, Result};
use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;

/// Trial-division sieve applied before Miller-Rabin.
const SMALL_PRIMES: [u32; 60] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281,
];

/// Miller-Rabin with random bases. `rounds` of 40 gives a false-positive
/// probability below 4^-40 per candidate.
pub fn is_probable_prime(n: &BigUint, rounds: u32, rng: &mut impl Rng) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    // n - 1 = d · 2^s with d odd
    let n_minus_1 = n - BigUint::one();
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;

    'rounds: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'rounds;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits and the top two bits set, so the
/// product of two such primes always reaches the full modulus width.
pub fn gen_prime(bits: u64, rounds: u32, rng: &mut impl Rng) -> Result<BigUint> {
    assert!(bits >= 16);
    let max_attempts = 40 * bits as usize;
    let top_bits = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    for _ in 0..max_attempts {
        let mut candidate = rng.gen_biguint(bits) | &top_bits;
        candidate |= BigUint::one(); // odd
        if is_probable_prime(&candidate, rounds, rng) {
            return Ok(candidate);
        }
    }
    Err(CryptoError::PrimeGenTimeout(max_attempts))
}

/// Big-endian bytes left-padded to `width`.
pub fn to_fixed_bytes(value: &BigUint, width: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    let mut out = vec![0u8; width];
    out[width - raw.len()..].copy_from_slice(&raw);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn known_primes_and_composites() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        for p in [2u32, 3, 5, 104729, 1_000_003] {
            assert!(is_probable_prime(&BigUint::from(p), 40, &mut rng), "{p}");
        }
        for c in [1u32, 4, 561, 104730, 1_000_001] {
            assert!(!is_probable_prime(&BigUint::from(c), 40, &mut rng), "{c}");
        }
        // Carmichael numbers must not fool the test
        for c in [41041u64, 825265, 321197185] {
            assert!(!is_probable_prime(&BigUint::from(c), 40, &mut rng), "{c}");
        }
    }

    #[test]
    fn generated_primes_have_requested_width() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2);
        let p = gen_prime(128, 40, &mut rng).unwrap();
        assert_eq!(p.bits(), 128);
        let q = gen_prime(128, 40, &mut rng).unwrap();
        assert_ne!(p, q);
        assert_eq!((&p * &q).bits(), 256);
    }

    #[test]
    fn fixed_bytes_round_trip() {
        let v = BigUint::from(0xABCDu32);
        let bytes = to_fixed_bytes(&v, 8);
        assert_eq!(bytes.len(), 8);
        assert_eq!(BigUint::from_bytes_be(&bytes), v);
    }
}
