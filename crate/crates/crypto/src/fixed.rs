//! Fixed-point encoding of reals into the Paillier plaintext space.
//!
//! Values are scaled by `2^scale_bits` and rounded; negatives are encoded as
//! `n − |v|` (upper-half-of-n complement). Legitimate magnitudes must stay
//! below `n/3`, which leaves headroom for one homomorphic multiply plus a long
//! run of additions before anything can wrap.

use crate::error::{CryptoError, Result};
use num_bigint::BigUint;
use num_traits::{FromPrimitive, ToPrimitive, Zero};

pub const DEFAULT_FRAC_BITS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedPointCodec {
    pub frac_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self {
            frac_bits: DEFAULT_FRAC_BITS,
        }
    }
}

impl FixedPointCodec {
    pub fn new(frac_bits: u32) -> Self {
        Self { frac_bits }
    }

    /// Highest scale a ciphertext may carry: one multiply on top of the base.
    pub fn max_scale_bits(&self) -> u32 {
        2 * self.frac_bits
    }

    /// |x|·2^scale rounded to an integer.
    pub fn magnitude(&self, x: f64, scale_bits: u32) -> Result<BigUint> {
        if !x.is_finite() {
            return Err(CryptoError::HeadroomOverflow(format!(
                "cannot encode non-finite value {x}"
            )));
        }
        let scaled = (x.abs() * (scale_bits as f64).exp2()).round();
        BigUint::from_f64(scaled).ok_or_else(|| {
            CryptoError::HeadroomOverflow(format!("magnitude {x} does not fit at scale {scale_bits}"))
        })
    }

    /// Signed encoding into [0, n).
    pub fn encode(&self, x: f64, scale_bits: u32, n: &BigUint) -> Result<BigUint> {
        let mag = self.magnitude(x, scale_bits)?;
        let limit = n / 3u32;
        if mag >= limit {
            return Err(CryptoError::HeadroomOverflow(format!(
                "encoded magnitude of {x} at scale {scale_bits} exceeds n/3"
            )));
        }
        if x.is_sign_negative() && !mag.is_zero() {
            Ok(n - mag)
        } else {
            Ok(mag)
        }
    }

    /// Inverse of `encode`; rejects values outside the headroom band, which
    /// indicates wrap-around from an overflowing computation.
    pub fn decode(&self, value: &BigUint, scale_bits: u32, n: &BigUint) -> Result<f64> {
        let half = n / 2u32;
        let limit = n / 3u32;
        let (negative, mag) = if value > &half {
            (true, n - value)
        } else {
            (false, value.clone())
        };
        if mag >= limit {
            return Err(CryptoError::HeadroomOverflow(
                "decoded magnitude exceeds n/3; arithmetic overflowed".into(),
            ));
        }
        let as_f64 = mag.to_f64().ok_or_else(|| {
            CryptoError::HeadroomOverflow("decoded magnitude exceeds f64 range".into())
        })?;
        let x = as_f64 / (scale_bits as f64).exp2();
        Ok(if negative { -x } else { x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::RandBigInt;
    use rand::SeedableRng;

    fn test_n() -> BigUint {
        // any odd modulus wide enough for the tests
        (BigUint::from(1u32) << 128) + BigUint::from(159u32)
    }

    #[test]
    fn encode_decode_round_trip_error_is_bounded() {
        let codec = FixedPointCodec::default();
        let n = test_n();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let tolerance = 2.0f64.powi(-(codec.frac_bits as i32));
        for _ in 0..2000 {
            let x = (rng.gen_biguint(40).to_f64().unwrap() / 1e10) - 50.0;
            let enc = codec.encode(x, codec.frac_bits, &n).unwrap();
            let dec = codec.decode(&enc, codec.frac_bits, &n).unwrap();
            assert!((x - dec).abs() <= tolerance, "{x} -> {dec}");
        }
    }

    #[test]
    fn zero_and_signs() {
        let codec = FixedPointCodec::default();
        let n = test_n();
        assert!(codec.encode(0.0, 40, &n).unwrap().is_zero());
        let neg = codec.encode(-1.5, 40, &n).unwrap();
        assert!(neg > &n / 2u32);
        assert_eq!(codec.decode(&neg, 40, &n).unwrap(), -1.5);
    }

    #[test]
    fn oversized_values_are_rejected() {
        let codec = FixedPointCodec::default();
        let n = BigUint::from(1u64 << 50);
        assert!(matches!(
            codec.encode(1e10, 40, &n),
            Err(CryptoError::HeadroomOverflow(_))
        ));
    }
}
