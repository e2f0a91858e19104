//! Private ID alignment via Diffie-Hellman-style set intersection.
//!
//! IDs are hashed into the prime-order subgroup of a safe-prime group and
//! blinded by each party's secret exponent; commutativity of exponentiation
//! makes double-blinded values comparable without revealing anything about
//! non-matching IDs to the other side (semi-honest model). A naive mode with
//! the same interface exists for tests and non-private deployments.

use crate::bigmath::to_fixed_bytes;
use crate::error::{CryptoError, Result};
use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand::Rng;
use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, HashSet};

/// Safe-prime group p = 2q + 1; blinding exponents live in [2, q).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DhGroup {
    p: BigUint,
    q: BigUint,
    element_width: usize,
}

/// 512-bit safe prime; fast enough for tests and desk-scale runs.
const TEST_PRIME_512: &str = "FEC816B123C0261C1CF0BF3DB6D800BF2D365FFA6355B2D1D4F3B21C020F0A97FDB35AE68CAABDAA3BCD207567192A1DADE545F9A436FE69512469BAF991B09B";

/// RFC 3526 group 14 (2048-bit MODP).
const MODP_PRIME_2048: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74",
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437",
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05",
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB",
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718",
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF"
);

impl DhGroup {
    fn from_hex(hex: &str) -> Self {
        let p = BigUint::parse_bytes(hex.as_bytes(), 16).expect("valid constant");
        let q = (&p - BigUint::one()) >> 1;
        let element_width = p.to_bytes_be().len();
        Self {
            p,
            q,
            element_width,
        }
    }

    pub fn test_512() -> Self {
        Self::from_hex(TEST_PRIME_512)
    }

    pub fn modp_2048() -> Self {
        Self::from_hex(MODP_PRIME_2048)
    }

    pub fn prime(&self) -> &BigUint {
        &self.p
    }

    pub fn subgroup_order(&self) -> &BigUint {
        &self.q
    }

    pub fn element_width(&self) -> usize {
        self.element_width
    }

    pub fn random_scalar(&self, rng: &mut impl Rng) -> BigUint {
        rng.gen_biguint_range(&BigUint::from(2u32), &self.q)
    }

    /// Iterated counter hashing into the order-q subgroup: expand the ID to
    /// enough bytes, reduce mod p, then square to land on a quadratic residue.
    pub fn hash_to_group(&self, id: &str) -> BigUint {
        for counter in 0u32.. {
            let mut bytes = Vec::with_capacity(self.element_width + 32);
            let blocks = self.element_width.div_ceil(32) + 1;
            for block in 0..blocks as u32 {
                let mut hasher = Sha256::new();
                hasher.update(b"stfl-psi-h2g");
                hasher.update(counter.to_be_bytes());
                hasher.update(block.to_be_bytes());
                hasher.update(id.as_bytes());
                bytes.extend_from_slice(&hasher.finalize());
            }
            let candidate = BigUint::from_bytes_be(&bytes) % &self.p;
            let element = candidate.modpow(&BigUint::from(2u32), &self.p);
            if element > BigUint::one() {
                return element;
            }
        }
        unreachable!("hash loop terminates")
    }

    pub fn blind(&self, element: &BigUint, scalar: &BigUint) -> BigUint {
        element.modpow(scalar, &self.p)
    }

    pub fn element_bytes(&self, element: &BigUint) -> Vec<u8> {
        to_fixed_bytes(element, self.element_width)
    }

    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<BigUint> {
        if bytes.len() != self.element_width {
            return Err(CryptoError::BadGroupElement(format!(
                "expected {} bytes, got {}",
                self.element_width,
                bytes.len()
            )));
        }
        let e = BigUint::from_bytes_be(bytes);
        if e <= BigUint::one() || e >= self.p {
            return Err(CryptoError::BadGroupElement("element out of range".into()));
        }
        Ok(e)
    }

    fn blind_all(&self, elements: &[BigUint], scalar: &BigUint) -> Vec<BigUint> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            return elements.par_iter().map(|e| self.blind(e, scalar)).collect();
        }
        #[allow(unreachable_code)]
        elements.iter().map(|e| self.blind(e, scalar)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsiMode {
    Naive,
    Blinded,
}

/// Initiator half of the two-party exchange. IDs travel in the initiator's
/// canonical (sorted) order so positions map back to plaintext IDs.
pub struct PsiInitiator {
    group: DhGroup,
    scalar: BigUint,
    ids: Vec<String>,
}

impl PsiInitiator {
    /// Blinds the caller's IDs. Returns the state and the first message.
    pub fn start(ids: &BTreeSet<String>, group: DhGroup, rng: &mut impl Rng) -> Result<(Self, Vec<Vec<u8>>)> {
        if ids.is_empty() {
            return Err(CryptoError::EmptyPsiInput);
        }
        let scalar = group.random_scalar(rng);
        let ordered: Vec<String> = ids.iter().cloned().collect();
        let hashed: Vec<BigUint> = ordered.iter().map(|id| group.hash_to_group(id)).collect();
        let blinded = group.blind_all(&hashed, &scalar);
        let message = blinded.iter().map(|e| group.element_bytes(e)).collect();
        Ok((
            Self {
                group,
                scalar,
                ids: ordered,
            },
            message,
        ))
    }

    /// Completes the exchange with the responder's reply: our IDs double-
    /// blinded (in the order we sent them) and the responder's blinded IDs.
    pub fn finish(
        self,
        own_double_blinded: &[Vec<u8>],
        responder_blinded: &[Vec<u8>],
    ) -> Result<Vec<String>> {
        if own_double_blinded.len() != self.ids.len() {
            return Err(CryptoError::BadGroupElement(format!(
                "expected {} double-blinded elements, got {}",
                self.ids.len(),
                own_double_blinded.len()
            )));
        }
        let theirs: Vec<BigUint> = responder_blinded
            .iter()
            .map(|b| self.group.element_from_bytes(b))
            .collect::<Result<Vec<_>>>()?;
        let theirs_double = self.group.blind_all(&theirs, &self.scalar);
        let lookup: HashSet<Vec<u8>> = theirs_double
            .iter()
            .map(|e| self.group.element_bytes(e))
            .collect();
        let mut matched: Vec<String> = self
            .ids
            .iter()
            .zip(own_double_blinded)
            .filter(|(_, d)| lookup.contains(*d))
            .map(|(id, _)| id.clone())
            .collect();
        matched.sort();
        if matched.is_empty() {
            return Err(CryptoError::EmptyIntersection);
        }
        Ok(matched)
    }
}

/// Responder half: double-blinds the initiator's elements and blinds its own.
pub struct PsiResponder;

impl PsiResponder {
    pub fn respond(
        ids: &BTreeSet<String>,
        group: &DhGroup,
        rng: &mut impl Rng,
        initiator_blinded: &[Vec<u8>],
    ) -> Result<(Vec<Vec<u8>>, Vec<Vec<u8>>)> {
        if ids.is_empty() {
            return Err(CryptoError::EmptyPsiInput);
        }
        let scalar = group.random_scalar(rng);
        let incoming: Vec<BigUint> = initiator_blinded
            .iter()
            .map(|b| group.element_from_bytes(b))
            .collect::<Result<Vec<_>>>()?;
        let double = group.blind_all(&incoming, &scalar);
        let own_hashed: Vec<BigUint> = ids.iter().map(|id| group.hash_to_group(id)).collect();
        let own_blinded = group.blind_all(&own_hashed, &scalar);
        Ok((
            double.iter().map(|e| group.element_bytes(e)).collect(),
            own_blinded.iter().map(|e| group.element_bytes(e)).collect(),
        ))
    }
}

/// Runs the full two-party intersection in process. Both modes return the
/// same sorted ID list; an empty intersection aborts with an error, since the
/// protocol in that case has no overlap to train on.
pub fn psi_intersect(
    host_ids: &BTreeSet<String>,
    guest_ids: &BTreeSet<String>,
    mode: PsiMode,
    group: &DhGroup,
    rng: &mut impl Rng,
) -> Result<Vec<String>> {
    match mode {
        PsiMode::Naive => {
            let matched: Vec<String> = host_ids.intersection(guest_ids).cloned().collect();
            if matched.is_empty() {
                return Err(CryptoError::EmptyIntersection);
            }
            Ok(matched)
        }
        PsiMode::Blinded => {
            let (initiator, msg1) = PsiInitiator::start(host_ids, group.clone(), rng)?;
            let (double, guest_blinded) = PsiResponder::respond(guest_ids, group, rng, &msg1)?;
            initiator.finish(&double, &guest_blinded)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ids(range: std::ops::Range<u32>) -> BTreeSet<String> {
        range.map(|i| format!("id-{i:05}")).collect()
    }

    #[test]
    fn group_constants_are_safe_primes() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for group in [DhGroup::test_512(), DhGroup::modp_2048()] {
            assert!(crate::bigmath::is_probable_prime(group.prime(), 16, &mut rng));
            assert!(crate::bigmath::is_probable_prime(
                group.subgroup_order(),
                16,
                &mut rng
            ));
        }
    }

    #[test]
    fn blinding_commutes() {
        let group = DhGroup::test_512();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for i in 0..20 {
            let a = group.random_scalar(&mut rng);
            let b = group.random_scalar(&mut rng);
            let h = group.hash_to_group(&format!("sample-{i}"));
            let ab = group.blind(&group.blind(&h, &a), &b);
            let ba = group.blind(&group.blind(&h, &b), &a);
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn identical_sets_return_everything() {
        let set = ids(0..25);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let group = DhGroup::test_512();
        let out = psi_intersect(&set, &set, PsiMode::Blinded, &group, &mut rng).unwrap();
        assert_eq!(out, set.iter().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn disjoint_sets_abort() {
        let a = ids(0..10);
        let b = ids(100..110);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let group = DhGroup::test_512();
        for mode in [PsiMode::Naive, PsiMode::Blinded] {
            assert!(matches!(
                psi_intersect(&a, &b, mode, &group, &mut rng),
                Err(CryptoError::EmptyIntersection)
            ));
        }
    }

    #[test]
    fn empty_input_rejected_in_blinded_mode() {
        let empty = BTreeSet::new();
        let other = ids(0..3);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        assert!(matches!(
            PsiInitiator::start(&empty, DhGroup::test_512(), &mut rng),
            Err(CryptoError::EmptyPsiInput)
        ));
        let group = DhGroup::test_512();
        let (_, msg) = PsiInitiator::start(&other, group.clone(), &mut rng).unwrap();
        assert!(matches!(
            PsiResponder::respond(&empty, &group, &mut rng, &msg),
            Err(CryptoError::EmptyPsiInput)
        ));
    }

    #[test]
    fn planted_overlap_matches_brute_force() {
        // 1000-id sets with ~30% planted overlap
        let host: BTreeSet<String> = (0..1000).map(|i| format!("host-{i}")).collect();
        let guest: BTreeSet<String> = (0..300)
            .map(|i| format!("host-{}", i * 3))
            .chain((0..700).map(|i| format!("guest-{i}")))
            .collect();
        let expected: Vec<String> = host.intersection(&guest).cloned().collect();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let group = DhGroup::test_512();
        let got = psi_intersect(&host, &guest, PsiMode::Blinded, &group, &mut rng).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn blinded_equals_naive_on_random_instances() {
        let group = DhGroup::test_512();
        for seed in 0..25u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(1000 + seed);
            let host: BTreeSet<String> = (0..40)
                .map(|_| format!("u{}", rng.gen_range(0..120u32)))
                .collect();
            let guest: BTreeSet<String> = (0..40)
                .map(|_| format!("u{}", rng.gen_range(0..120u32)))
                .collect();
            let naive = psi_intersect(&host, &guest, PsiMode::Naive, &group, &mut rng);
            let blinded = psi_intersect(&host, &guest, PsiMode::Blinded, &group, &mut rng);
            match (naive, blinded) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(CryptoError::EmptyIntersection), Err(CryptoError::EmptyIntersection)) => {}
                other => panic!("modes disagree: {other:?}"),
            }
        }
    }
}
