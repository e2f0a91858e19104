//! Homomorphic-identity and headroom properties over random fixed-point values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use stfl_core::Matrix2D;
use stfl_crypto::{
    cipher_add, decrypt_matrix, encrypt_matrix, keygen, FixedPointCodec, PaillierPrivateKey,
    PaillierPublicKey,
};

fn homomorphic_pairs(pk: &PaillierPublicKey, sk: &PaillierPrivateKey, pairs: usize, seed: u64) {
    let codec = FixedPointCodec::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tolerance_add = 2.0 * 2f64.powi(-(codec.frac_bits as i32));
    // scalar products round at the product scale plus the operand encodings
    let tolerance_mul = 2f64.powi(-(codec.frac_bits as i32)) * 2.0 * 1024.0;

    let a_vals: Vec<f64> = (0..pairs).map(|_| rng.gen_range(-1000.0..1000.0)).collect();
    let b_vals: Vec<f64> = (0..pairs).map(|_| rng.gen_range(-1000.0..1000.0)).collect();
    let k_vals: Vec<f64> = (0..pairs).map(|_| rng.gen_range(-8.0..8.0)).collect();

    let a = Matrix2D::from_vec(pairs, 1, a_vals.clone()).unwrap();
    let b = Matrix2D::from_vec(pairs, 1, b_vals.clone()).unwrap();
    let ca = encrypt_matrix(pk, &a, &codec, codec.frac_bits, &mut rng).unwrap();
    let cb = encrypt_matrix(pk, &b, &codec, codec.frac_bits, &mut rng).unwrap();

    // Dec(Enc(a) ⊕ Enc(b)) = a + b
    let sum = cipher_add(pk, &ca, &cb).unwrap();
    let decoded = decrypt_matrix(sk, &sum, &codec).unwrap();
    for i in 0..pairs {
        let expected = a_vals[i] + b_vals[i];
        assert!(
            (decoded.get(i, 0) - expected).abs() <= tolerance_add,
            "add pair {i}: {} vs {expected}",
            decoded.get(i, 0)
        );
    }

    // Dec(Enc(a) ⊗ k) = a·k
    for i in (0..pairs).step_by((pairs / 50).max(1)) {
        let prod = pk.mul_plain(&ca.cell(i, 0), k_vals[i], &codec).unwrap();
        let decoded = sk.decrypt_real(&prod, &codec).unwrap();
        let expected = a_vals[i] * k_vals[i];
        assert!(
            (decoded - expected).abs() <= tolerance_mul,
            "mul pair {i}: {decoded} vs {expected}"
        );
    }

    // re-randomization: equal plaintexts, unequal ciphertexts
    let again = encrypt_matrix(pk, &a, &codec, codec.frac_bits, &mut rng).unwrap();
    assert_ne!(ca.values(), again.values());
}

#[test]
fn thousand_random_pairs_at_512_bits() {
    let mut rng = ChaCha20Rng::seed_from_u64(512);
    let (pk, sk) = keygen(512, &mut rng).unwrap();
    homomorphic_pairs(&pk, &sk, 1000, 1);
}

#[test]
fn random_pairs_at_1024_bits() {
    // the full thousand-pair run at both sizes lives in the acceptance suite
    let mut rng = ChaCha20Rng::seed_from_u64(1024);
    let (pk, sk) = keygen(1024, &mut rng).unwrap();
    homomorphic_pairs(&pk, &sk, 200, 2);
}

#[test]
fn one_multiply_plus_1024_additions_stays_within_headroom() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (pk, sk) = keygen(512, &mut rng).unwrap();
    let codec = FixedPointCodec::default();
    let x = 1_048_000.0; // just under 2^20
    let y = 0.75;

    let c = pk
        .encrypt_real(x, &codec, codec.frac_bits, &mut rng)
        .unwrap();
    let mut acc = pk.mul_plain(&c, y, &codec).unwrap();
    let addend_plain = 123_456.789;
    let addend = pk
        .encrypt_real(addend_plain, &codec, 2 * codec.frac_bits, &mut rng)
        .unwrap();
    for _ in 0..1024 {
        acc = pk.add_cipher(&acc, &addend).unwrap();
    }
    let decoded = sk.decrypt_real(&acc, &codec).unwrap();
    let expected = x * y + 1024.0 * addend_plain;
    let budget = 1025.0 * 2f64.powi(-(codec.frac_bits as i32)) + expected.abs() * 1e-12;
    assert!(
        (decoded - expected).abs() <= budget,
        "decoded {decoded}, expected {expected}"
    );

    // a second multiply would breach the budget and must be refused
    assert!(pk.mul_plain(&acc, 2.0, &codec).is_err());
}

#[test]
fn oversized_operands_are_refused() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (pk, _) = keygen(512, &mut rng).unwrap();
    let codec = FixedPointCodec::default();
    // n/3 at 512 bits is about 2^510; scale 40 leaves room up to ~2^470
    let too_big = 2f64.powi(480);
    assert!(pk
        .encrypt_real(too_big, &codec, codec.frac_bits, &mut rng)
        .is_err());
}
