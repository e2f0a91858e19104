//! Paillier cryptosystem (g = n + 1 variant) with fixed-point real encoding
//! and batched matrix operations for the encrypted protocol.
//!
//! Ciphertexts carry the fixed-point scale they were encrypted at; additions
//! require matching scales and a plaintext multiply adds the codec's base
//! scale. Matrix operations fan out over rayon when the `parallel` feature is
//! on — modular arithmetic is exact, so results do not depend on the degree
//! of parallelism.

use crate::bigmath::{gen_prime, to_fixed_bytes};
use crate::error::{CryptoError, Result};
use crate::fixed::FixedPointCodec;
use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use stfl_core::Matrix2D;

const MILLER_RABIN_ROUNDS: u32 = 40;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaillierPublicKey {
    n: BigUint,
    n_squared: BigUint,
    fingerprint: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaillierPrivateKey {
    lambda: BigUint,
    mu: BigUint,
    public: PaillierPublicKey,
}

/// A Paillier ciphertext plus the fixed-point scale of its plaintext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    pub scale_bits: u32,
    pub key_fingerprint: u64,
}

impl PaillierPublicKey {
    fn from_n(n: BigUint) -> Self {
        let n_squared = &n * &n;
        let mut hasher = Sha256::new();
        hasher.update(n.to_bytes_be());
        let digest = hasher.finalize();
        let fingerprint = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        Self {
            n,
            n_squared,
            fingerprint,
        }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    fn fresh_randomness(&self, rng: &mut impl Rng) -> BigUint {
        loop {
            let r = rng.gen_biguint_below(&self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// c = (1 + m·n) · r^n mod n², for m already reduced mod n.
    fn raw_encrypt(&self, m: &BigUint, r: &BigUint) -> BigUint {
        let g_m = (BigUint::one() + m * &self.n) % &self.n_squared;
        let r_n = r.modpow(&self.n, &self.n_squared);
        (g_m * r_n) % &self.n_squared
    }

    /// Encrypts an integer plaintext in [0, n). Scale is zero.
    pub fn encrypt_integer(&self, m: &BigUint, rng: &mut impl Rng) -> Result<Ciphertext> {
        if m >= &self.n {
            return Err(CryptoError::HeadroomOverflow(
                "integer plaintext must be below n".into(),
            ));
        }
        let r = self.fresh_randomness(rng);
        Ok(Ciphertext {
            value: self.raw_encrypt(m, &r),
            scale_bits: 0,
            key_fingerprint: self.fingerprint,
        })
    }

    /// Encrypts a real at the given fixed-point scale.
    pub fn encrypt_real(
        &self,
        x: f64,
        codec: &FixedPointCodec,
        scale_bits: u32,
        rng: &mut impl Rng,
    ) -> Result<Ciphertext> {
        let m = codec.encode(x, scale_bits, &self.n)?;
        let r = self.fresh_randomness(rng);
        Ok(Ciphertext {
            value: self.raw_encrypt(&m, &r),
            scale_bits,
            key_fingerprint: self.fingerprint,
        })
    }

    fn check(&self, c: &Ciphertext) -> Result<()> {
        if c.key_fingerprint != self.fingerprint {
            return Err(CryptoError::KeyMismatch);
        }
        if c.value >= self.n_squared {
            return Err(CryptoError::CiphertextRange);
        }
        Ok(())
    }

    /// Homomorphic addition of two ciphertexts at the same scale.
    pub fn add_cipher(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        if a.scale_bits != b.scale_bits {
            return Err(CryptoError::ScaleMismatch(a.scale_bits, b.scale_bits));
        }
        Ok(Ciphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            scale_bits: a.scale_bits,
            key_fingerprint: self.fingerprint,
        })
    }

    /// Adds a plaintext real, encoded at the ciphertext's own scale.
    pub fn add_plain(&self, c: &Ciphertext, k: f64, codec: &FixedPointCodec) -> Result<Ciphertext> {
        self.check(c)?;
        let m = codec.encode(k, c.scale_bits, &self.n)?;
        let g_m = (BigUint::one() + &m * &self.n) % &self.n_squared;
        Ok(Ciphertext {
            value: (&c.value * g_m) % &self.n_squared,
            scale_bits: c.scale_bits,
            key_fingerprint: self.fingerprint,
        })
    }

    /// Multiplies the plaintext by `k`; the result's scale grows by the
    /// codec's base scale and must stay within one multiply of headroom.
    pub fn mul_plain(&self, c: &Ciphertext, k: f64, codec: &FixedPointCodec) -> Result<Ciphertext> {
        self.check(c)?;
        let out_scale = c.scale_bits + codec.frac_bits;
        if out_scale > codec.max_scale_bits() {
            return Err(CryptoError::HeadroomOverflow(format!(
                "scale {out_scale} exceeds the single-multiply budget of {}",
                codec.max_scale_bits()
            )));
        }
        let e = codec.magnitude(k, codec.frac_bits)?;
        let powered = c.value.modpow(&e, &self.n_squared);
        let value = if k.is_sign_negative() && !e.is_zero() {
            powered
                .modinv(&self.n_squared)
                .ok_or(CryptoError::NotInvertible)?
        } else {
            powered
        };
        Ok(Ciphertext {
            value,
            scale_bits: out_scale,
            key_fingerprint: self.fingerprint,
        })
    }

    /// Homomorphic negation (plaintext −m).
    pub fn negate(&self, c: &Ciphertext) -> Result<Ciphertext> {
        self.check(c)?;
        Ok(Ciphertext {
            value: c
                .value
                .modinv(&self.n_squared)
                .ok_or(CryptoError::NotInvertible)?,
            scale_bits: c.scale_bits,
            key_fingerprint: self.fingerprint,
        })
    }
}

impl PaillierPrivateKey {
    pub fn public(&self) -> &PaillierPublicKey {
        &self.public
    }

    /// m = L(c^λ mod n²)·μ mod n, with L(u) = (u − 1)/n.
    fn raw_decrypt(&self, value: &BigUint) -> BigUint {
        let n = &self.public.n;
        let u = value.modpow(&self.lambda, &self.public.n_squared);
        let l = (u - BigUint::one()) / n;
        (l * &self.mu) % n
    }

    pub fn decrypt_integer(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.check(c)?;
        Ok(self.raw_decrypt(&c.value))
    }

    pub fn decrypt_real(&self, c: &Ciphertext, codec: &FixedPointCodec) -> Result<f64> {
        self.public.check(c)?;
        let m = self.raw_decrypt(&c.value);
        codec.decode(&m, c.scale_bits, &self.public.n)
    }
}

/// Generates a fresh keypair. `bits` is the modulus width; test configurations
/// use 512, production-sized keys 1024 or 2048.
pub fn keygen(bits: u64, rng: &mut impl Rng) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
    if !matches!(bits, 512 | 1024 | 2048) {
        return Err(CryptoError::InvalidKeySize(bits));
    }
    let half = bits / 2;
    let (p, q) = loop {
        let p = gen_prime(half, MILLER_RABIN_ROUNDS, rng)?;
        let q = gen_prime(half, MILLER_RABIN_ROUNDS, rng)?;
        if p != q {
            break (p, q);
        }
    };
    let n = &p * &q;
    let lambda = (&p - BigUint::one()).lcm(&(&q - BigUint::one()));
    let mu = lambda
        .modinv(&n)
        .ok_or(CryptoError::NotInvertible)?;
    let public = PaillierPublicKey::from_n(n);
    let private = PaillierPrivateKey {
        lambda,
        mu,
        public: public.clone(),
    };
    Ok((public, private))
}

/// Elementwise-encrypted matrix. Values are stored row-major like `Matrix2D`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CipherMatrix {
    rows: usize,
    cols: usize,
    pub scale_bits: u32,
    pub key_fingerprint: u64,
    values: Vec<BigUint>,
}

impl CipherMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[BigUint] {
        &self.values
    }

    pub fn from_parts(
        rows: usize,
        cols: usize,
        scale_bits: u32,
        key_fingerprint: u64,
        values: Vec<BigUint>,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(CryptoError::Shape {
                context: "CipherMatrix::from_parts".into(),
                expected: format!("{} values", rows * cols),
                actual: format!("{}", values.len()),
            });
        }
        Ok(Self {
            rows,
            cols,
            scale_bits,
            key_fingerprint,
            values,
        })
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> &BigUint {
        &self.values[r * self.cols + c]
    }

    pub fn cell(&self, r: usize, c: usize) -> Ciphertext {
        Ciphertext {
            value: self.at(r, c).clone(),
            scale_bits: self.scale_bits,
            key_fingerprint: self.key_fingerprint,
        }
    }

    fn check_key(&self, pk: &PaillierPublicKey) -> Result<()> {
        if self.key_fingerprint != pk.fingerprint() {
            return Err(CryptoError::KeyMismatch);
        }
        Ok(())
    }
}

/// Maps `indices` to values, in parallel when available. Every cell is an
/// independent exact integer computation, so ordering never matters.
fn compute_cells<F>(count: usize, f: F) -> Vec<BigUint>
where
    F: Fn(usize) -> BigUint + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    #[allow(unreachable_code)]
    (0..count).map(f).collect()
}

/// Fallible variant of `compute_cells`.
fn try_compute_cells<F>(count: usize, f: F) -> Result<Vec<BigUint>>
where
    F: Fn(usize) -> Result<BigUint> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    #[allow(unreachable_code)]
    (0..count).map(f).collect()
}

/// Encrypts a real matrix elementwise at the given scale. Randomness is drawn
/// sequentially from `rng` (one unit per element, row-major), so results are
/// reproducible for a seeded generator regardless of thread count.
pub fn encrypt_matrix(
    pk: &PaillierPublicKey,
    m: &Matrix2D,
    codec: &FixedPointCodec,
    scale_bits: u32,
    rng: &mut impl Rng,
) -> Result<CipherMatrix> {
    let mut encoded = Vec::with_capacity(m.rows() * m.cols());
    for v in m.data() {
        encoded.push(codec.encode(*v, scale_bits, pk.n())?);
    }
    let randomness: Vec<BigUint> = (0..encoded.len())
        .map(|_| pk.fresh_randomness(rng))
        .collect();
    let values = compute_cells(encoded.len(), |i| pk.raw_encrypt(&encoded[i], &randomness[i]));
    CipherMatrix::from_parts(m.rows(), m.cols(), scale_bits, pk.fingerprint(), values)
}

pub fn decrypt_matrix(
    sk: &PaillierPrivateKey,
    cm: &CipherMatrix,
    codec: &FixedPointCodec,
) -> Result<Matrix2D> {
    cm.check_key(sk.public())?;
    let plain = compute_cells(cm.values.len(), |i| sk.raw_decrypt(&cm.values[i]));
    let mut data = Vec::with_capacity(plain.len());
    for m in &plain {
        data.push(codec.decode(m, cm.scale_bits, sk.public().n())?);
    }
    Matrix2D::from_vec(cm.rows, cm.cols, data).map_err(|e| CryptoError::Shape {
        context: "decrypt_matrix".into(),
        expected: "consistent dimensions".into(),
        actual: e.to_string(),
    })
}

/// One output cell of a cipher-by-plain product: Π cᵢ^{kᵢ}, with all negative
/// coefficients accumulated separately and inverted once at the end.
fn weighted_product(
    pk: &PaillierPublicKey,
    codec: &FixedPointCodec,
    terms: impl Iterator<Item = (BigUint, f64)>,
) -> Result<BigUint> {
    let n2 = pk.n_squared();
    let mut pos = BigUint::one();
    let mut neg = BigUint::one();
    for (value, k) in terms {
        let e = codec.magnitude(k, codec.frac_bits)?;
        if e.is_zero() {
            continue;
        }
        let powered = value.modpow(&e, n2);
        if k.is_sign_negative() {
            neg = (neg * powered) % n2;
        } else {
            pos = (pos * powered) % n2;
        }
    }
    if neg.is_one() {
        Ok(pos)
    } else {
        let inv = neg.modinv(n2).ok_or(CryptoError::NotInvertible)?;
        Ok((pos * inv) % n2)
    }
}

fn product_scale(c: &CipherMatrix, codec: &FixedPointCodec) -> Result<u32> {
    let out = c.scale_bits + codec.frac_bits;
    if out > codec.max_scale_bits() {
        return Err(CryptoError::HeadroomOverflow(format!(
            "scale {out} exceeds the single-multiply budget of {}",
            codec.max_scale_bits()
        )));
    }
    Ok(out)
}

/// `cipher [m×k] · plainᵀ [n×k] → [m×n]` under encryption.
pub fn cipher_matmul_bt(
    pk: &PaillierPublicKey,
    c: &CipherMatrix,
    plain: &Matrix2D,
    codec: &FixedPointCodec,
) -> Result<CipherMatrix> {
    c.check_key(pk)?;
    if plain.cols() != c.cols {
        return Err(CryptoError::Shape {
            context: "cipher_matmul_bt".into(),
            expected: format!("{} columns", c.cols),
            actual: format!("{}", plain.cols()),
        });
    }
    let scale = product_scale(c, codec)?;
    let (rows, cols) = (c.rows, plain.rows());
    let values = try_compute_cells(rows * cols, |idx| {
        let (i, j) = (idx / cols, idx % cols);
        weighted_product(
            pk,
            codec,
            (0..c.cols).map(|k| (c.at(i, k).clone(), plain.get(j, k))),
        )
    })?;
    CipherMatrix::from_parts(rows, cols, scale, pk.fingerprint(), values)
}

/// `plainᵀ [k×m] · cipher [k×n] → [m×n]` under encryption.
pub fn cipher_matmul_at(
    pk: &PaillierPublicKey,
    plain: &Matrix2D,
    c: &CipherMatrix,
    codec: &FixedPointCodec,
) -> Result<CipherMatrix> {
    c.check_key(pk)?;
    if plain.rows() != c.rows {
        return Err(CryptoError::Shape {
            context: "cipher_matmul_at".into(),
            expected: format!("{} rows", c.rows),
            actual: format!("{}", plain.rows()),
        });
    }
    let scale = product_scale(c, codec)?;
    let (rows, cols) = (plain.cols(), c.cols);
    let values = try_compute_cells(rows * cols, |idx| {
        let (j, k) = (idx / cols, idx % cols);
        weighted_product(
            pk,
            codec,
            (0..c.rows).map(|i| (c.at(i, k).clone(), plain.get(i, j))),
        )
    })?;
    CipherMatrix::from_parts(rows, cols, scale, pk.fingerprint(), values)
}

/// `plain [m×k] · cipher [k×n] → [m×n]` under encryption.
pub fn cipher_matmul(
    pk: &PaillierPublicKey,
    plain: &Matrix2D,
    c: &CipherMatrix,
    codec: &FixedPointCodec,
) -> Result<CipherMatrix> {
    c.check_key(pk)?;
    if plain.cols() != c.rows {
        return Err(CryptoError::Shape {
            context: "cipher_matmul".into(),
            expected: format!("{} inner rows", plain.cols()),
            actual: format!("{}", c.rows),
        });
    }
    let scale = product_scale(c, codec)?;
    let (rows, cols) = (plain.rows(), c.cols);
    let values = try_compute_cells(rows * cols, |idx| {
        let (i, k) = (idx / cols, idx % cols);
        weighted_product(
            pk,
            codec,
            (0..c.rows).map(|j| (c.at(j, k).clone(), plain.get(i, j))),
        )
    })?;
    CipherMatrix::from_parts(rows, cols, scale, pk.fingerprint(), values)
}

/// Adds a plaintext matrix (encoded at the ciphertexts' scale) elementwise.
pub fn cipher_add_plain(
    pk: &PaillierPublicKey,
    c: &CipherMatrix,
    plain: &Matrix2D,
    codec: &FixedPointCodec,
) -> Result<CipherMatrix> {
    c.check_key(pk)?;
    if plain.rows() != c.rows || plain.cols() != c.cols {
        return Err(CryptoError::Shape {
            context: "cipher_add_plain".into(),
            expected: format!("{}x{}", c.rows, c.cols),
            actual: format!("{}x{}", plain.rows(), plain.cols()),
        });
    }
    let n2 = pk.n_squared();
    let mut encoded = Vec::with_capacity(plain.data().len());
    for v in plain.data() {
        encoded.push(codec.encode(*v, c.scale_bits, pk.n())?);
    }
    let values = compute_cells(c.values.len(), |i| {
        let g_m = (BigUint::one() + &encoded[i] * pk.n()) % n2;
        (&c.values[i] * g_m) % n2
    });
    CipherMatrix::from_parts(c.rows, c.cols, c.scale_bits, pk.fingerprint(), values)
}

/// Elementwise homomorphic addition of two cipher matrices.
pub fn cipher_add(
    pk: &PaillierPublicKey,
    a: &CipherMatrix,
    b: &CipherMatrix,
) -> Result<CipherMatrix> {
    a.check_key(pk)?;
    b.check_key(pk)?;
    if a.scale_bits != b.scale_bits {
        return Err(CryptoError::ScaleMismatch(a.scale_bits, b.scale_bits));
    }
    if a.rows != b.rows || a.cols != b.cols {
        return Err(CryptoError::Shape {
            context: "cipher_add".into(),
            expected: format!("{}x{}", a.rows, a.cols),
            actual: format!("{}x{}", b.rows, b.cols),
        });
    }
    let n2 = pk.n_squared();
    let values = compute_cells(a.values.len(), |i| (&a.values[i] * &b.values[i]) % n2);
    CipherMatrix::from_parts(a.rows, a.cols, a.scale_bits, pk.fingerprint(), values)
}

/// Elementwise homomorphic negation.
pub fn cipher_neg(pk: &PaillierPublicKey, c: &CipherMatrix) -> Result<CipherMatrix> {
    c.check_key(pk)?;
    let n2 = pk.n_squared();
    let values = try_compute_cells(c.values.len(), |i| {
        c.values[i].modinv(n2).ok_or(CryptoError::NotInvertible)
    })?;
    CipherMatrix::from_parts(c.rows, c.cols, c.scale_bits, pk.fingerprint(), values)
}

// --- key serialization: versioned text with base-16 big integers ---

const KEY_HEADER: &str = "stfl-paillier-key v1";

impl PaillierPublicKey {
    pub fn to_text(&self) -> String {
        format!("{KEY_HEADER}\nkind = public\nn = {:x}\n", self.n)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = parse_key_text(text, "public")?;
        let n = field_hex(&fields, "n")?;
        Ok(Self::from_n(n))
    }
}

impl PaillierPrivateKey {
    pub fn to_text(&self) -> String {
        format!(
            "{KEY_HEADER}\nkind = private\nn = {:x}\nlambda = {:x}\nmu = {:x}\n",
            self.public.n, self.lambda, self.mu
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = parse_key_text(text, "private")?;
        let n = field_hex(&fields, "n")?;
        let lambda = field_hex(&fields, "lambda")?;
        let mu = field_hex(&fields, "mu")?;
        Ok(Self {
            lambda,
            mu,
            public: PaillierPublicKey::from_n(n),
        })
    }
}

fn parse_key_text(text: &str, expected_kind: &str) -> Result<Vec<(String, String)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(KEY_HEADER) {
        return Err(CryptoError::KeyFormat("missing header".into()));
    }
    let mut fields = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CryptoError::KeyFormat(format!("bad line {line:?}")))?;
        fields.push((key.trim().to_string(), value.trim().to_string()));
    }
    match fields.iter().find(|(k, _)| k == "kind") {
        Some((_, kind)) if kind == expected_kind => Ok(fields),
        Some((_, kind)) => Err(CryptoError::KeyFormat(format!(
            "expected a {expected_kind} key, found {kind}"
        ))),
        None => Err(CryptoError::KeyFormat("missing kind field".into())),
    }
}

fn field_hex(fields: &[(String, String)], name: &str) -> Result<BigUint> {
    let (_, value) = fields
        .iter()
        .find(|(k, _)| k == name)
        .ok_or_else(|| CryptoError::KeyFormat(format!("missing field {name}")))?;
    BigUint::parse_bytes(value.as_bytes(), 16)
        .ok_or_else(|| CryptoError::KeyFormat(format!("field {name} is not base-16")))
}

/// Fixed-width big-endian bytes for wire transport of ciphertext values.
pub fn cipher_value_bytes(pk: &PaillierPublicKey, value: &BigUint) -> Vec<u8> {
    to_fixed_bytes(value, pk.n_squared().to_bytes_be().len())
}
