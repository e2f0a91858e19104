//! Cryptographic building blocks for the encrypted vertical-FL baseline and
//! private ID alignment: Paillier over fixed-point reals, and DH-style PSI.

pub mod bigmath;
pub mod error;
pub mod fixed;
pub mod paillier;
pub mod psi;

pub use error::{CryptoError, Result};
pub use fixed::{FixedPointCodec, DEFAULT_FRAC_BITS};
pub use paillier::{
    cipher_add, cipher_add_plain, cipher_matmul, cipher_matmul_at, cipher_matmul_bt, cipher_neg,
    cipher_value_bytes, decrypt_matrix, encrypt_matrix, keygen, CipherMatrix, Ciphertext,
    PaillierPrivateKey, PaillierPublicKey,
};
pub use psi::{psi_intersect, DhGroup, PsiInitiator, PsiMode, PsiResponder};
