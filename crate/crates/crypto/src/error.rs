use thiserror::Error;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("unsupported key size {0} (expected 512, 1024, or 2048 bits)")]
    InvalidKeySize(u64),

    #[error("prime generation exceeded {0} candidate attempts")]
    PrimeGenTimeout(usize),

    #[error("ciphertexts belong to different keys")]
    KeyMismatch,

    #[error("ciphertext scales differ ({0} vs {1} fractional bits)")]
    ScaleMismatch(u32, u32),

    #[error("fixed-point headroom exceeded: {0}")]
    HeadroomOverflow(String),

    #[error("value is not invertible modulo the key")]
    NotInvertible,

    #[error("ciphertext out of range for this key")]
    CiphertextRange,

    #[error("key file corrupt or unsupported: {0}")]
    KeyFormat(String),

    #[error("blinded set intersection requires non-empty inputs")]
    EmptyPsiInput,

    #[error("id intersection between the parties is empty")]
    EmptyIntersection,

    #[error("group element malformed: {0}")]
    BadGroupElement(String),

    #[error("matrix shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },
}

pub type Result<T> = std::result::Result<T, CryptoError>;
