//! Typed protocol messages and their wire encoding.
//!
//! Wire layout: version byte, sender id byte, payload-type byte, 4-byte
//! big-endian payload length, payload. The payload starts with the 4-byte
//! big-endian sequence number, followed by the variant body. Matrices are
//! serialized as (rows, cols, little-endian 64-bit reals); id lists and byte
//! arrays are length-prefixed.
//!
//! There is deliberately no message type that can carry raw feature rows:
//! guests emit latent batches, ciphertext batches, or masked values only.

use crate::error::{ProtocolError, Result};
use stfl_core::Matrix2D;

pub const WIRE_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PartyId(pub u8);

pub const HOST_ID: PartyId = PartyId(0);

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolMessage {
    pub sender: PartyId,
    pub seq: u32,
    pub payload: Payload,
}

/// Ciphertext batch fields shared by every encrypted payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CipherPayload {
    pub rows: u32,
    pub cols: u32,
    pub scale_bits: u32,
    pub key_fingerprint: u64,
    pub values: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Host asks a guest for its column schema and latent width.
    SchemaRequest,
    SchemaInfo {
        feature_names: Vec<String>,
        latent_dim: u32,
    },
    /// Blinded-id exchange for private set intersection.
    PsiInit {
        elements: Vec<Vec<u8>>,
    },
    PsiResponse {
        double_blinded: Vec<Vec<u8>>,
        responder_blinded: Vec<Vec<u8>>,
    },
    /// Plain id list: naive intersection input or the aligned result.
    IdList(Vec<String>),
    /// Host pulls latents for the listed rows, in the listed order.
    LatentRequest {
        ids: Vec<String>,
    },
    LatentBatch {
        ids: Vec<String>,
        latents: Matrix2D,
    },
    /// Final outputs shared back to guests after prediction.
    PredictionBatch {
        ids: Vec<String>,
        predictions: Matrix2D,
    },
    /// Guest's Paillier public key (textual key format).
    PaillierKey(String),
    /// Guest activations are requested for the encrypted protocol.
    ForwardRequest {
        ids: Vec<String>,
    },
    CipherBatch(CipherPayload),
    /// Noise-masked plaintext values (never true activations or gradients).
    MaskedMatrix(Matrix2D),
    Control(ControlMsg),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ControlMsg {
    Ack,
    Finish,
    Abort(String),
    FingerprintRequest,
    Fingerprint([u8; 32]),
    /// Host asks the baseline guest for its (pre-update) encrypted noise sum.
    MaskCipherRequest,
    /// Host asks the baseline guest for its Paillier public key.
    KeyRequest,
}

impl Payload {
    pub fn type_byte(&self) -> u8 {
        match self {
            Payload::SchemaRequest => 0,
            Payload::SchemaInfo { .. } => 1,
            Payload::PsiInit { .. } => 2,
            Payload::PsiResponse { .. } => 3,
            Payload::IdList(_) => 4,
            Payload::LatentRequest { .. } => 5,
            Payload::LatentBatch { .. } => 6,
            Payload::PredictionBatch { .. } => 7,
            Payload::PaillierKey(_) => 8,
            Payload::ForwardRequest { .. } => 9,
            Payload::CipherBatch(_) => 10,
            Payload::MaskedMatrix(_) => 11,
            Payload::Control(_) => 12,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Payload::SchemaRequest => "SchemaRequest",
            Payload::SchemaInfo { .. } => "SchemaInfo",
            Payload::PsiInit { .. } => "PsiInit",
            Payload::PsiResponse { .. } => "PsiResponse",
            Payload::IdList(_) => "IdList",
            Payload::LatentRequest { .. } => "LatentRequest",
            Payload::LatentBatch { .. } => "LatentBatch",
            Payload::PredictionBatch { .. } => "PredictionBatch",
            Payload::PaillierKey(_) => "PaillierKey",
            Payload::ForwardRequest { .. } => "ForwardRequest",
            Payload::CipherBatch(_) => "CipherBatch",
            Payload::MaskedMatrix(_) => "MaskedMatrix",
            Payload::Control(_) => "Control",
        }
    }
}

// --- encoding ---

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32_be(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64_be(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u32_be(b.len() as u32);
        self.buf.extend_from_slice(b);
    }

    fn string(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn string_list(&mut self, items: &[String]) {
        self.u32_be(items.len() as u32);
        for s in items {
            self.string(s);
        }
    }

    fn bytes_list(&mut self, items: &[Vec<u8>]) {
        self.u32_be(items.len() as u32);
        for b in items {
            self.bytes(b);
        }
    }

    fn matrix(&mut self, m: &Matrix2D) {
        self.buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        self.buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(ProtocolError::Codec(format!(
                "truncated message: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64_be(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let len = self.u32_be()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?)
            .map_err(|_| ProtocolError::Codec("invalid UTF-8 in string".into()))
    }

    fn string_list(&mut self) -> Result<Vec<String>> {
        let count = self.u32_be()? as usize;
        (0..count).map(|_| self.string()).collect()
    }

    fn bytes_list(&mut self) -> Result<Vec<Vec<u8>>> {
        let count = self.u32_be()? as usize;
        (0..count).map(|_| self.bytes()).collect()
    }

    fn matrix(&mut self) -> Result<Matrix2D> {
        let rows = self.u32_le()? as usize;
        let cols = self.u32_le()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let raw = self.take(8)?;
            data.push(f64::from_le_bytes(raw.try_into().unwrap()));
        }
        Matrix2D::from_vec(rows, cols, data)
            .map_err(|e| ProtocolError::Codec(format!("bad matrix: {e}")))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(ProtocolError::Codec(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_message(msg: &ProtocolMessage) -> Vec<u8> {
    let mut payload = Writer::new();
    payload.u32_be(msg.seq);
    match &msg.payload {
        Payload::SchemaRequest => {}
        Payload::SchemaInfo {
            feature_names,
            latent_dim,
        } => {
            payload.string_list(feature_names);
            payload.u32_be(*latent_dim);
        }
        Payload::PsiInit { elements } => payload.bytes_list(elements),
        Payload::PsiResponse {
            double_blinded,
            responder_blinded,
        } => {
            payload.bytes_list(double_blinded);
            payload.bytes_list(responder_blinded);
        }
        Payload::IdList(ids) => payload.string_list(ids),
        Payload::LatentRequest { ids } => payload.string_list(ids),
        Payload::LatentBatch { ids, latents } => {
            payload.string_list(ids);
            payload.matrix(latents);
        }
        Payload::PredictionBatch { ids, predictions } => {
            payload.string_list(ids);
            payload.matrix(predictions);
        }
        Payload::PaillierKey(text) => payload.string(text),
        Payload::ForwardRequest { ids } => payload.string_list(ids),
        Payload::CipherBatch(c) => {
            payload.u32_be(c.rows);
            payload.u32_be(c.cols);
            payload.u32_be(c.scale_bits);
            payload.u64_be(c.key_fingerprint);
            payload.bytes_list(&c.values);
        }
        Payload::MaskedMatrix(m) => payload.matrix(m),
        Payload::Control(ctrl) => match ctrl {
            ControlMsg::Ack => payload.u8(0),
            ControlMsg::Finish => payload.u8(1),
            ControlMsg::Abort(reason) => {
                payload.u8(2);
                payload.string(reason);
            }
            ControlMsg::FingerprintRequest => payload.u8(3),
            ControlMsg::Fingerprint(fp) => {
                payload.u8(4);
                payload.buf.extend_from_slice(fp);
            }
            ControlMsg::MaskCipherRequest => payload.u8(5),
            ControlMsg::KeyRequest => payload.u8(6),
        },
    }

    let mut out = Vec::with_capacity(7 + payload.buf.len());
    out.push(WIRE_VERSION);
    out.push(msg.sender.0);
    out.push(msg.payload.type_byte());
    out.extend_from_slice(&(payload.buf.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload.buf);
    out
}

pub fn decode_message(bytes: &[u8]) -> Result<ProtocolMessage> {
    if bytes.len() < 7 {
        return Err(ProtocolError::Codec("message shorter than header".into()));
    }
    let version = bytes[0];
    if version != WIRE_VERSION {
        return Err(ProtocolError::Codec(format!(
            "unsupported wire version {version}"
        )));
    }
    let sender = PartyId(bytes[1]);
    let type_byte = bytes[2];
    let len = u32::from_be_bytes(bytes[3..7].try_into().unwrap()) as usize;
    if bytes.len() != 7 + len {
        return Err(ProtocolError::Codec(format!(
            "length field says {len}, payload has {}",
            bytes.len() - 7
        )));
    }
    let mut r = Reader::new(&bytes[7..]);
    let seq = r.u32_be()?;
    let payload = match type_byte {
        0 => Payload::SchemaRequest,
        1 => Payload::SchemaInfo {
            feature_names: r.string_list()?,
            latent_dim: r.u32_be()?,
        },
        2 => Payload::PsiInit {
            elements: r.bytes_list()?,
        },
        3 => Payload::PsiResponse {
            double_blinded: r.bytes_list()?,
            responder_blinded: r.bytes_list()?,
        },
        4 => Payload::IdList(r.string_list()?),
        5 => Payload::LatentRequest {
            ids: r.string_list()?,
        },
        6 => Payload::LatentBatch {
            ids: r.string_list()?,
            latents: r.matrix()?,
        },
        7 => Payload::PredictionBatch {
            ids: r.string_list()?,
            predictions: r.matrix()?,
        },
        8 => Payload::PaillierKey(r.string()?),
        9 => Payload::ForwardRequest {
            ids: r.string_list()?,
        },
        10 => Payload::CipherBatch(CipherPayload {
            rows: r.u32_be()?,
            cols: r.u32_be()?,
            scale_bits: r.u32_be()?,
            key_fingerprint: r.u64_be()?,
            values: r.bytes_list()?,
        }),
        11 => Payload::MaskedMatrix(r.matrix()?),
        12 => {
            let kind = r.u8()?;
            Payload::Control(match kind {
                0 => ControlMsg::Ack,
                1 => ControlMsg::Finish,
                2 => ControlMsg::Abort(r.string()?),
                3 => ControlMsg::FingerprintRequest,
                4 => {
                    let mut fp = [0u8; 32];
                    fp.copy_from_slice(r.take(32)?);
                    ControlMsg::Fingerprint(fp)
                }
                5 => ControlMsg::MaskCipherRequest,
                6 => ControlMsg::KeyRequest,
                other => {
                    return Err(ProtocolError::Codec(format!(
                        "unknown control subtype {other}"
                    )))
                }
            })
        }
        other => {
            return Err(ProtocolError::Codec(format!(
                "unknown payload type {other}"
            )))
        }
    };
    r.done()?;
    Ok(ProtocolMessage {
        sender,
        seq,
        payload,
    })
}
