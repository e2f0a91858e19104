//! Encrypted vertical-FL baseline: noise-masked host weights, encrypted guest
//! activations, and the masked forward/backward exchange, plus a lock-step
//! plaintext reference used by the equivalence tests.
//!
//! Per round, with one guest layer A = σ(W_g·x + b_g) and a host layer
//! z = W_h·a:
//!
//! forward:  guest sends [A]_c; host computes [z̃]_c = W̃_h ⊗ [A]_c, masks it
//!           with fresh ε_s and returns it; the guest decrypts, removes the
//!           accumulated-noise term A·ε_accᵀ, and returns z + ε_s; the host
//!           strips ε_s and applies the output head.
//! backward: host sends [∂L/∂W_h + ε_s]_c; the guest decrypts, subtracts
//!           ε_w/η, hands back the re-masked gradient together with the
//!           encrypted *old* ε_acc, and advances ε_acc by ε_w; the host
//!           updates W̃_h (true weights move by −η·∂W, the mask by +ε_w) and
//!           returns [∂L/∂a]_c = ∂̃L/∂a − [ε_acc]_c ⊗ ∂L/∂ŷ, which the guest
//!           decrypts to run its local backpropagation.
//!
//! The central identity — W̃_h − ε_acc equals the plaintext-trained W_h —
//! holds after every round up to fixed-point rounding.
//!
//! The update direction follows gradient descent (∂L/∂ŷ = ŷ − y paired with
//! W ← W − η·grad); the optimizer here is plain SGD since the η-scaled mask
//! algebra above is built around it.

use crate::error::{ProtocolError, Result};
use crate::message::{CipherPayload, ControlMsg, PartyId, Payload};
use crate::stfl::{GuestHandler, GuestLink};
use num_bigint::BigUint;
use rand::Rng;
use std::time::Instant;
use stfl_core::activation::{sigmoid, softmax_rows};
use stfl_core::data::PartyDataset;
use stfl_core::rng::stream_rng;
use stfl_core::{ActivationKind, DenseLayer, Matrix2D};
use stfl_crypto::{
    cipher_add_plain, cipher_matmul, cipher_matmul_at, cipher_matmul_bt, cipher_value_bytes,
    decrypt_matrix, encrypt_matrix, keygen, CipherMatrix, FixedPointCodec, PaillierPrivateKey,
    PaillierPublicKey,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Sigmoid,
    Softmax,
}

#[derive(Clone, Debug)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Guest hidden width; `None` means five times the guest's feature count.
    pub hidden_dim: Option<usize>,
    pub key_bits: u64,
    pub frac_bits: u32,
    pub seed: u64,
    pub guest_bias: bool,
    pub head: HeadKind,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 128,
            hidden_dim: None,
            key_bits: 512,
            frac_bits: 40,
            seed: 0,
            guest_bias: true,
            head: HeadKind::Sigmoid,
        }
    }
}

impl BaselineConfig {
    pub fn out_dim(&self) -> usize {
        match self.head {
            HeadKind::Sigmoid => 1,
            HeadKind::Softmax => 2,
        }
    }
}

fn cipher_to_payload(pk: &PaillierPublicKey, cm: &CipherMatrix) -> CipherPayload {
    CipherPayload {
        rows: cm.rows() as u32,
        cols: cm.cols() as u32,
        scale_bits: cm.scale_bits,
        key_fingerprint: cm.key_fingerprint,
        values: cm
            .values()
            .iter()
            .map(|v| cipher_value_bytes(pk, v))
            .collect(),
    }
}

fn payload_to_cipher(p: &CipherPayload) -> Result<CipherMatrix> {
    let values: Vec<BigUint> = p.values.iter().map(|b| BigUint::from_bytes_be(b)).collect();
    CipherMatrix::from_parts(
        p.rows as usize,
        p.cols as usize,
        p.scale_bits,
        p.key_fingerprint,
        values,
    )
    .map_err(ProtocolError::from)
}

/// Deterministic per-epoch batch order shared by the protocol and the
/// plaintext reference.
pub fn batch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, "baseline-shuffle", epoch as u64);
    indices.shuffle(&mut rng);
    indices
}

fn uniform_pm1(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix2D {
    stfl_core::rng::uniform_matrix(rows, cols, -1.0, 1.0, rng)
}

enum GuestPhase {
    Idle,
    SentActivations,
    ForwardDone,
    SentMaskedGradient,
    SentMaskCipher,
}

/// Guest party of the encrypted protocol. Holds its layer in plaintext, the
/// Paillier private key, and the accumulated noise ε_acc (always the sum of
/// every ε_w issued so far; the host-side masked weights are off by exactly
/// this amount from the true weights).
pub struct BaselineGuest {
    id: PartyId,
    data: PartyDataset,
    w_g: Matrix2D,
    b_g: Vec<f64>,
    eps_acc: Matrix2D,
    pk: PaillierPublicKey,
    sk: PaillierPrivateKey,
    codec: FixedPointCodec,
    config: BaselineConfig,
    phase: GuestPhase,
    batch: Option<(Vec<String>, Matrix2D, Matrix2D)>, // ids, X, A
    pending_mask_cipher: Option<CipherMatrix>,
    enc_counter: u64,
    noise_counter: u64,
}

impl BaselineGuest {
    pub fn new(id: PartyId, data: PartyDataset, config: BaselineConfig) -> Result<Self> {
        let hidden = config.hidden_dim.unwrap_or(5 * data.feature_dim());
        let mut init_rng = stream_rng(config.seed, "guest-weights", 0);
        let layer = DenseLayer::seeded(
            data.feature_dim(),
            hidden,
            ActivationKind::Sigmoid,
            &mut init_rng,
        );
        let mut key_rng = stream_rng(config.seed, "paillier-keygen", 0);
        let (pk, sk) = keygen(config.key_bits, &mut key_rng)?;
        let codec = FixedPointCodec::new(config.frac_bits);
        Ok(Self {
            id,
            eps_acc: Matrix2D::zeros(config.out_dim(), hidden),
            w_g: layer.weights,
            b_g: layer.bias,
            data,
            pk,
            sk,
            codec,
            config,
            phase: GuestPhase::Idle,
            batch: None,
            pending_mask_cipher: None,
            enc_counter: 0,
            noise_counter: 0,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_g.rows()
    }

    pub fn weights(&self) -> &Matrix2D {
        &self.w_g
    }

    pub fn bias(&self) -> &[f64] {
        &self.b_g
    }

    pub fn eps_acc(&self) -> &Matrix2D {
        &self.eps_acc
    }

    pub fn public_key(&self) -> &PaillierPublicKey {
        &self.pk
    }

    fn activations(&self, x: &Matrix2D) -> Result<Matrix2D> {
        let mut pre = x.matmul_bt(&self.w_g)?;
        if self.config.guest_bias {
            pre.add_row_vector(&self.b_g)?;
        }
        Ok(pre.map(sigmoid))
    }

    fn handle_forward(&mut self, ids: &[String]) -> Result<Payload> {
        let x = self.data.rows_for_ids(ids)?;
        let a = self.activations(&x)?;
        let mut rng = stream_rng(self.config.seed, "guest-enc", self.enc_counter);
        self.enc_counter += 1;
        let cipher = encrypt_matrix(&self.pk, &a, &self.codec, self.codec.frac_bits, &mut rng)?;
        let payload = cipher_to_payload(&self.pk, &cipher);
        self.batch = Some((ids.to_vec(), x, a));
        self.phase = GuestPhase::SentActivations;
        Ok(Payload::CipherBatch(payload))
    }

    /// Decrypt z̃ + ε_s and strip the accumulated-noise term A·ε_accᵀ.
    fn handle_masked_logits(&mut self, payload: &CipherPayload) -> Result<Payload> {
        let cipher = payload_to_cipher(payload)?;
        let m1 = decrypt_matrix(&self.sk, &cipher, &self.codec)?;
        let (_, _, a) = self
            .batch
            .as_ref()
            .ok_or_else(|| integrity("no activation batch cached"))?;
        let correction = a.matmul_bt(&self.eps_acc)?;
        let m2 = m1.sub(&correction)?;
        self.phase = GuestPhase::ForwardDone;
        Ok(Payload::MaskedMatrix(m2))
    }

    /// Decrypt ∂L/∂W_h + ε_s, re-mask with −ε_w/η, and roll ε_acc forward.
    fn handle_masked_gradient(&mut self, payload: &CipherPayload) -> Result<Payload> {
        let cipher = payload_to_cipher(payload)?;
        let d1 = decrypt_matrix(&self.sk, &cipher, &self.codec)?;
        let mut rng = stream_rng(self.config.seed, "eps-w", self.noise_counter);
        self.noise_counter += 1;
        let eps_w = uniform_pm1(d1.rows(), d1.cols(), &mut rng);
        let d2 = d1.sub(&eps_w.scale(1.0 / self.config.learning_rate))?;

        let mut enc_rng = stream_rng(self.config.seed, "guest-enc", self.enc_counter);
        self.enc_counter += 1;
        let old_acc_cipher = encrypt_matrix(
            &self.pk,
            &self.eps_acc,
            &self.codec,
            self.codec.frac_bits,
            &mut enc_rng,
        )?;
        self.pending_mask_cipher = Some(old_acc_cipher);
        self.eps_acc = self.eps_acc.add(&eps_w)?;
        self.phase = GuestPhase::SentMaskedGradient;
        Ok(Payload::MaskedMatrix(d2))
    }

    /// Decrypt the true ∂L/∂a and backpropagate through the local layer.
    fn handle_activation_gradient(&mut self, payload: &CipherPayload) -> Result<Payload> {
        let cipher = payload_to_cipher(payload)?;
        let dlda = decrypt_matrix(&self.sk, &cipher, &self.codec)?;
        let (_, x, a) = self
            .batch
            .take()
            .ok_or_else(|| integrity("no activation batch cached"))?;
        // sigmoid derivative from the post-activation values
        let mut dz = dlda;
        for (g, &av) in dz.data_mut().iter_mut().zip(a.data()) {
            *g *= av * (1.0 - av);
        }
        let dw = dz.matmul_at(&x)?;
        self.w_g = self.w_g.sub(&dw.scale(self.config.learning_rate))?;
        if self.config.guest_bias {
            for (b, g) in self.b_g.iter_mut().zip(dz.col_sums()) {
                *b -= self.config.learning_rate * g;
            }
        }
        self.phase = GuestPhase::Idle;
        Ok(Payload::Control(ControlMsg::Ack))
    }
}

fn integrity(detail: &str) -> ProtocolError {
    ProtocolError::UnexpectedMessage {
        context: "baseline protocol integrity".into(),
        got: detail.into(),
    }
}

impl GuestHandler for BaselineGuest {
    fn party_id(&self) -> PartyId {
        self.id
    }

    fn handle(&mut self, request: &Payload) -> Result<Payload> {
        match request {
            Payload::SchemaRequest => Ok(Payload::SchemaInfo {
                feature_names: self.data.feature_names.clone(),
                latent_dim: self.hidden_dim() as u32,
            }),
            Payload::Control(ControlMsg::KeyRequest) => {
                Ok(Payload::PaillierKey(self.pk.to_text()))
            }
            Payload::IdList(host_ids) => {
                let ours = self.data.id_set();
                Ok(Payload::IdList(
                    host_ids
                        .iter()
                        .filter(|id| ours.contains(*id))
                        .cloned()
                        .collect(),
                ))
            }
            Payload::ForwardRequest { ids } => self.handle_forward(ids),
            Payload::CipherBatch(payload) => match self.phase {
                GuestPhase::SentActivations => self.handle_masked_logits(payload),
                GuestPhase::ForwardDone => self.handle_masked_gradient(payload),
                GuestPhase::SentMaskCipher => self.handle_activation_gradient(payload),
                _ => Err(integrity("cipher batch outside any active round")),
            },
            Payload::Control(ControlMsg::MaskCipherRequest) => {
                if !matches!(self.phase, GuestPhase::SentMaskedGradient) {
                    return Err(integrity("mask cipher requested out of order"));
                }
                let pending = self
                    .pending_mask_cipher
                    .take()
                    .ok_or_else(|| integrity("no pending mask cipher"))?;
                self.phase = GuestPhase::SentMaskCipher;
                Ok(Payload::CipherBatch(cipher_to_payload(&self.pk, &pending)))
            }
            other => Err(ProtocolError::UnexpectedMessage {
                context: "baseline guest".into(),
                got: other.name().into(),
            }),
        }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

#[derive(Clone, Debug)]
pub struct BaselineEpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct BaselineTrainOutcome {
    pub epochs: Vec<BaselineEpochStats>,
    pub train_seconds: f64,
}

/// Host party: holds labels and only ever the noise-masked weights W̃_h.
/// The true W_h and ε_acc never appear in this state.
pub struct BaselineHost {
    data: PartyDataset,
    config: BaselineConfig,
    w_h_masked: Matrix2D,
    pk: Option<PaillierPublicKey>,
    codec: FixedPointCodec,
    noise_counter: u64,
    round: Option<RoundCache>,
}

struct RoundCache {
    ids: Vec<String>,
    cipher_a: CipherMatrix,
}

impl BaselineHost {
    pub fn new(data: PartyDataset, guest_hidden: usize, config: BaselineConfig) -> Self {
        let mut init_rng = stream_rng(config.seed, "host-weights", 0);
        let layer = DenseLayer::seeded(
            guest_hidden,
            config.out_dim(),
            ActivationKind::Identity,
            &mut init_rng,
        );
        let codec = FixedPointCodec::new(config.frac_bits);
        Self {
            data,
            w_h_masked: layer.weights,
            pk: None,
            codec,
            config,
            noise_counter: 0,
            round: None,
        }
    }

    pub fn masked_weights(&self) -> &Matrix2D {
        &self.w_h_masked
    }

    /// Fetches the guest's public key and intersects id sets.
    pub fn setup(&mut self, guest: &mut GuestLink, ids: &[String]) -> Result<Vec<String>> {
        let reply = guest.call(Payload::Control(ControlMsg::KeyRequest))?;
        let pk = match reply {
            Payload::PaillierKey(text) => PaillierPublicKey::from_text(&text)?,
            other => {
                return Err(ProtocolError::UnexpectedMessage {
                    context: "baseline key exchange".into(),
                    got: other.name().into(),
                })
            }
        };
        self.pk = Some(pk);
        let reply = guest.call(Payload::IdList(ids.to_vec()))?;
        match reply {
            Payload::IdList(matched) if matched.is_empty() => Err(ProtocolError::SetupAborted(
                crate::error::SetupViolation::EmptyIdIntersection,
            )),
            Payload::IdList(matched) => Ok(matched),
            other => Err(ProtocolError::UnexpectedMessage {
                context: "baseline id alignment".into(),
                got: other.name().into(),
            }),
        }
    }

    fn pk(&self) -> Result<&PaillierPublicKey> {
        self.pk
            .as_ref()
            .ok_or_else(|| integrity("setup not completed"))
    }

    fn head(&self, z: &Matrix2D) -> Result<Matrix2D> {
        match self.config.head {
            HeadKind::Sigmoid => Ok(z.map(sigmoid)),
            HeadKind::Softmax => Ok(softmax_rows(z)?),
        }
    }

    /// One masked forward exchange. Returns the prediction ŷ and the true
    /// (unmasked) logits z, both known only to the host.
    pub fn forward_round(
        &mut self,
        guest: &mut GuestLink,
        ids: &[String],
    ) -> Result<(Matrix2D, Matrix2D)> {
        let pk = self.pk()?.clone();
        let reply = guest.call(Payload::ForwardRequest { ids: ids.to_vec() })?;
        let cipher_a = match reply {
            Payload::CipherBatch(p) => payload_to_cipher(&p)?,
            other => {
                return Err(ProtocolError::UnexpectedMessage {
                    context: "forward activations".into(),
                    got: other.name().into(),
                })
            }
        };
        if cipher_a.rows() != ids.len() || cipher_a.cols() != self.w_h_masked.cols() {
            return Err(integrity("activation batch has wrong shape"));
        }

        let z_masked = cipher_matmul_bt(&pk, &cipher_a, &self.w_h_masked, &self.codec)?;
        let mut rng = stream_rng(self.config.seed, "eps-s", self.noise_counter);
        self.noise_counter += 1;
        let eps_s = uniform_pm1(z_masked.rows(), z_masked.cols(), &mut rng);
        let z_masked_noised = cipher_add_plain(&pk, &z_masked, &eps_s, &self.codec)?;

        let reply = guest.call(Payload::CipherBatch(cipher_to_payload(&pk, &z_masked_noised)))?;
        let m2 = match reply {
            Payload::MaskedMatrix(m) => m,
            other => {
                return Err(ProtocolError::UnexpectedMessage {
                    context: "masked logits".into(),
                    got: other.name().into(),
                })
            }
        };
        let z = m2.sub(&eps_s)?;
        let y_hat = self.head(&z)?;
        self.round = Some(RoundCache {
            ids: ids.to_vec(),
            cipher_a,
        });
        Ok((y_hat, z))
    }

    /// One masked backward exchange for the batch of the last forward round.
    pub fn backward_round(
        &mut self,
        guest: &mut GuestLink,
        ids: &[String],
        y_hat: &Matrix2D,
        labels: &Matrix2D,
    ) -> Result<()> {
        let pk = self.pk()?.clone();
        let round = self.round.take().ok_or_else(|| integrity("backward without forward"))?;
        if round.ids != ids {
            return Err(integrity("backward batch does not match forward batch"));
        }
        let batch = ids.len() as f64;
        // dL/dz for sigmoid+BCE and softmax+CE alike
        let g = y_hat.sub(labels)?.scale(1.0 / batch);

        let grad_w_cipher = cipher_matmul_at(&pk, &g, &round.cipher_a, &self.codec)?;
        let mut rng = stream_rng(self.config.seed, "eps-s", self.noise_counter);
        self.noise_counter += 1;
        let eps_s = uniform_pm1(grad_w_cipher.rows(), grad_w_cipher.cols(), &mut rng);
        let masked_grad = cipher_add_plain(&pk, &grad_w_cipher, &eps_s, &self.codec)?;

        let reply = guest.call(Payload::CipherBatch(cipher_to_payload(&pk, &masked_grad)))?;
        let d2 = match reply {
            Payload::MaskedMatrix(m) => m,
            other => {
                return Err(ProtocolError::UnexpectedMessage {
                    context: "masked weight gradient".into(),
                    got: other.name().into(),
                })
            }
        };
        let update = d2.sub(&eps_s)?; // ∂L/∂W_h − ε_w/η

        // ∂̃L/∂a from the pre-update masked weights
        let dlda_masked = g.matmul(&self.w_h_masked)?;
        self.w_h_masked = self
            .w_h_masked
            .sub(&update.scale(self.config.learning_rate))?;

        let reply = guest.call(Payload::Control(ControlMsg::MaskCipherRequest))?;
        let eps_acc_cipher = match reply {
            Payload::CipherBatch(p) => payload_to_cipher(&p)?,
            other => {
                return Err(ProtocolError::UnexpectedMessage {
                    context: "mask cipher".into(),
                    got: other.name().into(),
                })
            }
        };
        // [∂L/∂a]_c = ∂̃L/∂a ⊕ (−∂L/∂ŷ) ⊗ [ε_acc]_c
        let neg_g = g.scale(-1.0);
        let correction = cipher_matmul(&pk, &neg_g, &eps_acc_cipher, &self.codec)?;
        let dlda_cipher = cipher_add_plain(&pk, &correction, &dlda_masked, &self.codec)?;
        let reply = guest.call(Payload::CipherBatch(cipher_to_payload(&pk, &dlda_cipher)))?;
        match reply {
            Payload::Control(ControlMsg::Ack) => Ok(()),
            other => Err(ProtocolError::UnexpectedMessage {
                context: "activation gradient ack".into(),
                got: other.name().into(),
            }),
        }
    }

    /// Loss and per-element accuracy of ŷ against binary labels.
    fn batch_metrics(&self, y_hat: &Matrix2D, labels: &Matrix2D) -> (f64, usize) {
        let mut loss = 0.0;
        let mut correct = 0;
        match self.config.head {
            HeadKind::Sigmoid => {
                for (p, y) in y_hat.data().iter().zip(labels.data()) {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    if (p >= 0.5) == (*y >= 0.5) {
                        correct += 1;
                    }
                }
            }
            HeadKind::Softmax => {
                for r in 0..y_hat.rows() {
                    let truth = labels.get(r, 0) as usize;
                    let p = y_hat.get(r, truth.min(1)).clamp(1e-12, 1.0);
                    loss -= p.ln();
                    let predicted = if y_hat.get(r, 1) >= y_hat.get(r, 0) { 1 } else { 0 };
                    if predicted == truth {
                        correct += 1;
                    }
                }
            }
        }
        (loss, correct)
    }

    fn labels_matrix(&self, ids: &[String]) -> Result<Matrix2D> {
        let raw = self.data.labels_for_ids(ids)?;
        match self.config.head {
            HeadKind::Sigmoid => Ok(raw),
            HeadKind::Softmax => {
                let mut onehot = Matrix2D::zeros(raw.rows(), 2);
                for r in 0..raw.rows() {
                    let class = raw.get(r, 0) as usize;
                    onehot.set(r, class.min(1), 1.0);
                }
                Ok(onehot)
            }
        }
    }

    /// Full training loop over the aligned train ids, timed with encryption on.
    pub fn train(
        &mut self,
        guest: &mut GuestLink,
        train_ids: &[String],
    ) -> Result<BaselineTrainOutcome> {
        if train_ids.is_empty() {
            return Err(stfl_core::CoreError::Empty("no baseline training rows".into()).into());
        }
        let started = Instant::now();
        let mut epochs = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let order = batch_order(self.config.seed, epoch, train_ids.len());
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for chunk in order.chunks(self.config.batch_size) {
                let ids: Vec<String> = chunk.iter().map(|&i| train_ids[i].clone()).collect();
                let (y_hat, _) = self.forward_round(guest, &ids)?;
                let labels = self.labels_matrix(&ids)?;
                let (loss, batch_correct) = self.batch_metrics(&y_hat, &labels);
                loss_sum += loss;
                correct += batch_correct;
                self.backward_round(guest, &ids, &y_hat, &labels)?;
            }
            epochs.push(BaselineEpochStats {
                epoch,
                loss: loss_sum / train_ids.len() as f64,
                accuracy: correct as f64 / train_ids.len() as f64,
            });
        }
        Ok(BaselineTrainOutcome {
            epochs,
            train_seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Predictions via the encrypted forward path: a `[n×1]` column of
    /// positive-class probabilities.
    pub fn predict(&mut self, guest: &mut GuestLink, ids: &[String]) -> Result<Matrix2D> {
        let mut out = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(self.config.batch_size.max(1)) {
            let (y_hat, _) = self.forward_round(guest, chunk)?;
            self.round = None;
            for r in 0..y_hat.rows() {
                let p = match self.config.head {
                    HeadKind::Sigmoid => y_hat.get(r, 0),
                    HeadKind::Softmax => y_hat.get(r, 1),
                };
                out.push(p);
            }
        }
        Ok(Matrix2D::column(&out))
    }
}

/// The same arithmetic with no encryption and no noise, advanced in lock-step
/// with the protocol for equivalence checks.
#[derive(Clone, Debug)]
pub struct PlaintextReference {
    pub w_g: Matrix2D,
    pub b_g: Vec<f64>,
    pub w_h: Matrix2D,
    learning_rate: f64,
    guest_bias: bool,
    head: HeadKind,
}

impl PlaintextReference {
    /// Captures the initial (unmasked: ε_acc = 0) state of both parties.
    pub fn from_initial(host: &BaselineHost, guest: &BaselineGuest) -> Self {
        Self {
            w_g: guest.w_g.clone(),
            b_g: guest.b_g.clone(),
            w_h: host.w_h_masked.clone(),
            learning_rate: host.config.learning_rate,
            guest_bias: host.config.guest_bias,
            head: host.config.head,
        }
    }

    pub fn forward(&self, x: &Matrix2D) -> Result<(Matrix2D, Matrix2D, Matrix2D)> {
        let mut pre = x.matmul_bt(&self.w_g)?;
        if self.guest_bias {
            pre.add_row_vector(&self.b_g)?;
        }
        let a = pre.map(sigmoid);
        let z = a.matmul_bt(&self.w_h)?;
        let y_hat = match self.head {
            HeadKind::Sigmoid => z.map(sigmoid),
            HeadKind::Softmax => softmax_rows(&z)?,
        };
        Ok((a, z, y_hat))
    }

    /// One SGD step; returns the pre-update logits and the gradient that was
    /// delivered to the guest (∂L/∂a), for comparison against the protocol.
    pub fn step(&mut self, x: &Matrix2D, labels: &Matrix2D) -> Result<ReferenceStep> {
        let (a, z, y_hat) = self.forward(x)?;
        let g = y_hat.sub(labels)?.scale(1.0 / x.rows() as f64);
        let grad_w_h = g.matmul_at(&a)?;
        let dlda = g.matmul(&self.w_h)?;
        let mut dz = dlda.clone();
        for (gv, &av) in dz.data_mut().iter_mut().zip(a.data()) {
            *gv *= av * (1.0 - av);
        }
        let grad_w_g = dz.matmul_at(x)?;
        self.w_h = self.w_h.sub(&grad_w_h.scale(self.learning_rate))?;
        self.w_g = self.w_g.sub(&grad_w_g.scale(self.learning_rate))?;
        if self.guest_bias {
            for (b, gv) in self.b_g.iter_mut().zip(dz.col_sums()) {
                *b -= self.learning_rate * gv;
            }
        }
        Ok(ReferenceStep {
            logits: z,
            y_hat,
            delivered_dlda: dlda,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceStep {
    pub logits: Matrix2D,
    pub y_hat: Matrix2D,
    pub delivered_dlda: Matrix2D,
}
