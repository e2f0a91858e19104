//! Self-taught federated learning: guests stream frozen-encoder latents, the
//! host trains the master classifier over its own features concatenated with
//! those latents. No gradient ever flows back to a guest; the backward pass
//! terminates at the concatenation boundary.

use crate::error::{ProtocolError, Result, SetupViolation};
use crate::message::{ControlMsg, PartyId, Payload, ProtocolMessage};
use crate::transport::{Endpoint, MessageLog};
use std::collections::BTreeSet;
use std::time::Instant;
use stfl_core::data::PartyDataset;
use stfl_core::rng::stream_rng;
use stfl_core::train::{train_binary_classifier, EpochStats};
use stfl_core::vae::{train_vae, VaeEpochStats};
use stfl_core::{ActivationKind, LatentMode, Matrix2D, MlpModel, TrainConfig, VaeModel, VaeSizing};
use stfl_crypto::{DhGroup, PsiInitiator, PsiMode, PsiResponder};

/// A party's side of a request/response protocol: one reply per request.
pub trait GuestHandler: Send {
    fn handle(&mut self, request: &Payload) -> Result<Payload>;
    fn party_id(&self) -> PartyId;
    /// Concrete-state access for test inspection through a `GuestLink`.
    fn as_any(&self) -> &dyn std::any::Any;
}

/// Serves requests until `Finish` (acknowledged) or peer abort.
pub fn serve_guest(handler: &mut dyn GuestHandler, endpoint: &mut Endpoint) -> Result<()> {
    loop {
        let msg = match endpoint.recv() {
            Ok(m) => m,
            Err(ProtocolError::PeerAbort(_)) | Err(ProtocolError::ChannelClosed) => return Ok(()),
            Err(e) => return Err(e),
        };
        if matches!(msg.payload, Payload::Control(ControlMsg::Finish)) {
            endpoint.send(Payload::Control(ControlMsg::Ack))?;
            return Ok(());
        }
        match handler.handle(&msg.payload) {
            Ok(reply) => endpoint.send(reply)?,
            Err(e) => {
                let _ = endpoint.send(Payload::Control(ControlMsg::Abort(e.to_string())));
                return Err(e);
            }
        }
    }
}

/// Runs a handler as a service over one endpoint and hands the state back,
/// so callers can inspect it (fingerprints, learned weights) afterwards.
pub fn run_guest_service<H: GuestHandler>(mut handler: H, mut endpoint: Endpoint) -> Result<H> {
    serve_guest(&mut handler, &mut endpoint)?;
    Ok(handler)
}

/// The host's view of one guest: either an in-process handler invoked
/// directly, or a remote party behind a transport endpoint.
pub enum GuestLink {
    Direct {
        handler: Box<dyn GuestHandler>,
        log: Option<MessageLog>,
        call_count: u32,
    },
    Remote(Endpoint),
}

impl GuestLink {
    pub fn direct(handler: impl GuestHandler + 'static) -> Self {
        GuestLink::Direct {
            handler: Box::new(handler),
            log: None,
            call_count: 0,
        }
    }

    pub fn direct_recorded(handler: impl GuestHandler + 'static, log: MessageLog) -> Self {
        GuestLink::Direct {
            handler: Box::new(handler),
            log: Some(log),
            call_count: 0,
        }
    }

    pub fn remote(endpoint: Endpoint) -> Self {
        GuestLink::Remote(endpoint)
    }

    pub fn call(&mut self, payload: Payload) -> Result<Payload> {
        match self {
            GuestLink::Direct {
                handler,
                log,
                call_count,
            } => {
                if let Some(log) = log {
                    log.lock().expect("log poisoned").push(ProtocolMessage {
                        sender: crate::message::HOST_ID,
                        seq: *call_count,
                        payload: payload.clone(),
                    });
                }
                let reply = handler.handle(&payload)?;
                if let Some(log) = log {
                    log.lock().expect("log poisoned").push(ProtocolMessage {
                        sender: handler.party_id(),
                        seq: *call_count,
                        payload: reply.clone(),
                    });
                }
                *call_count += 1;
                if let Payload::Control(ControlMsg::Abort(reason)) = &reply {
                    return Err(ProtocolError::PeerAbort(reason.clone()));
                }
                Ok(reply)
            }
            GuestLink::Remote(endpoint) => endpoint.call(payload).map(|m| m.payload),
        }
    }

    /// Ends the conversation. Best-effort for remote links.
    pub fn finish(&mut self) -> Result<()> {
        if let GuestLink::Remote(endpoint) = self {
            endpoint.send(Payload::Control(ControlMsg::Finish))?;
            let _ = endpoint.recv()?;
        }
        Ok(())
    }

    /// The in-process handler behind a direct link, if any.
    pub fn direct_handler(&self) -> Option<&dyn GuestHandler> {
        match self {
            GuestLink::Direct { handler, .. } => Some(handler.as_ref()),
            GuestLink::Remote(_) => None,
        }
    }

    fn abort(&mut self, reason: &str) {
        if let GuestLink::Remote(endpoint) = self {
            let _ = endpoint.send(Payload::Control(ControlMsg::Abort(reason.into())));
        }
    }
}

/// Guest party: private feature slice, a frozen VAE after self-training, and
/// the responder side of the protocol. Outgoing payloads contain latents and
/// ids only.
pub struct StflGuest {
    id: PartyId,
    data: PartyDataset,
    self_taught_ids: Vec<String>,
    vae: Option<VaeModel>,
    latent_mode: LatentMode,
    psi_group: DhGroup,
    seed: u64,
    noise_counter: u64,
    psi_counter: u64,
}

impl StflGuest {
    pub fn new(id: PartyId, data: PartyDataset, self_taught_ids: Vec<String>, seed: u64) -> Self {
        Self {
            id,
            data,
            self_taught_ids,
            vae: None,
            latent_mode: LatentMode::Mean,
            psi_group: DhGroup::test_512(),
            seed,
            noise_counter: 0,
            psi_counter: 0,
        }
    }

    pub fn with_latent_mode(mut self, mode: LatentMode) -> Self {
        self.latent_mode = mode;
        self
    }

    pub fn with_psi_group(mut self, group: DhGroup) -> Self {
        self.psi_group = group;
        self
    }

    pub fn data(&self) -> &PartyDataset {
        &self.data
    }

    /// Trains the local VAE on the self-taught rows and freezes it.
    pub fn self_train(&mut self, config: &TrainConfig) -> Result<Vec<VaeEpochStats>> {
        if self.self_taught_ids.is_empty() {
            return Err(stfl_core::CoreError::Empty(
                "guest has no self-taught rows".into(),
            )
            .into());
        }
        let rows = self.data.rows_for_ids(&self.self_taught_ids)?;
        let sizing = VaeSizing::for_input_dim(self.data.feature_dim())?;
        let (model, stats) = train_vae(&rows, sizing, config)?;
        self.vae = Some(model);
        Ok(stats)
    }

    /// Installs an externally built or loaded extractor (already frozen).
    pub fn install_vae(&mut self, model: VaeModel) {
        self.vae = Some(model);
    }

    pub fn vae(&self) -> Option<&VaeModel> {
        self.vae.as_ref()
    }

    pub fn fingerprint(&self) -> Result<[u8; 32]> {
        Ok(self
            .vae
            .as_ref()
            .ok_or(ProtocolError::MissingVae)?
            .fingerprint())
    }

    pub fn latent_dim(&self) -> Result<usize> {
        match &self.vae {
            Some(v) => Ok(v.latent_dim()),
            None => Ok(VaeSizing::for_input_dim(self.data.feature_dim())?.latent_dim()),
        }
    }

    /// Latents for the requested ids, rows in request order.
    pub fn encode_batch(&mut self, ids: &[String]) -> Result<Matrix2D> {
        let vae = self.vae.as_ref().ok_or(ProtocolError::MissingVae)?;
        let x = self.data.rows_for_ids(ids)?;
        let latents = match self.latent_mode {
            LatentMode::Mean => {
                let mut unused = stream_rng(0, "unused", 0);
                vae.latents(&x, LatentMode::Mean, &mut unused)?
            }
            LatentMode::Sampled => {
                let mut rng = stream_rng(self.seed, "latent-noise", self.noise_counter);
                self.noise_counter += 1;
                vae.latents(&x, LatentMode::Sampled, &mut rng)?
            }
        };
        Ok(latents)
    }
}

impl GuestHandler for StflGuest {
    fn party_id(&self) -> PartyId {
        self.id
    }

    fn handle(&mut self, request: &Payload) -> Result<Payload> {
        match request {
            Payload::SchemaRequest => Ok(Payload::SchemaInfo {
                feature_names: self.data.feature_names.clone(),
                latent_dim: self.latent_dim()? as u32,
            }),
            Payload::PsiInit { elements } => {
                let mut rng = stream_rng(self.seed, "psi-guest", self.psi_counter);
                self.psi_counter += 1;
                let (double_blinded, responder_blinded) =
                    PsiResponder::respond(&self.data.id_set(), &self.psi_group, &mut rng, elements)?;
                Ok(Payload::PsiResponse {
                    double_blinded,
                    responder_blinded,
                })
            }
            Payload::IdList(host_ids) => {
                // naive intersection: plain comparison against our id set
                let ours = self.data.id_set();
                let matched: Vec<String> = host_ids
                    .iter()
                    .filter(|id| ours.contains(*id))
                    .cloned()
                    .collect();
                Ok(Payload::IdList(matched))
            }
            Payload::LatentRequest { ids } => {
                let latents = self.encode_batch(ids)?;
                Ok(Payload::LatentBatch {
                    ids: ids.clone(),
                    latents,
                })
            }
            Payload::PredictionBatch { .. } => Ok(Payload::Control(ControlMsg::Ack)),
            Payload::Control(ControlMsg::FingerprintRequest) => {
                Ok(Payload::Control(ControlMsg::Fingerprint(self.fingerprint()?)))
            }
            other => Err(ProtocolError::UnexpectedMessage {
                context: "stfl guest".into(),
                got: other.name().into(),
            }),
        }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Outcome of the setup phase: the aligned id universe and model dimensions.
#[derive(Clone, Debug)]
pub struct SetupOutcome {
    pub aligned_ids: Vec<String>,
    pub joint_train_ids: Vec<String>,
    pub eval_test_ids: Vec<String>,
    pub guest_latent_dims: Vec<usize>,
    pub master_input_dim: usize,
}

#[derive(Clone, Debug)]
pub struct JointTrainOutcome {
    pub epochs: Vec<EpochStats>,
    pub train_seconds: f64,
    pub fingerprints_before: Vec<[u8; 32]>,
    pub fingerprints_after: Vec<[u8; 32]>,
}

/// Host party: labeled feature slice plus the master model over
/// `[x_host, a_1, ..., a_K]`.
pub struct StflHost {
    data: PartyDataset,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
    config: TrainConfig,
    psi_mode: PsiMode,
    psi_group: DhGroup,
    master: Option<MlpModel>,
    psi_counter: u64,
}

impl StflHost {
    pub fn new(
        data: PartyDataset,
        train_ids: Vec<String>,
        test_ids: Vec<String>,
        config: TrainConfig,
    ) -> Self {
        Self {
            data,
            train_ids,
            test_ids,
            config,
            psi_mode: PsiMode::Blinded,
            psi_group: DhGroup::test_512(),
            master: None,
            psi_counter: 0,
        }
    }

    pub fn with_psi(mut self, mode: PsiMode, group: DhGroup) -> Self {
        self.psi_mode = mode;
        self.psi_group = group;
        self
    }

    pub fn master(&self) -> Option<&MlpModel> {
        self.master.as_ref()
    }

    pub fn data(&self) -> &PartyDataset {
        &self.data
    }

    /// Validates schemas, aligns ids through PSI, and sizes the master model.
    pub fn setup(&mut self, guests: &mut [GuestLink]) -> Result<SetupOutcome> {
        let host_names: BTreeSet<String> = self.data.feature_names.iter().cloned().collect();
        let mut aligned: BTreeSet<String> = self.data.id_set();
        let mut guest_latent_dims = Vec::with_capacity(guests.len());

        for (k, link) in guests.iter_mut().enumerate() {
            let reply = link.call(Payload::SchemaRequest)?;
            let (feature_names, latent_dim) = match reply {
                Payload::SchemaInfo {
                    feature_names,
                    latent_dim,
                } => (feature_names, latent_dim),
                other => {
                    return Err(ProtocolError::UnexpectedMessage {
                        context: "setup schema".into(),
                        got: other.name().into(),
                    })
                }
            };
            if !feature_names.iter().any(|f| !host_names.contains(f)) {
                let violation = SetupViolation::NoNewGuestFeatures { guest: k as u8 + 1 };
                link.abort(&violation.to_string());
                return Err(ProtocolError::SetupAborted(violation));
            }
            guest_latent_dims.push(latent_dim as usize);

            let matched = self.intersect_with_guest(link)?;
            let matched: BTreeSet<String> = matched.into_iter().collect();
            aligned = aligned.intersection(&matched).cloned().collect();
            if aligned.is_empty() {
                let violation = SetupViolation::EmptyIdIntersection;
                link.abort(&violation.to_string());
                return Err(ProtocolError::SetupAborted(violation));
            }
        }

        let joint_train_ids: Vec<String> = self
            .train_ids
            .iter()
            .filter(|id| aligned.contains(*id))
            .cloned()
            .collect();
        let eval_test_ids: Vec<String> = self
            .test_ids
            .iter()
            .filter(|id| aligned.contains(*id))
            .cloned()
            .collect();
        let master_input_dim = self.data.feature_dim() + guest_latent_dims.iter().sum::<usize>();
        Ok(SetupOutcome {
            aligned_ids: aligned.into_iter().collect(),
            joint_train_ids,
            eval_test_ids,
            guest_latent_dims,
            master_input_dim,
        })
    }

    fn intersect_with_guest(&mut self, link: &mut GuestLink) -> Result<Vec<String>> {
        let ids = self.data.id_set();
        match self.psi_mode {
            PsiMode::Naive => {
                let reply = link.call(Payload::IdList(ids.iter().cloned().collect()))?;
                match reply {
                    Payload::IdList(matched) if matched.is_empty() => Err(
                        ProtocolError::SetupAborted(SetupViolation::EmptyIdIntersection),
                    ),
                    Payload::IdList(matched) => Ok(matched),
                    other => Err(ProtocolError::UnexpectedMessage {
                        context: "naive intersection".into(),
                        got: other.name().into(),
                    }),
                }
            }
            PsiMode::Blinded => {
                let mut rng = stream_rng(self.config.rng_seed, "psi-host", self.psi_counter);
                self.psi_counter += 1;
                let (initiator, elements) =
                    PsiInitiator::start(&ids, self.psi_group.clone(), &mut rng)?;
                let reply = link.call(Payload::PsiInit { elements })?;
                let (double_blinded, responder_blinded) = match reply {
                    Payload::PsiResponse {
                        double_blinded,
                        responder_blinded,
                    } => (double_blinded, responder_blinded),
                    other => {
                        return Err(ProtocolError::UnexpectedMessage {
                            context: "blinded intersection".into(),
                            got: other.name().into(),
                        })
                    }
                };
                match initiator.finish(&double_blinded, &responder_blinded) {
                    Ok(matched) => Ok(matched),
                    Err(stfl_crypto::CryptoError::EmptyIntersection) => Err(
                        ProtocolError::SetupAborted(SetupViolation::EmptyIdIntersection),
                    ),
                    Err(e) => Err(e.into()),
                }
            }
        }
    }

    fn collect_fingerprints(guests: &mut [GuestLink]) -> Result<Vec<[u8; 32]>> {
        guests
            .iter_mut()
            .map(|link| {
                match link.call(Payload::Control(ControlMsg::FingerprintRequest))? {
                    Payload::Control(ControlMsg::Fingerprint(fp)) => Ok(fp),
                    other => Err(ProtocolError::UnexpectedMessage {
                        context: "fingerprint".into(),
                        got: other.name().into(),
                    }),
                }
            })
            .collect()
    }

    /// Trains the master model; only θ is updated. Guests serve latents and
    /// are fingerprinted before and after so freezing can be asserted.
    pub fn joint_train(
        &mut self,
        guests: &mut [GuestLink],
        setup: &SetupOutcome,
    ) -> Result<JointTrainOutcome> {
        if setup.joint_train_ids.is_empty() {
            return Err(stfl_core::CoreError::Empty("no joint training rows".into()).into());
        }
        let fingerprints_before = Self::collect_fingerprints(guests)?;

        let mut init_rng = stream_rng(self.config.rng_seed, "master-init", 0);
        let dims = [
            setup.master_input_dim,
            5 * setup.master_input_dim,
            1,
        ];
        let mut master = MlpModel::seeded(
            &dims,
            &[ActivationKind::Tanh, ActivationKind::Sigmoid],
            &mut init_rng,
        )?;

        let data = &self.data;
        let ids = &setup.joint_train_ids;
        let dims_per_guest = &setup.guest_latent_dims;
        let started = Instant::now();
        let epochs = train_binary_classifier(
            &mut master,
            ids.len(),
            |batch_idx| -> Result<(Matrix2D, Matrix2D)> {
                let batch_ids: Vec<String> =
                    batch_idx.iter().map(|&i| ids[i].clone()).collect();
                let x = fetch_joint_features(data, guests, dims_per_guest, &batch_ids)?;
                let y = data.labels_for_ids(&batch_ids)?;
                Ok((x, y))
            },
            &self.config,
        )?;
        let train_seconds = started.elapsed().as_secs_f64();

        let fingerprints_after = Self::collect_fingerprints(guests)?;
        self.master = Some(master);
        Ok(JointTrainOutcome {
            epochs,
            train_seconds,
            fingerprints_before,
            fingerprints_after,
        })
    }

    /// Predictions for the given ids; shares the final outputs with guests.
    pub fn predict(&self, guests: &mut [GuestLink], ids: &[String]) -> Result<Matrix2D> {
        let master = self
            .master
            .as_ref()
            .ok_or_else(|| ProtocolError::UnexpectedMessage {
                context: "predict".into(),
                got: "no trained master model".into(),
            })?;
        let latent_dims: Vec<usize> = vec![0; guests.len()]; // widths validated per batch
        let x = fetch_joint_features(&self.data, guests, &latent_dims, ids)?;
        let predictions = master.predict(&x)?;
        for link in guests.iter_mut() {
            link.call(Payload::PredictionBatch {
                ids: ids.to_vec(),
                predictions: predictions.clone(),
            })?;
        }
        Ok(predictions)
    }
}

/// Pulls each guest's latent batch for `ids` and concatenates
/// `[x_host, a_1, ..., a_K]` in party order. A zero entry in
/// `expected_dims` skips the width check (used on the prediction path).
fn fetch_joint_features(
    data: &PartyDataset,
    guests: &mut [GuestLink],
    expected_dims: &[usize],
    ids: &[String],
) -> Result<Matrix2D> {
    let host_rows = data.rows_for_ids(ids)?;
    let mut parts: Vec<Matrix2D> = vec![host_rows];
    for (k, link) in guests.iter_mut().enumerate() {
        let reply = link.call(Payload::LatentRequest { ids: ids.to_vec() })?;
        let (echo, latents) = match reply {
            Payload::LatentBatch { ids, latents } => (ids, latents),
            other => {
                return Err(ProtocolError::UnexpectedMessage {
                    context: "latent batch".into(),
                    got: other.name().into(),
                })
            }
        };
        if echo != ids {
            return Err(ProtocolError::UnexpectedMessage {
                context: "latent batch".into(),
                got: "row ids out of order".into(),
            });
        }
        if latents.rows() != ids.len()
            || (expected_dims[k] != 0 && latents.cols() != expected_dims[k])
        {
            return Err(ProtocolError::UnexpectedMessage {
                context: "latent batch".into(),
                got: format!("{}x{} latents", latents.rows(), latents.cols()),
            });
        }
        parts.push(latents);
    }
    let refs: Vec<&Matrix2D> = parts.iter().collect();
    Ok(Matrix2D::hstack(&refs)?)
}
