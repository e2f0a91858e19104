//! Party actors, typed message framing, and transports for vertical
//! federated learning: the self-taught protocol (frozen guest encoders
//! streaming latents to the host) and the encrypted masked-gradient baseline
//! it is compared against.

pub mod baseline;
pub mod error;
pub mod message;
pub mod stfl;
pub mod transport;

pub use baseline::{
    BaselineConfig, BaselineGuest, BaselineHost, BaselineTrainOutcome, HeadKind,
    PlaintextReference,
};
pub use error::{ProtocolError, Result, SetupViolation};
pub use message::{ControlMsg, PartyId, Payload, ProtocolMessage, HOST_ID};
pub use stfl::{
    run_guest_service, serve_guest, GuestHandler, GuestLink, JointTrainOutcome, SetupOutcome,
    StflGuest, StflHost,
};
pub use transport::{in_proc_pair, new_log, Endpoint, InProcFrames, MessageLog, TcpFrames};
