//! Transports carrying framed protocol messages.
//!
//! The default transport is a pair of in-process ordered channels; TCP uses
//! the identical framing. Messages always cross as encoded bytes, so every
//! run exercises the wire codec. An `Endpoint` stamps outgoing sequence
//! numbers, enforces per-channel ordering on receipt, and can mirror all
//! traffic into a recorder for inspection in tests.

use crate::error::{ProtocolError, Result};
use crate::message::{decode_message, encode_message, Payload, PartyId, ProtocolMessage};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};

pub trait FrameTransport: Send {
    fn send_frame(&mut self, bytes: &[u8]) -> Result<()>;
    fn recv_frame(&mut self) -> Result<Vec<u8>>;
}

/// One side of an in-process duplex channel.
pub struct InProcFrames {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Connected pair of in-process channel ends.
pub fn in_proc_pair() -> (InProcFrames, InProcFrames) {
    let (tx_a, rx_b) = std::sync::mpsc::channel();
    let (tx_b, rx_a) = std::sync::mpsc::channel();
    (
        InProcFrames { tx: tx_a, rx: rx_a },
        InProcFrames { tx: tx_b, rx: rx_b },
    )
}

impl FrameTransport for InProcFrames {
    fn send_frame(&mut self, bytes: &[u8]) -> Result<()> {
        self.tx
            .send(bytes.to_vec())
            .map_err(|_| ProtocolError::ChannelClosed)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.rx.recv().map_err(|_| ProtocolError::ChannelClosed)
    }
}

/// TCP transport with the shared framing: the 7-byte envelope header carries
/// the payload length, so frames can be reassembled from the byte stream.
pub struct TcpFrames {
    stream: TcpStream,
}

impl TcpFrames {
    pub fn new(stream: TcpStream) -> Self {
        Self { stream }
    }
}

impl FrameTransport for TcpFrames {
    fn send_frame(&mut self, bytes: &[u8]) -> Result<()> {
        self.stream.write_all(bytes)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let mut header = [0u8; 7];
        self.stream.read_exact(&mut header)?;
        let len = u32::from_be_bytes(header[3..7].try_into().unwrap()) as usize;
        let mut frame = vec![0u8; 7 + len];
        frame[..7].copy_from_slice(&header);
        self.stream.read_exact(&mut frame[7..])?;
        Ok(frame)
    }
}

pub type MessageLog = Arc<Mutex<Vec<ProtocolMessage>>>;

/// A party's end of one channel. Outgoing messages get consecutive sequence
/// numbers; incoming ones must arrive in order or the endpoint errors out.
pub struct Endpoint {
    frames: Box<dyn FrameTransport>,
    local: PartyId,
    next_send: u32,
    next_recv: u32,
    recorder: Option<MessageLog>,
}

impl Endpoint {
    pub fn new(local: PartyId, frames: impl FrameTransport + 'static) -> Self {
        Self {
            frames: Box::new(frames),
            local,
            next_send: 0,
            next_recv: 0,
            recorder: None,
        }
    }

    /// Mirrors every sent and received message into `log`.
    pub fn with_recorder(mut self, log: MessageLog) -> Self {
        self.recorder = Some(log);
        self
    }

    pub fn local_id(&self) -> PartyId {
        self.local
    }

    pub fn send(&mut self, payload: Payload) -> Result<()> {
        let msg = ProtocolMessage {
            sender: self.local,
            seq: self.next_send,
            payload,
        };
        self.next_send += 1;
        let bytes = encode_message(&msg);
        if let Some(log) = &self.recorder {
            log.lock().expect("recorder poisoned").push(msg);
        }
        self.frames.send_frame(&bytes)
    }

    pub fn recv(&mut self) -> Result<ProtocolMessage> {
        let bytes = self.frames.recv_frame()?;
        let msg = decode_message(&bytes)?;
        if msg.seq != self.next_recv {
            return Err(ProtocolError::SequenceViolation {
                expected: self.next_recv,
                got: msg.seq,
            });
        }
        self.next_recv += 1;
        if let Some(log) = &self.recorder {
            log.lock().expect("recorder poisoned").push(msg.clone());
        }
        if let Payload::Control(crate::message::ControlMsg::Abort(reason)) = &msg.payload {
            return Err(ProtocolError::PeerAbort(reason.clone()));
        }
        Ok(msg)
    }

    /// Request/response helper for the driving side.
    pub fn call(&mut self, payload: Payload) -> Result<ProtocolMessage> {
        self.send(payload)?;
        self.recv()
    }
}

pub fn new_log() -> MessageLog {
    Arc::new(Mutex::new(Vec::new()))
}
