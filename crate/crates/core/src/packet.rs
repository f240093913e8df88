//! The packet carried by every unit of the simulator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::topology::NodeId;

pub const MAX_PRIORITY: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PacketKind {
    Data,
    Control,
    Sense,
    Actuate,
    Security,
    Service,
}

/// A packet. Priority 0 is the most urgent class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: PacketKind,
    pub priority: u8,
    pub deadline: Option<SimTime>,
    /// Creation time read off the sender's local clock.
    pub created_at_sender_clock: f64,
    /// Meters.
    pub position: Option<(f64, f64)>,
    /// Meters per second.
    pub speed: Option<(f64, f64)>,
    pub payload: Vec<u8>,
    pub payload_size: u32,
    pub payload_digest: u64,
    pub auth_tag: Option<u64>,
    pub ttl: u8,
    pub flow_id: u64,
    pub seq_in_flow: u64,
    /// Abstract stand-in for trojan / application-layer payloads.
    pub malicious_payload: bool,
}

/// Caller-supplied fields for [`PacketFactory::make_packet`].
#[derive(Debug, Clone)]
pub struct PacketFields {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: PacketKind,
    pub priority: u8,
    pub deadline: Option<SimTime>,
    pub created_at_sender_clock: f64,
    pub position: Option<(f64, f64)>,
    pub speed: Option<(f64, f64)>,
    pub payload: Vec<u8>,
    pub ttl: u8,
    pub flow_id: u64,
    pub malicious_payload: bool,
}

impl PacketFields {
    pub fn new(src: NodeId, dst: NodeId, kind: PacketKind, flow_id: u64) -> Self {
        Self {
            src,
            dst,
            kind,
            priority: 4,
            deadline: None,
            created_at_sender_clock: 0.0,
            position: None,
            speed: None,
            payload: Vec::new(),
            ttl: 16,
            flow_id,
            malicious_payload: false,
        }
    }

    pub fn priority(mut self, p: u8) -> Self {
        self.priority = p;
        self
    }

    pub fn ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn deadline(mut self, d: SimTime) -> Self {
        self.deadline = Some(d);
        self
    }

    pub fn payload(mut self, bytes: Vec<u8>) -> Self {
        self.payload = bytes;
        self
    }

    pub fn sender_clock(mut self, ts: f64) -> Self {
        self.created_at_sender_clock = ts;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacketError {
    #[error("priority {0} outside 0..=7")]
    InvalidPriority(u8),
    #[error("ttl must be at least 1")]
    InvalidTtl,
}

/// FNV-1a over the payload bytes.
pub fn payload_digest(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Hands out packet ids and per-flow sequence numbers.
#[derive(Debug, Default, Clone)]
pub struct PacketFactory {
    next_id: u64,
    flow_seq: HashMap<u64, u64>,
}

impl PacketFactory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts ids at `base` so several factories can share a run without clashing.
    pub fn starting_at(base: u64) -> Self {
        Self {
            next_id: base,
            flow_seq: HashMap::new(),
        }
    }

    pub fn make_packet(&mut self, fields: PacketFields) -> Result<Packet, PacketError> {
        if fields.priority > MAX_PRIORITY {
            return Err(PacketError::InvalidPriority(fields.priority));
        }
        if fields.ttl == 0 {
            return Err(PacketError::InvalidTtl);
        }
        let id = self.next_id;
        self.next_id += 1;
        let seq = self.flow_seq.entry(fields.flow_id).or_insert(0);
        let seq_in_flow = *seq;
        *seq += 1;
        Ok(Packet {
            id,
            src: fields.src,
            dst: fields.dst,
            kind: fields.kind,
            priority: fields.priority,
            deadline: fields.deadline,
            created_at_sender_clock: fields.created_at_sender_clock,
            position: fields.position,
            speed: fields.speed,
            payload_size: fields.payload.len() as u32,
            payload_digest: payload_digest(&fields.payload),
            payload: fields.payload,
            auth_tag: None,
            ttl: fields.ttl,
            flow_id: fields.flow_id,
            seq_in_flow,
            malicious_payload: fields.malicious_payload,
        })
    }
}
