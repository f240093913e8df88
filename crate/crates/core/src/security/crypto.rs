//! Toy keyed digest and stream cipher for sealing packets.
//!
//! Not cryptographically secure. The mixing function is the SplitMix64
//! finalizer (constants 0x9E3779B97F4A7C15, 0xBF58476D1CE4E5B9,
//! 0x94D049BB133111EB); it only has to make forged tags fail verification
//! in simulation.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{payload_digest, Packet};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed 64-bit digest over a sequence of words.
pub fn keyed_digest(key: u64, words: &[u64]) -> u64 {
    let mut h = mix64(key ^ GOLDEN);
    for (i, w) in words.iter().enumerate() {
        h = mix64(h ^ w.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN)));
    }
    mix64(h ^ key)
}

fn header_words(p: &Packet) -> [u64; 7] {
    [
        u64::from(p.src.0),
        u64::from(p.dst.0),
        p.kind as u64,
        u64::from(p.priority),
        p.flow_id,
        p.seq_in_flow,
        p.payload_digest,
    ]
}

/// XORs `data` with a SplitMix64 keystream seeded from `key` and `nonce`.
/// Applying it twice restores the input.
pub fn keystream_xor(key: u64, nonce: u64, data: &mut [u8]) {
    let mut state = mix64(key ^ mix64(nonce));
    for chunk in data.chunks_mut(8) {
        state = state.wrapping_add(GOLDEN);
        let block = mix64(state).to_le_bytes();
        for (b, k) in chunk.iter_mut().zip(block) {
            *b ^= k;
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("no key for flow {0}")]
    NoKey(u64),
}

/// Per-flow shared keys plus the eavesdrop-protection switch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRing {
    keys: BTreeMap<u64, u64>,
    pub encryption: bool,
}

impl KeyRing {
    pub fn new(encryption: bool) -> Self {
        Self {
            keys: BTreeMap::new(),
            encryption,
        }
    }

    pub fn issue(&mut self, flow: u64, rng: &mut impl RngCore) -> u64 {
        *self.keys.entry(flow).or_insert_with(|| rng.next_u64())
    }

    pub fn insert(&mut self, flow: u64, key: u64) {
        self.keys.insert(flow, key);
    }

    pub fn revoke(&mut self, flow: u64) {
        self.keys.remove(&flow);
    }

    pub fn key(&self, flow: u64) -> Option<u64> {
        self.keys.get(&flow).copied()
    }

    pub fn protects(&self, flow: u64) -> bool {
        self.keys.contains_key(&flow)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Encrypts the payload when encryption is on, then tags the packet.
pub fn seal(packet: &mut Packet, ring: &KeyRing) -> Result<(), CryptoError> {
    let key = ring.key(packet.flow_id).ok_or(CryptoError::NoKey(packet.flow_id))?;
    if ring.encryption {
        keystream_xor(key, packet.id, &mut packet.payload);
        packet.payload_digest = payload_digest(&packet.payload);
    }
    packet.auth_tag = Some(keyed_digest(key, &header_words(packet)));
    Ok(())
}

pub fn verify_tag(packet: &Packet, ring: &KeyRing) -> bool {
    match (ring.key(packet.flow_id), packet.auth_tag) {
        (Some(key), Some(tag)) => {
            payload_digest(&packet.payload) == packet.payload_digest && keyed_digest(key, &header_words(packet)) == tag
        }
        _ => false,
    }
}

/// Reverses the payload transform of [`seal`] at the receiver.
pub fn open(packet: &mut Packet, ring: &KeyRing) -> Result<(), CryptoError> {
    let key = ring.key(packet.flow_id).ok_or(CryptoError::NoKey(packet.flow_id))?;
    if ring.encryption {
        keystream_xor(key, packet.id, &mut packet.payload);
        packet.payload_digest = payload_digest(&packet.payload);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{PacketFactory, PacketFields, PacketKind};
    use crate::topology::NodeId;

    fn packet() -> Packet {
        PacketFactory::new()
            .make_packet(
                PacketFields::new(NodeId(1), NodeId(9), PacketKind::Data, 3).payload(b"set point 21.5".to_vec()),
            )
            .unwrap()
    }

    #[test]
    fn mix_reference_value() {
        // First SplitMix64 output for seed 0.
        assert_eq!(mix64(GOLDEN), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn seal_then_verify() {
        let mut ring = KeyRing::new(false);
        ring.insert(3, 0xfeed);
        let mut p = packet();
        seal(&mut p, &ring).unwrap();
        assert!(verify_tag(&p, &ring));
        p.payload_digest ^= 1;
        assert!(!verify_tag(&p, &ring));
    }

    #[test]
    fn missing_key() {
        let ring = KeyRing::new(false);
        let mut p = packet();
        assert_eq!(seal(&mut p, &ring), Err(CryptoError::NoKey(3)));
        assert!(!verify_tag(&p, &ring));
    }

    #[test]
    fn encryption_round_trip() {
        let mut ring = KeyRing::new(true);
        ring.insert(3, 77);
        let mut p = packet();
        let plain = p.payload.clone();
        seal(&mut p, &ring).unwrap();
        assert_ne!(p.payload, plain);
        assert!(verify_tag(&p, &ring));
        open(&mut p, &ring).unwrap();
        assert_eq!(p.payload, plain);
    }
}
