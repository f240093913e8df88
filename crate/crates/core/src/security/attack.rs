//! Attack descriptions and their translation into engine events.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EventKind, SimTime};
use crate::packet::{PacketFactory, PacketFields, PacketKind};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackKind {
    DosFlood,
    DdosFlood,
    PacketForge,
    Eavesdrop,
    UserPrivEsc,
    SensorTamper,
    ActuatorTamper,
}

impl AttackKind {
    pub fn is_flood(self) -> bool {
        matches!(self, AttackKind::DosFlood | AttackKind::DdosFlood)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTarget {
    Node(NodeId),
    Edge(NodeId, NodeId),
}

impl AttackTarget {
    pub fn node(self) -> Option<NodeId> {
        match self {
            AttackTarget::Node(n) => Some(n),
            AttackTarget::Edge(..) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub start: SimTime,
    pub stop: SimTime,
    pub target: AttackTarget,
    /// Packets (or requests) per tick, per source.
    pub rate: f64,
    /// Attacker-controlled nodes. One for everything but DDoS.
    #[serde(default)]
    pub sources: Vec<NodeId>,
    /// Sensor bias, or the value forced onto an actuator.
    #[serde(default)]
    pub magnitude: f64,
    /// Flow impersonated by a forgery.
    #[serde(default)]
    pub flow: u64,
    /// Subject id used by privilege-escalation requests.
    #[serde(default)]
    pub subject: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttackError {
    #[error("invalid attack spec: {0}")]
    InvalidSpec(String),
}

impl AttackSpec {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::InvalidSpec(m.into()));
        if self.start >= self.stop {
            return bad("start must precede stop");
        }
        let emits = matches!(
            self.kind,
            AttackKind::DosFlood | AttackKind::DdosFlood | AttackKind::PacketForge | AttackKind::UserPrivEsc
        );
        if emits && !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad("rate must be positive");
        }
        match self.kind {
            AttackKind::DdosFlood if self.sources.len() < 2 => bad("DDoS needs at least two sources"),
            AttackKind::DosFlood | AttackKind::PacketForge | AttackKind::UserPrivEsc if self.sources.len() != 1 => {
                bad("exactly one source expected")
            }
            AttackKind::Eavesdrop if !matches!(self.target, AttackTarget::Edge(..)) => bad("eavesdrop taps an edge"),
            k if k != AttackKind::Eavesdrop && matches!(self.target, AttackTarget::Edge(..)) => {
                bad("target must be a node")
            }
            _ => Ok(()),
        }
    }
}

/// Packets sent in each tick of `[start, stop)` at a fractional `rate`:
/// tick `t` carries `floor(rate*(t-start+1)) - floor(rate*(t-start))`.
pub fn emission_ticks(rate: f64, start: SimTime, stop: SimTime) -> Vec<(SimTime, u32)> {
    (0..stop.saturating_since(start))
        .filter_map(|i| {
            let n = ((rate * (i + 1) as f64).floor() - (rate * i as f64).floor()) as u32;
            (n > 0).then_some((start.after(i), n))
        })
        .collect()
}

pub const ATTACK_FLOW_BASE: u64 = 1 << 48;

/// Flow id used by source `source` of attack number `attack`.
pub fn attack_flow(attack: usize, source: usize) -> u64 {
    ATTACK_FLOW_BASE + (attack as u64) * 1024 + source as u64
}

pub const PRIV_ESC_ACTION: &[u8] = b"reconfigure";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Injected {
    pub events: usize,
    pub packets: usize,
}

/// Schedules the start/stop markers and every packet the attack emits.
/// Privilege-escalation requests travel as CONTROL packets whose flow id is
/// the requesting subject.
pub fn inject_attack(
    engine: &mut Engine,
    spec: &AttackSpec,
    index: usize,
    factory: &mut PacketFactory,
    rng: &mut impl RngCore,
) -> Result<Injected, AttackError> {
    spec.validate()?;
    let mut out = Injected::default();
    let sched = |engine: &mut Engine, at: SimTime, kind: EventKind| {
        engine
            .schedule(at, kind)
            .map_err(|e| AttackError::InvalidSpec(e.to_string()))
    };
    sched(engine, spec.start, EventKind::AttackStart { attack: index })?;
    sched(engine, spec.stop, EventKind::AttackStop { attack: index })?;
    out.events += 2;
    let target = match spec.target {
        AttackTarget::Node(n) => n,
        AttackTarget::Edge(..) => return Ok(out),
    };
    if matches!(spec.kind, AttackKind::SensorTamper | AttackKind::ActuatorTamper) {
        return Ok(out);
    }
    for (si, &src) in spec.sources.iter().enumerate() {
        for (at, n) in emission_ticks(spec.rate, spec.start, spec.stop) {
            for _ in 0..n {
                let fields = match spec.kind {
                    AttackKind::PacketForge => PacketFields::new(src, target, PacketKind::Data, spec.flow)
                        .payload(rng.next_u64().to_le_bytes().to_vec()),
                    AttackKind::UserPrivEsc => PacketFields::new(src, target, PacketKind::Control, spec.subject)
                        .payload(PRIV_ESC_ACTION.to_vec()),
                    _ => {
                        PacketFields::new(src, target, PacketKind::Data, attack_flow(index, si)).payload(vec![0xAA; 16])
                    }
                };
                let mut packet = factory
                    .make_packet(fields)
                    .map_err(|e| AttackError::InvalidSpec(e.to_string()))?;
                if spec.kind == AttackKind::PacketForge {
                    // Garbage tag half the time, no tag otherwise.
                    let guess = rng.next_u64();
                    packet.auth_tag = (guess & 1 == 0).then_some(guess);
                }
                sched(
                    engine,
                    at,
                    EventKind::PacketSend {
                        node: src,
                        packet: Box::new(packet),
                    },
                )?;
                out.events += 1;
                out.packets += 1;
            }
        }
    }
    Ok(out)
}
