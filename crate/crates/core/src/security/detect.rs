//! Windowed traffic statistics and the scanning/detection rules applied to them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::topology::NodeId;

/// θ, W, D and C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Packets per window per (src, dst) above which a flood is reported.
    pub flood_threshold: u32,
    /// Window length in ticks.
    pub window: u64,
    /// Denials per subject per window that count as privilege escalation.
    pub denial_limit: u32,
    /// Ticks a prevention rule outlives its handling.
    pub cooldown: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            flood_threshold: 20,
            window: 50,
            denial_limit: 3,
            cooldown: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingKind {
    Flood,
    Forge,
    PrivEsc,
    MaliciousPayload,
    Tamper,
    Corruption,
    Anomaly,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::Flood => "FLOOD",
            FindingKind::Forge => "FORGE",
            FindingKind::PrivEsc => "PRIV_ESC",
            FindingKind::MaliciousPayload => "MALICIOUS_PAYLOAD",
            FindingKind::Tamper => "TAMPER",
            FindingKind::Corruption => "CORRUPTION",
            FindingKind::Anomaly => "ANOMALY",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingState {
    Detected,
    Prevented,
    Handled,
}

impl fmt::Display for FindingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingState::Detected => "DETECTED",
            FindingState::Prevented => "PREVENTED",
            FindingState::Handled => "HANDLED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingTarget {
    Pair(NodeId, NodeId),
    Flow { flow: u64, src: NodeId },
    Subject(u64),
    Node(NodeId),
}

impl fmt::Display for FindingTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingTarget::Pair(a, b) => write!(f, "{a}->{b}"),
            FindingTarget::Flow { flow, src } => write!(f, "flow {flow} from {src}"),
            FindingTarget::Subject(s) => write!(f, "subject {s}"),
            FindingTarget::Node(n) => write!(f, "node {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: u64,
    pub kind: FindingKind,
    pub evidence: String,
    pub at: SimTime,
    pub target: FindingTarget,
    pub state: FindingState,
}

impl Finding {
    /// `tick,kind,target,state,evidence`
    pub fn log_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.at, self.kind, self.target, self.state, self.evidence
        )
    }
}

/// Counters gathered during one window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStats {
    pub start: SimTime,
    #[serde(with = "crate::pairs")]
    pub pair_counts: BTreeMap<(NodeId, NodeId), u32>,
    /// (packet id, flow, claimed source) for every failed tag check.
    pub tag_failures: Vec<(u64, u64, NodeId)>,
    pub denials: BTreeMap<u64, u32>,
    /// (packet id, source) for packets whose payload matched a signature.
    pub payload_hits: Vec<(u64, NodeId)>,
}

impl WindowStats {
    pub fn new(start: SimTime) -> Self {
        Self {
            start,
            ..Self::default()
        }
    }

    pub fn observe(&mut self, src: NodeId, dst: NodeId) {
        *self.pair_counts.entry((src, dst)).or_insert(0) += 1;
    }

    pub fn tag_failure(&mut self, packet: u64, flow: u64, src: NodeId) {
        self.tag_failures.push((packet, flow, src));
    }

    pub fn denial(&mut self, subject: u64) {
        *self.denials.entry(subject).or_insert(0) += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.pair_counts.is_empty()
            && self.tag_failures.is_empty()
            && self.denials.is_empty()
            && self.payload_hits.is_empty()
    }
}

/// Findings for a completed window, ids starting at `next_id`.
pub fn scan_window(stats: &WindowStats, params: &DetectorParams, now: SimTime, next_id: u64) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut push = |kind, target, evidence: String| {
        out.push(Finding {
            id: next_id + out.len() as u64,
            kind,
            evidence,
            at: now,
            target,
            state: FindingState::Detected,
        });
    };
    for (&(s, d), &n) in &stats.pair_counts {
        if n > params.flood_threshold {
            push(
                FindingKind::Flood,
                FindingTarget::Pair(s, d),
                format!("{n} packets in {} ticks", params.window),
            );
        }
    }
    for &(pid, flow, src) in &stats.tag_failures {
        push(
            FindingKind::Forge,
            FindingTarget::Flow { flow, src },
            format!("tag check failed on packet {pid}"),
        );
    }
    for (&subject, &n) in &stats.denials {
        if n >= params.denial_limit {
            push(
                FindingKind::PrivEsc,
                FindingTarget::Subject(subject),
                format!("{n} denials"),
            );
        }
    }
    for &(pid, src) in &stats.payload_hits {
        push(
            FindingKind::MaliciousPayload,
            FindingTarget::Node(src),
            format!("signature match on packet {pid}"),
        );
    }
    out
}
