//! Units shared by every sub-controller: the organizer and the aggregate unit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::packet::{Packet, PacketKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QosMatch {
    /// Flows registered as emergency traffic.
    EmergencyFlow,
    Kind(PacketKind),
    Flow(u64),
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosRule {
    pub matcher: QosMatch,
    pub priority: u8,
}

/// Ordered rule list; the first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosRules {
    pub rules: Vec<QosRule>,
    pub emergency_flows: BTreeSet<u64>,
}

impl Default for QosRules {
    fn default() -> Self {
        let r = |matcher, priority| QosRule { matcher, priority };
        Self {
            rules: vec![
                r(QosMatch::EmergencyFlow, 0),
                r(QosMatch::Kind(PacketKind::Security), 1),
                r(QosMatch::Kind(PacketKind::Control), 2),
                r(QosMatch::Kind(PacketKind::Actuate), 2),
                r(QosMatch::Kind(PacketKind::Sense), 3),
                r(QosMatch::Any, 4),
            ],
            emergency_flows: BTreeSet::new(),
        }
    }
}

impl QosRules {
    fn matches(&self, m: &QosMatch, p: &Packet) -> bool {
        match m {
            QosMatch::EmergencyFlow => self.emergency_flows.contains(&p.flow_id),
            QosMatch::Kind(k) => p.kind == *k,
            QosMatch::Flow(f) => p.flow_id == *f,
            QosMatch::Any => true,
        }
    }
}

pub const DEFAULT_PRIORITY: u8 = 4;

pub fn organize_priority(packet: &Packet, rules: &QosRules) -> u8 {
    rules
        .rules
        .iter()
        .find(|r| rules.matches(&r.matcher, packet))
        .map_or(DEFAULT_PRIORITY, |r| r.priority)
}

/// Per-flow batching: a flow's batch is released once it holds `threshold`
/// packets or its earliest deadline has come.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregator {
    threshold: usize,
    pending: BTreeMap<u64, Vec<Packet>>,
}

impl Aggregator {
    pub fn new(threshold: usize) -> Self {
        Self {
            threshold: threshold.max(1),
            pending: BTreeMap::new(),
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }

    pub fn push(&mut self, packet: Packet, now: SimTime) -> Option<Vec<Packet>> {
        let flow = packet.flow_id;
        let batch = self.pending.entry(flow).or_default();
        batch.push(packet);
        let due = batch.iter().filter_map(|p| p.deadline).min().is_some_and(|d| d <= now);
        if batch.len() >= self.threshold || due {
            self.pending.remove(&flow)
        } else {
            None
        }
    }

    /// Releases every batch whose earliest deadline is at or before `now`.
    pub fn flush_due(&mut self, now: SimTime) -> Vec<Vec<Packet>> {
        let due: Vec<u64> = self
            .pending
            .iter()
            .filter(|(_, b)| b.iter().filter_map(|p| p.deadline).min().is_some_and(|d| d <= now))
            .map(|(f, _)| *f)
            .collect();
        due.into_iter().filter_map(|f| self.pending.remove(&f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{PacketFactory, PacketFields};
    use crate::topology::NodeId;

    fn pkt(f: &mut PacketFactory, kind: PacketKind, flow: u64) -> Packet {
        f.make_packet(PacketFields::new(NodeId(1), NodeId(2), kind, flow))
            .unwrap()
    }

    #[test]
    fn default_table() {
        let mut f = PacketFactory::new();
        let mut rules = QosRules::default();
        assert_eq!(organize_priority(&pkt(&mut f, PacketKind::Security, 1), &rules), 1);
        assert_eq!(organize_priority(&pkt(&mut f, PacketKind::Data, 1), &rules), 4);
        rules.emergency_flows.insert(7);
        assert_eq!(organize_priority(&pkt(&mut f, PacketKind::Data, 7), &rules), 0);
        rules.rules.clear();
        assert_eq!(
            organize_priority(&pkt(&mut f, PacketKind::Control, 1), &rules),
            DEFAULT_PRIORITY
        );
    }

    #[test]
    fn batches_release_at_threshold_or_deadline() {
        let mut f = PacketFactory::new();
        let mut agg = Aggregator::new(4);
        for _ in 0..3 {
            assert!(agg.push(pkt(&mut f, PacketKind::Sense, 1), SimTime(0)).is_none());
        }
        assert_eq!(
            agg.push(pkt(&mut f, PacketKind::Sense, 1), SimTime(0)).unwrap().len(),
            4
        );

        let mut urgent = pkt(&mut f, PacketKind::Sense, 2);
        urgent.deadline = Some(SimTime(5));
        assert!(agg.push(urgent, SimTime(1)).is_none());
        assert!(agg.flush_due(SimTime(4)).is_empty());
        assert_eq!(agg.flush_due(SimTime(5)).len(), 1);
        assert_eq!(agg.pending(), 0);
    }
}
