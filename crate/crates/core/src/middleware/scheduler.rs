//! Kernel-space packet scheduler: strict priority across classes, EDF within a class.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::SimTime;
use crate::packet::{Packet, MAX_PRIORITY};
use crate::topology::NodeId;

pub const CLASSES: usize = MAX_PRIORITY as usize + 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error("packet {id} expired: deadline {deadline} before now {now}")]
    Expired { id: u64, deadline: SimTime, now: SimTime },
    #[error("priority {0} outside 0..=7")]
    InvalidPriority(u8),
}

/// A packet waiting in a queue, stamped with its arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct Queued {
    pub packet: Packet,
    pub enqueued_at: SimTime,
}

type Key = (u64, u64);

#[derive(Debug, Clone, Default)]
struct Lane {
    queues: [BTreeMap<Key, Queued>; CLASSES],
    len: usize,
}

impl Lane {
    fn pop(&mut self) -> Option<Queued> {
        let q = self.queues.iter_mut().find(|q| !q.is_empty())?;
        self.len -= 1;
        q.pop_first().map(|(_, v)| v)
    }

    fn head_priority(&self) -> Option<usize> {
        self.queues.iter().position(|q| !q.is_empty())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scheduler {
    lanes: BTreeMap<usize, Lane>,
    /// Destination -> location bin. Empty means bins are off.
    bin_of: BTreeMap<NodeId, usize>,
    cursor: usize,
    next_seq: u64,
    len: usize,
    pub expired: u64,
    pub dispatched: u64,
    trace: Option<String>,
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shards queues by the destination's bin; bins are served round-robin.
    pub fn with_location_bins(bin_of: BTreeMap<NodeId, usize>) -> Self {
        Self {
            bin_of,
            ..Self::default()
        }
    }

    /// Keeps `tick,packet_id,priority,deadline,action` rows.
    pub fn enable_trace(&mut self) {
        self.trace = Some(String::new());
    }

    pub fn take_trace(&mut self) -> Option<String> {
        self.trace.replace(String::new())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn log(&mut self, now: SimTime, p: &Packet, action: &str) {
        if let Some(t) = &mut self.trace {
            let dl = p.deadline.map_or(String::new(), |d| d.to_string());
            let _ = writeln!(t, "{now},{},{},{dl},{action}", p.id, p.priority);
        }
    }

    pub fn enqueue(&mut self, packet: Packet, now: SimTime) -> Result<(), SchedError> {
        if packet.priority > MAX_PRIORITY {
            return Err(SchedError::InvalidPriority(packet.priority));
        }
        if let Some(d) = packet.deadline {
            if d < now {
                self.expired += 1;
                self.log(now, &packet, "expire");
                return Err(SchedError::Expired {
                    id: packet.id,
                    deadline: d,
                    now,
                });
            }
        }
        self.log(now, &packet, "enqueue");
        let bin = self.bin_of.get(&packet.dst).copied().unwrap_or(0);
        let key = (packet.deadline.map_or(u64::MAX, SimTime::ticks), self.next_seq);
        self.next_seq += 1;
        let lane = self.lanes.entry(bin).or_default();
        lane.queues[packet.priority as usize].insert(
            key,
            Queued {
                packet,
                enqueued_at: now,
            },
        );
        lane.len += 1;
        self.len += 1;
        Ok(())
    }

    /// Next packet, or `None` when idle.
    pub fn dispatch(&mut self, now: SimTime) -> Option<Queued> {
        if self.len == 0 {
            return None;
        }
        let bin = self
            .lanes
            .range(self.cursor..)
            .chain(self.lanes.range(..self.cursor))
            .find(|(_, l)| l.len > 0)
            .map(|(b, _)| *b)?;
        let q = self.lanes.get_mut(&bin).unwrap().pop()?;
        self.cursor = bin + 1;
        self.len -= 1;
        self.dispatched += 1;
        self.log(now, &q.packet.clone(), "dispatch");
        Some(q)
    }

    /// Most urgent class currently queued in any bin.
    pub fn head_priority(&self) -> Option<u8> {
        self.lanes
            .values()
            .filter_map(Lane::head_priority)
            .min()
            .map(|p| p as u8)
    }

    /// Removes and returns everything still queued, in dispatch order per bin.
    pub fn drain(&mut self) -> Vec<Queued> {
        let mut out = Vec::with_capacity(self.len);
        for lane in self.lanes.values_mut() {
            while let Some(q) = lane.pop() {
                out.push(q);
            }
        }
        self.len = 0;
        out
    }
}
