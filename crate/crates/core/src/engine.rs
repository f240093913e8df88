//! Discrete-event engine: simulation clock, event queue and trace log.
//!
//! Events are delivered in lexicographic `(at, seq)` order. `seq` is assigned
//! by the engine at scheduling time, so two events scheduled for the same tick
//! come out in insertion order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::packet::Packet;
use crate::topology::{LinkChange, NodeId};

/// Simulated time in ticks. One tick is one millisecond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn ticks(self) -> u64 {
        self.0
    }

    pub fn after(self, ticks: u64) -> SimTime {
        SimTime(self.0 + ticks)
    }

    pub fn saturating_since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Work performed by a periodic tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Tick {
    /// Step every plant by one control period.
    Plants,
    /// Let a node drain its scheduler up to its per-tick capacity.
    Serve(NodeId),
    /// Close the current security monitoring window.
    SecurityWindow,
    /// Look for controllers that stopped sending heartbeats.
    LivenessCheck,
}

/// Why a timeout fired.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeoutKind {
    Request(u64),
    Escalation(u64),
    Rule(u64),
}

/// Kind-specific event payload.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    ControlTick(Tick),
    /// A packet originates at `node` and enters its outbound queue.
    PacketSend {
        node: NodeId,
        packet: Box<Packet>,
    },
    /// A packet arrives at `node` over a link.
    PacketArrive {
        node: NodeId,
        packet: Box<Packet>,
    },
    LinkChange(LinkChange),
    DeviceJoin {
        device: NodeId,
        owner: NodeId,
    },
    DeviceLeave {
        device: NodeId,
    },
    AttackStart {
        attack: usize,
    },
    AttackStop {
        attack: usize,
    },
    Heartbeat {
        node: NodeId,
    },
    Timeout(TimeoutKind),
    /// Hard failure of a controller (fault injection).
    Fail {
        node: NodeId,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ControlTick(_) => "ControlTick",
            EventKind::PacketSend { .. } => "PacketSend",
            EventKind::PacketArrive { .. } => "PacketArrive",
            EventKind::LinkChange(_) => "LinkChange",
            EventKind::DeviceJoin { .. } => "DeviceJoin",
            EventKind::DeviceLeave { .. } => "DeviceLeave",
            EventKind::AttackStart { .. } => "AttackStart",
            EventKind::AttackStop { .. } => "AttackStop",
            EventKind::Heartbeat { .. } => "Heartbeat",
            EventKind::Timeout(_) => "Timeout",
            EventKind::Fail { .. } => "Fail",
        }
    }

    /// `(src, dst, detail)` columns of the trace line.
    fn trace_columns(&self) -> (String, String, String) {
        let none = String::from("-");
        match self {
            EventKind::ControlTick(t) => match t {
                Tick::Plants => (none.clone(), none, "plants".into()),
                Tick::Serve(n) => (n.to_string(), none, "serve".into()),
                Tick::SecurityWindow => (none.clone(), none, "security_window".into()),
                Tick::LivenessCheck => (none.clone(), none, "liveness".into()),
            },
            EventKind::PacketSend { node, packet } | EventKind::PacketArrive { node, packet } => (
                packet.src.to_string(),
                packet.dst.to_string(),
                format!(
                    "at={} id={} flow={} seq={} prio={} kind={:?} ttl={}",
                    node, packet.id, packet.flow_id, packet.seq_in_flow, packet.priority, packet.kind, packet.ttl
                ),
            ),
            EventKind::LinkChange(c) => {
                let (a, b) = c.edge();
                (a.to_string(), b.to_string(), c.describe())
            }
            EventKind::DeviceJoin { device, owner } => (device.to_string(), owner.to_string(), "join".into()),
            EventKind::DeviceLeave { device } => (device.to_string(), none, "leave".into()),
            EventKind::AttackStart { attack } => (none.clone(), none, format!("attack={attack}")),
            EventKind::AttackStop { attack } => (none.clone(), none, format!("attack={attack}")),
            EventKind::Heartbeat { node } => (node.to_string(), none, "heartbeat".into()),
            EventKind::Timeout(k) => (
                none.clone(),
                none,
                match k {
                    TimeoutKind::Request(r) => format!("request={r}"),
                    TimeoutKind::Escalation(r) => format!("escalation={r}"),
                    TimeoutKind::Rule(r) => format!("rule={r}"),
                },
            ),
            EventKind::Fail { node } => (node.to_string(), none, "fail".into()),
        }
    }
}

/// A scheduled event. `(at, seq)` is a total order over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    /// One `tick,seq,kind,src,dst,detail` record, without the newline.
    pub fn trace_line(&self) -> String {
        let (src, dst, detail) = self.kind.trace_columns();
        format!(
            "{},{},{},{},{},{}",
            self.at,
            self.seq,
            self.kind.name(),
            src,
            dst,
            detail
        )
    }
}

struct Queued(Event);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.0.at == other.0.at && self.0.seq == other.0.seq
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.0.at, self.0.seq).cmp(&(other.0.at, other.0.seq))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event at {at} is in the past (now = {now})")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("event queue drained")]
    Drained,
}

/// Running digest of the event trace, optionally mirrored to a writer.
pub struct TraceLog {
    hasher: Sha256,
    sink: Option<Box<dyn Write + Send>>,
    lines: u64,
    io_error: Option<std::io::Error>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self {
            hasher: Sha256::new(),
            sink: None,
            lines: 0,
            io_error: None,
        }
    }

    pub fn with_sink(sink: Box<dyn Write + Send>) -> Self {
        Self {
            sink: Some(sink),
            ..Self::new()
        }
    }

    /// Appends a raw line (used for cell headers and events alike).
    pub fn record(&mut self, line: &str) {
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.lines += 1;
        if let Some(sink) = self.sink.as_mut() {
            if self.io_error.is_none() {
                if let Err(e) = writeln!(sink, "{line}") {
                    self.io_error = Some(e);
                }
            }
        }
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    /// Hex digest of everything recorded so far.
    pub fn digest(&self) -> String {
        hex(&self.hasher.clone().finalize())
    }

    /// Flushes the sink and returns the digest, or the first I/O error hit.
    pub fn finish(mut self) -> std::io::Result<(String, Option<Box<dyn Write + Send>>)> {
        if let Some(e) = self.io_error.take() {
            return Err(e);
        }
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        let digest = self.digest();
        Ok((digest, self.sink))
    }
}

impl Default for TraceLog {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// SHA-256 digest of a trace file's text, line-normalized the same way
/// [`TraceLog`] hashes it.
pub fn digest_trace_text(text: &str) -> String {
    let mut log = TraceLog::new();
    for line in text.lines() {
        log.record(line);
    }
    log.digest()
}

/// Single-threaded discrete-event engine.
pub struct Engine {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    trace: Option<TraceLog>,
    delivered: u64,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new()
    }
}

impl Engine {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            trace: None,
            delivered: 0,
        }
    }

    pub fn with_trace(trace: TraceLog) -> Self {
        Self {
            trace: Some(trace),
            ..Self::new()
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Time of the next pending event.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.0.at)
    }

    /// Enqueues an event and returns the sequence number it was assigned.
    pub fn schedule(&mut self, at: SimTime, kind: EventKind) -> Result<u64, EngineError> {
        if at < self.now {
            return Err(EngineError::PastEvent { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued(Event { at, seq, kind })));
        Ok(seq)
    }

    /// Schedules `delay` ticks from now. Never fails.
    pub fn schedule_in(&mut self, delay: u64, kind: EventKind) -> u64 {
        let at = self.now.after(delay);
        self.schedule(at, kind).expect("future event")
    }

    /// Removes the globally minimal `(at, seq)` event and moves the clock to it.
    pub fn advance(&mut self) -> Result<(SimTime, Event), EngineError> {
        let Reverse(Queued(event)) = self.queue.pop().ok_or(EngineError::Drained)?;
        self.now = event.at;
        self.delivered += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.record(&event.trace_line());
        }
        Ok((event.at, event))
    }

    /// Writes a free-form line into the trace, e.g. a run header.
    pub fn trace_note(&mut self, line: &str) {
        if let Some(trace) = self.trace.as_mut() {
            trace.record(line);
        }
    }

    pub fn trace(&self) -> Option<&TraceLog> {
        self.trace.as_ref()
    }

    pub fn take_trace(&mut self) -> Option<TraceLog> {
        self.trace.take()
    }
}
