//! Runs a configured system: closed-loop request traffic over the forwarding
//! tables, plant steps, security windows, heartbeats and failover.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DVector;
use rand::Rng;

use super::config::Pattern;
use super::setup::{System, STREAM_ATTACKS, STREAM_PLANTS, STREAM_WORKLOAD};
use crate::control::decision::{handle_request, ControlRequest, DecisionRecord};
use crate::control::node::NodeStatus;
use crate::control::units::organize_priority;
use crate::engine::{Engine, EventKind, SimTime, Tick, TimeoutKind, TraceLog};
use crate::middleware::clock::sync_round;
use crate::middleware::registry::FailoverPlan;
use crate::packet::{Packet, PacketFactory, PacketFields, PacketKind};
use crate::plant::{local_control, step_plant};
use crate::rng::SimRng;
use crate::security::attack::{inject_attack, AttackKind, AttackTarget, PRIV_ESC_ACTION};
use crate::security::crypto::{open, seal, verify_tag};
use crate::security::detect::{FindingKind, FindingState, FindingTarget};
use crate::security::policy::SubjectRole;
use crate::topology::{LinkChange, NodeId, Role};

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Until this many requests have completed or been lost.
    Requests(u64),
    /// Until simulated time reaches this tick.
    Until(SimTime),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    Rule,
    /// A keyed flow's packet failed tag verification at ingress.
    BadTag,
    DeadNode,
    NoRoute,
    TtlExpired,
    Expired,
}

/// Payload bytes an eavesdropping tap saw go by.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapCapture {
    pub attack: usize,
    pub packet: u64,
    pub flow: u64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureRecord {
    pub node: NodeId,
    pub at: SimTime,
    /// Requests outstanding when the node died.
    pub in_flight: usize,
    pub served_before: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailoverRecord {
    pub plan: FailoverPlan,
    pub failed_at: Option<SimTime>,
    pub served_at_failover: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOutcome {
    pub issued: u64,
    pub served: u64,
    pub lost: u64,
    pub end_time: SimTime,
    pub delivered_packets: u64,
    pub drops: BTreeMap<DropReason, u64>,
    /// Completed requests per source host.
    pub served_by_source: BTreeMap<NodeId, u64>,
    pub failures: Vec<FailureRecord>,
    pub failovers: Vec<FailoverRecord>,
    pub taps: Vec<TapCapture>,
    /// Digests of legitimate plaintext payloads, kept while a tap is configured.
    pub plaintext_digests: BTreeSet<u64>,
    pub decisions: Vec<DecisionRecord>,
    /// `node,tick,kind,target,state,evidence` for every controller.
    pub findings: Vec<String>,
    pub trace_digest: Option<String>,
    pub trace_lines: u64,
}

impl SimOutcome {
    pub fn dropped(&self, reason: DropReason) -> u64 {
        self.drops.get(&reason).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
struct Request {
    src: NodeId,
    delivered: u32,
    packets: Vec<u64>,
}

pub struct Simulation {
    pub sys: System,
    engine: Engine,
    mode: RunMode,
    workload_rng: SimRng,
    plant_rng: SimRng,
    factory: PacketFactory,
    hosts: Vec<NodeId>,
    host_index: HashMap<NodeId, usize>,
    requests: BTreeMap<u64, Request>,
    packet_request: HashMap<u64, u64>,
    next_request: u64,
    dead: BTreeSet<NodeId>,
    serve_pending: BTreeSet<NodeId>,
    last_serve: HashMap<NodeId, SimTime>,
    active_attacks: BTreeSet<usize>,
    keep_plaintext: bool,
    out: SimOutcome,
}

impl Simulation {
    pub fn new(sys: System, mode: RunMode, trace: Option<TraceLog>) -> Self {
        let seed = sys.config.seed;
        let root = SimRng::new(seed);
        let hosts = sys.hosts();
        let host_index = hosts.iter().enumerate().map(|(i, h)| (*h, i)).collect();
        let keep_plaintext = sys.config.attacks.iter().any(|a| a.kind == AttackKind::Eavesdrop);
        let engine = match trace {
            Some(t) => Engine::with_trace(t),
            None => Engine::new(),
        };
        Self {
            engine,
            mode,
            workload_rng: root.split(STREAM_WORKLOAD),
            plant_rng: root.split(STREAM_PLANTS),
            factory: PacketFactory::new(),
            hosts,
            host_index,
            requests: BTreeMap::new(),
            packet_request: HashMap::new(),
            next_request: 0,
            dead: BTreeSet::new(),
            serve_pending: BTreeSet::new(),
            last_serve: HashMap::new(),
            active_attacks: BTreeSet::new(),
            keep_plaintext,
            out: SimOutcome::default(),
            sys,
        }
    }

    /// Writes a free-form line into the trace before the run starts.
    pub fn trace_note(&mut self, line: &str) {
        self.engine.trace_note(line);
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn outcome(&self) -> &SimOutcome {
        &self.out
    }

    pub fn is_dead(&self, node: NodeId) -> bool {
        self.dead.contains(&node)
    }

    /// Runs to completion and returns the outcome and the trace, if any.
    pub fn run(mut self) -> (SimOutcome, Option<TraceLog>, System) {
        self.start();
        loop {
            let finished = match self.mode {
                RunMode::Requests(n) => self.out.served + self.out.lost >= n || self.hosts.len() < 2,
                RunMode::Until(t) => self.engine.peek_time().is_none_or(|next| next >= t),
            };
            if finished {
                break;
            }
            let Ok((now, event)) = self.engine.advance() else { break };
            self.out.end_time = now;
            self.handle(now, event.kind);
        }
        if let RunMode::Until(t) = self.mode {
            self.out.end_time = t;
        }
        for (id, node) in &self.sys.nodes {
            for row in node.sdsecurity.log() {
                self.out.findings.push(format!("{id},{row}"));
            }
        }
        let trace = self.engine.take_trace();
        if let Some(t) = &trace {
            self.out.trace_digest = Some(t.digest());
            self.out.trace_lines = t.lines();
        }
        (self.out, trace, self.sys)
    }

    fn start(&mut self) {
        let cfg = self.sys.config.clone();
        self.engine
            .schedule(
                SimTime(cfg.middleware.control_period),
                EventKind::ControlTick(Tick::Plants),
            )
            .expect("future");
        if cfg.security.enabled {
            self.engine
                .schedule(
                    SimTime(cfg.security.window),
                    EventKind::ControlTick(Tick::SecurityWindow),
                )
                .expect("future");
        }
        let period = cfg.middleware.heartbeat_period;
        let registered: Vec<NodeId> = self.sys.registry.entries().map(|(id, _)| *id).collect();
        for id in registered {
            self.engine
                .schedule(SimTime(period), EventKind::Heartbeat { node: id })
                .expect("future");
        }
        self.engine
            .schedule(SimTime(period), EventKind::ControlTick(Tick::LivenessCheck))
            .expect("future");
        for f in &cfg.failures {
            if self.sys.nodes.contains_key(&f.node) {
                self.engine
                    .schedule(f.at, EventKind::Fail { node: f.node })
                    .expect("future");
            }
        }
        let mut attack_rng = SimRng::new(cfg.seed).split(STREAM_ATTACKS);
        let mut attack_factory = PacketFactory::starting_at(1 << 40);
        for (i, spec) in cfg.attacks.iter().enumerate() {
            if let Err(e) = inject_attack(&mut self.engine, spec, i, &mut attack_factory, &mut attack_rng) {
                log::warn!("attack {i} skipped: {e}");
            }
        }
        if self.hosts.len() < 2 {
            return;
        }
        match cfg.workload.pattern {
            Pattern::Uniform => {
                for _ in 0..cfg.workload.window {
                    self.issue(None);
                }
            }
            Pattern::Symmetric => {
                for h in self.hosts.clone() {
                    self.issue(Some(h));
                }
            }
        }
    }

    fn may_issue(&self) -> bool {
        match self.mode {
            RunMode::Requests(n) => self.out.issued < n,
            RunMode::Until(_) => true,
        }
    }

    /// Starts a request. `src` is fixed under the symmetric pattern.
    fn issue(&mut self, src: Option<NodeId>) {
        if !self.may_issue() {
            return;
        }
        let n = self.hosts.len();
        let now = self.engine.now();
        let (src, dst) = match src {
            Some(s) => {
                let i = self.host_index[&s];
                (s, self.hosts[(i + n / 2) % n])
            }
            None => {
                let i = self.workload_rng.gen_range(0..n);
                let mut j = self.workload_rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (self.hosts[i], self.hosts[j])
            }
        };
        let id = self.next_request;
        self.next_request += 1;
        self.out.issued += 1;
        let cfg = &self.sys.config;
        let flow = System::host_flow(src);
        let stamp = self.sys.clocks.get(&src).map_or(0.0, |c| c.read(now));
        let mut packets = Vec::with_capacity(cfg.workload.flow_packets as usize);
        for _ in 0..cfg.workload.flow_packets {
            let mut payload = vec![0u8; cfg.workload.payload_bytes];
            self.workload_rng.fill(&mut payload[..]);
            let fields = PacketFields::new(src, dst, PacketKind::Data, flow)
                .payload(payload)
                .sender_clock(stamp);
            let mut p = self.factory.make_packet(fields).expect("valid fields");
            p.priority = organize_priority(&p, &self.sys.nodes[&src].qos);
            if self.keep_plaintext {
                self.out.plaintext_digests.insert(p.payload_digest);
            }
            if self.sys.keyring.protects(flow) {
                seal(&mut p, &self.sys.keyring).expect("flow has a key");
            }
            self.packet_request.insert(p.id, id);
            packets.push(p);
        }
        self.requests.insert(
            id,
            Request {
                src,
                delivered: 0,
                packets: packets.iter().map(|p| p.id).collect(),
            },
        );
        for p in packets {
            self.engine.schedule_in(
                0,
                EventKind::PacketSend {
                    node: src,
                    packet: Box::new(p),
                },
            );
        }
        let timeout = cfg.workload.request_timeout;
        self.engine
            .schedule_in(timeout, EventKind::Timeout(TimeoutKind::Request(id)));
    }

    fn replenish(&mut self, src: NodeId) {
        match self.sys.config.workload.pattern {
            Pattern::Uniform => self.issue(None),
            Pattern::Symmetric => self.issue(Some(src)),
        }
    }

    fn drop_packet(&mut self, reason: DropReason) {
        *self.out.drops.entry(reason).or_insert(0) += 1;
    }

    fn handle(&mut self, now: SimTime, kind: EventKind) {
        match kind {
            EventKind::PacketSend { node, packet } => {
                if self.dead.contains(&node) {
                    self.drop_packet(DropReason::DeadNode);
                } else {
                    self.enqueue(node, *packet, now);
                }
            }
            EventKind::PacketArrive { node, packet } => self.arrive(node, *packet, now),
            EventKind::ControlTick(Tick::Serve(node)) => self.serve(node, now),
            EventKind::ControlTick(Tick::Plants) => {
                self.step_plants(now);
                let eta = self.sys.config.middleware.sync_eta;
                sync_round(&mut self.sys.clocks, &self.sys.graph, eta);
                self.engine.schedule_in(
                    self.sys.config.middleware.control_period,
                    EventKind::ControlTick(Tick::Plants),
                );
            }
            EventKind::ControlTick(Tick::SecurityWindow) => {
                let dead = &self.dead;
                for node in self
                    .sys
                    .nodes
                    .values_mut()
                    .filter(|n| n.role.is_controller() && !dead.contains(&n.id))
                {
                    node.sdsecurity.close_window(now);
                }
                self.engine.schedule_in(
                    self.sys.config.security.window,
                    EventKind::ControlTick(Tick::SecurityWindow),
                );
            }
            EventKind::ControlTick(Tick::LivenessCheck) => {
                self.liveness(now);
                self.engine.schedule_in(
                    self.sys.config.middleware.heartbeat_period,
                    EventKind::ControlTick(Tick::LivenessCheck),
                );
            }
            EventKind::Heartbeat { node } => {
                if !self.dead.contains(&node) {
                    let _ = self.sys.registry.heartbeat(node, now);
                    self.engine.schedule_in(
                        self.sys.config.middleware.heartbeat_period,
                        EventKind::Heartbeat { node },
                    );
                }
            }
            EventKind::Fail { node } => self.fail(node, now),
            EventKind::Timeout(TimeoutKind::Request(id)) => {
                if let Some(req) = self.requests.remove(&id) {
                    self.out.lost += 1;
                    for p in &req.packets {
                        self.packet_request.remove(p);
                    }
                    self.replenish(req.src);
                }
            }
            EventKind::Timeout(_) => {}
            EventKind::AttackStart { attack } => {
                self.active_attacks.insert(attack);
            }
            EventKind::AttackStop { attack } => {
                self.active_attacks.remove(&attack);
            }
            EventKind::LinkChange(change) => self.link_change(change),
            EventKind::DeviceJoin { .. } | EventKind::DeviceLeave { .. } => {}
        }
    }

    /// The switch a packet from `src` enters the network at.
    fn ingress_of(&self, src: NodeId) -> NodeId {
        match self.sys.hierarchy.role(src) {
            Some(Role::Host) => self.sys.hierarchy.parent(src).unwrap_or(src),
            _ => src,
        }
    }

    /// The controller whose security unit screens traffic entering at `ingress`.
    fn screener_of(&self, ingress: NodeId) -> NodeId {
        match self.sys.hierarchy.role(ingress) {
            Some(Role::Switch) => self.sys.hierarchy.parent(ingress).unwrap_or(ingress),
            _ => ingress,
        }
    }

    fn enqueue(&mut self, node: NodeId, packet: Packet, now: SimTime) {
        if self.sys.config.security.enabled && node == self.ingress_of(packet.src) && node != packet.src {
            let screener = self.screener_of(node);
            if !self.dead.contains(&screener) {
                let verified = self
                    .sys
                    .keyring
                    .protects(packet.flow_id)
                    .then(|| verify_tag(&packet, &self.sys.keyring));
                let unit = &mut self.sys.nodes.get_mut(&screener).expect("screener exists").sdsecurity;
                unit.observe_packet(&packet, verified);
                if unit.drops(&packet, verified, now) {
                    self.drop_packet(DropReason::Rule);
                    return;
                }
                if verified == Some(false) {
                    self.drop_packet(DropReason::BadTag);
                    return;
                }
            }
        }
        let node_ref = self.sys.nodes.get_mut(&node).expect("node exists");
        if node_ref.inbox.enqueue(packet, now).is_err() {
            self.drop_packet(DropReason::Expired);
            return;
        }
        self.ensure_serve(node, now);
    }

    fn ensure_serve(&mut self, node: NodeId, now: SimTime) {
        if !self.serve_pending.insert(node) {
            return;
        }
        let at = if self.last_serve.get(&node) == Some(&now) {
            now.after(1)
        } else {
            now
        };
        self.engine
            .schedule(at, EventKind::ControlTick(Tick::Serve(node)))
            .expect("future");
    }

    fn capacity(&self, role: Role) -> u32 {
        let s = &self.sys.config.scheduler;
        match role {
            Role::Global => s.capacity_global,
            Role::Super => s.capacity_super,
            Role::Local => s.capacity_local,
            Role::Switch => s.capacity_switch,
            Role::Host => s.capacity_host,
        }
    }

    fn next_hop(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        let n = &self.sys.nodes[&node];
        if n.role == Role::Host {
            return self.sys.hierarchy.parent(node);
        }
        n.sdn.table.as_ref()?.next_hop(dst)
    }

    fn serve(&mut self, node: NodeId, now: SimTime) {
        self.serve_pending.remove(&node);
        if self.dead.contains(&node) {
            return;
        }
        self.last_serve.insert(node, now);
        let cap = self.capacity(self.sys.nodes[&node].role);
        let latency = self.sys.config.scheduler.link_latency;
        for _ in 0..cap {
            let Some(q) = self.sys.nodes.get_mut(&node).expect("node exists").inbox.dispatch(now) else {
                break;
            };
            let mut packet = q.packet;
            let Some(next) = self.next_hop(node, packet.dst) else {
                self.drop_packet(DropReason::NoRoute);
                continue;
            };
            if packet.ttl <= 1 {
                self.drop_packet(DropReason::TtlExpired);
                continue;
            }
            packet.ttl -= 1;
            self.tap(node, next, &packet);
            self.engine.schedule_in(
                latency,
                EventKind::PacketArrive {
                    node: next,
                    packet: Box::new(packet),
                },
            );
        }
        if !self.sys.nodes[&node].inbox.is_empty() {
            self.ensure_serve(node, now);
        }
    }

    fn tap(&mut self, from: NodeId, to: NodeId, packet: &Packet) {
        for &i in &self.active_attacks {
            let spec = &self.sys.config.attacks[i];
            if spec.kind != AttackKind::Eavesdrop {
                continue;
            }
            if let AttackTarget::Edge(a, b) = spec.target {
                if (a, b) == (from, to) || (b, a) == (from, to) {
                    self.out.taps.push(TapCapture {
                        attack: i,
                        packet: packet.id,
                        flow: packet.flow_id,
                        bytes: packet.payload.clone(),
                    });
                }
            }
        }
    }

    fn arrive(&mut self, node: NodeId, packet: Packet, now: SimTime) {
        if self.dead.contains(&node) {
            self.drop_packet(DropReason::DeadNode);
            return;
        }
        if packet.dst == node {
            self.deliver(node, packet, now);
        } else {
            self.enqueue(node, packet, now);
        }
    }

    fn deliver(&mut self, node: NodeId, mut packet: Packet, now: SimTime) {
        self.out.delivered_packets += 1;
        if packet.kind == PacketKind::Control && packet.payload == PRIV_ESC_ACTION {
            self.control_request(node, &packet, now);
            return;
        }
        let Some(&rid) = self.packet_request.get(&packet.id) else {
            return;
        };
        if self.sys.keyring.encryption && self.sys.keyring.protects(packet.flow_id) {
            let _ = open(&mut packet, &self.sys.keyring);
        }
        self.packet_request.remove(&packet.id);
        let need = self.sys.config.workload.flow_packets;
        let req = self.requests.get_mut(&rid).expect("open request");
        req.delivered += 1;
        if req.delivered == need {
            let req = self.requests.remove(&rid).expect("open request");
            self.out.served += 1;
            *self.out.served_by_source.entry(req.src).or_insert(0) += 1;
            self.replenish(req.src);
        }
    }

    /// A reconfiguration request arriving as a CONTROL packet.
    fn control_request(&mut self, node: NodeId, packet: &Packet, now: SimTime) {
        let n = &self.sys.nodes[&node];
        let req = ControlRequest {
            id: packet.id,
            subject: packet.flow_id,
            role: SubjectRole::User,
            action: "reconfigure".into(),
            object: "*".into(),
            entities: vec![node],
            state: n.readings.clone(),
        };
        let hop_timeout = self.sys.config.middleware.hop_timeout;
        if let Ok(res) = handle_request(&mut self.sys.nodes, &self.sys.hierarchy, node, &req, now, hop_timeout) {
            self.out.decisions.extend(res.log);
        }
    }

    fn fail(&mut self, node: NodeId, now: SimTime) {
        if !self.dead.insert(node) {
            return;
        }
        let n = self.sys.nodes.get_mut(&node).expect("node exists");
        n.status = NodeStatus::Failed;
        let lost = n.inbox.drain().len() as u64;
        *self.out.drops.entry(DropReason::DeadNode).or_insert(0) += lost;
        self.out.failures.push(FailureRecord {
            node,
            at: now,
            in_flight: self.requests.len(),
            served_before: self.out.served,
        });
    }

    fn liveness(&mut self, now: SimTime) {
        let period = self.sys.config.middleware.heartbeat_period;
        let h = self.sys.config.middleware.missed_heartbeats;
        for suspect in self.sys.registry.suspects(now, period, h) {
            match self
                .sys
                .registry
                .failover(&mut self.sys.hierarchy, suspect, now, period, h)
            {
                Ok(plan) => self.apply_failover(plan),
                Err(e) => log::warn!("failover of {suspect} failed: {e}"),
            }
        }
    }

    fn apply_failover(&mut self, plan: FailoverPlan) {
        let failed = plan.failed;
        self.dead.insert(failed);
        self.sys.nodes.get_mut(&failed).expect("node exists").status = NodeStatus::Failed;
        let mut changes = Vec::new();
        for &(child, adopter) in &plan.reassigned {
            if self.sys.graph.weight(child, adopter).is_none() {
                changes.push(LinkChange::Add {
                    a: adopter,
                    b: child,
                    weight: 1,
                });
            }
        }
        for (nbr, _) in self.sys.graph.adjacent(failed) {
            changes.push(LinkChange::Remove { a: failed, b: nbr });
        }
        for c in changes {
            self.link_change(c);
        }
        self.sys.sdn.remove_forwarder(failed);
        self.sys.nodes.get_mut(&failed).expect("node exists").sdn.table = None;

        let records: Vec<_> = self.sys.nodes[&failed].sdiot.devices().cloned().collect();
        let mut touched: BTreeSet<NodeId> = BTreeSet::from([failed]);
        for (child, adopter) in &plan.reassigned {
            touched.insert(*adopter);
            touched.extend(self.sys.hierarchy.subtree(*child));
        }
        if let Some(adopter) = plan.new_owner() {
            for mut rec in records {
                let _ = self
                    .sys
                    .nodes
                    .get_mut(&failed)
                    .expect("node exists")
                    .sdiot
                    .extract_device(rec.id);
                rec.owner_controller = adopter;
                let _ = self
                    .sys
                    .nodes
                    .get_mut(&adopter)
                    .expect("node exists")
                    .sdiot
                    .register_device(rec);
            }
        }
        for id in touched {
            let children = self.sys.hierarchy.children(id).collect();
            let level = self.sys.hierarchy.level(id).unwrap_or(0);
            let n = self.sys.nodes.get_mut(&id).expect("node exists");
            n.children = children;
            n.level = level;
        }
        let failed_at = self.out.failures.iter().find(|f| f.node == failed).map(|f| f.at);
        log::info!(
            "failover of {failed} at {}: {} children moved",
            plan.at,
            plan.reassigned.len()
        );
        self.out.failovers.push(FailoverRecord {
            plan,
            failed_at,
            served_at_failover: self.out.served,
        });
    }

    fn link_change(&mut self, change: LinkChange) {
        if let Err(e) = self.sys.graph.apply_link_event(change.clone()) {
            log::warn!("link change ignored: {e}");
            return;
        }
        let owners = self.sys.sdn.on_network_change(&self.sys.graph, &change);
        for o in owners {
            if let Some(table) = self.sys.sdn.table(o).cloned() {
                if let Some(n) = self.sys.nodes.get_mut(&o) {
                    n.sdn.status = self.sys.sdn.status.clone();
                    n.sdn.table = Some(table);
                }
            }
        }
    }

    fn tamper_on(&self, host: NodeId, kind: AttackKind) -> Option<f64> {
        self.active_attacks.iter().find_map(|&i| {
            let a = &self.sys.config.attacks[i];
            (a.kind == kind && a.target == AttackTarget::Node(host)).then_some(a.magnitude)
        })
    }

    fn step_plants(&mut self, now: SimTime) {
        let estimates: BTreeMap<NodeId, DVector<f64>> = self
            .sys
            .nodes
            .iter()
            .filter_map(|(id, n)| n.plant.as_ref().map(|p| (*id, p.state.x_hat.clone())))
            .collect();
        let threshold = self.sys.config.plant.tamper_threshold;
        for h in self.hosts.clone() {
            if self.dead.contains(&h) {
                continue;
            }
            let sensor_bias = self.tamper_on(h, AttackKind::SensorTamper);
            let forced = self.tamper_on(h, AttackKind::ActuatorTamper);
            let law = &self.sys.gains.laws[&h];
            let Some(plant) = self.sys.nodes[&h].plant.as_ref() else {
                continue;
            };
            let model = &plant.model;
            let mut u = match local_control(&law.gains, &estimates) {
                Ok(u) => u,
                Err(_) => continue,
            };
            if let Some(v) = forced {
                u = DVector::from_element(model.inputs(), v);
            }
            let Ok(mut next) = step_plant(model, &plant.state, &u, Some(&mut self.plant_rng)) else {
                continue;
            };
            if let Some(b) = sensor_bias {
                next.y.add_scalar_mut(b);
            }
            let predicted_x = &model.a * &plant.state.x_hat + &model.b * &u;
            let predicted_y = &model.c * &predicted_x + &model.d * &u;
            let residual = (&next.y - predicted_y).amax();
            next.x_hat = if model.is_full_state_readout() {
                next.y.clone()
            } else {
                predicted_x
            };
            self.sys
                .nodes
                .get_mut(&h)
                .expect("host")
                .plant
                .as_mut()
                .expect("plant")
                .state = next;
            if self.sys.config.security.enabled && residual > threshold {
                self.report_tamper(h, residual, now);
            }
        }
    }

    fn report_tamper(&mut self, host: NodeId, residual: f64, now: SimTime) {
        let Some(owner) = self.sys.hierarchy.owner_of_host(host) else {
            return;
        };
        if self.dead.contains(&owner) {
            return;
        }
        let unit = &mut self.sys.nodes.get_mut(&owner).expect("owner exists").sdsecurity;
        let open = unit.findings().any(|f| {
            f.kind == FindingKind::Tamper && f.target == FindingTarget::Node(host) && f.state != FindingState::Handled
        });
        if !open {
            let id = unit.report(
                FindingKind::Tamper,
                FindingTarget::Node(host),
                &format!("residual {residual:.3}"),
                now,
            );
            let _ = unit.prevent(id, now);
        }
    }
}

/// Sets up `sys` and runs it in one call.
pub fn simulate(sys: System, mode: RunMode) -> SimOutcome {
    Simulation::new(sys, mode, None).run().0
}
