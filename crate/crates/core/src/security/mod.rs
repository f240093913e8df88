//! The security sub-controller: audit, scan, detect, prevent, handle and learn.

pub mod attack;
pub mod audit;
pub mod crypto;
pub mod detect;
pub mod kb;
pub mod policy;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::packet::Packet;
use crate::topology::NodeId;

use audit::{Anomaly, Inventory};
use detect::{scan_window, DetectorParams, Finding, FindingKind, FindingState, FindingTarget, WindowStats};
use kb::KnowledgeBase;
use policy::{check_policy, AccessRequest, Effect, PolicySet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SecurityError {
    #[error("finding {0} is unknown")]
    UnknownFinding(u64),
    #[error("finding {0} was already prevented")]
    AlreadyPrevented(u64),
    #[error("finding {0} was already handled")]
    AlreadyHandled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMatch {
    DropPair(NodeId, NodeId),
    DropUnverified(u64),
    LockSubject(u64),
    DropSource(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRule {
    pub id: u64,
    pub matcher: RuleMatch,
    pub finding: u64,
    pub installed_at: SimTime,
    pub expires_at: Option<SimTime>,
}

/// Follow-up work a handled finding asks of the rest of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mitigation {
    RuleExpires { rule: u64, at: SimTime },
    ReEstimate(NodeId),
    RestoreBackup(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SecurityStatus {
    pub detected: usize,
    pub prevented: usize,
    pub handled: usize,
    pub rules: usize,
    pub last_audit: Option<SimTime>,
    pub kb_size: usize,
}

impl SecurityStatus {
    pub fn active(&self) -> usize {
        self.detected + self.prevented
    }
}

/// What one window close did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowReport {
    pub detected: Vec<u64>,
    pub prevented: Vec<u64>,
    pub handled: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityUnit {
    pub params: DetectorParams,
    pub policies: PolicySet,
    pub kb: KnowledgeBase,
    findings: BTreeMap<u64, Finding>,
    rules: BTreeMap<u64, DropRule>,
    window: WindowStats,
    next_finding: u64,
    next_rule: u64,
    last_audit: Option<SimTime>,
    baseline: Option<Inventory>,
    log: Vec<String>,
}

impl SecurityUnit {
    pub fn new(params: DetectorParams, policies: PolicySet) -> Self {
        Self {
            params,
            policies,
            kb: KnowledgeBase::new(),
            findings: BTreeMap::new(),
            rules: BTreeMap::new(),
            window: WindowStats::default(),
            next_finding: 0,
            next_rule: 0,
            last_audit: None,
            baseline: None,
            log: Vec::new(),
        }
    }

    pub fn finding(&self, id: u64) -> Option<&Finding> {
        self.findings.get(&id)
    }

    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.values()
    }

    pub fn rules(&self) -> impl Iterator<Item = &DropRule> {
        self.rules.values()
    }

    pub fn window(&self) -> &WindowStats {
        &self.window
    }

    /// Findings log rows `tick,kind,target,state,evidence`, one per transition.
    pub fn log(&self) -> &[String] {
        &self.log
    }

    fn transition(&mut self, id: u64, state: FindingState, now: SimTime) {
        let f = self.findings.get_mut(&id).expect("finding exists");
        f.state = state;
        let mut row = f.clone();
        row.at = now;
        self.log.push(row.log_row());
    }

    /// Scanning unit: counts a packet seen at ingress. `verified` is `None`
    /// for flows without a key.
    pub fn observe_packet(&mut self, packet: &Packet, verified: Option<bool>) {
        self.window.observe(packet.src, packet.dst);
        if verified == Some(false) {
            self.window.tag_failure(packet.id, packet.flow_id, packet.src);
        }
        if packet.malicious_payload && self.kb.knows(FindingKind::MaliciousPayload) {
            self.window.payload_hits.push((packet.id, packet.src));
        }
    }

    /// Whether an installed rule drops `packet`.
    pub fn drops(&self, packet: &Packet, verified: Option<bool>, now: SimTime) -> bool {
        self.rules.values().any(|r| {
            r.expires_at.is_none_or(|t| now < t)
                && match r.matcher {
                    RuleMatch::DropPair(s, d) => packet.src == s && packet.dst == d,
                    RuleMatch::DropUnverified(flow) => packet.flow_id == flow && verified == Some(false),
                    RuleMatch::DropSource(s) => packet.src == s,
                    RuleMatch::LockSubject(_) => false,
                }
        })
    }

    pub fn is_locked(&self, subject: u64, now: SimTime) -> bool {
        self.rules
            .values()
            .any(|r| r.matcher == RuleMatch::LockSubject(subject) && r.expires_at.is_none_or(|t| now < t))
    }

    /// Policy unit, with locked subjects refused outright. Denials feed the detector.
    pub fn authorize(&mut self, req: &AccessRequest, state: &BTreeMap<String, f64>, now: SimTime) -> Effect {
        let effect = if self.is_locked(req.subject, now) {
            Effect::Deny
        } else {
            check_policy(&self.policies, req, state)
        };
        if effect == Effect::Deny {
            self.window.denial(req.subject);
        }
        effect
    }

    fn open_finding_for(&self, kind: FindingKind, target: FindingTarget) -> Option<u64> {
        self.findings
            .values()
            .find(|f| f.kind == kind && f.target == target && f.state != FindingState::Handled)
            .map(|f| f.id)
    }

    fn record(&mut self, kind: FindingKind, target: FindingTarget, evidence: String, now: SimTime) -> u64 {
        let id = self.next_finding;
        self.next_finding += 1;
        let f = Finding {
            id,
            kind,
            evidence,
            at: now,
            target,
            state: FindingState::Detected,
        };
        self.log.push(f.log_row());
        self.findings.insert(id, f);
        id
    }

    /// Closes the current window: detects, prevents new findings, and handles
    /// prevented findings whose target stayed quiet for the whole window.
    pub fn close_window(&mut self, now: SimTime) -> WindowReport {
        let stats = std::mem::replace(&mut self.window, WindowStats::new(now));
        let mut report = WindowReport::default();
        let mut seen = BTreeSet::new();
        for f in scan_window(&stats, &self.params, now, 0) {
            seen.insert((f.kind, f.target));
            if self.open_finding_for(f.kind, f.target).is_some() {
                continue;
            }
            let id = self.record(f.kind, f.target, f.evidence, now);
            report.detected.push(id);
        }
        for id in report.detected.clone() {
            if self.prevent(id, now).is_ok() {
                report.prevented.push(id);
            }
        }
        let quiet: Vec<u64> = self
            .findings
            .values()
            .filter(|f| f.state == FindingState::Prevented && f.at < now && !seen.contains(&(f.kind, f.target)))
            .map(|f| f.id)
            .collect();
        for id in quiet {
            if self.handle(id, now).is_ok() {
                report.handled.push(id);
            }
        }
        self.expire_rules(now);
        report
    }

    /// Prevention unit: installs the rule that matches the finding.
    pub fn prevent(&mut self, id: u64, now: SimTime) -> Result<u64, SecurityError> {
        let f = self.findings.get(&id).ok_or(SecurityError::UnknownFinding(id))?;
        match f.state {
            FindingState::Detected => {}
            FindingState::Prevented => return Err(SecurityError::AlreadyPrevented(id)),
            FindingState::Handled => return Err(SecurityError::AlreadyHandled(id)),
        }
        let (matcher, expires_at) = match (f.kind, f.target) {
            (_, FindingTarget::Pair(s, d)) => (RuleMatch::DropPair(s, d), None),
            (_, FindingTarget::Flow { flow, .. }) => (RuleMatch::DropUnverified(flow), None),
            (_, FindingTarget::Subject(s)) => (RuleMatch::LockSubject(s), Some(now.after(self.params.cooldown))),
            (_, FindingTarget::Node(n)) => (RuleMatch::DropSource(n), None),
        };
        let rule = self.next_rule;
        self.next_rule += 1;
        self.rules.insert(
            rule,
            DropRule {
                id: rule,
                matcher,
                finding: id,
                installed_at: now,
                expires_at,
            },
        );
        self.transition(id, FindingState::Prevented, now);
        Ok(rule)
    }

    /// Handling unit: schedules rule expiry after the cooldown, asks for
    /// re-estimation or restore where relevant, and teaches the knowledge base.
    pub fn handle(&mut self, id: u64, now: SimTime) -> Result<Vec<Mitigation>, SecurityError> {
        let f = self.findings.get(&id).ok_or(SecurityError::UnknownFinding(id))?.clone();
        if f.state == FindingState::Handled {
            return Err(SecurityError::AlreadyHandled(id));
        }
        let mut out = Vec::new();
        let cooldown_end = now.after(self.params.cooldown);
        for r in self.rules.values_mut().filter(|r| r.finding == id) {
            let at = r.expires_at.map_or(cooldown_end, |t| t.max(cooldown_end));
            r.expires_at = Some(at);
            out.push(Mitigation::RuleExpires { rule: r.id, at });
        }
        if let FindingTarget::Node(n) = f.target {
            match f.kind {
                FindingKind::Tamper => out.push(Mitigation::ReEstimate(n)),
                FindingKind::Corruption => out.push(Mitigation::RestoreBackup(n)),
                _ => {}
            }
        }
        self.transition(id, FindingState::Handled, now);
        let handled = self.findings[&id].clone();
        self.kb.learn(&handled);
        Ok(out)
    }

    pub fn expire_rules(&mut self, now: SimTime) {
        self.rules.retain(|_, r| r.expires_at.is_none_or(|t| now < t));
    }

    /// Reports a finding raised outside the traffic scan (tamper, corruption).
    pub fn report(&mut self, kind: FindingKind, target: FindingTarget, evidence: &str, now: SimTime) -> u64 {
        self.record(kind, target, evidence.to_string(), now)
    }

    /// Auditing unit: compares against the first inventory seen and raises an
    /// anomaly finding for every node that appeared since.
    pub fn audit(&mut self, inventory: Inventory, now: SimTime) -> Vec<Anomaly> {
        self.last_audit = Some(now);
        let Some(base) = &self.baseline else {
            self.baseline = Some(inventory);
            return Vec::new();
        };
        let anomalies = inventory.diff(base);
        for a in &anomalies {
            if let Anomaly::Unknown(n) = a {
                if self
                    .open_finding_for(FindingKind::Anomaly, FindingTarget::Node(*n))
                    .is_none()
                {
                    self.record(
                        FindingKind::Anomaly,
                        FindingTarget::Node(*n),
                        "not in inventory".into(),
                        now,
                    );
                }
            }
        }
        anomalies
    }

    pub fn status(&self) -> SecurityStatus {
        let count = |s| self.findings.values().filter(|f| f.state == s).count();
        SecurityStatus {
            detected: count(FindingState::Detected),
            prevented: count(FindingState::Prevented),
            handled: count(FindingState::Handled),
            rules: self.rules.len(),
            last_audit: self.last_audit,
            kb_size: self.kb.len(),
        }
    }
}
