//! Self and coordinated decisions: a request climbs the tree until a
//! controller owns everything it touches and has a rule for it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::node::ControllerNode;
use crate::engine::SimTime;
use crate::security::policy::{AccessRequest, Effect, SubjectRole};
use crate::topology::{Hierarchy, NodeId};

pub const DEFAULT_HOP_TIMEOUT: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRequest {
    pub id: u64,
    pub subject: u64,
    pub role: SubjectRole,
    pub action: String,
    pub object: String,
    /// Devices or controllers the request reads or acts on.
    pub entities: Vec<NodeId>,
    pub state: BTreeMap<String, f64>,
}

impl ControlRequest {
    pub fn access(&self) -> AccessRequest {
        AccessRequest {
            subject: self.subject,
            role: self.role,
            action: self.action.clone(),
            object: self.object.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Granted,
    Denied,
    Escalated,
    Timeout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Granted => "GRANTED",
            Outcome::Denied => "DENIED",
            Outcome::Escalated => "ESCALATED",
            Outcome::Timeout => "TIMEOUT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub request: u64,
    pub outcome: Outcome,
    pub decided_by: NodeId,
    pub depth: u32,
    pub reason: Option<String>,
}

/// One row of the decision log: `tick,request,outcome,decider,depth`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRecord {
    pub tick: SimTime,
    pub request: u64,
    pub outcome: Outcome,
    pub decider: NodeId,
    pub depth: u32,
}

impl DecisionRecord {
    pub fn row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.tick, self.request, self.outcome, self.decider, self.depth
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub decision: Decision,
    pub log: Vec<DecisionRecord>,
    /// When the answer is back at the receiving controller.
    pub resolved_at: SimTime,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecisionError {
    #[error("controller {0} is not running")]
    NotRunning(NodeId),
    #[error("parent controller {0} has failed and has not been replaced")]
    DeadController(NodeId),
    #[error("unknown controller {0}")]
    UnknownController(NodeId),
}

/// Whether `controller` owns every entity the request references.
pub fn owns_all(hierarchy: &Hierarchy, controller: NodeId, req: &ControlRequest) -> bool {
    req.entities
        .iter()
        .all(|e| hierarchy.is_ancestor_or_self(controller, *e))
}

pub fn handle_request(
    nodes: &mut BTreeMap<NodeId, ControllerNode>,
    hierarchy: &Hierarchy,
    at: NodeId,
    req: &ControlRequest,
    now: SimTime,
    hop_timeout: u64,
) -> Result<Resolution, DecisionError> {
    let first = nodes.get(&at).ok_or(DecisionError::UnknownController(at))?;
    if !first.is_running() {
        return Err(DecisionError::NotRunning(at));
    }
    let access = req.access();
    let root = hierarchy.root();
    let mut log = Vec::new();
    let mut cur = at;
    let mut depth = 0u32;
    let mut t = now;
    let mut travelled = 0u64;
    let finish =
        |outcome, decided_by, depth, reason: Option<&str>, t: SimTime, travelled: u64, mut log: Vec<DecisionRecord>| {
            log.push(DecisionRecord {
                tick: t,
                request: req.id,
                outcome,
                decider: decided_by,
                depth,
            });
            Resolution {
                decision: Decision {
                    request: req.id,
                    outcome,
                    decided_by,
                    depth,
                    reason: reason.map(str::to_string),
                },
                log,
                resolved_at: t.after(travelled),
            }
        };
    loop {
        let node = nodes.get_mut(&cur).ok_or(DecisionError::UnknownController(cur))?;
        let owned = cur == root || owns_all(hierarchy, cur, req);
        let has_rule = node.sdsecurity.policies.first_match(&access, &req.state).is_some();
        if owned && has_rule {
            let effect = node.sdsecurity.authorize(&access, &req.state, t);
            let outcome = match effect {
                Effect::Allow => Outcome::Granted,
                Effect::Deny => Outcome::Denied,
            };
            return Ok(finish(outcome, cur, depth, None, t, travelled, log));
        }
        if cur == root {
            node.sdsecurity.authorize(&access, &req.state, t);
            return Ok(finish(
                Outcome::Denied,
                cur,
                depth,
                Some("Unresolvable"),
                t,
                travelled,
                log,
            ));
        }
        let parent = hierarchy.parent(cur).ok_or(DecisionError::UnknownController(cur))?;
        let up = nodes.get(&parent).ok_or(DecisionError::UnknownController(parent))?;
        if !up.is_running() {
            return Err(DecisionError::DeadController(parent));
        }
        log.push(DecisionRecord {
            tick: t,
            request: req.id,
            outcome: Outcome::Escalated,
            decider: cur,
            depth,
        });
        let hop = up.response_ticks();
        if hop > hop_timeout {
            return Ok(finish(
                Outcome::Timeout,
                cur,
                depth,
                Some("hop timeout"),
                t.after(hop_timeout),
                travelled,
                log,
            ));
        }
        t = t.after(hop);
        travelled += hop;
        depth += 1;
        cur = parent;
    }
}
