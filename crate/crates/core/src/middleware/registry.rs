//! Controller registration, messenger routing, liveness and failover.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::topology::{Hierarchy, NodeId, Role};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("controller {0} already registered")]
    DuplicateController(NodeId),
    #[error("endpoint {0} is not registered")]
    UnknownEndpoint(NodeId),
    #[error("{0} and {1} are on different layers")]
    NotSameLayer(NodeId, NodeId),
    #[error("controller {0} has no parent to take over its children")]
    NoParent(NodeId),
    #[error("controller {0} has missed only {1} heartbeats")]
    StillAlive(NodeId, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Liveness {
    Running,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub role: Role,
    pub layer: u32,
    pub last_heartbeat: SimTime,
    pub address: String,
    pub status: Liveness,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerRegistry {
    entries: BTreeMap<NodeId, RegistryEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub path: Vec<NodeId>,
    pub hops: usize,
}

/// Who took over what after a controller failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailoverPlan {
    pub failed: NodeId,
    pub at: SimTime,
    /// (child, new parent) pairs.
    pub reassigned: Vec<(NodeId, NodeId)>,
    /// Set when no running sibling existed and the grandparent adopted.
    pub escalated: bool,
}

impl FailoverPlan {
    pub fn new_owner(&self) -> Option<NodeId> {
        self.reassigned.first().map(|(_, p)| *p)
    }
}

impl ControllerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&NodeId, &RegistryEntry)> {
        self.entries.iter()
    }

    pub fn is_running(&self, id: NodeId) -> bool {
        self.entries.get(&id).is_some_and(|e| e.status == Liveness::Running)
    }

    pub fn register_controller(&mut self, id: NodeId, entry: RegistryEntry) -> Result<(), RegistryError> {
        if self.entries.contains_key(&id) {
            return Err(RegistryError::DuplicateController(id));
        }
        self.entries.insert(id, entry);
        Ok(())
    }

    pub fn heartbeat(&mut self, id: NodeId, now: SimTime) -> Result<(), RegistryError> {
        let e = self.entries.get_mut(&id).ok_or(RegistryError::UnknownEndpoint(id))?;
        if e.status == Liveness::Running {
            e.last_heartbeat = e.last_heartbeat.max(now);
        }
        Ok(())
    }

    /// Whole heartbeat periods elapsed since the last heartbeat of `id`.
    pub fn missed_heartbeats(&self, id: NodeId, now: SimTime, period: u64) -> u32 {
        self.entries
            .get(&id)
            .map_or(0, |e| (now.saturating_since(e.last_heartbeat) / period.max(1)) as u32)
    }

    /// Running controllers that have missed at least `threshold` heartbeats.
    pub fn suspects(&self, now: SimTime, period: u64, threshold: u32) -> Vec<NodeId> {
        self.entries
            .iter()
            .filter(|(_, e)| e.status == Liveness::Running)
            .map(|(id, _)| *id)
            .filter(|id| self.missed_heartbeats(*id, now, period) >= threshold)
            .collect()
    }

    /// Messenger service: peers on one layer talk directly, everything else
    /// follows the tree.
    pub fn route_message(
        &self,
        hierarchy: &Hierarchy,
        from: NodeId,
        to: NodeId,
        same_layer: bool,
    ) -> Result<Delivery, RegistryError> {
        let (a, b) = (
            self.entries.get(&from).ok_or(RegistryError::UnknownEndpoint(from))?,
            self.entries.get(&to).ok_or(RegistryError::UnknownEndpoint(to))?,
        );
        if same_layer {
            if a.layer != b.layer {
                return Err(RegistryError::NotSameLayer(from, to));
            }
            let path = if from == to { vec![from] } else { vec![from, to] };
            let hops = path.len() - 1;
            return Ok(Delivery { path, hops });
        }
        let path = hierarchy.tree_path(from, to);
        let hops = path.len() - 1;
        Ok(Delivery { path, hops })
    }

    /// Reassigns the children of `failed` to the running sibling with the
    /// fewest children (ties: lowest id), or to the grandparent when no sibling
    /// is running. Marks `failed` as FAILED and applies the moves to `hierarchy`.
    pub fn failover(
        &mut self,
        hierarchy: &mut Hierarchy,
        failed: NodeId,
        now: SimTime,
        period: u64,
        threshold: u32,
    ) -> Result<FailoverPlan, RegistryError> {
        if !self.entries.contains_key(&failed) {
            return Err(RegistryError::UnknownEndpoint(failed));
        }
        let missed = self.missed_heartbeats(failed, now, period);
        if missed < threshold {
            return Err(RegistryError::StillAlive(failed, missed));
        }
        let parent = hierarchy.parent(failed).ok_or(RegistryError::NoParent(failed))?;
        let role = hierarchy.role(failed);
        let sibling = hierarchy
            .children(parent)
            .filter(|s| *s != failed && hierarchy.role(*s) == role && self.is_running(*s))
            .min_by_key(|s| (hierarchy.children(*s).count(), *s));
        let (adopter, escalated) = match sibling {
            Some(s) => (s, false),
            None => (parent, true),
        };
        let children: Vec<NodeId> = hierarchy.children(failed).collect();
        for c in &children {
            hierarchy.reparent(*c, adopter);
        }
        self.entries.get_mut(&failed).unwrap().status = Liveness::Failed;
        Ok(FailoverPlan {
            failed,
            at: now,
            reassigned: children.into_iter().map(|c| (c, adopter)).collect(),
            escalated,
        })
    }
}
