//! Auditing and mapping of the network infrastructure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::topology::{Hierarchy, NetGraph, NodeId, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryItem {
    pub role: Role,
    pub location: Option<(f64, f64)>,
    pub owner: Option<NodeId>,
}

/// Every non-host vertex: switches, routers, access points and controllers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub items: BTreeMap<NodeId, InventoryItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Anomaly {
    /// Present now, absent from the registered baseline.
    Unknown(NodeId),
    Missing(NodeId),
    RoleChanged(NodeId),
}

impl Inventory {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Differences of `self` (current) against a `baseline`.
    pub fn diff(&self, baseline: &Inventory) -> Vec<Anomaly> {
        let mut out = Vec::new();
        for (id, item) in &self.items {
            match baseline.items.get(id) {
                None => out.push(Anomaly::Unknown(*id)),
                Some(b) if b.role != item.role => out.push(Anomaly::RoleChanged(*id)),
                Some(_) => {}
            }
        }
        for id in baseline.items.keys() {
            if !self.items.contains_key(id) {
                out.push(Anomaly::Missing(*id));
            }
        }
        out.sort();
        out
    }
}

/// Inventory of the infrastructure vertices of `graph`. Owners come from the
/// controller tree, locations from `positions` when known.
pub fn audit_map(graph: &NetGraph, hierarchy: &Hierarchy, positions: &BTreeMap<NodeId, (f64, f64)>) -> Inventory {
    let items = graph
        .vertices()
        .filter_map(|id| {
            let role = graph.role(id)?;
            (role != Role::Host).then(|| {
                (
                    id,
                    InventoryItem {
                        role,
                        location: positions.get(&id).copied(),
                        owner: hierarchy.parent(id),
                    },
                )
            })
        })
        .collect();
    Inventory { items }
}
