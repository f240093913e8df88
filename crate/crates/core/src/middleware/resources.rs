//! System-wide resource view built from per-controller compute reports.

use std::collections::BTreeMap;

use crate::control::sdcompute::ResourceReport;
use crate::topology::NodeId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourceView {
    reports: BTreeMap<NodeId, ResourceReport>,
}

impl ResourceView {
    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn report(&self, id: NodeId) -> Option<&ResourceReport> {
        self.reports.get(&id)
    }

    /// Fewest tasks wins; ties go to the lowest id.
    pub fn least_loaded(&self) -> Option<NodeId> {
        self.reports.values().min_by_key(|r| (r.tasks, r.id)).map(|r| r.id)
    }

    pub fn total_tasks(&self) -> u64 {
        self.reports.values().map(|r| u64::from(r.tasks)).sum()
    }

    pub fn total_cpu(&self) -> (u64, u64) {
        self.reports.values().fold((0, 0), |(u, c), r| {
            (u + u64::from(r.cpu_used), c + u64::from(r.cpu_capacity))
        })
    }
}

/// Folds reports into a view; a later report for the same controller replaces an earlier one.
pub fn track_system_resources(reports: impl IntoIterator<Item = ResourceReport>) -> ResourceView {
    ResourceView {
        reports: reports.into_iter().map(|r| (r.id, r)).collect(),
    }
}
