//! Abstract compute resources: capacity counters and least-loaded placement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComputeError {
    #[error("no controller has room for the task")]
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    pub cpu: u32,
    pub mem: u64,
}

impl Task {
    pub fn unit() -> Self {
        Task { cpu: 1, mem: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub id: NodeId,
    pub cpu_used: u32,
    pub cpu_capacity: u32,
    pub mem_used: u64,
    pub mem_capacity: u64,
    pub tasks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeUnit {
    pub id: NodeId,
    pub cpu_capacity: u32,
    pub cpu_used: u32,
    pub mem_capacity: u64,
    pub mem_used: u64,
    pub tasks: u32,
}

impl ComputeUnit {
    pub fn new(id: NodeId, cpu_capacity: u32, mem_capacity: u64) -> Self {
        Self {
            id,
            cpu_capacity,
            cpu_used: 0,
            mem_capacity,
            mem_used: 0,
            tasks: 0,
        }
    }

    pub fn fits(&self, task: Task) -> bool {
        self.cpu_used + task.cpu <= self.cpu_capacity && self.mem_used + task.mem <= self.mem_capacity
    }

    pub fn track_resources(&self) -> ResourceReport {
        ResourceReport {
            id: self.id,
            cpu_used: self.cpu_used,
            cpu_capacity: self.cpu_capacity,
            mem_used: self.mem_used,
            mem_capacity: self.mem_capacity,
            tasks: self.tasks,
        }
    }

    pub fn release(&mut self, task: Task) {
        self.cpu_used = self.cpu_used.saturating_sub(task.cpu);
        self.mem_used = self.mem_used.saturating_sub(task.mem);
        self.tasks = self.tasks.saturating_sub(1);
    }
}

/// Places `task` on the unit with the fewest tasks among those it fits; ties go
/// to the lowest id.
pub fn assign_task(units: &mut BTreeMap<NodeId, ComputeUnit>, task: Task) -> Result<NodeId, ComputeError> {
    let id = units
        .values()
        .filter(|u| u.fits(task))
        .min_by_key(|u| (u.tasks, u.id))
        .map(|u| u.id)
        .ok_or(ComputeError::Saturated)?;
    let u = units.get_mut(&id).unwrap();
    u.cpu_used += task.cpu;
    u.mem_used += task.mem;
    u.tasks += 1;
    Ok(id)
}
