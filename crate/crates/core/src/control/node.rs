//! A software-defined controller instance and its state images.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sdcompute::ComputeUnit;
use super::sdiot::DeviceRegistry;
use super::sdn::{ForwardingTable, NetworkStatus};
use super::sds::StorageController;
use super::units::QosRules;
use crate::engine::SimTime;
use crate::middleware::scheduler::Scheduler;
use crate::plant::{PlantModel, PlantState};
use crate::security::SecurityUnit;
use crate::topology::{NodeId, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeStatus {
    Created,
    Established,
    Running,
    Failed,
}

/// Forwarding state installed on the node by the SDN sub-controller.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdnUnit {
    pub table: Option<ForwardingTable>,
    pub status: NetworkStatus,
}

/// The physical process a host's self-controller drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostPlant {
    pub model: PlantModel,
    pub state: PlantState,
    pub self_gain: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerNode {
    pub id: NodeId,
    pub role: Role,
    pub level: u32,
    pub children: BTreeSet<NodeId>,
    pub status: NodeStatus,
    pub sdn: SdnUnit,
    pub sdiot: DeviceRegistry,
    pub sdsecurity: SecurityUnit,
    pub sdcompute: ComputeUnit,
    pub sds: StorageController,
    pub qos: QosRules,
    /// Named physical readings that policy conditions refer to.
    pub readings: BTreeMap<String, f64>,
    pub plant: Option<HostPlant>,
    /// Packets waiting for this node. Transient, so not part of an image.
    #[serde(skip)]
    pub inbox: Scheduler,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("controller {0} is not running")]
    NotRunning(NodeId),
    #[error("image of {image} cannot be restored onto {target}")]
    ImageMismatch { image: NodeId, target: NodeId },
    #[error("image is unreadable: {0}")]
    Corrupt(String),
}

/// Canonical snapshot of every sub-controller table of one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerImage {
    pub controller: NodeId,
    pub captured_at: SimTime,
    pub bytes: Vec<u8>,
}

impl ControllerNode {
    pub fn is_running(&self) -> bool {
        self.status == NodeStatus::Running
    }

    /// Hop latency seen by a request arriving here: one tick plus the backlog.
    pub fn response_ticks(&self) -> u64 {
        1 + self.inbox.len() as u64
    }

    /// The node's state in canonical form. Maps are ordered, so equal states
    /// give equal bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("controller state serializes")
    }

    pub fn capture_image(&self, now: SimTime) -> Result<ControllerImage, ImageError> {
        if !self.is_running() {
            return Err(ImageError::NotRunning(self.id));
        }
        Ok(ControllerImage {
            controller: self.id,
            captured_at: now,
            bytes: self.canonical_bytes(),
        })
    }

    /// Replaces every table with the image's. The inbox is left alone.
    pub fn restore_image(&mut self, image: &ControllerImage) -> Result<(), ImageError> {
        if image.controller != self.id {
            return Err(ImageError::ImageMismatch {
                image: image.controller,
                target: self.id,
            });
        }
        let restored: ControllerNode =
            serde_json::from_slice(&image.bytes).map_err(|e| ImageError::Corrupt(e.to_string()))?;
        if restored.id != self.id {
            return Err(ImageError::ImageMismatch {
                image: restored.id,
                target: self.id,
            });
        }
        let inbox = std::mem::take(&mut self.inbox);
        *self = restored;
        self.inbox = inbox;
        Ok(())
    }
}
