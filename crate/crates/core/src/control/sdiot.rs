//! Smart-device registry: join/extract and status/location tracking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::topology::{nearest_center, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeviceKind {
    Sensor,
    AggSensor,
    Actuator,
    AccessPoint,
    Host,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeviceStatus {
    Busy,
    Sending,
    Receiving,
    Asleep,
    LowBattery,
    Ok,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub id: NodeId,
    pub kind: DeviceKind,
    pub status: DeviceStatus,
    pub location: (f64, f64),
    pub last_seen: SimTime,
    pub owner_controller: NodeId,
}

/// A status and/or location report stamped with the time it was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceReport {
    pub id: NodeId,
    pub at: SimTime,
    pub status: Option<DeviceStatus>,
    pub location: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackOutcome {
    Updated,
    /// The device moved to the cell of another cluster center.
    Relocated {
        from_cluster: usize,
        to_cluster: usize,
    },
    Stale,
}

/// What the middleware registration service is told about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegistryNotice {
    Joined { id: NodeId, owner: NodeId },
    Extracted { id: NodeId },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("device {0} already registered")]
    DuplicateDevice(NodeId),
    #[error("device {0} is not registered")]
    UnknownDevice(NodeId),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceRegistry {
    devices: BTreeMap<NodeId, DeviceRecord>,
    /// Cluster centers used to detect cell changes on location reports.
    pub cluster_centers: Vec<(f64, f64)>,
    notices: Vec<RegistryNotice>,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn lookup(&self, id: NodeId) -> Option<&DeviceRecord> {
        self.devices.get(&id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    /// Notices not yet drained by the registration service.
    pub fn drain_notices(&mut self) -> Vec<RegistryNotice> {
        std::mem::take(&mut self.notices)
    }

    pub fn register_device(&mut self, record: DeviceRecord) -> Result<(), DeviceError> {
        if self.devices.contains_key(&record.id) {
            return Err(DeviceError::DuplicateDevice(record.id));
        }
        self.notices.push(RegistryNotice::Joined {
            id: record.id,
            owner: record.owner_controller,
        });
        self.devices.insert(record.id, record);
        Ok(())
    }

    pub fn extract_device(&mut self, id: NodeId) -> Result<DeviceRecord, DeviceError> {
        let rec = self.devices.remove(&id).ok_or(DeviceError::UnknownDevice(id))?;
        self.notices.push(RegistryNotice::Extracted { id });
        Ok(rec)
    }

    /// Applies a report. Reports older than the last one seen are ignored.
    pub fn track_device(&mut self, report: &DeviceReport) -> Result<TrackOutcome, DeviceError> {
        let centers = &self.cluster_centers;
        let rec = self
            .devices
            .get_mut(&report.id)
            .ok_or(DeviceError::UnknownDevice(report.id))?;
        if report.at < rec.last_seen {
            return Ok(TrackOutcome::Stale);
        }
        rec.last_seen = report.at;
        if let Some(s) = report.status {
            rec.status = s;
        }
        let mut outcome = TrackOutcome::Updated;
        if let Some(loc) = report.location {
            if !centers.is_empty() {
                let from_cluster = nearest_center(rec.location, centers);
                let to_cluster = nearest_center(loc, centers);
                if from_cluster != to_cluster {
                    outcome = TrackOutcome::Relocated {
                        from_cluster,
                        to_cluster,
                    };
                }
            }
            rec.location = loc;
        }
        Ok(outcome)
    }

    /// Moves ownership of a device, e.g. after controller failover.
    pub fn set_owner(&mut self, id: NodeId, owner: NodeId) -> Result<(), DeviceError> {
        let rec = self.devices.get_mut(&id).ok_or(DeviceError::UnknownDevice(id))?;
        rec.owner_controller = owner;
        Ok(())
    }

    pub fn positions(&self) -> BTreeMap<NodeId, (f64, f64)> {
        self.devices.iter().map(|(id, r)| (*id, r.location)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u32) -> DeviceRecord {
        DeviceRecord {
            id: NodeId(id),
            kind: DeviceKind::Sensor,
            status: DeviceStatus::Ok,
            location: (0.0, 0.0),
            last_seen: SimTime(10),
            owner_controller: NodeId(1),
        }
    }

    #[test]
    fn register_lookup_extract() {
        let mut r = DeviceRegistry::new();
        r.register_device(rec(5)).unwrap();
        assert_eq!(r.lookup(NodeId(5)).unwrap().id, NodeId(5));
        assert_eq!(r.register_device(rec(5)), Err(DeviceError::DuplicateDevice(NodeId(5))));
        assert_eq!(r.extract_device(NodeId(9)), Err(DeviceError::UnknownDevice(NodeId(9))));
        r.extract_device(NodeId(5)).unwrap();
        assert_eq!(
            r.drain_notices(),
            vec![
                RegistryNotice::Joined {
                    id: NodeId(5),
                    owner: NodeId(1)
                },
                RegistryNotice::Extracted { id: NodeId(5) }
            ]
        );
    }

    #[test]
    fn status_and_stale_reports() {
        let mut r = DeviceRegistry::new();
        r.register_device(rec(1)).unwrap();
        let busy = DeviceReport {
            id: NodeId(1),
            at: SimTime(12),
            status: Some(DeviceStatus::Busy),
            location: None,
        };
        assert_eq!(r.track_device(&busy), Ok(TrackOutcome::Updated));
        assert_eq!(r.lookup(NodeId(1)).unwrap().status, DeviceStatus::Busy);
        let old = DeviceReport {
            id: NodeId(1),
            at: SimTime(11),
            status: Some(DeviceStatus::Asleep),
            location: None,
        };
        assert_eq!(r.track_device(&old), Ok(TrackOutcome::Stale));
        let now = r.lookup(NodeId(1)).unwrap();
        assert_eq!(now.last_seen, SimTime(12));
        assert_eq!(now.status, DeviceStatus::Busy);
    }

    #[test]
    fn crossing_into_another_cell() {
        let mut r = DeviceRegistry::new();
        r.cluster_centers = vec![(0.0, 0.0), (10.0, 0.0)];
        r.register_device(rec(1)).unwrap();
        let moved = DeviceReport {
            id: NodeId(1),
            at: SimTime(20),
            status: None,
            location: Some((8.0, 0.0)),
        };
        assert_eq!(
            r.track_device(&moved),
            Ok(TrackOutcome::Relocated {
                from_cluster: 0,
                to_cluster: 1
            })
        );
    }
}
