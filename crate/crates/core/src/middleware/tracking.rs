//! Position tracking and speed stamping for mobile nodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrackError {
    #[error("track of {node} is {age} ticks old, bound is {bound}")]
    StaleTrack { node: NodeId, age: u64, bound: u64 },
    #[error("no track for {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub node: NodeId,
    pub position: (f64, f64),
    /// Meters per tick.
    pub velocity: (f64, f64),
    pub timestamp: SimTime,
}

/// Constant-velocity extrapolation `horizon_dt` ticks past the last fix.
pub fn predict_position(
    track: &Track,
    horizon_dt: f64,
    now: SimTime,
    staleness: u64,
) -> Result<(f64, f64), TrackError> {
    let age = now.saturating_since(track.timestamp);
    if age > staleness {
        return Err(TrackError::StaleTrack {
            node: track.node,
            age,
            bound: staleness,
        });
    }
    Ok((
        track.position.0 + track.velocity.0 * horizon_dt,
        track.position.1 + track.velocity.1 * horizon_dt,
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionTracker {
    tracks: BTreeMap<NodeId, Track>,
}

impl PositionTracker {
    pub fn get(&self, node: NodeId) -> Option<&Track> {
        self.tracks.get(&node)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Records a position fix. The speed stamp is the displacement since the
    /// previous fix divided by the elapsed ticks. Out-of-order fixes are ignored.
    pub fn record_fix(&mut self, node: NodeId, position: (f64, f64), at: SimTime) -> &Track {
        let entry = self.tracks.entry(node).or_insert(Track {
            node,
            position,
            velocity: (0.0, 0.0),
            timestamp: at,
        });
        if at > entry.timestamp {
            let dt = (at.ticks() - entry.timestamp.ticks()) as f64;
            entry.velocity = (
                (position.0 - entry.position.0) / dt,
                (position.1 - entry.position.1) / dt,
            );
            entry.position = position;
            entry.timestamp = at;
        }
        entry
    }

    pub fn predict(
        &self,
        node: NodeId,
        horizon_dt: f64,
        now: SimTime,
        staleness: u64,
    ) -> Result<(f64, f64), TrackError> {
        let t = self.tracks.get(&node).ok_or(TrackError::UnknownNode(node))?;
        predict_position(t, horizon_dt, now, staleness)
    }
}
