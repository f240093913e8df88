//! Affine node clocks, time translation, offset synchronization and time stamps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::topology::{NetGraph, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClockError {
    #[error("clock of {0} has no skew/offset estimate")]
    Unsynchronized(NodeId),
    #[error("skew must be in [0.9, 1.1]")]
    InvalidSkew,
}

/// `c(t) = skew * t + offset`, plus the estimates other nodes hold of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub node: NodeId,
    pub skew: f64,
    pub offset: f64,
    pub est_skew: Option<f64>,
    pub est_offset: Option<f64>,
}

impl ClockModel {
    pub fn new(node: NodeId, skew: f64, offset: f64) -> Result<Self, ClockError> {
        if !(0.9..=1.1).contains(&skew) {
            return Err(ClockError::InvalidSkew);
        }
        Ok(Self {
            node,
            skew,
            offset,
            est_skew: None,
            est_offset: None,
        })
    }

    /// A clock whose estimates equal its true parameters.
    pub fn exact(node: NodeId, skew: f64, offset: f64) -> Result<Self, ClockError> {
        let mut c = Self::new(node, skew, offset)?;
        c.est_skew = Some(skew);
        c.est_offset = Some(offset);
        Ok(c)
    }

    pub fn read(&self, t: SimTime) -> f64 {
        self.skew * t.ticks() as f64 + self.offset
    }

    fn estimates(&self) -> Result<(f64, f64), ClockError> {
        match (self.est_skew, self.est_offset) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(ClockError::Unsynchronized(self.node)),
        }
    }

    /// Reference time for a stamp taken on this clock.
    pub fn to_reference(&self, local_ts: f64) -> Result<f64, ClockError> {
        let (a, b) = self.estimates()?;
        Ok((local_ts - b) / a)
    }

    pub fn from_reference(&self, t: f64) -> Result<f64, ClockError> {
        let (a, b) = self.estimates()?;
        Ok(a * t + b)
    }
}

/// Converts a stamp from the sender's clock into the receiver's clock.
pub fn translate_time(sender: &ClockModel, receiver: &ClockModel, remote_ts: f64) -> Result<f64, ClockError> {
    receiver.from_reference(sender.to_reference(remote_ts)?)
}

/// Least-squares line through (reference, local) stamp pairs; two pairs give
/// the exact line. Returns (skew, offset).
pub fn estimate_skew(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

/// One synchronous round of neighbor averaging over offset estimates:
/// `b_i += eta / (|N_i| + 1) * sum_j (b_j - b_i)`. Nodes without an estimate
/// neither move nor contribute.
pub fn sync_round(clocks: &mut BTreeMap<NodeId, ClockModel>, graph: &NetGraph, eta: f64) {
    let snapshot: BTreeMap<NodeId, f64> = clocks
        .iter()
        .filter_map(|(id, c)| c.est_offset.map(|b| (*id, b)))
        .collect();
    for (id, c) in clocks.iter_mut() {
        let Some(&bi) = snapshot.get(id) else { continue };
        let mut sum = 0.0;
        let mut deg = 0usize;
        for (j, _) in graph.adjacent(*id) {
            if let Some(&bj) = snapshot.get(&j) {
                sum += bj - bi;
                deg += 1;
            }
        }
        if deg > 0 {
            c.est_offset = Some(bi + eta / (deg as f64 + 1.0) * sum);
        }
    }
}

/// Largest pairwise difference between offset estimates.
pub fn offset_spread(clocks: &BTreeMap<NodeId, ClockModel>) -> f64 {
    let vals = clocks.values().filter_map(|c| c.est_offset);
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StampTense {
    Past,
    Present,
    Future,
}

/// Time-stamping service: a record of past, present and scheduled events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeStampLog {
    entries: Vec<(SimTime, String)>,
}

impl TimeStampLog {
    pub fn stamp(&mut self, at: SimTime, label: impl Into<String>) {
        self.entries.push((at, label.into()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn classify(&self, now: SimTime) -> Vec<(StampTense, SimTime, &str)> {
        self.entries
            .iter()
            .map(|(t, l)| {
                let tense = match t.cmp(&now) {
                    std::cmp::Ordering::Less => StampTense::Past,
                    std::cmp::Ordering::Equal => StampTense::Present,
                    std::cmp::Ordering::Greater => StampTense::Future,
                };
                (tense, *t, l.as_str())
            })
            .collect()
    }
}
