//! Discrete-time LTI plants, state estimation, the tiered feedback laws and
//! constant-velocity mobility.
//!
//! Conventions for one control period `k -> k+1`:
//!
//! ```text
//! x(k+1) = A x(k) + B u(k) + w
//! y(k+1) = C x(k+1) + D u(k) + v
//! ```
//!
//! The measurement stored in a [`PlantState`] always belongs to its current
//! state, so a full-state readout gives `x_hat == x` after every step.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;
use crate::topology::{Hierarchy, NetGraph, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("noise standard deviation must be finite and non-negative")]
    InvalidNoise,
    #[error("model is not observable with the chosen estimator")]
    NotObservable,
    #[error("missing estimate for neighbor {0}")]
    MissingNeighborEstimate(NodeId),
    #[error("no gain rule covers plant {0}")]
    UncoveredPlant(NodeId),
}

fn mismatch(what: &str) -> PlantError {
    PlantError::DimensionMismatch(what.to_string())
}

/// `(A, B, C, D)` with optional Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub process_noise_std: f64,
    pub measurement_noise_std: f64,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self, PlantError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(mismatch("A must be square"));
        }
        if b.nrows() != n {
            return Err(mismatch("B rows"));
        }
        if c.ncols() != n {
            return Err(mismatch("C cols"));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(mismatch("D shape"));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            process_noise_std: 0.0,
            measurement_noise_std: 0.0,
        })
    }

    /// Fully observed plant: `C = I`, `D = 0`.
    pub fn full_state(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, PlantError> {
        let n = a.nrows();
        let m = b.ncols();
        Self::new(a, b, DMatrix::identity(n, n), DMatrix::zeros(n, m))
    }

    pub fn scalar(a: f64, b: f64) -> Self {
        Self::full_state(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)).expect("1x1 plant")
    }

    pub fn with_noise(mut self, process: f64, measurement: f64) -> Result<Self, PlantError> {
        for s in [process, measurement] {
            if !s.is_finite() || s < 0.0 {
                return Err(PlantError::InvalidNoise);
            }
        }
        self.process_noise_std = process;
        self.measurement_noise_std = measurement;
        Ok(self)
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Rank of `[C; CA; ...; CA^(n-1)]`.
    pub fn observability_rank(&self) -> usize {
        let n = self.states();
        let p = self.outputs();
        let mut obs = DMatrix::zeros(n * p, n);
        let mut block = self.c.clone();
        for i in 0..n {
            obs.view_mut((i * p, 0), (p, n)).copy_from(&block);
            block = &block * &self.a;
        }
        obs.rank(1e-9)
    }

    pub fn is_full_state_readout(&self) -> bool {
        let n = self.states();
        self.outputs() == n && self.c == DMatrix::identity(n, n) && self.d.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub k: u64,
}

impl PlantState {
    /// State `x0` with zero input, its noiseless measurement and `x_hat = 0`.
    pub fn new(model: &PlantModel, x0: DVector<f64>) -> Result<Self, PlantError> {
        if x0.len() != model.states() {
            return Err(mismatch("x0 length"));
        }
        let u = DVector::zeros(model.inputs());
        let y = &model.c * &x0 + &model.d * &u;
        Ok(Self {
            x_hat: DVector::zeros(model.states()),
            x: x0,
            u,
            y,
            k: 0,
        })
    }
}

fn add_noise(v: &mut DVector<f64>, std: f64, rng: Option<&mut SimRng>) {
    if std == 0.0 {
        return;
    }
    if let Some(rng) = rng {
        let normal = Normal::new(0.0, std).expect("validated std");
        for e in v.iter_mut() {
            *e += normal.sample(rng);
        }
    }
}

/// Advances the plant one period under input `u`. Noise is only drawn when a
/// generator is supplied.
pub fn step_plant(
    model: &PlantModel,
    state: &PlantState,
    u: &DVector<f64>,
    mut rng: Option<&mut SimRng>,
) -> Result<PlantState, PlantError> {
    if state.x.len() != model.states() {
        return Err(mismatch("state length"));
    }
    if u.len() != model.inputs() {
        return Err(mismatch("input length"));
    }
    let mut x = &model.a * &state.x + &model.b * u;
    add_noise(&mut x, model.process_noise_std, rng.as_deref_mut());
    let mut y = &model.c * &x + &model.d * u;
    add_noise(&mut y, model.measurement_noise_std, rng);
    Ok(PlantState {
        x,
        x_hat: state.x_hat.clone(),
        u: u.clone(),
        y,
        k: state.k + 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EstimatorMode {
    /// `x_hat = y`; requires `C = I`, `D = 0`.
    FullObs,
    /// `x_hat' = A x_hat + B u + L (y - C x_hat - D u)`.
    Luenberger { gain: DMatrix<f64> },
}

/// Produces the next estimate.
///
/// For `FullObs`, `y` is the measurement of the state being estimated. For
/// `Luenberger`, `y` and `u` belong to the period the current estimate refers
/// to, and the result is the one-step prediction.
pub fn estimate(
    model: &PlantModel,
    mode: &EstimatorMode,
    x_hat: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>, PlantError> {
    if y.len() != model.outputs() {
        return Err(mismatch("measurement length"));
    }
    match mode {
        EstimatorMode::FullObs => {
            if !model.is_full_state_readout() {
                return Err(PlantError::NotObservable);
            }
            Ok(y.clone())
        }
        EstimatorMode::Luenberger { gain } => {
            if gain.nrows() != model.states() || gain.ncols() != model.outputs() {
                return Err(mismatch("observer gain shape"));
            }
            if x_hat.len() != model.states() || u.len() != model.inputs() {
                return Err(mismatch("estimate/input length"));
            }
            if model.observability_rank() < model.states() {
                return Err(PlantError::NotObservable);
            }
            let innovation = y - &model.c * x_hat - &model.d * u;
            Ok(&model.a * x_hat + &model.b * u + gain * innovation)
        }
    }
}

/// Self-controller: `u = K x_hat`.
pub fn self_control(gain: &DMatrix<f64>, x_hat: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
    if gain.ncols() != x_hat.len() {
        return Err(mismatch("gain columns vs estimate length"));
    }
    Ok(gain * x_hat)
}

/// Local controller: `u = sum_j K_j x_hat_j` over the keys of `gains`
/// (the closed neighborhood).
pub fn local_control(
    gains: &BTreeMap<NodeId, DMatrix<f64>>,
    estimates: &BTreeMap<NodeId, DVector<f64>>,
) -> Result<DVector<f64>, PlantError> {
    let mut acc: Option<DVector<f64>> = None;
    for (j, k) in gains {
        let xj = estimates.get(j).ok_or(PlantError::MissingNeighborEstimate(*j))?;
        let term = self_control(k, xj)?;
        acc = Some(match acc {
            None => term,
            Some(sum) => {
                if sum.len() != term.len() {
                    return Err(mismatch("gain rows differ across neighbors"));
                }
                sum + term
            }
        });
    }
    acc.ok_or_else(|| mismatch("empty gain set"))
}

/// How an area coordinator fills in the gains of the plants it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GainRule {
    /// Fixed self gain, no neighbor terms.
    Static(DMatrix<f64>),
    /// `K = k I`.
    Scaled(f64),
    /// `K_ii = -eps deg(i) I`, `K_ij = eps I` for neighbors `j`.
    Consensus { epsilon: f64 },
}

/// Rules keyed by partition (highest precedence), then tree level, then a
/// catch-all default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GainTemplate {
    pub by_partition: BTreeMap<usize, GainRule>,
    pub by_level: BTreeMap<u32, GainRule>,
    pub default: Option<GainRule>,
}

impl GainTemplate {
    pub fn uniform(rule: GainRule) -> Self {
        Self {
            default: Some(rule),
            ..Self::default()
        }
    }
}

/// Gains one plant applies to its closed neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLaw {
    pub level: u32,
    pub gains: BTreeMap<NodeId, DMatrix<f64>>,
}

impl LocalLaw {
    pub fn self_gain(&self, me: NodeId) -> &DMatrix<f64> {
        &self.gains[&me]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub laws: BTreeMap<NodeId, LocalLaw>,
    pub epoch: u64,
}

/// Plant dimensions `(states, inputs)` keyed by node.
pub type PlantDims = BTreeMap<NodeId, (usize, usize)>;

/// Assigns gains to every plant from the rule template.
///
/// `interaction` supplies neighborhoods for consensus rules; `partition_of`
/// maps plants to their partition; levels come from `hierarchy` when the
/// plant is part of it (0 otherwise).
pub fn design_gains(
    plants: &PlantDims,
    interaction: &NetGraph,
    hierarchy: Option<&Hierarchy>,
    partition_of: &BTreeMap<NodeId, usize>,
    template: &GainTemplate,
    previous_epoch: u64,
) -> Result<GainSchedule, PlantError> {
    let mut laws = BTreeMap::new();
    for (&id, &(n, m)) in plants {
        let level = hierarchy.and_then(|h| h.level(id)).unwrap_or(0);
        let rule = partition_of
            .get(&id)
            .and_then(|p| template.by_partition.get(p))
            .or_else(|| template.by_level.get(&level))
            .or(template.default.as_ref())
            .ok_or(PlantError::UncoveredPlant(id))?;
        let square = |k: f64| -> Result<DMatrix<f64>, PlantError> {
            if n != m {
                return Err(mismatch("scaled gains need as many inputs as states"));
            }
            Ok(DMatrix::identity(m, n) * k)
        };
        let mut gains = BTreeMap::new();
        match rule {
            GainRule::Static(k) => {
                if k.nrows() != m || k.ncols() != n {
                    return Err(mismatch("static gain shape"));
                }
                gains.insert(id, k.clone());
            }
            GainRule::Scaled(k) => {
                gains.insert(id, square(*k)?);
            }
            GainRule::Consensus { epsilon } => {
                let nbrs: BTreeSet<NodeId> = if interaction.contains(id) {
                    interaction
                        .neighbors(id)
                        .expect("present")
                        .into_iter()
                        .filter(|j| plants.contains_key(j))
                        .collect()
                } else {
                    BTreeSet::new()
                };
                gains.insert(id, square(-epsilon * nbrs.len() as f64)?);
                for j in nbrs {
                    gains.insert(j, square(*epsilon)?);
                }
            }
        }
        laws.insert(id, LocalLaw { level, gains });
    }
    Ok(GainSchedule {
        laws,
        epoch: previous_epoch + 1,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub position: (f64, f64),
    pub velocity: (f64, f64),
}

/// Constant-velocity motion over `dt` seconds.
pub fn step_mobility(mob: MobilityState, dt: f64) -> MobilityState {
    debug_assert!(dt > 0.0);
    MobilityState {
        position: (
            mob.position.0 + mob.velocity.0 * dt,
            mob.position.1 + mob.velocity.1 * dt,
        ),
        velocity: mob.velocity,
    }
}
