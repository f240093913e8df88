//! TOML configuration: system shape, plant and gain templates, scheduler,
//! workload, middleware and security parameters.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::sdn::PathPolicy;
use crate::engine::SimTime;
use crate::plant::{GainRule, GainTemplate, PlantModel};
use crate::security::attack::AttackSpec;
use crate::security::detect::DetectorParams;
use crate::topology::NodeId;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub n_local: usize,
    pub switches_per_local: usize,
    pub hosts_per_switch: usize,
    pub partitions: usize,
    /// Super controllers between the root and the locals; 0 for none.
    pub supers: usize,
    pub path_policy: PolicyName,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_local: 8,
            switches_per_local: 2,
            hosts_per_switch: 8,
            partitions: 2,
            supers: 0,
            path_policy: PolicyName::Shortest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Shortest,
    Mst,
}

impl From<PolicyName> for PathPolicy {
    fn from(p: PolicyName) -> Self {
        match p {
            PolicyName::Shortest => PathPolicy::Shortest,
            PolicyName::Mst => PathPolicy::Mst,
        }
    }
}

/// Row-major matrices for the host plant template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub process_noise: f64,
    pub measurement_noise: f64,
    /// Residual above which a sensor reading counts as tampered.
    pub tamper_threshold: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            a: vec![vec![0.9]],
            b: vec![vec![1.0]],
            c: vec![vec![1.0]],
            d: vec![vec![0.0]],
            x0: vec![1.0],
            process_noise: 0.0,
            measurement_noise: 0.0,
            tamper_threshold: 0.5,
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(ConfigError::ConfigInvalid(format!(
            "plant.{name} must be a non-empty rectangular matrix"
        )));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

impl PlantConfig {
    pub fn model(&self) -> Result<PlantModel, ConfigError> {
        let m = PlantModel::new(
            matrix("a", &self.a)?,
            matrix("b", &self.b)?,
            matrix("c", &self.c)?,
            matrix("d", &self.d)?,
        )
        .and_then(|m| m.with_noise(self.process_noise, self.measurement_noise))
        .map_err(|e| ConfigError::ConfigInvalid(format!("plant: {e}")))?;
        if self.x0.len() != m.states() {
            return Err(ConfigError::ConfigInvalid(
                "plant.x0 length differs from the state dimension".into(),
            ));
        }
        Ok(m)
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Scaled,
    Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub rule: GainKind,
    /// Self gain for `scaled`.
    pub k: f64,
    /// Coupling for `consensus`.
    pub epsilon: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            rule: GainKind::Scaled,
            k: -0.5,
            epsilon: 0.1,
        }
    }
}

impl GainsConfig {
    pub fn template(&self) -> GainTemplate {
        GainTemplate::uniform(match self.rule {
            GainKind::Scaled => GainRule::Scaled(self.k),
            GainKind::Consensus => GainRule::Consensus { epsilon: self.epsilon },
        })
    }
}

/// Per-tick service budgets (packets forwarded per tick) and link latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub capacity_global: u32,
    pub capacity_super: u32,
    pub capacity_local: u32,
    pub capacity_switch: u32,
    pub capacity_host: u32,
    pub link_latency: u64,
    /// Shard controller queues by destination local.
    pub location_bins: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            capacity_global: 6,
            capacity_super: 4,
            capacity_local: 2,
            capacity_switch: 4,
            capacity_host: 2,
            link_latency: 1,
            location_bins: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Source and destination hosts drawn uniformly at random.
    Uniform,
    /// Host `i` always sends to host `(i + N/2) mod N`, one request at a time.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// DATA packets per request.
    pub flow_packets: u32,
    /// Requests outstanding at once (uniform pattern).
    pub window: usize,
    pub pattern: Pattern,
    /// Ticks after which an unfinished request counts as lost.
    pub request_timeout: u64,
    pub payload_bytes: usize,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            flow_packets: 4,
            window: 64,
            pattern: Pattern::Uniform,
            request_timeout: 1000,
            payload_bytes: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiddlewareConfig {
    pub heartbeat_period: u64,
    /// Missed heartbeats before failover (H).
    pub missed_heartbeats: u32,
    pub hop_timeout: u64,
    pub sync_eta: f64,
    /// Ticks per plant step.
    pub control_period: u64,
}

impl Default for MiddlewareConfig {
    fn default() -> Self {
        Self {
            heartbeat_period: 20,
            missed_heartbeats: 3,
            hop_timeout: 50,
            sync_eta: 0.5,
            control_period: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityConfig {
    pub enabled: bool,
    pub flood_threshold: u32,
    pub window: u64,
    pub denial_limit: u32,
    pub cooldown: u64,
    /// Encrypt payloads of sealed flows.
    pub encryption: bool,
    /// Issue a key per host flow and tag every DATA packet.
    pub seal_flows: bool,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        let p = DetectorParams::default();
        Self {
            enabled: true,
            flood_threshold: p.flood_threshold,
            window: p.window,
            denial_limit: p.denial_limit,
            cooldown: p.cooldown,
            encryption: false,
            seal_flows: true,
        }
    }
}

impl SecurityConfig {
    pub fn params(&self) -> DetectorParams {
        DetectorParams {
            flood_threshold: self.flood_threshold,
            window: self.window,
            denial_limit: self.denial_limit,
            cooldown: self.cooldown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub cache_capacity: usize,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self { cache_capacity: 64 }
    }
}

/// Hard failure of a node at a given tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub node: NodeId,
    pub at: SimTime,
}

/// Overrides of a scenario's swept values and run length.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Values of the swept variable (Sc1, Sc2: counts; Sc3: sim_time).
    pub values: Option<Vec<u64>>,
    /// (n_local, hosts_per_switch) pairs for Sc4.
    pub pairs: Option<Vec<(usize, usize)>>,
    pub requests: Option<u64>,
    pub sim_time: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub seed: u64,
    pub topology: TopologyConfig,
    pub plant: PlantConfig,
    pub gains: GainsConfig,
    pub scheduler: SchedulerConfig,
    pub workload: WorkloadConfig,
    pub middleware: MiddlewareConfig,
    pub security: SecurityConfig,
    pub storage: StorageConfig,
    pub sweep: SweepConfig,
    pub attacks: Vec<AttackSpec>,
    pub failures: Vec<FailureSpec>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            topology: TopologyConfig::default(),
            plant: PlantConfig::default(),
            gains: GainsConfig::default(),
            scheduler: SchedulerConfig::default(),
            workload: WorkloadConfig::default(),
            middleware: MiddlewareConfig::default(),
            security: SecurityConfig::default(),
            storage: StorageConfig::default(),
            sweep: SweepConfig::default(),
            attacks: Vec::new(),
            failures: Vec::new(),
        }
    }
}

impl SystemConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config = Self::from_toml(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Same config with a different shape.
    pub fn with_shape(&self, n_local: usize, switches_per_local: usize, hosts_per_switch: usize) -> Self {
        let mut c = self.clone();
        c.topology.n_local = n_local;
        c.topology.switches_per_local = switches_per_local;
        c.topology.hosts_per_switch = hosts_per_switch;
        c.topology.partitions = c.topology.partitions.min(n_local).max(1);
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::ConfigInvalid(m));
        let t = &self.topology;
        if t.n_local == 0 || t.switches_per_local == 0 || t.hosts_per_switch == 0 {
            return bad("topology counts must be positive".into());
        }
        if t.partitions == 0 {
            return bad("partitions must be positive".into());
        }
        if t.partitions > t.n_local {
            return bad(format!("partitions ({}) exceed n_local ({})", t.partitions, t.n_local));
        }
        if t.supers > 0 && !t.n_local.is_multiple_of(t.supers) {
            return bad(format!(
                "n_local ({}) must be a multiple of supers ({})",
                t.n_local, t.supers
            ));
        }
        self.plant.model()?;
        if self.plant.tamper_threshold.is_nan() || self.plant.tamper_threshold <= 0.0 {
            return bad("plant.tamper_threshold must be positive".into());
        }
        let s = &self.scheduler;
        if [
            s.capacity_global,
            s.capacity_super,
            s.capacity_local,
            s.capacity_switch,
            s.capacity_host,
        ]
        .contains(&0)
        {
            return bad("scheduler capacities must be positive".into());
        }
        if s.link_latency == 0 {
            return bad("scheduler.link_latency must be positive".into());
        }
        let w = &self.workload;
        if w.flow_packets == 0 || w.window == 0 || w.request_timeout == 0 {
            return bad("workload.flow_packets, window and request_timeout must be positive".into());
        }
        let m = &self.middleware;
        if m.heartbeat_period == 0 || m.missed_heartbeats == 0 || m.control_period == 0 {
            return bad("middleware periods and missed_heartbeats must be positive".into());
        }
        if !(m.sync_eta > 0.0 && m.sync_eta <= 1.0) {
            return bad("middleware.sync_eta must lie in (0, 1]".into());
        }
        if self.security.window == 0 || self.security.denial_limit == 0 {
            return bad("security.window and denial_limit must be positive".into());
        }
        if self.storage.cache_capacity == 0 {
            return bad("storage.cache_capacity must be positive".into());
        }
        for (i, a) in self.attacks.iter().enumerate() {
            a.validate()
                .map_err(|e| ConfigError::ConfigInvalid(format!("attacks[{i}]: {e}")))?;
        }
        if let Some(v) = &self.sweep.values {
            if v.is_empty() || v.contains(&0) {
                return bad("sweep.values must be non-empty and positive".into());
            }
        }
        if let Some(p) = &self.sweep.pairs {
            if p.is_empty() || p.iter().any(|(l, h)| *l == 0 || *h == 0) {
                return bad("sweep.pairs must be non-empty and positive".into());
            }
        }
        Ok(())
    }
}
