//! The four experimental scenarios and the cell runner.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::SystemConfig;
use super::setup::{setup, SetupError};
use super::sim::{RunMode, SimOutcome, Simulation};
use crate::engine::{SimTime, TraceLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    Sc1,
    Sc2,
    Sc3,
    Sc4,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::Sc1 => "Sc1",
            ScenarioId::Sc2 => "Sc2",
            ScenarioId::Sc3 => "Sc3",
            ScenarioId::Sc4 => "Sc4",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown scenario {0:?}; expected Sc1, Sc2, Sc3 or Sc4")]
pub struct UnknownScenario(pub String);

impl FromStr for ScenarioId {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sc1" => Ok(ScenarioId::Sc1),
            "sc2" => Ok(ScenarioId::Sc2),
            "sc3" => Ok(ScenarioId::Sc3),
            "sc4" => Ok(ScenarioId::Sc4),
            _ => Err(UnknownScenario(s.to_string())),
        }
    }
}

/// What a scenario varies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sweep {
    /// Number of local controllers.
    Controllers(Vec<usize>),
    /// Hosts per switch.
    Hosts(Vec<usize>),
    /// Simulated run length.
    SimTime(Vec<u64>),
    /// (n_local, hosts_per_switch) pairs with a fixed product.
    Balance(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub sweep: Sweep,
    /// Values not swept: (n_local, switches_per_local, hosts_per_switch).
    pub fixed: (usize, usize, usize),
    /// Requests per cell, or `None` to run until `sim_time`.
    pub requests: Option<u64>,
    pub sim_time: Option<SimTime>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario {0} does not have the expected shape: {1}")]
    Shape(ScenarioId, String),
}

pub const STANDARD_REQUESTS: u64 = 10_000;
pub const SWITCHES_PER_LOCAL: usize = 2;

impl ScenarioSpec {
    /// The standard sweep for each scenario.
    pub fn standard(id: ScenarioId) -> Self {
        let s = SWITCHES_PER_LOCAL;
        match id {
            ScenarioId::Sc1 => Self {
                id,
                sweep: Sweep::Controllers(vec![2, 4, 8, 16]),
                fixed: (8, s, 8),
                requests: Some(STANDARD_REQUESTS),
                sim_time: None,
            },
            ScenarioId::Sc2 => Self {
                id,
                sweep: Sweep::Hosts(vec![2, 4, 8, 16]),
                fixed: (8, s, 8),
                requests: Some(STANDARD_REQUESTS),
                sim_time: None,
            },
            ScenarioId::Sc3 => Self {
                id,
                sweep: Sweep::SimTime(vec![1000, 2000, 4000, 8000, 16000]),
                fixed: (8, s, 8),
                requests: None,
                sim_time: None,
            },
            ScenarioId::Sc4 => Self {
                id,
                sweep: Sweep::Balance(vec![(4, 16), (8, 8), (16, 4)]),
                fixed: (8, s, 8),
                requests: None,
                sim_time: Some(SimTime(4000)),
            },
        }
    }

    /// The standard sweep with the overrides from `[sweep]` applied.
    pub fn from_config(id: ScenarioId, config: &SystemConfig) -> Result<Self, ScenarioError> {
        let mut spec = Self::standard(id);
        let t = &config.topology;
        spec.fixed = (t.n_local, t.switches_per_local, t.hosts_per_switch);
        let o = &config.sweep;
        if let Some(values) = &o.values {
            let as_usize = || values.iter().map(|v| *v as usize).collect();
            spec.sweep = match id {
                ScenarioId::Sc1 => Sweep::Controllers(as_usize()),
                ScenarioId::Sc2 => Sweep::Hosts(as_usize()),
                ScenarioId::Sc3 => Sweep::SimTime(values.clone()),
                ScenarioId::Sc4 => {
                    return Err(ScenarioError::Shape(id, "Sc4 sweeps pairs, not values".into()));
                }
            };
        }
        if let Some(pairs) = &o.pairs {
            if id != ScenarioId::Sc4 {
                return Err(ScenarioError::Shape(id, "only Sc4 sweeps pairs".into()));
            }
            spec.sweep = Sweep::Balance(pairs.clone());
        }
        if let Some(r) = o.requests {
            spec.requests = Some(r);
        }
        if let Some(t) = o.sim_time {
            spec.sim_time = Some(SimTime(t));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Shape(self.id, m.into()));
        let nonempty = match &self.sweep {
            Sweep::Controllers(v) | Sweep::Hosts(v) => !v.is_empty() && !v.contains(&0),
            Sweep::SimTime(v) => !v.is_empty() && !v.contains(&0),
            Sweep::Balance(v) => !v.is_empty() && v.iter().all(|(l, h)| *l > 0 && *h > 0),
        };
        if !nonempty {
            return bad("swept values must be non-empty and positive");
        }
        match (self.id, &self.sweep) {
            (ScenarioId::Sc1, Sweep::Controllers(_)) | (ScenarioId::Sc2, Sweep::Hosts(_)) => {
                if self.requests.is_none() {
                    return bad("a request count is required");
                }
            }
            (ScenarioId::Sc3, Sweep::SimTime(_)) => {
                if self.requests.is_some() {
                    return bad("runs until each swept sim_time");
                }
            }
            (ScenarioId::Sc4, Sweep::Balance(pairs)) => {
                if self.requests.is_some() || self.sim_time.is_none() {
                    return bad("runs until a common sim_time");
                }
                let product = pairs[0].0 * pairs[0].1;
                if pairs.iter().any(|(l, h)| l * h != product) {
                    return bad("every pair must have the same n_local x hosts_per_switch product");
                }
            }
            _ => return bad("sweep kind does not match the scenario"),
        }
        Ok(())
    }

    /// Every cell of the sweep, in swept-value order.
    pub fn cells(&self) -> Vec<Cell> {
        let (l, s, h) = self.fixed;
        let mode = |t: u64| match self.requests {
            Some(n) => RunMode::Requests(n),
            None => RunMode::Until(SimTime(t)),
        };
        let fixed_t = self.sim_time.map_or(0, SimTime::ticks);
        match &self.sweep {
            Sweep::Controllers(v) => v.iter().map(|&n| Cell::new(n, s, h, mode(fixed_t))).collect(),
            Sweep::Hosts(v) => v.iter().map(|&n| Cell::new(l, s, n, mode(fixed_t))).collect(),
            Sweep::SimTime(v) => v
                .iter()
                .map(|&t| Cell::new(l, s, h, RunMode::Until(SimTime(t))))
                .collect(),
            Sweep::Balance(v) => v.iter().map(|&(n, hh)| Cell::new(n, s, hh, mode(fixed_t))).collect(),
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub n_local: usize,
    pub switches_per_local: usize,
    pub hosts_per_switch: usize,
    pub mode: RunMode,
}

impl Cell {
    pub fn new(n_local: usize, switches_per_local: usize, hosts_per_switch: usize, mode: RunMode) -> Self {
        Self {
            n_local,
            switches_per_local,
            hosts_per_switch,
            mode,
        }
    }

    pub fn config(&self, base: &SystemConfig, seed: u64) -> SystemConfig {
        let mut c = base.with_shape(self.n_local, self.switches_per_local, self.hosts_per_switch);
        c.seed = seed;
        c
    }
}

/// One row of the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: ScenarioId,
    pub n_local: usize,
    pub switches_per_local: usize,
    pub hosts_per_switch: usize,
    pub seed: u64,
    pub sim_time: u64,
    pub requests_served: u64,
    pub config_work: u64,
    pub config_wall_ms: f64,
    pub test_wall_ms: f64,
    pub requests_issued: u64,
    pub requests_lost: u64,
}

impl MetricsRecord {
    /// The record with wall-clock fields zeroed, for determinism checks.
    pub fn without_wall(&self) -> Self {
        Self {
            config_wall_ms: 0.0,
            test_wall_ms: 0.0,
            ..self.clone()
        }
    }
}

/// Result of one cell: the record plus the full outcome for inspection.
pub struct CellRun {
    pub record: MetricsRecord,
    pub outcome: SimOutcome,
}

pub fn cell_header(id: ScenarioId, cell: &Cell, seed: u64) -> String {
    let mode = match cell.mode {
        RunMode::Requests(n) => format!("requests={n}"),
        RunMode::Until(t) => format!("sim_time={t}"),
    };
    format!(
        "# cell scenario={id} n_local={} switches_per_local={} hosts_per_switch={} seed={seed} {mode}",
        cell.n_local, cell.switches_per_local, cell.hosts_per_switch
    )
}

/// Sets up and runs one cell. When `trace` is given the cell's header and
/// events are appended to it and it is handed back.
pub fn run_cell(
    id: ScenarioId,
    cell: &Cell,
    base: &SystemConfig,
    seed: u64,
    trace: Option<TraceLog>,
) -> Result<(CellRun, Option<TraceLog>), SetupError> {
    let config = cell.config(base, seed);
    let sys = setup(&config)?;
    let config_work = sys.config_work;
    let config_wall_ms = sys.config_wall_ms;
    let started = Instant::now();
    let mut sim = Simulation::new(sys, cell.mode, trace);
    sim.trace_note(&cell_header(id, cell, seed));
    let (outcome, trace, _) = sim.run();
    let test_wall_ms = started.elapsed().as_secs_f64() * 1e3;
    log::info!(
        "{id} L={} s={} h={} seed={seed}: served {} lost {} by t={}",
        cell.n_local,
        cell.switches_per_local,
        cell.hosts_per_switch,
        outcome.served,
        outcome.lost,
        outcome.end_time
    );
    let record = MetricsRecord {
        scenario: id,
        n_local: cell.n_local,
        switches_per_local: cell.switches_per_local,
        hosts_per_switch: cell.hosts_per_switch,
        seed,
        sim_time: outcome.end_time.ticks(),
        requests_served: outcome.served,
        config_work,
        config_wall_ms,
        test_wall_ms,
        requests_issued: outcome.issued,
        requests_lost: outcome.lost,
    };
    Ok((CellRun { record, outcome }, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for independent cells; traced runs are sequential.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Runs every (cell, seed) pair. Results are ordered by swept value, then seed.
pub fn run_scenario_cells(
    spec: &ScenarioSpec,
    base: &SystemConfig,
    seeds: &[u64],
    options: RunOptions,
) -> Result<Vec<CellRun>, SetupError> {
    spec.validate()
        .map_err(|e| SetupError::Config(super::config::ConfigError::ConfigInvalid(e.to_string())))?;
    let jobs: Vec<(Cell, u64)> = spec
        .cells()
        .into_iter()
        .flat_map(|c| seeds.iter().map(move |s| (c, *s)))
        .collect();
    let slots: Vec<Mutex<Option<Result<CellRun, SetupError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((cell, seed)) = jobs.get(i) else { break };
                let r = run_cell(spec.id, cell, base, *seed, None).map(|(run, _)| run);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

pub fn run_scenario(
    spec: &ScenarioSpec,
    base: &SystemConfig,
    seeds: &[u64],
    options: RunOptions,
) -> Result<Vec<MetricsRecord>, SetupError> {
    Ok(run_scenario_cells(spec, base, seeds, options)?
        .into_iter()
        .map(|r| r.record)
        .collect())
}

/// Sequential run that threads one trace through every cell.
pub fn run_scenario_traced(
    spec: &ScenarioSpec,
    base: &SystemConfig,
    seeds: &[u64],
    mut trace: TraceLog,
) -> Result<(Vec<MetricsRecord>, TraceLog), SetupError> {
    spec.validate()
        .map_err(|e| SetupError::Config(super::config::ConfigError::ConfigInvalid(e.to_string())))?;
    let mut out = Vec::new();
    for cell in spec.cells() {
        for &seed in seeds {
            let (run, t) = run_cell(spec.id, &cell, base, seed, Some(trace))?;
            trace = t.expect("trace handed back");
            out.push(run.record);
        }
    }
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_specs_validate() {
        for id in [ScenarioId::Sc1, ScenarioId::Sc2, ScenarioId::Sc3, ScenarioId::Sc4] {
            ScenarioSpec::standard(id).validate().unwrap();
            assert_eq!(id.to_string().parse::<ScenarioId>().unwrap(), id);
        }
        assert_eq!(ScenarioSpec::standard(ScenarioId::Sc1).cells().len(), 4);
        assert_eq!(ScenarioSpec::standard(ScenarioId::Sc3).cells().len(), 5);
    }

    #[test]
    fn unbalanced_product_rejected() {
        let mut s = ScenarioSpec::standard(ScenarioId::Sc4);
        s.sweep = Sweep::Balance(vec![(4, 16), (8, 4)]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut c = SystemConfig::default();
        c.sweep.values = Some(vec![2, 4]);
        c.sweep.requests = Some(50);
        let s = ScenarioSpec::from_config(ScenarioId::Sc1, &c).unwrap();
        assert_eq!(s.sweep, Sweep::Controllers(vec![2, 4]));
        assert_eq!(s.requests, Some(50));
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut c = SystemConfig::default();
        c.sweep.values = Some(vec![2, 3]);
        c.sweep.requests = Some(40);
        c.topology.partitions = 1;
        let spec = ScenarioSpec::from_config(ScenarioId::Sc1, &c).unwrap();
        let par = run_scenario(&spec, &c, &[1, 2], RunOptions { threads: 4 }).unwrap();
        let seq = run_scenario(&spec, &c, &[1, 2], RunOptions { threads: 1 }).unwrap();
        let strip = |v: &[MetricsRecord]| v.iter().map(MetricsRecord::without_wall).collect::<Vec<_>>();
        assert_eq!(strip(&par), strip(&seq));
        assert_eq!(par.len(), 4);
        assert_eq!((par[0].n_local, par[0].seed, par[1].seed), (2, 1, 2));
    }
}
