use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use sdcps_core::control::node::NodeStatus;
use sdcps_core::engine::{SimTime, TraceLog};
use sdcps_core::scenario::config::{FailureSpec, Pattern, SystemConfig};
use sdcps_core::scenario::runner::{run_scenario, run_scenario_traced, RunOptions, ScenarioId, ScenarioSpec, Sweep};
use sdcps_core::scenario::setup::setup;
use sdcps_core::scenario::sim::{RunMode, Simulation};
use sdcps_core::topology::Role;

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn bringup_registers_every_controller_instance() {
    for (l, s, h) in [(2, 2, 2), (4, 2, 3), (8, 2, 8)] {
        let sys = setup(&SystemConfig::default().with_shape(l, s, h)).unwrap();
        let vertices: Vec<_> = sys.hierarchy.nodes().collect();
        assert_eq!(sys.lists.all, vertices);
        assert_eq!(sys.images.keys().copied().collect::<Vec<_>>(), sys.lists.all);
        assert_eq!(sys.backups.keys().copied().collect::<Vec<_>>(), sys.lists.all);
        assert_eq!(sys.lists.locals, sys.hierarchy.with_role(Role::Local));
        for id in &sys.lists.all {
            let steps: Vec<NodeStatus> = sys.bringup.iter().filter(|(n, _)| n == id).map(|(_, s)| *s).collect();
            assert_eq!(steps, vec![NodeStatus::Established, NodeStatus::Running], "node {id}");
            assert_eq!(sys.nodes[id].status, NodeStatus::Running);
            assert_eq!(sys.images[id].bytes, sys.nodes[id].canonical_bytes());
        }
        let first_running = sys.bringup.iter().position(|(_, s)| *s == NodeStatus::Running).unwrap();
        assert!(sys.bringup[..first_running]
            .iter()
            .all(|(_, s)| *s == NodeStatus::Established));
        for c in sys.hierarchy.controllers() {
            assert!(sys.registry.is_running(c));
        }
        assert!(sys.config_work > 0);
    }
}

#[test]
fn symmetric_traffic_is_served_fairly() {
    let mut c = SystemConfig::default().with_shape(8, 2, 8);
    c.workload.pattern = Pattern::Symmetric;
    for t in [1000, 2000, 4000, 8000, 16000] {
        let out = Simulation::new(setup(&c).unwrap(), RunMode::Until(SimTime(t)), None)
            .run()
            .0;
        let counts: Vec<u64> = out.served_by_source.values().copied().collect();
        assert_eq!(counts.len(), 128, "t={t}");
        let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
        assert!(spread <= 1, "t={t}: spread {spread}");
        assert!(out.drops.is_empty(), "t={t}: {:?}", out.drops);
    }
}

fn small_sc1() -> ScenarioSpec {
    let mut spec = ScenarioSpec::standard(ScenarioId::Sc1);
    spec.sweep = Sweep::Controllers(vec![2, 4]);
    spec.requests = Some(500);
    spec
}

#[test]
fn runs_are_deterministic() {
    let base = SystemConfig::default();
    let spec = small_sc1();
    let seeds = [1, 2];
    let strip = |v: Vec<_>| {
        v.iter()
            .map(sdcps_core::scenario::runner::MetricsRecord::without_wall)
            .collect::<Vec<_>>()
    };
    let a = strip(run_scenario(&spec, &base, &seeds, RunOptions { threads: 4 }).unwrap());
    let b = strip(run_scenario(&spec, &base, &seeds, RunOptions { threads: 1 }).unwrap());
    assert_eq!(a, b);

    let (ra, ta) = run_scenario_traced(&spec, &base, &seeds, TraceLog::new()).unwrap();
    let (rb, tb) = run_scenario_traced(&spec, &base, &seeds, TraceLog::new()).unwrap();
    assert_eq!(strip(ra), a);
    assert_eq!(strip(rb), a);
    assert_eq!(ta.digest(), tb.digest());
    assert!(ta.lines() > 1000);

    let (_, tc) = run_scenario_traced(&spec, &base, &[3, 2], TraceLog::new()).unwrap();
    assert_ne!(tc.digest(), ta.digest());
}

#[test]
fn config_work_grows_with_every_dimension() {
    let work = |l, s, h| setup(&SystemConfig::default().with_shape(l, s, h)).unwrap().config_work;
    for (s, h) in [(1, 1), (2, 2), (2, 8), (3, 4)] {
        let row: Vec<u64> = [2, 4, 8, 16].iter().map(|&l| work(l, s, h)).collect();
        assert!(
            row.windows(2).all(|w| w[0] < w[1]),
            "controllers at s={s} h={h}: {row:?}"
        );
    }
    for (l, s) in [(2, 1), (8, 2), (4, 3)] {
        let row: Vec<u64> = [2, 4, 8, 16].iter().map(|&h| work(l, s, h)).collect();
        assert!(row.windows(2).all(|w| w[0] < w[1]), "hosts at l={l} s={s}: {row:?}");
    }
    for (l, h) in [(2, 2), (8, 8)] {
        let row: Vec<u64> = [1, 2, 3, 4].iter().map(|&s| work(l, s, h)).collect();
        assert!(row.windows(2).all(|w| w[0] < w[1]), "switches at l={l} h={h}: {row:?}");
    }
}

#[test]
fn local_failure_mid_run_is_absorbed() {
    let mut c = SystemConfig::default().with_shape(8, 2, 8);
    let victim = setup(&c).unwrap().lists.locals[3];
    c.failures.push(FailureSpec {
        node: victim,
        at: SimTime(2000),
    });
    let period = c.middleware.heartbeat_period;
    let misses = c.middleware.missed_heartbeats as u64;
    let (out, _, sys) = Simulation::new(setup(&c).unwrap(), RunMode::Until(SimTime(8000)), None).run();

    assert_eq!(out.failures.len(), 1);
    let failure = &out.failures[0];
    assert_eq!(failure.node, victim);
    let fo = out
        .failovers
        .iter()
        .find(|f| f.plan.failed == victim)
        .expect("failover happened");
    let detected_after = fo.plan.at.saturating_since(failure.at);
    assert!(
        detected_after <= misses * period,
        "detected after {detected_after} ticks"
    );

    for host in sys.hierarchy.with_role(Role::Host) {
        let owner = sys.hierarchy.owner_of_host(host).unwrap();
        assert!(sys.registry.is_running(owner), "host {host} owned by {owner}");
    }
    assert!(
        out.lost as usize <= failure.in_flight,
        "lost {} > {}",
        out.lost,
        failure.in_flight
    );
    assert!(out.served > fo.served_at_failover + 1000);
}

#[test]
fn packets_of_a_flow_arrive_in_order() {
    let buf = SharedBuf::default();
    let c = SystemConfig::default().with_shape(4, 2, 4);
    let trace = TraceLog::with_sink(Box::new(buf.clone()));
    let (out, trace, _) = Simulation::new(setup(&c).unwrap(), RunMode::Until(SimTime(3000)), Some(trace)).run();
    trace.unwrap().finish().unwrap();
    assert!(out.served > 500);

    let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
    let mut last: BTreeMap<(u64, String), u64> = BTreeMap::new();
    let mut checked = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let cols: Vec<&str> = line.splitn(6, ',').collect();
        if cols.len() < 6 || cols[2] != "PacketArrive" {
            continue;
        }
        let fields: BTreeMap<&str, &str> = cols[5].split(' ').filter_map(|kv| kv.split_once('=')).collect();
        if fields["at"] != cols[4] || fields["kind"] != "Data" {
            continue;
        }
        let flow: u64 = fields["flow"].parse().unwrap();
        let seq: u64 = fields["seq"].parse().unwrap();
        if let Some(prev) = last.insert((flow, cols[4].to_string()), seq) {
            assert!(seq > prev, "flow {flow} at {}: {seq} after {prev}", cols[4]);
        }
        checked += 1;
    }
    assert!(checked as u64 >= out.served * c.workload.flow_packets as u64);
}
