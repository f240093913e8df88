mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcps_core::engine::{Engine, EventKind, SimTime, Tick};
use sdcps_core::middleware::clock::{offset_spread, sync_round, translate_time, ClockModel};
use sdcps_core::middleware::registry::{ControllerRegistry, Liveness, RegistryEntry};
use sdcps_core::middleware::scheduler::Scheduler;
use sdcps_core::packet::{PacketFactory, PacketFields, PacketKind};
use sdcps_core::topology::{build_hierarchy, NodeId, Role};

use common::{max_lateness, permutations, random_connected_graph};

#[test]
fn strict_priority_over_many_operations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sched = Scheduler::new();
    let mut factory = PacketFactory::new();
    let mut model: BTreeMap<u8, usize> = BTreeMap::new();
    let mut now = SimTime(0);
    for op in 0..100_000u64 {
        if op % 50 == 0 {
            now = now.after(1);
        }
        if rng.gen_bool(0.55) || model.is_empty() {
            let prio = rng.gen_range(0..=7u8);
            let mut f = PacketFields::new(NodeId(1), NodeId(2), PacketKind::Data, rng.gen_range(0..8)).priority(prio);
            if rng.gen_bool(0.5) {
                f = f.deadline(now.after(rng.gen_range(0..500)));
            }
            sched.enqueue(factory.make_packet(f).unwrap(), now).unwrap();
            *model.entry(prio).or_insert(0) += 1;
        } else {
            let most_urgent = *model.keys().next().unwrap();
            let q = sched.dispatch(now).unwrap();
            assert_eq!(q.packet.priority, most_urgent, "operation {op}");
            let c = model.get_mut(&most_urgent).unwrap();
            *c -= 1;
            if *c == 0 {
                model.remove(&most_urgent);
            }
        }
        assert_eq!(sched.len(), model.values().sum::<usize>());
    }
}

#[test]
fn edf_matches_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut feasible_sets = 0;
    for _ in 0..3000 {
        let n = rng.gen_range(1..=7);
        let deadlines: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=9)).collect();
        let mut sched = Scheduler::new();
        let mut factory = PacketFactory::new();
        let mut index = BTreeMap::new();
        for (i, d) in deadlines.iter().enumerate() {
            let p = factory
                .make_packet(PacketFields::new(NodeId(1), NodeId(2), PacketKind::Data, 1).deadline(SimTime(*d)))
                .unwrap();
            index.insert(p.id, i);
            sched.enqueue(p, SimTime(0)).unwrap();
        }
        let order: Vec<usize> = (0..n)
            .map(|k| index[&sched.dispatch(SimTime(k as u64)).unwrap().packet.id])
            .collect();
        let best = permutations(n)
            .iter()
            .map(|p| max_lateness(&deadlines, p, 0))
            .min()
            .unwrap();
        let edf = max_lateness(&deadlines, &order, 0);
        assert_eq!(edf, best, "deadlines {deadlines:?}");
        if best <= 0 {
            feasible_sets += 1;
            assert!(edf <= 0);
        }
    }
    assert!(feasible_sets > 100);
}

#[test]
fn failover_keeps_every_host_owned_by_a_running_controller() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let l = rng.gen_range(2..=8);
        let (mut h, _) = build_hierarchy(l, 2, 2).unwrap();
        let mut reg = ControllerRegistry::new();
        for c in h.controllers() {
            reg.register_controller(
                c,
                RegistryEntry {
                    role: h.role(c).unwrap(),
                    layer: h.level(c).unwrap(),
                    last_heartbeat: SimTime(0),
                    address: format!("ctl-{c}"),
                    status: Liveness::Running,
                },
            )
            .unwrap();
        }
        let mut locals = h.with_role(Role::Local);
        let kills = rng.gen_range(1..l);
        let mut now = SimTime(0);
        for _ in 0..kills {
            now = now.after(100);
            for c in h.controllers() {
                if reg.is_running(c) {
                    reg.heartbeat(c, now).unwrap();
                }
            }
            let victim = locals.remove(rng.gen_range(0..locals.len()));
            let later = now.after(60);
            for c in h.controllers() {
                if c != victim && reg.is_running(c) {
                    reg.heartbeat(c, later).unwrap();
                }
            }
            let plan = reg.failover(&mut h, victim, later, 20, 3).unwrap();
            assert!(reg.is_running(plan.new_owner().unwrap()));
            for host in h.with_role(Role::Host) {
                let owner = h.owner_of_host(host).unwrap();
                assert!(reg.is_running(owner), "host {host} owned by {owner}");
            }
        }
    }
}

proptest! {
    #[test]
    fn delivery_order_is_time_then_sequence(seed in any::<u64>(), n in 1usize..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut engine = Engine::new();
        let mut expected: Vec<(SimTime, u64)> = Vec::new();
        let mut got = Vec::new();
        for _ in 0..n {
            if rng.gen_bool(0.3) && !engine.is_empty() {
                let (_, e) = engine.advance().unwrap();
                got.push((e.at, e.seq));
            }
            let at = engine.now().after(rng.gen_range(0..20));
            let seq = engine.schedule(at, EventKind::ControlTick(Tick::Plants)).unwrap();
            expected.push((at, seq));
        }
        while let Ok((_, e)) = engine.advance() {
            got.push((e.at, e.seq));
        }
        prop_assert_eq!(got.len(), expected.len());
        for w in got.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        expected.sort();
        let mut sorted_got = got.clone();
        sorted_got.sort();
        prop_assert_eq!(sorted_got, expected);
    }

    #[test]
    fn sync_round_never_widens_spread(seed in any::<u64>(), n in 2usize..12, eta in 0.01f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, n / 2, 1);
        let mut clocks: BTreeMap<NodeId, ClockModel> = g
            .vertices()
            .map(|v| (v, ClockModel::exact(v, 1.0, rng.gen_range(-50.0..50.0)).unwrap()))
            .collect();
        let mut spread = offset_spread(&clocks);
        for _ in 0..50 {
            sync_round(&mut clocks, &g, eta);
            let next = offset_spread(&clocks);
            prop_assert!(next <= spread + 1e-12, "{} > {}", next, spread);
            spread = next;
        }
    }

    #[test]
    fn translation_round_trip(
        s1 in 0.9f64..1.1, o1 in -100.0f64..100.0,
        s2 in 0.9f64..1.1, o2 in -100.0f64..100.0,
        ts in -1e4f64..1e4,
    ) {
        let a = ClockModel::exact(NodeId(1), s1, o1).unwrap();
        let b = ClockModel::exact(NodeId(2), s2, o2).unwrap();
        let there = translate_time(&a, &b, ts).unwrap();
        let back = translate_time(&b, &a, there).unwrap();
        prop_assert!((back - ts).abs() <= 1e-9);
    }
}
