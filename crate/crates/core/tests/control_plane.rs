use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcps_core::control::decision::{handle_request, ControlRequest, Outcome, DEFAULT_HOP_TIMEOUT};
use sdcps_core::control::node::ControllerNode;
use sdcps_core::control::sdcompute::{assign_task, ComputeUnit, Task};
use sdcps_core::control::sds::StorageController;
use sdcps_core::engine::SimTime;
use sdcps_core::packet::payload_digest;
use sdcps_core::scenario::config::SystemConfig;
use sdcps_core::scenario::setup::{setup, System};
use sdcps_core::security::detect::{FindingKind, FindingTarget};
use sdcps_core::security::policy::SubjectRole;
use sdcps_core::topology::{NodeId, Role};

fn small_system(l: usize, supers: usize) -> System {
    let mut c = SystemConfig::default().with_shape(l, 2, 2);
    c.topology.supers = supers;
    c.topology.partitions = 1;
    setup(&c).unwrap()
}

/// Random edits through the public unit interfaces.
fn scramble(node: &mut ControllerNode, rng: &mut ChaCha8Rng, now: SimTime) {
    for _ in 0..rng.gen_range(1..8) {
        match rng.gen_range(0..5) {
            0 => {
                let key = format!("k{}", rng.gen_range(0..6));
                let val: Vec<u8> = (0..rng.gen_range(0..8)).map(|_| rng.gen()).collect();
                node.sds.storage_put(&key, &val);
            }
            1 => {
                node.readings
                    .insert(format!("r{}", rng.gen_range(0..4)), rng.gen_range(-1.0..1.0));
            }
            2 => {
                node.sdsecurity.report(
                    FindingKind::Tamper,
                    FindingTarget::Node(NodeId(rng.gen_range(0..50))),
                    "fuzz",
                    now,
                );
            }
            3 => {
                if let Some(p) = node.plant.as_mut() {
                    p.state.x[0] = rng.gen_range(-5.0..5.0);
                    p.self_gain[(0, 0)] = rng.gen_range(-1.0..0.0);
                }
                node.level = rng.gen_range(0..4);
            }
            _ => {
                node.sdcompute.tasks = rng.gen_range(0..9);
                node.children.insert(NodeId(rng.gen_range(0..50)));
            }
        }
    }
}

#[test]
fn image_round_trip_on_fuzzed_states() {
    let mut sys = small_system(2, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let ids: Vec<NodeId> = sys.nodes.keys().copied().collect();
    for round in 0..200u64 {
        let id = ids[rng.gen_range(0..ids.len())];
        let node = sys.nodes.get_mut(&id).unwrap();
        scramble(node, &mut rng, SimTime(round));
        let before = node.canonical_bytes();
        let image = node.capture_image(SimTime(round)).unwrap();
        assert_eq!(image.bytes, before);
        scramble(node, &mut rng, SimTime(round + 1));
        node.restore_image(&image).unwrap();
        assert_eq!(node.canonical_bytes(), before, "round {round}");
    }
}

#[test]
fn restore_rejects_foreign_images() {
    let sys = small_system(2, 0);
    let mut ids = sys.nodes.keys();
    let a = *ids.next().unwrap();
    let b = *ids.next().unwrap();
    let image = sys.nodes[&a].capture_image(SimTime(1)).unwrap();
    let mut other = sys.nodes[&b].clone();
    assert!(other.restore_image(&image).is_err());
}

#[test]
fn every_request_resolves_once_within_tree_height() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let actions = ["sense", "actuate", "reconfigure", "launch"];
    let roles = [
        SubjectRole::User,
        SubjectRole::Operator,
        SubjectRole::Supervisor,
        SubjectRole::Controller,
    ];
    for (l, supers) in [(4, 0), (4, 2), (6, 3)] {
        let mut sys = small_system(l, supers);
        let height = sys.hierarchy.height();
        let leaves: Vec<NodeId> = sys
            .hierarchy
            .nodes()
            .filter(|n| matches!(sys.hierarchy.role(*n), Some(Role::Host | Role::Switch)))
            .collect();
        let controllers = sys.hierarchy.controllers();
        let mut outcomes = Vec::new();
        for id in 0..300u64 {
            let entities: Vec<NodeId> = (0..rng.gen_range(1..4))
                .map(|_| leaves[rng.gen_range(0..leaves.len())])
                .collect();
            let mut state = BTreeMap::new();
            state.insert("battery".to_string(), rng.gen_range(0.0..1.0));
            let req = ControlRequest {
                id,
                subject: rng.gen_range(0..1000),
                role: roles[rng.gen_range(0..roles.len())],
                action: actions[rng.gen_range(0..actions.len())].to_string(),
                object: "device".into(),
                entities,
                state,
            };
            let at = controllers[rng.gen_range(0..controllers.len())];
            let r = handle_request(
                &mut sys.nodes,
                &sys.hierarchy,
                at,
                &req,
                SimTime(id),
                DEFAULT_HOP_TIMEOUT,
            )
            .unwrap();
            let finals: Vec<_> = r.log.iter().filter(|x| x.outcome != Outcome::Escalated).collect();
            assert_eq!(finals.len(), 1);
            assert_eq!(finals[0].outcome, r.decision.outcome);
            assert_eq!(r.log.last().unwrap().outcome, r.decision.outcome);
            assert!(r.decision.depth <= height, "depth {} > {height}", r.decision.depth);
            outcomes.push(r.decision.outcome);
        }
        assert!(outcomes.contains(&Outcome::Granted) && outcomes.contains(&Outcome::Denied));
    }
}

proptest! {
    #[test]
    fn blob_count_equals_distinct_payloads(
        puts in prop::collection::vec((0u8..12, prop::collection::vec(0u8..4, 0..3)), 1..80),
    ) {
        let mut s = StorageController::new(4);
        let mut live: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
        for (k, v) in &puts {
            s.storage_put(&format!("key{k}"), v);
            live.insert(*k, v.clone());
        }
        let distinct: BTreeSet<u64> = live.values().map(|v| payload_digest(v)).collect();
        prop_assert_eq!(s.blob_count(), distinct.len());
        prop_assert_eq!(s.key_count(), live.len());
        for (k, v) in &live {
            prop_assert_eq!(&s.storage_get(&format!("key{k}")).unwrap().0, v);
        }
    }

    #[test]
    fn least_loaded_keeps_tasks_balanced(units in 1usize..10, tasks in 0usize..200) {
        let mut pool: BTreeMap<NodeId, ComputeUnit> =
            (0..units).map(|i| (NodeId(i as u32), ComputeUnit::new(NodeId(i as u32), 1000, 1000))).collect();
        for _ in 0..tasks {
            assign_task(&mut pool, Task::unit()).unwrap();
            let counts: Vec<u32> = pool.values().map(|u| u.tasks).collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }
}
