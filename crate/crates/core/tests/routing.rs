mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcps_core::control::sdn::{PathPolicy, SdnController};
use sdcps_core::topology::{LinkChange, NetGraph, NodeId};

use common::{brute_force_cost, random_connected_graph, walk};

fn assert_sound(sdn: &SdnController, g: &NetGraph) {
    for s in g.vertices() {
        let comp = g.component(s);
        for d in g.vertices() {
            if s == d {
                continue;
            }
            let oracle = brute_force_cost(g, s, d);
            if comp.contains(&d) {
                assert_eq!(walk(sdn, g, s, d), oracle, "{s} -> {d}");
            } else {
                assert_eq!(oracle, None);
                assert_eq!(sdn.next_hop(s, d), None);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_walks_match_brute_force(seed in any::<u64>(), n in 2usize..=10, extra in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, extra, 9);
        let mut sdn = SdnController::new(PathPolicy::Shortest, g.vertices());
        sdn.install_all(&g);
        assert_sound(&sdn, &g);
    }

    #[test]
    fn tables_stay_fresh_and_sound_under_link_events(seed in any::<u64>(), n in 3usize..=9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = random_connected_graph(&mut rng, n, 4, 9);
        let mut sdn = SdnController::new(PathPolicy::Shortest, g.vertices());
        sdn.install_all(&g);
        for _ in 0..12 {
            let a = NodeId(rng.gen_range(0..n as u32));
            let b = NodeId(rng.gen_range(0..n as u32));
            if a == b {
                continue;
            }
            let change = match g.weight(a, b) {
                Some(_) if rng.gen_bool(0.5) => LinkChange::Remove { a, b },
                Some(_) => LinkChange::Reweight { a, b, weight: rng.gen_range(1..=9) },
                None => LinkChange::Add { a, b, weight: rng.gen_range(1..=9) },
            };
            g.apply_link_event(change.clone()).unwrap();
            let touched = sdn.on_network_change(&g, &change);
            let epoch = g.epoch();
            for o in &touched {
                prop_assert_eq!(sdn.table(*o).unwrap().epoch, epoch);
            }
            for v in g.component(a).union(&g.component(b)) {
                prop_assert_eq!(sdn.table(*v).unwrap().epoch, epoch);
            }
            assert_sound(&sdn, &g);
        }
    }

    #[test]
    fn graph_stays_undirected(seed in any::<u64>(), n in 2usize..=8, steps in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = random_connected_graph(&mut rng, n, 2, 5);
        for _ in 0..steps {
            let a = NodeId(rng.gen_range(0..n as u32));
            let b = NodeId(rng.gen_range(0..n as u32));
            if a == b {
                continue;
            }
            let change = if g.weight(a, b).is_some() {
                LinkChange::Remove { a, b }
            } else {
                LinkChange::Add { a, b, weight: rng.gen_range(1..=5) }
            };
            g.apply_link_event(change).unwrap();
            for v in g.vertices() {
                for (u, w) in g.adjacent(v) {
                    prop_assert_eq!(g.weight(u, v), Some(w));
                }
            }
        }
    }
}

#[test]
fn mst_policy_routes_along_one_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_connected_graph(&mut rng, 8, 6, 9);
    let mut sdn = SdnController::new(PathPolicy::Mst, g.vertices());
    sdn.install_all(&g);
    let mut used = std::collections::BTreeSet::new();
    for s in g.vertices() {
        for d in g.vertices() {
            if s != d {
                assert!(walk(&sdn, &g, s, d).is_some());
                let n = sdn.next_hop(s, d).unwrap();
                used.insert((s.min(n), s.max(n)));
            }
        }
    }
    assert_eq!(used.len(), g.vertex_count() - 1);
}
