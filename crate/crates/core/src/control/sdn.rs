//! Path calculation, forwarding-table generation and network status tracking.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{LinkChange, NetGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PathPolicy {
    #[default]
    Shortest,
    Mst,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SdnError {
    #[error("no path from {0} to {1}")]
    Unreachable(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub cost: u64,
}

/// Distances to `target` from every vertex in its component.
pub fn distances_to(graph: &NetGraph, target: NodeId) -> BTreeMap<NodeId, u64> {
    let mut dist = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(target, 0u64);
    heap.push(Reverse((0u64, target)));
    while let Some(Reverse((d, n))) = heap.pop() {
        if dist.get(&n).is_some_and(|&best| d > best) {
            continue;
        }
        for (m, w) in graph.adjacent(n) {
            let nd = d + u64::from(w);
            if dist.get(&m).is_none_or(|&cur| nd < cur) {
                dist.insert(m, nd);
                heap.push(Reverse((nd, m)));
            }
        }
    }
    dist
}

/// Smallest-id neighbor of `from` lying on a shortest path to the target of `dist`.
fn shortest_next_hop(graph: &NetGraph, dist: &BTreeMap<NodeId, u64>, from: NodeId) -> Option<NodeId> {
    let here = *dist.get(&from)?;
    graph
        .adjacent(from)
        .find(|(m, w)| dist.get(m).is_some_and(|&dm| dm + u64::from(*w) == here))
        .map(|(m, _)| m)
}

/// Minimum spanning forest, Kruskal with ties broken by (weight, low id, high id).
pub fn spanning_forest(graph: &NetGraph) -> NetGraph {
    let mut edges: Vec<(u32, NodeId, NodeId)> = graph.edges().map(|(a, b, w)| (w, a, b)).collect();
    edges.sort();
    let ids: Vec<NodeId> = graph.vertices().collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut forest = NetGraph::new();
    for n in &ids {
        forest.add_vertex(*n, graph.role(*n).expect("vertex has a role"));
    }
    for (w, a, b) in edges {
        let ra = find(&mut parent, index[&a]);
        let rb = find(&mut parent, index[&b]);
        if ra != rb {
            parent[ra] = rb;
            forest.insert_edge(a, b, w).expect("forest edge is new");
        }
    }
    forest
}

fn walk(graph: &NetGraph, src: NodeId, dst: NodeId, next: impl Fn(NodeId) -> Option<NodeId>) -> Path {
    let mut nodes = vec![src];
    let mut cost = 0;
    let mut cur = src;
    while cur != dst {
        let n = next(cur).expect("next hop exists inside a component");
        cost += u64::from(graph.weight(cur, n).expect("next hop is adjacent"));
        nodes.push(n);
        cur = n;
    }
    Path { nodes, cost }
}

pub fn compute_path(graph: &NetGraph, src: NodeId, dst: NodeId, policy: PathPolicy) -> Result<Path, SdnError> {
    for n in [src, dst] {
        if !graph.contains(n) {
            return Err(SdnError::UnknownNode(n));
        }
    }
    match policy {
        PathPolicy::Shortest => {
            let dist = distances_to(graph, dst);
            if !dist.contains_key(&src) {
                return Err(SdnError::Unreachable(src, dst));
            }
            Ok(walk(graph, src, dst, |n| shortest_next_hop(graph, &dist, n)))
        }
        PathPolicy::Mst => {
            let forest = spanning_forest(graph);
            let toward = tree_first_hops(&forest, dst);
            if !toward.contains_key(&src) {
                return Err(SdnError::Unreachable(src, dst));
            }
            Ok(walk(graph, src, dst, |n| toward.get(&n).copied()))
        }
    }
}

/// For every vertex in the tree component of `root`, its neighbor toward `root`.
fn tree_first_hops(forest: &NetGraph, root: NodeId) -> BTreeMap<NodeId, NodeId> {
    let mut toward = BTreeMap::new();
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for (m, _) in forest.adjacent(n) {
            if seen.insert(m) {
                toward.insert(m, n);
                queue.push_back(m);
            }
        }
    }
    toward
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardingTable {
    pub owner: NodeId,
    pub entries: BTreeMap<NodeId, NodeId>,
    pub epoch: u64,
}

impl ForwardingTable {
    pub fn next_hop(&self, dst: NodeId) -> Option<NodeId> {
        self.entries.get(&dst).copied()
    }
}

/// Tables plus the (owner, destination) pairs that had no route.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableBuild {
    pub tables: BTreeMap<NodeId, ForwardingTable>,
    pub unreachable: Vec<(NodeId, NodeId)>,
}

/// Builds tables for `owners`, with an entry for every other vertex in `destinations`.
fn build_tables(
    graph: &NetGraph,
    owners: &BTreeSet<NodeId>,
    destinations: &BTreeSet<NodeId>,
    policy: PathPolicy,
) -> TableBuild {
    let epoch = graph.epoch();
    let mut out = TableBuild::default();
    for &o in owners {
        out.tables.insert(
            o,
            ForwardingTable {
                owner: o,
                entries: BTreeMap::new(),
                epoch,
            },
        );
    }
    let forest = match policy {
        PathPolicy::Mst => Some(spanning_forest(graph)),
        PathPolicy::Shortest => None,
    };
    for &d in destinations {
        let hops: BTreeMap<NodeId, NodeId> = match &forest {
            None => {
                let dist = distances_to(graph, d);
                owners
                    .iter()
                    .filter(|&&o| o != d)
                    .filter_map(|&o| shortest_next_hop(graph, &dist, o).map(|n| (o, n)))
                    .collect()
            }
            Some(f) => tree_first_hops(f, d),
        };
        for &o in owners {
            if o == d {
                continue;
            }
            match hops.get(&o) {
                Some(&n) => {
                    out.tables.get_mut(&o).unwrap().entries.insert(d, n);
                }
                None => out.unreachable.push((o, d)),
            }
        }
    }
    out
}

/// One table per forwarder, covering every other vertex of the graph.
pub fn generate_forwarding_tables(graph: &NetGraph, switches: &[NodeId], policy: PathPolicy) -> TableBuild {
    let owners: BTreeSet<NodeId> = switches.iter().copied().collect();
    let destinations: BTreeSet<NodeId> = graph.vertices().collect();
    build_tables(graph, &owners, &destinations, policy)
}

/// Rolling view kept by the network status tracking unit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStatus {
    pub epoch: u64,
    pub changes_seen: u64,
    pub broken_links: BTreeSet<(NodeId, NodeId)>,
}

/// The SDN sub-controller: owns the forwarding tables of a set of forwarders.
#[derive(Debug, Clone, PartialEq)]
pub struct SdnController {
    pub policy: PathPolicy,
    forwarders: BTreeSet<NodeId>,
    tables: BTreeMap<NodeId, ForwardingTable>,
    pub status: NetworkStatus,
    pub last_unreachable: Vec<(NodeId, NodeId)>,
}

impl SdnController {
    pub fn new(policy: PathPolicy, forwarders: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            policy,
            forwarders: forwarders.into_iter().collect(),
            tables: BTreeMap::new(),
            status: NetworkStatus::default(),
            last_unreachable: Vec::new(),
        }
    }

    pub fn forwarders(&self) -> &BTreeSet<NodeId> {
        &self.forwarders
    }

    pub fn tables(&self) -> &BTreeMap<NodeId, ForwardingTable> {
        &self.tables
    }

    pub fn table(&self, owner: NodeId) -> Option<&ForwardingTable> {
        self.tables.get(&owner)
    }

    pub fn next_hop(&self, owner: NodeId, dst: NodeId) -> Option<NodeId> {
        self.tables.get(&owner)?.next_hop(dst)
    }

    pub fn entry_count(&self) -> u64 {
        self.tables.values().map(|t| t.entries.len() as u64).sum()
    }

    /// Generates every table from scratch. Returns the number of entries written.
    pub fn install_all(&mut self, graph: &NetGraph) -> u64 {
        let forwarders: Vec<NodeId> = self.forwarders.iter().copied().collect();
        let built = generate_forwarding_tables(graph, &forwarders, self.policy);
        self.tables = built.tables;
        self.last_unreachable = built.unreachable;
        self.status.epoch = graph.epoch();
        self.entry_count()
    }

    /// Recomputes the tables of every forwarder in the component(s) touching the
    /// changed edge. Returns the owners whose tables were regenerated.
    pub fn on_network_change(&mut self, graph: &NetGraph, change: &LinkChange) -> Vec<NodeId> {
        let (a, b) = change.edge();
        self.status.changes_seen += 1;
        self.status.epoch = graph.epoch();
        let key = (a.min(b), a.max(b));
        match change {
            LinkChange::Remove { .. } => {
                self.status.broken_links.insert(key);
            }
            LinkChange::Add { .. } => {
                self.status.broken_links.remove(&key);
            }
            LinkChange::Reweight { .. } => {}
        }
        let mut affected = graph.component(a);
        if !affected.contains(&b) {
            affected.extend(graph.component(b));
        }
        let owners: BTreeSet<NodeId> = self.forwarders.intersection(&affected).copied().collect();
        // Destinations outside an owner's component come out unreachable; computing
        // per component keeps that cheap.
        let mut unreachable = Vec::new();
        let mut remaining = owners.clone();
        while let Some(&first) = remaining.iter().next() {
            let comp = graph.component(first);
            let group: BTreeSet<NodeId> = remaining.intersection(&comp).copied().collect();
            let built = build_tables(graph, &group, &comp, self.policy);
            for (o, t) in built.tables {
                self.tables.insert(o, t);
            }
            for &o in &group {
                remaining.remove(&o);
                for d in graph.vertices() {
                    if d != o && !comp.contains(&d) {
                        unreachable.push((o, d));
                    }
                }
            }
        }
        self.last_unreachable = unreachable;
        owners.into_iter().collect()
    }

    /// Adds forwarders (e.g. after failover) and builds their tables.
    pub fn adopt_forwarders(&mut self, graph: &NetGraph, extra: impl IntoIterator<Item = NodeId>) {
        self.forwarders.extend(extra);
        self.install_all(graph);
    }

    pub fn remove_forwarder(&mut self, id: NodeId) {
        self.forwarders.remove(&id);
        self.tables.remove(&id);
    }

    pub fn set_table(&mut self, table: ForwardingTable) {
        self.forwarders.insert(table.owner);
        self.tables.insert(table.owner, table);
    }

    /// `switch,dst,next_hop,epoch` rows.
    pub fn dump(&self) -> String {
        dump_tables(self.tables.values())
    }
}

pub fn dump_tables<'a>(tables: impl IntoIterator<Item = &'a ForwardingTable>) -> String {
    let mut out = String::from("switch,dst,next_hop,epoch\n");
    for t in tables {
        for (d, n) in &t.entries {
            let _ = writeln!(out, "{},{},{},{}", t.owner, d, n, t.epoch);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Role;

    fn graph(n: u32, edges: &[(u32, u32, u32)]) -> NetGraph {
        let mut g = NetGraph::new();
        for i in 0..n {
            g.add_vertex(NodeId(i), Role::Switch);
        }
        for &(a, b, w) in edges {
            g.insert_edge(NodeId(a), NodeId(b), w).unwrap();
        }
        g
    }

    #[test]
    fn adjacent_pair() {
        let g = graph(2, &[(0, 1, 1)]);
        let p = compute_path(&g, NodeId(0), NodeId(1), PathPolicy::Shortest).unwrap();
        assert_eq!(p.nodes, vec![NodeId(0), NodeId(1)]);
        assert_eq!(p.cost, 1);
    }

    #[test]
    fn unreachable_pair() {
        let g = graph(3, &[(0, 1, 1)]);
        assert_eq!(
            compute_path(&g, NodeId(0), NodeId(2), PathPolicy::Shortest),
            Err(SdnError::Unreachable(NodeId(0), NodeId(2)))
        );
        assert_eq!(
            compute_path(&g, NodeId(0), NodeId(2), PathPolicy::Mst),
            Err(SdnError::Unreachable(NodeId(0), NodeId(2)))
        );
    }

    #[test]
    fn ties_take_smallest_sequence() {
        // Two equal-cost routes 0-2-3 and 0-1-3.
        let g = graph(4, &[(0, 2, 1), (2, 3, 1), (0, 1, 1), (1, 3, 1)]);
        let p = compute_path(&g, NodeId(0), NodeId(3), PathPolicy::Shortest).unwrap();
        assert_eq!(p.nodes, vec![NodeId(0), NodeId(1), NodeId(3)]);
    }

    #[test]
    fn mst_path_follows_tree() {
        // Square 0-1-2-3-0 with the 3-0 edge heaviest; MST drops it.
        let g = graph(4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 5)]);
        let p = compute_path(&g, NodeId(0), NodeId(3), PathPolicy::Mst).unwrap();
        assert_eq!(p.nodes, vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
        assert_eq!(p.cost, 3);
        let s = compute_path(&g, NodeId(0), NodeId(3), PathPolicy::Shortest).unwrap();
        assert_eq!(s.cost, 3);
    }

    #[test]
    fn chain_and_star_tables() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1)]);
        let t = generate_forwarding_tables(&g, &[NodeId(0)], PathPolicy::Shortest);
        assert_eq!(t.tables[&NodeId(0)].next_hop(NodeId(2)), Some(NodeId(1)));

        let star = graph(5, &[(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1)]);
        let leaves: Vec<NodeId> = (1..5).map(NodeId).collect();
        let t = generate_forwarding_tables(&star, &leaves, PathPolicy::Shortest);
        for l in &leaves {
            for d in star.vertices().filter(|d| d != l) {
                assert_eq!(t.tables[l].next_hop(d), Some(NodeId(0)));
            }
        }
    }

    #[test]
    fn removing_the_only_link_drops_the_entry() {
        let mut g = graph(3, &[(0, 1, 1), (1, 2, 1)]);
        let mut sdn = SdnController::new(PathPolicy::Shortest, [NodeId(0), NodeId(1), NodeId(2)]);
        sdn.install_all(&g);
        let change = LinkChange::Remove {
            a: NodeId(0),
            b: NodeId(1),
        };
        g.apply_link_event(change.clone()).unwrap();
        let redone = sdn.on_network_change(&g, &change);
        assert_eq!(redone, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(sdn.next_hop(NodeId(0), NodeId(1)), None);
        assert!(sdn.last_unreachable.contains(&(NodeId(0), NodeId(1))));
        assert_eq!(sdn.table(NodeId(2)).unwrap().epoch, 1);
    }

    #[test]
    fn shortcut_switches_next_hop() {
        let mut g = graph(4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1)]);
        let mut sdn = SdnController::new(PathPolicy::Shortest, [NodeId(0)]);
        sdn.install_all(&g);
        assert_eq!(sdn.next_hop(NodeId(0), NodeId(3)), Some(NodeId(1)));
        let change = LinkChange::Add {
            a: NodeId(0),
            b: NodeId(3),
            weight: 1,
        };
        g.apply_link_event(change.clone()).unwrap();
        sdn.on_network_change(&g, &change);
        assert_eq!(sdn.next_hop(NodeId(0), NodeId(3)), Some(NodeId(3)));
    }

    #[test]
    fn other_component_keeps_its_epoch() {
        let mut g = graph(4, &[(0, 1, 1), (2, 3, 1)]);
        let mut sdn = SdnController::new(PathPolicy::Shortest, (0..4).map(NodeId));
        sdn.install_all(&g);
        let change = LinkChange::Reweight {
            a: NodeId(0),
            b: NodeId(1),
            weight: 3,
        };
        g.apply_link_event(change.clone()).unwrap();
        sdn.on_network_change(&g, &change);
        assert_eq!(sdn.table(NodeId(0)).unwrap().epoch, 1);
        assert_eq!(sdn.table(NodeId(2)).unwrap().epoch, 0);
    }

    #[test]
    fn dump_rows() {
        let g = graph(2, &[(0, 1, 1)]);
        let mut sdn = SdnController::new(PathPolicy::Shortest, [NodeId(0)]);
        sdn.install_all(&g);
        assert_eq!(sdn.dump(), "switch,dst,next_hop,epoch\n0,1,1,0\n");
    }
}
