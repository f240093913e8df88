//! Communication graph, controller tree, partitions and location clusters.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Global,
    Super,
    Local,
    Switch,
    Host,
}

impl Role {
    pub fn is_controller(self) -> bool {
        matches!(self, Role::Global | Role::Super | Role::Local)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("counts must be at least 1")]
    InvalidCount,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no edge {0}-{1}")]
    NoSuchEdge(NodeId, NodeId),
    #[error("edge {0}-{1} already present")]
    DuplicateEdge(NodeId, NodeId),
    #[error("self-loop on {0}")]
    SelfLoop(NodeId),
    #[error("edge weight must be positive")]
    InvalidWeight,
    #[error("cannot make {p} partitions out of {n} nodes")]
    TooManyPartitions { n: usize, p: usize },
    #[error("at least one cluster center is required")]
    NoCenters,
    #[error("hierarchy is not a valid controller tree: {0}")]
    InvalidTree(String),
}

/// A change to the communication graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinkChange {
    Add { a: NodeId, b: NodeId, weight: u32 },
    Remove { a: NodeId, b: NodeId },
    Reweight { a: NodeId, b: NodeId, weight: u32 },
}

impl LinkChange {
    pub fn edge(&self) -> (NodeId, NodeId) {
        match *self {
            LinkChange::Add { a, b, .. } | LinkChange::Remove { a, b } | LinkChange::Reweight { a, b, .. } => (a, b),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LinkChange::Add { weight, .. } => format!("add w={weight}"),
            LinkChange::Remove { .. } => "remove".into(),
            LinkChange::Reweight { weight, .. } => format!("reweight w={weight}"),
        }
    }
}

/// Emitted by [`NetGraph::apply_link_event`] to every subscribed controller.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkNotice {
    pub epoch: u64,
    pub change: LinkChange,
    pub notified: Vec<NodeId>,
}

/// Undirected, positively weighted, time-varying communication graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetGraph {
    roles: BTreeMap<NodeId, Role>,
    adj: BTreeMap<NodeId, BTreeMap<NodeId, u32>>,
    epoch: u64,
    subscribers: BTreeSet<NodeId>,
    history: Vec<(u64, LinkChange)>,
}

impl NetGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, id: NodeId, role: Role) {
        self.roles.insert(id, role);
        self.adj.entry(id).or_default();
    }

    /// Inserts an edge without bumping the epoch. Used while building.
    pub fn insert_edge(&mut self, a: NodeId, b: NodeId, weight: u32) -> Result<(), TopologyError> {
        self.check_new_edge(a, b, weight)?;
        self.adj.get_mut(&a).unwrap().insert(b, weight);
        self.adj.get_mut(&b).unwrap().insert(a, weight);
        Ok(())
    }

    fn check_new_edge(&self, a: NodeId, b: NodeId, weight: u32) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLoop(a));
        }
        for n in [a, b] {
            if !self.roles.contains_key(&n) {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        if weight == 0 {
            return Err(TopologyError::InvalidWeight);
        }
        if self.adj[&a].contains_key(&b) {
            return Err(TopologyError::DuplicateEdge(a, b));
        }
        Ok(())
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.roles.contains_key(&id)
    }

    pub fn role(&self, id: NodeId) -> Option<Role> {
        self.roles.get(&id).copied()
    }

    pub fn vertices(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.roles.keys().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.roles.len()
    }

    pub fn vertices_with_role(&self, role: Role) -> Vec<NodeId> {
        self.roles
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(id, _)| *id)
            .collect()
    }

    /// Each undirected edge once, as `(low, high, weight)`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, u32)> + '_ {
        self.adj
            .iter()
            .flat_map(|(a, nbrs)| nbrs.iter().filter(move |(b, _)| a < *b).map(move |(b, w)| (*a, *b, *w)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn weight(&self, a: NodeId, b: NodeId) -> Option<u32> {
        self.adj.get(&a).and_then(|n| n.get(&b)).copied()
    }

    /// Current adjacency of `id` with weights, in id order.
    pub fn adjacent(&self, id: NodeId) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.adj
            .get(&id)
            .into_iter()
            .flat_map(|n| n.iter().map(|(k, w)| (*k, *w)))
    }

    /// Current neighborhood of `i`.
    pub fn neighbors(&self, i: NodeId) -> Result<BTreeSet<NodeId>, TopologyError> {
        self.adj
            .get(&i)
            .map(|n| n.keys().copied().collect())
            .ok_or(TopologyError::UnknownNode(i))
    }

    /// Neighborhood of `i` as it was right after `epoch` was reached.
    pub fn neighbors_at(&self, i: NodeId, epoch: u64) -> Result<BTreeSet<NodeId>, TopologyError> {
        let mut set = self.neighbors(i)?;
        for (e, change) in self.history.iter().rev() {
            if *e <= epoch {
                break;
            }
            let (a, b) = change.edge();
            let other = if a == i {
                b
            } else if b == i {
                a
            } else {
                continue;
            };
            match change {
                LinkChange::Add { .. } => {
                    set.remove(&other);
                }
                LinkChange::Remove { .. } => {
                    set.insert(other);
                }
                LinkChange::Reweight { .. } => {}
            }
        }
        Ok(set)
    }

    pub fn subscribe(&mut self, controller: NodeId) {
        self.subscribers.insert(controller);
    }

    /// Applies a change, bumps the epoch and reports who was notified.
    pub fn apply_link_event(&mut self, change: LinkChange) -> Result<LinkNotice, TopologyError> {
        match change {
            LinkChange::Add { a, b, weight } => {
                self.check_new_edge(a, b, weight)?;
                self.adj.get_mut(&a).unwrap().insert(b, weight);
                self.adj.get_mut(&b).unwrap().insert(a, weight);
            }
            LinkChange::Remove { a, b } => {
                if self.weight(a, b).is_none() {
                    return Err(TopologyError::NoSuchEdge(a, b));
                }
                self.adj.get_mut(&a).unwrap().remove(&b);
                self.adj.get_mut(&b).unwrap().remove(&a);
            }
            LinkChange::Reweight { a, b, weight } => {
                if weight == 0 {
                    return Err(TopologyError::InvalidWeight);
                }
                if self.weight(a, b).is_none() {
                    return Err(TopologyError::NoSuchEdge(a, b));
                }
                self.adj.get_mut(&a).unwrap().insert(b, weight);
                self.adj.get_mut(&b).unwrap().insert(a, weight);
            }
        }
        self.epoch += 1;
        self.history.push((self.epoch, change.clone()));
        Ok(LinkNotice {
            epoch: self.epoch,
            change,
            notified: self.subscribers.iter().copied().collect(),
        })
    }

    /// Vertices reachable from `start`, including itself.
    pub fn component(&self, start: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        if !self.contains(start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(n) = queue.pop_front() {
            for (m, _) in self.adjacent(n) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        match self.roles.keys().next() {
            None => true,
            Some(first) => self.component(*first).len() == self.roles.len(),
        }
    }

    /// `#epoch N` followed by one `i j weight` line per edge.
    pub fn dump(&self) -> String {
        let mut out = format!("#epoch {}\n", self.epoch);
        for (a, b, w) in self.edges() {
            out.push_str(&format!("{a} {b} {w}\n"));
        }
        out
    }
}

/// Rooted controller tree. Level 0 is the global root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    parent: BTreeMap<NodeId, NodeId>,
    level: BTreeMap<NodeId, u32>,
    roles: BTreeMap<NodeId, Role>,
    children: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Hierarchy {
    pub fn new(root: NodeId) -> Self {
        let mut h = Self::default();
        h.roles.insert(root, Role::Global);
        h.level.insert(root, 0);
        h.children.insert(root, BTreeSet::new());
        h
    }

    /// Attaches `child` below `parent`.
    pub fn attach(&mut self, child: NodeId, parent: NodeId, role: Role) {
        let lvl = self.level[&parent] + 1;
        self.parent.insert(child, parent);
        self.level.insert(child, lvl);
        self.roles.insert(child, role);
        self.children.entry(parent).or_default().insert(child);
        self.children.entry(child).or_default();
    }

    pub fn root(&self) -> NodeId {
        *self
            .roles
            .iter()
            .find(|(_, r)| **r == Role::Global)
            .map(|(id, _)| id)
            .expect("hierarchy has a root")
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.roles.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.roles.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(&id).copied()
    }

    pub fn level(&self, id: NodeId) -> Option<u32> {
        self.level.get(&id).copied()
    }

    pub fn role(&self, id: NodeId) -> Option<Role> {
        self.roles.get(&id).copied()
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children.get(&id).into_iter().flatten().copied()
    }

    pub fn with_role(&self, role: Role) -> Vec<NodeId> {
        self.roles
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn controllers(&self) -> Vec<NodeId> {
        self.roles
            .iter()
            .filter(|(_, r)| r.is_controller())
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len()
    }

    /// Longest root-to-leaf distance.
    pub fn height(&self) -> u32 {
        self.level.values().copied().max().unwrap_or(0)
    }

    /// `id`, its parent, ..., the root.
    pub fn path_to_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, id: NodeId) -> bool {
        self.path_to_root(id).contains(&ancestor)
    }

    /// Lowest common ancestor.
    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        let up: BTreeSet<NodeId> = self.path_to_root(a).into_iter().collect();
        self.path_to_root(b)
            .into_iter()
            .find(|n| up.contains(n))
            .expect("same tree")
    }

    /// Tree path from `a` to `b` through their LCA, inclusive.
    pub fn tree_path(&self, a: NodeId, b: NodeId) -> Vec<NodeId> {
        let l = self.lca(a, b);
        let mut left: Vec<NodeId> = self.path_to_root(a);
        left.truncate(left.iter().position(|n| *n == l).unwrap() + 1);
        let mut right: Vec<NodeId> = self.path_to_root(b);
        right.truncate(right.iter().position(|n| *n == l).unwrap());
        right.reverse();
        left.extend(right);
        left
    }

    /// All nodes in the subtree rooted at `id`.
    pub fn subtree(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend(self.children(n));
            }
        }
        out
    }

    /// The controller that owns a host: its switch's parent.
    pub fn owner_of_host(&self, host: NodeId) -> Option<NodeId> {
        self.parent(host).and_then(|sw| self.parent(sw))
    }

    /// Moves `child` (and its subtree) under `new_parent`.
    pub fn reparent(&mut self, child: NodeId, new_parent: NodeId) {
        if let Some(old) = self.parent.insert(child, new_parent) {
            if let Some(c) = self.children.get_mut(&old) {
                c.remove(&child);
            }
        }
        self.children.entry(new_parent).or_default().insert(child);
        let base = self.level[&new_parent] + 1;
        let old_level = self.level[&child];
        for n in self.subtree(child) {
            let l = self.level[&n];
            self.level.insert(n, l - old_level + base);
        }
    }

    /// Checks the structural invariants of a freshly built tree.
    pub fn validate(&self) -> Result<(), TopologyError> {
        let roots = self.with_role(Role::Global);
        if roots.len() != 1 {
            return Err(TopologyError::InvalidTree(format!("{} global roots", roots.len())));
        }
        if self.parent.len() + 1 != self.roles.len() {
            return Err(TopologyError::InvalidTree("edge count".into()));
        }
        let root = roots[0];
        for id in self.roles.keys() {
            if *self.path_to_root(*id).last().unwrap() != root {
                return Err(TopologyError::InvalidTree(format!("{id} detached")));
            }
        }
        for (id, role) in &self.roles {
            let parent_role = self.parent(*id).and_then(|p| self.role(p));
            let ok = match role {
                Role::Host => parent_role == Some(Role::Switch),
                Role::Switch => parent_role == Some(Role::Local),
                Role::Local => matches!(parent_role, Some(Role::Super | Role::Global)),
                Role::Super => parent_role == Some(Role::Global),
                Role::Global => parent_role.is_none(),
            };
            if !ok {
                return Err(TopologyError::InvalidTree(format!("{id} has wrong parent")));
            }
        }
        Ok(())
    }
}

/// Builds the experimental tree: one global root, `n_local` local controllers,
/// `switches_per_local` switches under each, and `hosts_per_switch` hosts
/// under each switch. Sibling switches are fully meshed.
pub fn build_hierarchy(
    n_local: usize,
    switches_per_local: usize,
    hosts_per_switch: usize,
) -> Result<(Hierarchy, NetGraph), TopologyError> {
    build_tree(None, n_local, switches_per_local, hosts_per_switch)
}

/// Same as [`build_hierarchy`] with a layer of `n_super` super controllers,
/// each parenting `locals_per_super` locals.
pub fn build_hierarchy_with_supers(
    n_super: usize,
    locals_per_super: usize,
    switches_per_local: usize,
    hosts_per_switch: usize,
) -> Result<(Hierarchy, NetGraph), TopologyError> {
    if n_super == 0 || locals_per_super == 0 {
        return Err(TopologyError::InvalidCount);
    }
    build_tree(
        Some(n_super),
        n_super * locals_per_super,
        switches_per_local,
        hosts_per_switch,
    )
}

fn build_tree(
    n_super: Option<usize>,
    n_local: usize,
    switches_per_local: usize,
    hosts_per_switch: usize,
) -> Result<(Hierarchy, NetGraph), TopologyError> {
    if n_local == 0 || switches_per_local == 0 || hosts_per_switch == 0 {
        return Err(TopologyError::InvalidCount);
    }
    let mut next = 0u32;
    let mut fresh = || {
        let id = NodeId(next);
        next += 1;
        id
    };
    let root = fresh();
    let mut h = Hierarchy::new(root);
    let mut g = NetGraph::new();
    g.add_vertex(root, Role::Global);

    let add = |h: &mut Hierarchy, g: &mut NetGraph, id: NodeId, parent: NodeId, role: Role| {
        h.attach(id, parent, role);
        g.add_vertex(id, role);
        g.insert_edge(id, parent, 1).expect("fresh tree edge");
    };

    let supers: Vec<NodeId> = match n_super {
        Some(s) => (0..s)
            .map(|_| {
                let id = fresh();
                add(&mut h, &mut g, id, root, Role::Super);
                id
            })
            .collect(),
        None => Vec::new(),
    };
    let locals: Vec<NodeId> = (0..n_local)
        .map(|i| {
            let id = fresh();
            let parent = if supers.is_empty() {
                root
            } else {
                supers[i / (n_local / supers.len())]
            };
            add(&mut h, &mut g, id, parent, Role::Local);
            id
        })
        .collect();
    let mut switches_by_local = Vec::with_capacity(n_local);
    for &l in &locals {
        let sws: Vec<NodeId> = (0..switches_per_local)
            .map(|_| {
                let id = fresh();
                add(&mut h, &mut g, id, l, Role::Switch);
                id
            })
            .collect();
        for (i, a) in sws.iter().enumerate() {
            for b in &sws[i + 1..] {
                g.insert_edge(*a, *b, 1)?;
            }
        }
        switches_by_local.push(sws);
    }
    for sws in &switches_by_local {
        for &s in sws {
            for _ in 0..hosts_per_switch {
                let id = fresh();
                add(&mut h, &mut g, id, s, Role::Host);
            }
        }
    }
    Ok((h, g))
}

/// A contiguous group of local controllers under one area coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub id: usize,
    pub area_coordinator: NodeId,
    pub members: Vec<NodeId>,
}

/// Splits `locals` into `p` contiguous, balanced partitions. The first member
/// of each partition is its area coordinator.
pub fn partition_nodes(locals: &[NodeId], p: usize) -> Result<Vec<Partition>, TopologyError> {
    let n = locals.len();
    if p == 0 || p > n {
        return Err(TopologyError::TooManyPartitions { n, p });
    }
    let base = n / p;
    let extra = n % p;
    let mut out = Vec::with_capacity(p);
    let mut start = 0;
    for id in 0..p {
        let size = base + usize::from(id < extra);
        let members = locals[start..start + size].to_vec();
        start += size;
        out.push(Partition {
            id,
            area_coordinator: members[0],
            members,
        });
    }
    Ok(out)
}

/// Location-based group of mobile nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    /// Member closest to the center, if any.
    pub coordinator: Option<NodeId>,
    pub center: (f64, f64),
    pub members: BTreeSet<NodeId>,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest_center(p: (f64, f64), centers: &[(f64, f64)]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, *c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Puts each node into the cluster of its nearest center.
pub fn assign_clusters(
    positions: &BTreeMap<NodeId, (f64, f64)>,
    centers: &[(f64, f64)],
) -> Result<Vec<Cluster>, TopologyError> {
    if centers.is_empty() {
        return Err(TopologyError::NoCenters);
    }
    let mut clusters: Vec<Cluster> = centers
        .iter()
        .enumerate()
        .map(|(id, c)| Cluster {
            id,
            coordinator: None,
            center: *c,
            members: BTreeSet::new(),
        })
        .collect();
    for (id, pos) in positions {
        clusters[nearest_center(*pos, centers)].members.insert(*id);
    }
    for c in &mut clusters {
        let mut best: Option<(f64, NodeId)> = None;
        for m in &c.members {
            let d = dist2(positions[m], c.center);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, *m));
            }
        }
        c.coordinator = best.map(|(_, m)| m);
    }
    Ok(clusters)
}
