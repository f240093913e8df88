//! System bring-up: the eight setup steps from an empty network to a running
//! controller tree whose images are held at the root.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use super::config::{ConfigError, SystemConfig};
use crate::control::node::{ControllerImage, ControllerNode, HostPlant, NodeStatus, SdnUnit};
use crate::control::sdcompute::ComputeUnit;
use crate::control::sdiot::{DeviceKind, DeviceRecord, DeviceRegistry, DeviceStatus};
use crate::control::sdn::SdnController;
use crate::control::sds::StorageController;
use crate::control::units::QosRules;
use crate::engine::SimTime;
use crate::middleware::clock::ClockModel;
use crate::middleware::registry::{ControllerRegistry, Liveness, RegistryEntry};
use crate::middleware::scheduler::Scheduler;
use crate::plant::{design_gains, GainSchedule, PlantDims, PlantState};
use crate::rng::SimRng;
use crate::security::audit::audit_map;
use crate::security::crypto::KeyRing;
use crate::security::policy::PolicySet;
use crate::security::SecurityUnit;
use crate::topology::{
    build_hierarchy, build_hierarchy_with_supers, partition_nodes, Hierarchy, NetGraph, NodeId, Partition, Role,
};

/// Independent random streams drawn from the run seed.
pub const STREAM_SETUP: u64 = 1;
pub const STREAM_WORKLOAD: u64 = 2;
pub const STREAM_PLANTS: u64 = 3;
pub const STREAM_ATTACKS: u64 = 4;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("could not establish {unit} on controller {node}: {reason}")]
    EstablishFailure {
        node: NodeId,
        unit: &'static str,
        reason: String,
    },
}

fn establish(node: NodeId, unit: &'static str, reason: impl ToString) -> SetupError {
    SetupError::EstablishFailure {
        node,
        unit,
        reason: reason.to_string(),
    }
}

/// Role subsets of the controller list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControllerLists {
    /// Every controller instance, one per vertex.
    pub all: Vec<NodeId>,
    pub supers: Vec<NodeId>,
    pub locals: Vec<NodeId>,
    pub areas: Vec<NodeId>,
}

/// Deterministic setup work, by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SetupWork {
    pub initializations: u64,
    pub forwarding_entries: u64,
    pub device_entries: u64,
    pub policy_rules: u64,
    pub storage_entries: u64,
    pub compute_entries: u64,
    pub gain_entries: u64,
    pub key_entries: u64,
    pub inventory_entries: u64,
    pub images: u64,
}

impl SetupWork {
    pub fn total(&self) -> u64 {
        self.initializations
            + self.forwarding_entries
            + self.device_entries
            + self.policy_rules
            + self.storage_entries
            + self.compute_entries
            + self.gain_entries
            + self.key_entries
            + self.inventory_entries
            + self.images
    }
}

pub struct System {
    pub config: SystemConfig,
    pub hierarchy: Hierarchy,
    pub graph: NetGraph,
    pub nodes: BTreeMap<NodeId, ControllerNode>,
    pub sdn: SdnController,
    pub registry: ControllerRegistry,
    pub partitions: Vec<Partition>,
    pub lists: ControllerLists,
    /// Host-to-host coupling used by consensus gains.
    pub interaction: NetGraph,
    pub gains: GainSchedule,
    pub clocks: BTreeMap<NodeId, ClockModel>,
    pub keyring: KeyRing,
    pub positions: BTreeMap<NodeId, (f64, f64)>,
    /// Images captured by the root.
    pub images: BTreeMap<NodeId, ControllerImage>,
    /// The copy of its own image each controller received back.
    pub backups: BTreeMap<NodeId, ControllerImage>,
    /// Status transitions in the order they happened.
    pub bringup: Vec<(NodeId, NodeStatus)>,
    pub work: SetupWork,
    pub config_work: u64,
    pub config_wall_ms: f64,
}

impl System {
    pub fn hosts(&self) -> Vec<NodeId> {
        self.hierarchy.with_role(Role::Host)
    }

    /// Flow id carrying a host's requests.
    pub fn host_flow(host: NodeId) -> u64 {
        u64::from(host.0)
    }
}

fn layout(hierarchy: &Hierarchy) -> BTreeMap<NodeId, (f64, f64)> {
    let mut pos = BTreeMap::new();
    let root = hierarchy.root();
    pos.insert(root, (0.0, 0.0));
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        let (x, y) = pos[&n];
        let kids: Vec<NodeId> = hierarchy.children(n).collect();
        let spread = 100.0 / (hierarchy.level(n).unwrap_or(0) + 1) as f64;
        for (i, c) in kids.iter().enumerate() {
            let off = (i as f64 - (kids.len() as f64 - 1.0) / 2.0) * spread;
            pos.insert(*c, (x + off, y + 20.0));
            stack.push(*c);
        }
    }
    pos
}

fn capacity_units(role: Role) -> (u32, u64) {
    match role {
        Role::Global => (64, 1 << 16),
        Role::Super => (32, 1 << 15),
        Role::Local => (16, 1 << 14),
        Role::Switch => (4, 1 << 12),
        Role::Host => (1, 1 << 10),
    }
}

fn new_node(id: NodeId, role: Role, level: u32, config: &SystemConfig) -> ControllerNode {
    let (cpu, mem) = capacity_units(role);
    ControllerNode {
        id,
        role,
        level,
        children: BTreeSet::new(),
        status: NodeStatus::Created,
        sdn: SdnUnit::default(),
        sdiot: DeviceRegistry::new(),
        sdsecurity: SecurityUnit::new(
            config.security.params(),
            PolicySet::new(crate::security::policy::Effect::Deny),
        ),
        sdcompute: ComputeUnit::new(id, cpu, mem),
        sds: StorageController::new(config.storage.cache_capacity),
        qos: QosRules::default(),
        readings: BTreeMap::new(),
        plant: None,
        inbox: Scheduler::new(),
    }
}

/// Hosts under one switch form a ring of plant couplings.
fn interaction_graph(hierarchy: &Hierarchy) -> NetGraph {
    let mut g = NetGraph::new();
    for sw in hierarchy.with_role(Role::Switch) {
        let hosts: Vec<NodeId> = hierarchy.children(sw).collect();
        for &h in &hosts {
            g.add_vertex(h, Role::Host);
        }
        if hosts.len() >= 2 {
            for i in 0..hosts.len() {
                let (a, b) = (hosts[i], hosts[(i + 1) % hosts.len()]);
                if g.weight(a, b).is_none() && a != b {
                    g.insert_edge(a, b, 1).expect("fresh ring edge");
                }
            }
        }
    }
    g
}

pub fn setup(config: &SystemConfig) -> Result<System, SetupError> {
    let started = Instant::now();
    config.validate()?;
    let t = &config.topology;
    let mut work = SetupWork::default();
    let mut rng = SimRng::new(config.seed).split(STREAM_SETUP);
    let mut bringup = Vec::new();

    let (hierarchy, graph) = if t.supers > 0 {
        build_hierarchy_with_supers(t.supers, t.n_local / t.supers, t.switches_per_local, t.hosts_per_switch)
    } else {
        build_hierarchy(t.n_local, t.switches_per_local, t.hosts_per_switch)
    }
    .map_err(|e| ConfigError::ConfigInvalid(e.to_string()))?;
    hierarchy
        .validate()
        .map_err(|e| establish(hierarchy.root(), "hierarchy", e))?;

    // STEP 1: the global controller.
    let root = hierarchy.root();
    let mut nodes = BTreeMap::new();
    nodes.insert(root, new_node(root, Role::Global, 0, config));
    work.initializations += 1;

    // STEP 2: a controller object for every other vertex.
    for id in hierarchy.nodes().filter(|n| *n != root) {
        let role = hierarchy.role(id).expect("known node");
        let level = hierarchy.level(id).expect("known node");
        nodes.insert(id, new_node(id, role, level, config));
        work.initializations += 1;
    }
    for (id, node) in nodes.iter_mut() {
        node.children = hierarchy.children(*id).collect();
    }

    // STEP 3: role subsets.
    let locals = hierarchy.with_role(Role::Local);
    let mut lists = ControllerLists {
        all: nodes.keys().copied().collect(),
        supers: hierarchy.with_role(Role::Super),
        locals: locals.clone(),
        areas: Vec::new(),
    };

    // STEP 4: partitions and their area coordinators.
    let partitions = partition_nodes(&locals, t.partitions).map_err(|e| ConfigError::ConfigInvalid(e.to_string()))?;
    lists.areas = partitions.iter().map(|p| p.area_coordinator).collect();
    let mut partition_of = BTreeMap::new();
    for p in &partitions {
        for &l in &p.members {
            for n in hierarchy.subtree(l) {
                partition_of.insert(n, p.id);
            }
        }
    }

    // STEP 5: configure every unit.
    let policy = config.topology.path_policy.into();
    let forwarders: Vec<NodeId> = hierarchy
        .nodes()
        .filter(|n| hierarchy.role(*n) != Some(Role::Host))
        .collect();
    let mut sdn = SdnController::new(policy, forwarders.iter().copied());
    work.forwarding_entries = sdn.install_all(&graph);
    if let Some(&(owner, dst)) = sdn.last_unreachable.first() {
        return Err(establish(owner, "sdn", format!("no route to {dst}")));
    }
    for (owner, table) in sdn.tables() {
        let node = nodes.get_mut(owner).expect("forwarder is a node");
        node.sdn.table = Some(table.clone());
        node.sdn.status.epoch = graph.epoch();
    }

    let positions = layout(&hierarchy);
    for &l in &locals {
        let mut devices: Vec<(NodeId, DeviceKind)> = Vec::new();
        for sw in hierarchy.children(l) {
            devices.push((sw, DeviceKind::AccessPoint));
            devices.extend(hierarchy.children(sw).map(|h| (h, DeviceKind::Host)));
        }
        let node = nodes.get_mut(&l).expect("local exists");
        node.sdiot.cluster_centers = hierarchy.children(l).map(|sw| positions[&sw]).collect();
        for (id, kind) in devices {
            node.sdiot
                .register_device(DeviceRecord {
                    id,
                    kind,
                    status: DeviceStatus::Ok,
                    location: positions[&id],
                    last_seen: SimTime::ZERO,
                    owner_controller: l,
                })
                .map_err(|e| establish(l, "sdiot", e))?;
            work.device_entries += 1;
        }
    }

    for node in nodes.values_mut() {
        node.sdsecurity.policies = PolicySet::for_controller_level(node.level);
        work.policy_rules += node.sdsecurity.policies.rules.len() as u64;
        node.readings.insert("battery".into(), 1.0);
        let blob = match &node.sdn.table {
            Some(table) => serde_json::to_vec(table).expect("table serializes"),
            None => format!("{:?}", node.role).into_bytes(),
        };
        node.sds.storage_put("config", &blob);
        work.storage_entries += 1;
        node.sdcompute.tasks = 0;
        work.compute_entries += 1;
    }

    let model = config.plant.model()?;
    let hosts = hierarchy.with_role(Role::Host);
    let interaction = interaction_graph(&hierarchy);
    let dims: PlantDims = hosts.iter().map(|h| (*h, (model.states(), model.inputs()))).collect();
    let gains = design_gains(
        &dims,
        &interaction,
        Some(&hierarchy),
        &partition_of,
        &config.gains.template(),
        0,
    )
    .map_err(|e| establish(root, "gains", e))?;
    for &h in &hosts {
        let law = &gains.laws[&h];
        work.gain_entries += law.gains.len() as u64;
        let mut state = PlantState::new(&model, config.plant.x0()).map_err(|e| establish(h, "plant", e))?;
        state.x_hat = state.x.clone();
        let self_gain: DMatrix<f64> = law.self_gain(h).clone();
        nodes.get_mut(&h).expect("host exists").plant = Some(HostPlant {
            model: model.clone(),
            state,
            self_gain,
        });
    }

    let mut keyring = KeyRing::new(config.security.encryption);
    if config.security.seal_flows {
        for &h in &hosts {
            keyring.issue(System::host_flow(h), &mut rng);
            work.key_entries += 1;
        }
    }

    if config.security.enabled {
        let inventory = audit_map(&graph, &hierarchy, &positions);
        for &l in &locals {
            let node = nodes.get_mut(&l).expect("local exists");
            work.inventory_entries += inventory.len() as u64;
            node.sdsecurity.audit(inventory.clone(), SimTime::ZERO);
        }
    }

    if config.scheduler.location_bins {
        let bin_of: BTreeMap<NodeId, usize> = hosts
            .iter()
            .filter_map(|h| {
                let owner = hierarchy.owner_of_host(*h)?;
                Some((*h, locals.iter().position(|l| *l == owner)?))
            })
            .collect();
        for node in nodes.values_mut().filter(|n| n.role.is_controller()) {
            node.inbox = Scheduler::with_location_bins(bin_of.clone());
        }
    }

    let mut clocks = BTreeMap::new();
    for &id in nodes.keys() {
        let skew = 1.0 + rng.gen_range(-1e-3..1e-3);
        let offset = rng.gen_range(-5.0..5.0);
        let clock = ClockModel::exact(id, skew, offset).map_err(|e| establish(id, "clock", e))?;
        clocks.insert(id, clock);
    }

    for (id, node) in nodes.iter_mut() {
        node.status = NodeStatus::Established;
        bringup.push((*id, NodeStatus::Established));
    }

    // STEP 6: everything runs; controllers announce themselves.
    let mut registry = ControllerRegistry::new();
    for (id, node) in nodes.iter_mut() {
        node.status = NodeStatus::Running;
        bringup.push((*id, NodeStatus::Running));
        if node.role.is_controller() {
            registry
                .register_controller(
                    *id,
                    RegistryEntry {
                        role: node.role,
                        layer: node.level,
                        last_heartbeat: SimTime::ZERO,
                        address: format!("ctl-{id}"),
                        status: Liveness::Running,
                    },
                )
                .map_err(|e| establish(*id, "registry", e))?;
        }
    }

    // STEP 7: the root captures every image.
    let mut images = BTreeMap::new();
    for (id, node) in &nodes {
        let image = node
            .capture_image(SimTime::ZERO)
            .map_err(|e| establish(*id, "image", e))?;
        images.insert(*id, image);
        work.images += 1;
    }

    // STEP 8: and hands each controller its own copy.
    let backups = images.clone();
    work.images += backups.len() as u64;

    let config_work = work.total();
    Ok(System {
        config: config.clone(),
        hierarchy,
        graph,
        nodes,
        sdn,
        registry,
        partitions,
        lists,
        interaction,
        gains,
        clocks,
        keyring,
        positions,
        images,
        backups,
        bringup,
        work,
        config_work,
        config_wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(l: usize, s: usize, h: usize) -> SystemConfig {
        let mut c = SystemConfig::default().with_shape(l, s, h);
        c.topology.partitions = 1;
        c
    }

    #[test]
    fn minimal_system() {
        let sys = setup(&shape(1, 1, 1)).unwrap();
        assert_eq!(sys.nodes.len(), 4);
        assert!(sys.nodes.values().all(|n| n.is_running()));
        assert_eq!(sys.images.len(), 4);
        assert_eq!(sys.lists.all.len(), 4);
    }

    #[test]
    fn established_before_running() {
        let sys = setup(&shape(2, 2, 2)).unwrap();
        for id in sys.nodes.keys() {
            let e = sys
                .bringup
                .iter()
                .position(|x| *x == (*id, NodeStatus::Established))
                .unwrap();
            let r = sys
                .bringup
                .iter()
                .position(|x| *x == (*id, NodeStatus::Running))
                .unwrap();
            assert!(e < r);
        }
    }

    #[test]
    fn local_tables_cover_all_hosts() {
        let sys = setup(&shape(8, 2, 8)).unwrap();
        let hosts = sys.hosts();
        assert_eq!(hosts.len(), 128);
        for l in &sys.lists.locals {
            let table = sys.nodes[l].sdn.table.as_ref().unwrap();
            assert!(hosts.iter().all(|h| table.next_hop(*h).is_some()));
        }
    }

    #[test]
    fn work_grows_with_each_dimension() {
        let base = setup(&shape(2, 2, 2)).unwrap().config_work;
        assert!(setup(&shape(3, 2, 2)).unwrap().config_work > base);
        assert!(setup(&shape(2, 3, 2)).unwrap().config_work > base);
        assert!(setup(&shape(2, 2, 3)).unwrap().config_work > base);
    }

    #[test]
    fn supers_layer() {
        let mut c = shape(4, 1, 1);
        c.topology.supers = 2;
        let sys = setup(&c).unwrap();
        assert_eq!(sys.lists.supers.len(), 2);
        assert_eq!(sys.nodes.len(), 1 + 2 + 4 + 4 + 4);
    }
}
