//! Reference implementations used as test oracles, plus small shared drivers.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use sdcps_core::control::sdn::SdnController;
use sdcps_core::plant::{
    design_gains, estimate, local_control, step_plant, EstimatorMode, GainRule, GainTemplate, PlantDims, PlantModel,
    PlantState,
};
use sdcps_core::topology::{NetGraph, NodeId, Role};

/// Connected graph on `n` vertices: a random spanning tree plus `extra` random edges.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra: usize, max_weight: u32) -> NetGraph {
    let mut g = NetGraph::new();
    for i in 0..n {
        g.add_vertex(NodeId(i as u32), Role::Switch);
    }
    for i in 1..n {
        let j = rng.gen_range(0..i);
        g.insert_edge(NodeId(i as u32), NodeId(j as u32), rng.gen_range(1..=max_weight))
            .unwrap();
    }
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b && g.weight(NodeId(a as u32), NodeId(b as u32)).is_none() {
            g.insert_edge(NodeId(a as u32), NodeId(b as u32), rng.gen_range(1..=max_weight))
                .unwrap();
        }
    }
    g
}

/// Adjacency matrix with `None` for missing edges.
pub fn weight_matrix(g: &NetGraph) -> (Vec<NodeId>, Vec<Vec<Option<u64>>>) {
    let ids: Vec<NodeId> = g.vertices().collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut w = vec![vec![None; ids.len()]; ids.len()];
    for (a, b, wt) in g.edges() {
        w[index[&a]][index[&b]] = Some(wt as u64);
        w[index[&b]][index[&a]] = Some(wt as u64);
    }
    (ids, w)
}

/// Cheapest simple path cost from `s` to `d` by enumerating every simple path.
pub fn brute_force_cost(g: &NetGraph, s: NodeId, d: NodeId) -> Option<u64> {
    let (ids, w) = weight_matrix(g);
    let si = ids.iter().position(|v| *v == s)?;
    let di = ids.iter().position(|v| *v == d)?;
    fn dfs(w: &[Vec<Option<u64>>], cur: usize, d: usize, seen: &mut Vec<bool>, cost: u64, best: &mut Option<u64>) {
        if cur == d {
            *best = Some(best.map_or(cost, |b| b.min(cost)));
            return;
        }
        for next in 0..w.len() {
            if let Some(c) = w[cur][next] {
                if !seen[next] {
                    seen[next] = true;
                    dfs(w, next, d, seen, cost + c, best);
                    seen[next] = false;
                }
            }
        }
    }
    let mut seen = vec![false; ids.len()];
    seen[si] = true;
    let mut best = None;
    dfs(&w, si, di, &mut seen, 0, &mut best);
    best
}

/// `x <- x + eps * sum_j (x_j - x_i)` iterated on plain vectors.
pub fn consensus_direct(g: &NetGraph, eps: f64, x0: &[f64], steps: usize) -> Vec<f64> {
    let (_, w) = weight_matrix(g);
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let prev = x.clone();
        for i in 0..x.len() {
            let mut s = 0.0;
            for j in 0..x.len() {
                if w[i][j].is_some() {
                    s += prev[j] - prev[i];
                }
            }
            x[i] = prev[i] + eps * s;
        }
    }
    x
}

/// Spectral radius of a 2x2 matrix from its characteristic polynomial.
pub fn spectral_radius_2x2(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        (tr / 2.0 + r).abs().max((tr / 2.0 - r).abs())
    } else {
        det.sqrt()
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(rest: &mut Vec<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            cur.push(v);
            go(rest, cur, out);
            cur.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    go(&mut (0..n).collect(), &mut Vec::new(), &mut out);
    out
}

/// Maximum lateness when unit jobs run back to back from `start` in `order`.
pub fn max_lateness(deadlines: &[u64], order: &[usize], start: u64) -> i64 {
    order
        .iter()
        .enumerate()
        .map(|(k, &j)| (start + k as u64 + 1) as i64 - deadlines[j] as i64)
        .max()
        .unwrap_or(i64::MIN)
}

/// Follows next hops from `src` until `dst`; returns the path cost.
pub fn walk(sdn: &SdnController, g: &NetGraph, src: NodeId, dst: NodeId) -> Option<u64> {
    let mut cur = src;
    let mut cost = 0u64;
    for _ in 0..g.vertex_count() {
        if cur == dst {
            return Some(cost);
        }
        let next = sdn.next_hop(cur, dst)?;
        cost += g.weight(cur, next)? as u64;
        cur = next;
    }
    (cur == dst).then_some(cost)
}

/// Runs scalar integrator plants under consensus gains and returns the
/// final states; `each` sees every intermediate step.
pub fn consensus_run(
    g: &NetGraph,
    eps: f64,
    x0: &[f64],
    steps: usize,
    mut each: impl FnMut(usize, &[f64]),
) -> Vec<f64> {
    let model = PlantModel::scalar(1.0, 1.0);
    let ids: Vec<NodeId> = g.vertices().collect();
    let dims: PlantDims = ids.iter().map(|i| (*i, (1, 1))).collect();
    let sched = design_gains(
        &dims,
        g,
        None,
        &BTreeMap::new(),
        &GainTemplate::uniform(GainRule::Consensus { epsilon: eps }),
        0,
    )
    .unwrap();
    let mut states: BTreeMap<NodeId, PlantState> = ids
        .iter()
        .zip(x0)
        .map(|(i, v)| (*i, PlantState::new(&model, DVector::from_element(1, *v)).unwrap()))
        .collect();
    for k in 0..steps {
        let est: BTreeMap<NodeId, DVector<f64>> = states
            .iter()
            .map(|(i, s)| {
                (
                    *i,
                    estimate(&model, &EstimatorMode::FullObs, &s.x_hat, &s.y, &s.u).unwrap(),
                )
            })
            .collect();
        let mut next = BTreeMap::new();
        for (i, s) in &states {
            let u = local_control(&sched.laws[i].gains, &est).unwrap();
            next.insert(*i, step_plant(&model, s, &u, None).unwrap());
        }
        states = next;
        let xs: Vec<f64> = states.values().map(|s| s.x[0]).collect();
        each(k, &xs);
    }
    states.values().map(|s| s.x[0]).collect()
}

pub fn max_degree(g: &NetGraph) -> usize {
    g.vertices().map(|v| g.adjacent(v).count()).max().unwrap_or(0)
}
