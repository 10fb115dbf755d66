//! Min-cost-flow formulation of the offline k-server optimum.
//!
//! Network: source -> a_j (one per start position) -> request nodes. Each
//! request m gets a pair (r_m, r_m') joined by a capacity-1 edge of cost -K
//! so every min-cost flow of value k serves every request. Service edges
//! carry d(previous position, T_m). Solved by successive shortest paths
//! with potentials; the graph is acyclic before any flow, so the initial
//! potentials come from a single relaxation pass in topological order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::domain::{Cost, CostMatrix, NodeId};
use crate::{Error, Result};

/// Result of the flow solve: the relaxation's minimum service cost and,
/// per request, the index of the start position whose server path covers it.
pub struct FlowOutcome {
    pub service_cost: Cost,
    pub assignment: Vec<usize>,
}

struct Network {
    // edge i: to[i], cap[i], cost[i]; edges come in forward/reverse pairs,
    // forward at even indices
    to: Vec<u32>,
    cap: Vec<i8>,
    cost: Vec<i64>,
    adj: Vec<Vec<u32>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Network {
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cost: i64) {
        let e = self.to.len() as u32;
        self.to.push(to as u32);
        self.cap.push(1);
        self.cost.push(cost);
        self.to.push(from as u32);
        self.cap.push(0);
        self.cost.push(-cost);
        self.adj[from].push(e);
        self.adj[to].push(e + 1);
    }
}

pub fn solve(matrix: &CostMatrix, start: &[NodeId], stream: &[NodeId]) -> Result<FlowOutcome> {
    let k = start.len();
    let s = stream.len();
    let max_d = matrix.max_cost();
    let forcing = 1 + (k as i64) * (s as i64) * max_d; // K

    let source = 0usize;
    let a = |j: usize| 1 + j;
    let req = |m: usize| 1 + k + 2 * m;
    let req_out = |m: usize| 2 + k + 2 * m;
    let sink = 1 + k + 2 * s;
    let nodes = sink + 1;

    let mut net = Network::new(nodes);
    for j in 0..k {
        net.add_edge(source, a(j), 0);
    }
    for m in 0..s {
        net.add_edge(req(m), req_out(m), -forcing);
    }
    for j in 0..k {
        for (m, &t) in stream.iter().enumerate() {
            net.add_edge(a(j), req(m), matrix.cost(start[j], t));
        }
    }
    for m in 0..s {
        for p in m + 1..s {
            net.add_edge(req_out(m), req(p), matrix.cost(stream[m], stream[p]));
        }
    }
    for j in 0..k {
        net.add_edge(a(j), sink, 0);
    }
    for m in 0..s {
        net.add_edge(req_out(m), sink, 0);
    }

    // initial potentials: node numbering is a topological order of the DAG
    let inf = i64::MAX / 4;
    let mut potential = vec![inf; nodes];
    potential[source] = 0;
    for u in 0..nodes {
        if potential[u] == inf {
            continue;
        }
        for &e in &net.adj[u] {
            if e % 2 != 0 {
                continue;
            }
            let v = net.to[e as usize] as usize;
            let nd = potential[u] + net.cost[e as usize];
            if nd < potential[v] {
                potential[v] = nd;
            }
        }
    }

    // k augmentations of one unit each
    let mut dist = vec![inf; nodes];
    let mut parent = vec![u32::MAX; nodes];
    for _ in 0..k {
        dist.iter_mut().for_each(|d| *d = inf);
        parent.iter_mut().for_each(|p| *p = u32::MAX);
        dist[source] = 0;
        let mut heap: BinaryHeap<Reverse<(i64, u32)>> = BinaryHeap::new();
        heap.push(Reverse((0, source as u32)));
        while let Some(Reverse((d, u))) = heap.pop() {
            let u = u as usize;
            if d > dist[u] {
                continue;
            }
            for &e in &net.adj[u] {
                let ei = e as usize;
                if net.cap[ei] == 0 {
                    continue;
                }
                let v = net.to[ei] as usize;
                let reduced = net.cost[ei] + potential[u] - potential[v];
                debug_assert!(reduced >= 0);
                let nd = d + reduced;
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = e;
                    heap.push(Reverse((nd, v as u32)));
                }
            }
        }
        if dist[sink] == inf {
            return Err(Error::Infeasible("flow network has no augmenting path".into()));
        }
        for v in 0..nodes {
            if dist[v] < inf {
                potential[v] += dist[v];
            }
        }
        let mut v = sink;
        while v != source {
            let e = parent[v] as usize;
            net.cap[e] -= 1;
            net.cap[e ^ 1] += 1;
            v = net.to[e ^ 1] as usize;
        }
    }

    // every request pair edge must be saturated
    for m in 0..s {
        let e = (2 * (k + m)) as usize; // m-th forcing edge, after k source edges
        debug_assert_eq!(net.to[e] as usize, req_out(m));
        if net.cap[e] != 0 {
            return Err(Error::Infeasible(format!(
                "request {m} left unserved by min-cost flow"
            )));
        }
    }

    // raw cost of used forward edges, then undo the -K forcing terms
    let mut raw = 0i64;
    for e in (0..net.to.len()).step_by(2) {
        if net.cap[e] == 0 {
            raw += net.cost[e];
        }
    }
    let service_cost = raw + forcing * s as i64;

    // walk each server's path to assign requests
    let mut assignment = vec![usize::MAX; s];
    for j in 0..k {
        let mut cur = a(j);
        while cur != sink {
            let &e = net.adj[cur]
                .iter()
                .find(|&&e| e % 2 == 0 && net.cap[e as usize] == 0)
                .ok_or_else(|| Error::Infeasible("flow path walk ran off the network".into()))?;
            let next = net.to[e as usize] as usize;
            if next != sink && next > k && (next - k - 1) % 2 == 0 {
                let m = (next - k - 1) / 2;
                assignment[m] = j;
            }
            // mark the edge consumed so overlapping walks skip it
            net.cap[e as usize] = 2;
            cur = next;
        }
    }
    if assignment.iter().any(|&x| x == usize::MAX) {
        return Err(Error::Infeasible("flow decomposition missed a request".into()));
    }
    Ok(FlowOutcome {
        service_cost,
        assignment,
    })
}
