//! Exact offline optimum by dynamic programming over configurations.
//!
//! State = configuration after serving a prefix of the stream. A covered
//! request keeps the configuration; an uncovered one branches over the k
//! possible source nodes. Layers are kept in insertion order so the
//! backtracked trace is deterministic for a fixed input.

use std::collections::HashMap;

use crate::domain::{apply_decision, Configuration, Cost, CostMatrix, NodeId, ServiceDecision};
use crate::offline::OptTrace;
use crate::{Error, Result};

struct LayerEntry {
    mask: u64,
    cost: Cost,
    prev: u32,   // index into the previous layer
    source: u32, // node the serving move came from (== request if covered)
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut result: u64 = 1;
    for i in 0..k.min(n - k) {
        result = result.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    result
}

/// Solve exactly, refusing instances whose state-space estimate
/// `C(n,k) * s` exceeds `max_states`.
pub fn solve(
    matrix: &CostMatrix,
    start: Configuration,
    stream: &[NodeId],
    max_states: u64,
) -> Result<OptTrace> {
    let n = matrix.n();
    let k = start.k();
    let estimate = binomial(n, k).saturating_mul(stream.len() as u64);
    if estimate > max_states {
        return Err(Error::Infeasible(format!(
            "state space too large: C({n},{k}) * {} = {estimate} > {max_states}",
            stream.len()
        )));
    }

    let mut layers: Vec<Vec<LayerEntry>> = Vec::with_capacity(stream.len() + 1);
    layers.push(vec![LayerEntry {
        mask: start.mask(),
        cost: 0,
        prev: 0,
        source: 0,
    }]);

    let mut index: HashMap<u64, u32> = HashMap::new();
    for &request in stream {
        let req_bit = 1u64 << request.index();
        let prev_layer = layers.last().unwrap();
        let mut layer: Vec<LayerEntry> = Vec::with_capacity(prev_layer.len());
        index.clear();
        let push = |layer: &mut Vec<LayerEntry>,
                        index: &mut HashMap<u64, u32>,
                        mask: u64,
                        cost: Cost,
                        prev: u32,
                        source: u32| {
            match index.get(&mask) {
                Some(&i) => {
                    let entry = &mut layer[i as usize];
                    if cost < entry.cost {
                        entry.cost = cost;
                        entry.prev = prev;
                        entry.source = source;
                    }
                }
                None => {
                    index.insert(mask, layer.len() as u32);
                    layer.push(LayerEntry { mask, cost, prev, source });
                }
            }
        };
        for (pi, entry) in prev_layer.iter().enumerate() {
            if entry.mask & req_bit != 0 {
                push(
                    &mut layer,
                    &mut index,
                    entry.mask,
                    entry.cost,
                    pi as u32,
                    request.0,
                );
            } else {
                let mut rest = entry.mask;
                while rest != 0 {
                    let src = rest.trailing_zeros();
                    rest &= rest - 1;
                    let mask = (entry.mask & !(1u64 << src)) | req_bit;
                    let cost = entry.cost + matrix.cost(NodeId(src), request);
                    push(&mut layer, &mut index, mask, cost, pi as u32, src);
                }
            }
        }
        layers.push(layer);
    }

    // pick the first minimal final state, then backtrack
    let last = layers.last().unwrap();
    let mut best = 0usize;
    for (i, entry) in last.iter().enumerate() {
        if entry.cost < last[best].cost {
            best = i;
        }
    }
    let total_cost = last[best].cost;

    let mut sources = vec![0u32; stream.len()];
    let mut at = best as u32;
    for step in (0..stream.len()).rev() {
        let entry = &layers[step + 1][at as usize];
        sources[step] = entry.source;
        at = entry.prev;
    }

    let mut decisions = Vec::with_capacity(stream.len());
    let mut config = start;
    for (m, &request) in stream.iter().enumerate() {
        let source = NodeId(sources[m]);
        let cost = if source == request {
            0
        } else {
            matrix.cost(source, request)
        };
        let decision = ServiceDecision { request, source, cost };
        config = apply_decision(config, &decision)?;
        decisions.push(decision);
    }
    Ok(OptTrace {
        decisions,
        total_cost,
    })
}
