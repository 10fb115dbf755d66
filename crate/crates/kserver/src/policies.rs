//! Online decision policies and the run loop that services a stream.
//!
//! Greedy, Balance and Harmonic know the distance function; the mined
//! classifier policy only consults its tree, falling back to greedy when
//! the tree names a node without a server. The run loop enforces the
//! online contract by construction: a policy sees only the current
//! configuration and request.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    apply_decision, Configuration, Cost, CostMatrix, NodeId, ServiceDecision,
};
use crate::miner::DecisionTree;
use crate::streamgen::RequestStream;
use crate::{Error, Result};

/// Per-server accumulated cost for the Balance policy, keyed by the node
/// the server currently occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceState {
    c: Vec<(NodeId, Cost)>,
}

impl BalanceState {
    pub fn new(config: Configuration) -> Self {
        BalanceState {
            c: config.nodes().map(|node| (node, 0)).collect(),
        }
    }

    fn cost_at(&self, node: NodeId) -> Cost {
        self.c
            .iter()
            .find(|(n, _)| *n == node)
            .map(|(_, c)| *c)
            .expect("balance state covers the configuration")
    }

    /// Re-key the moved server: its accumulated cost grows by the move
    /// cost and travels with it to the request's node.
    fn apply_move(&mut self, source: NodeId, request: NodeId, cost: Cost) {
        let entry = self
            .c
            .iter_mut()
            .find(|(n, _)| *n == source)
            .expect("moved server tracked");
        entry.0 = request;
        entry.1 += cost;
        self.c.sort_by_key(|(n, _)| *n);
    }

    pub fn total(&self) -> Cost {
        self.c.iter().map(|(_, c)| *c).sum()
    }
}

/// Outcome of servicing a whole stream with one policy.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub total_cost: Cost,
    pub invalid_count: usize,
    pub final_config: Configuration,
    pub decisions: Vec<ServiceDecision>,
}

/// Pick the occupied node minimizing `d(source, request)`; ties go to the
/// smallest node id.
pub fn greedy_choose(matrix: &CostMatrix, config: Configuration, request: NodeId) -> NodeId {
    debug_assert!(!config.contains(request));
    config
        .nodes()
        .min_by_key(|&src| (matrix.cost(src, request), src))
        .expect("configuration is non-empty")
}

/// Pick the occupied node minimizing accumulated cost plus move cost.
pub fn balance_choose(
    state: &BalanceState,
    matrix: &CostMatrix,
    config: Configuration,
    request: NodeId,
) -> NodeId {
    debug_assert!(!config.contains(request));
    config
        .nodes()
        .min_by_key(|&src| (state.cost_at(src) + matrix.cost(src, request), src))
        .expect("configuration is non-empty")
}

/// Randomized choice with probability proportional to `1 / d(j, request)`.
/// Zero-distance servers take the limit: uniform among themselves.
pub fn harmonic_choose(
    rng: &mut ChaCha8Rng,
    matrix: &CostMatrix,
    config: Configuration,
    request: NodeId,
) -> NodeId {
    debug_assert!(!config.contains(request));
    let nodes: Vec<NodeId> = config.nodes().collect();
    let zero: Vec<NodeId> = nodes
        .iter()
        .copied()
        .filter(|&src| matrix.cost(src, request) == 0)
        .collect();
    if !zero.is_empty() {
        let i = rng.gen_range(0..zero.len());
        return zero[i];
    }
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&src| 1.0 / matrix.cost(src, request) as f64)
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u: f64 = rng.gen::<f64>() * total;
    for (node, w) in nodes.iter().zip(&weights) {
        u -= w;
        if u < 0.0 {
            return *node;
        }
    }
    *nodes.last().unwrap()
}

/// Classify with the mined tree; an unoccupied prediction (including the
/// uncovered request node itself) is invalid and resolved greedily.
pub fn moo_choose(
    tree: &DecisionTree,
    matrix: &CostMatrix,
    config: Configuration,
    request: NodeId,
) -> (NodeId, bool) {
    debug_assert!(!config.contains(request));
    let predicted = tree.classify(request, config);
    if config.contains(predicted) {
        (predicted, true)
    } else {
        (greedy_choose(matrix, config, request), false)
    }
}

/// Online policy selector. Harmonic owns its seed; the classifier policy
/// owns its tree.
#[derive(Debug, Clone)]
pub enum Policy {
    Greedy,
    Balance,
    Harmonic { seed: u64 },
    Moo { tree: DecisionTree },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::Balance => "balance",
            Policy::Harmonic { .. } => "harmonic",
            Policy::Moo { .. } => "moo",
        }
    }
}

/// Serve the stream in order: covered requests cost 0 and change nothing;
/// uncovered ones invoke the policy's choice rule.
pub fn run_policy(
    policy: &Policy,
    matrix: &CostMatrix,
    start: Configuration,
    stream: &RequestStream,
) -> Result<RunResult> {
    let mut config = start;
    let mut balance = BalanceState::new(start);
    let mut rng = match policy {
        Policy::Harmonic { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut decisions = Vec::with_capacity(stream.len());
    let mut total = 0;
    let mut invalid_count = 0;
    for &request in &stream.requests {
        if config.contains(request) {
            decisions.push(ServiceDecision {
                request,
                source: request,
                cost: 0,
            });
            continue;
        }
        let source = match policy {
            Policy::Greedy => greedy_choose(matrix, config, request),
            Policy::Balance => balance_choose(&balance, matrix, config, request),
            Policy::Harmonic { .. } => {
                harmonic_choose(rng.as_mut().unwrap(), matrix, config, request)
            }
            Policy::Moo { tree } => {
                let (source, valid) = moo_choose(tree, matrix, config, request);
                if !valid {
                    invalid_count += 1;
                }
                source
            }
        };
        let cost = matrix.cost(source, request);
        let decision = ServiceDecision {
            request,
            source,
            cost,
        };
        config = apply_decision(config, &decision)?;
        if matches!(policy, Policy::Balance) {
            balance.apply_move(source, request, cost);
        }
        decisions.push(decision);
        total += cost;
    }
    if matches!(policy, Policy::Balance) {
        debug_assert_eq!(balance.total(), total);
    }
    Ok(RunResult {
        total_cost: total,
        invalid_count,
        final_config: config,
        decisions,
    })
}

/// Policy cost divided by optimum cost; both zero is 1 by convention, and
/// a positive cost against a zero optimum is reported as infinite.
pub fn competitive_ratio(policy_cost: Cost, opt_cost: Cost) -> Result<f64> {
    if policy_cost < 0 || opt_cost < 0 {
        return Err(Error::Parse(format!(
            "negative cost in ratio: {policy_cost} / {opt_cost}"
        )));
    }
    if opt_cost == 0 {
        return Ok(if policy_cost == 0 { 1.0 } else { f64::INFINITY });
    }
    Ok(policy_cost as f64 / opt_cost as f64)
}
