//! Core k-server types: node spaces, distance functions, configurations,
//! and single-step service mechanics.
//!
//! Nodes are identified by a 0-based index. The distance formulas operate
//! on 1-based coordinates: on a line, node `i` sits at coordinate `i + 1`;
//! on a grid, node `i` maps row-major to `(i % width + 1, i / width + 1)`.
//! All built-in distance functions are integer-valued on these coordinates,
//! so costs are exact integers throughout.

use crate::{Error, Result};

/// 0-based node index, valid within an enclosing [`NodeSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Movement cost. Built-in distance functions yield exact integers;
/// fractional table entries are scaled to integers at load time.
pub type Cost = i64;

/// Node layout: a line of `n` points or a `width x height` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSpace {
    Line { n: usize },
    Grid { width: usize, height: usize },
}

impl NodeSpace {
    pub fn line(n: usize) -> Self {
        NodeSpace::Line { n }
    }

    pub fn grid(width: usize, height: usize) -> Self {
        NodeSpace::Grid { width, height }
    }

    pub fn n(&self) -> usize {
        match *self {
            NodeSpace::Line { n } => n,
            NodeSpace::Grid { width, height } => width * height,
        }
    }

    pub fn check_node(&self, node: NodeId) -> Result<()> {
        if node.index() < self.n() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                id: node.index(),
                n: self.n(),
            })
        }
    }

    /// 1-based line coordinate of a node; only meaningful for `Line`.
    pub fn line_coord(&self, node: NodeId) -> i64 {
        node.index() as i64 + 1
    }

    /// 1-based grid coordinates of a node, row-major.
    pub fn grid_coords(&self, node: NodeId) -> (i64, i64) {
        match *self {
            NodeSpace::Grid { width, .. } => {
                let i = node.index() as i64;
                let w = width as i64;
                (i % w + 1, i / w + 1)
            }
            NodeSpace::Line { .. } => (node.index() as i64 + 1, 1),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            NodeSpace::Line { .. } => "line",
            NodeSpace::Grid { .. } => "grid",
        }
    }
}

/// Explicit cost table, used to inject arbitrary (possibly non-metric,
/// asymmetric) distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    n: usize,
    costs: Vec<Cost>, // row-major, costs[from * n + to]
}

impl DistanceTable {
    pub fn new(n: usize, costs: Vec<Cost>) -> Result<Self> {
        if costs.len() != n * n {
            return Err(Error::Parse(format!(
                "distance table needs {} entries, got {}",
                n * n,
                costs.len()
            )));
        }
        if costs.iter().any(|&c| c < 0) {
            return Err(Error::Parse("distance table entry is negative".into()));
        }
        Ok(DistanceTable { n, costs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cost(&self, from: NodeId, to: NodeId) -> Cost {
        self.costs[from.index() * self.n + to.index()]
    }

    /// Parse the plain-text table format: first line `n`, then `n` rows of
    /// `n` non-negative numbers. Fractional entries are scaled by a common
    /// power of ten so all stored costs are integers.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty distance table file".into()))?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad table header {header:?}, expected n")))?;
        let mut raw: Vec<(i64, u32)> = Vec::with_capacity(n * n);
        let mut max_decimals = 0u32;
        for (row, line) in lines.enumerate().take(n) {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != n {
                return Err(Error::Parse(format!(
                    "table row {row} has {} entries, expected {n}",
                    tokens.len()
                )));
            }
            for tok in tokens {
                let (value, decimals) = parse_decimal(tok)
                    .ok_or_else(|| Error::Parse(format!("bad table entry {tok:?} in row {row}")))?;
                max_decimals = max_decimals.max(decimals);
                raw.push((value, decimals));
            }
        }
        if raw.len() != n * n {
            return Err(Error::Parse(format!(
                "table has {} entries, expected {}",
                raw.len(),
                n * n
            )));
        }
        let costs = raw
            .into_iter()
            .map(|(v, d)| v * 10i64.pow(max_decimals - d))
            .collect();
        DistanceTable::new(n, costs)
    }
}

/// Parse a non-negative decimal literal into (scaled integer, decimal places).
fn parse_decimal(tok: &str) -> Option<(i64, u32)> {
    let (int_part, frac_part) = match tok.split_once('.') {
        Some((i, f)) => (i, f),
        None => (tok, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if frac_part.len() > 9 {
        return None;
    }
    let mut value: i64 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(10)?;
        value = value.checked_mul(10)?.checked_add(d as i64)?;
    }
    Some((value, frac_part.len() as u32))
}

/// Node-pair cost rule `d(from, to)`. May be asymmetric and non-metric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DistanceFunction {
    /// `|x - x'|` on a line.
    LineAbs,
    /// `(x - x')^2` on a line.
    LineSq,
    /// `|x - x'| * x'` on a line; not symmetric.
    LineAsym,
    /// `|x - x'| + |y - y'|` on a grid.
    GridManhattan,
    /// `|x - x'| * x' + |y - y'| * y'` on a grid; not symmetric.
    GridAsym,
    /// Explicit cost table.
    Table(DistanceTable),
}

impl DistanceFunction {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DistanceFunction::LineAbs => "line_abs",
            DistanceFunction::LineSq => "line_sq",
            DistanceFunction::LineAsym => "line_asym",
            DistanceFunction::GridManhattan => "grid_manhattan",
            DistanceFunction::GridAsym => "grid_asym",
            DistanceFunction::Table(_) => "table",
        }
    }

    pub fn from_kind(kind: &str) -> Option<DistanceFunction> {
        match kind {
            "line_abs" => Some(DistanceFunction::LineAbs),
            "line_sq" => Some(DistanceFunction::LineSq),
            "line_asym" => Some(DistanceFunction::LineAsym),
            "grid_manhattan" => Some(DistanceFunction::GridManhattan),
            "grid_asym" => Some(DistanceFunction::GridAsym),
            _ => None,
        }
    }

    /// Check that this function can be evaluated on `space`.
    pub fn check_space(&self, space: &NodeSpace) -> Result<()> {
        let ok = match (self, space) {
            (DistanceFunction::LineAbs, NodeSpace::Line { .. }) => true,
            (DistanceFunction::LineSq, NodeSpace::Line { .. }) => true,
            (DistanceFunction::LineAsym, NodeSpace::Line { .. }) => true,
            (DistanceFunction::GridManhattan, NodeSpace::Grid { .. }) => true,
            (DistanceFunction::GridAsym, NodeSpace::Grid { .. }) => true,
            (DistanceFunction::Table(t), _) => t.n() == space.n(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DistanceSpaceMismatch {
                kind: self.kind_name().into(),
                space: space.kind_name().into(),
            })
        }
    }

    /// `d(from, to)` under this rule, using 1-based coordinates.
    pub fn distance(&self, space: &NodeSpace, from: NodeId, to: NodeId) -> Result<Cost> {
        self.check_space(space)?;
        space.check_node(from)?;
        space.check_node(to)?;
        Ok(match self {
            DistanceFunction::LineAbs => {
                (space.line_coord(from) - space.line_coord(to)).abs()
            }
            DistanceFunction::LineSq => {
                let d = space.line_coord(from) - space.line_coord(to);
                d * d
            }
            DistanceFunction::LineAsym => {
                let to_coord = space.line_coord(to);
                (space.line_coord(from) - to_coord).abs() * to_coord
            }
            DistanceFunction::GridManhattan => {
                let (x, y) = space.grid_coords(from);
                let (x2, y2) = space.grid_coords(to);
                (x - x2).abs() + (y - y2).abs()
            }
            DistanceFunction::GridAsym => {
                let (x, y) = space.grid_coords(from);
                let (x2, y2) = space.grid_coords(to);
                (x - x2).abs() * x2 + (y - y2).abs() * y2
            }
            DistanceFunction::Table(t) => t.cost(from, to),
        })
    }

    /// Precompute the full n x n cost matrix for fast repeated lookups.
    pub fn cost_matrix(&self, space: &NodeSpace) -> Result<CostMatrix> {
        self.check_space(space)?;
        let n = space.n();
        let mut costs = vec![0; n * n];
        for from in 0..n {
            for to in 0..n {
                costs[from * n + to] =
                    self.distance(space, NodeId(from as u32), NodeId(to as u32))?;
            }
        }
        Ok(CostMatrix { n, costs })
    }
}

/// Dense n x n cost lookup derived from a [`DistanceFunction`].
#[derive(Debug, Clone)]
pub struct CostMatrix {
    n: usize,
    costs: Vec<Cost>,
}

impl CostMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cost(&self, from: NodeId, to: NodeId) -> Cost {
        self.costs[from.index() * self.n + to.index()]
    }

    pub fn max_cost(&self) -> Cost {
        self.costs.iter().copied().max().unwrap_or(0)
    }
}

/// Set of k distinct occupied nodes (one server per node), as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Configuration {
    mask: u64,
}

impl Configuration {
    pub fn from_nodes<I: IntoIterator<Item = NodeId>>(nodes: I) -> Result<Self> {
        let mut mask = 0u64;
        for node in nodes {
            if node.index() >= 64 {
                return Err(Error::InvalidConfiguration(format!(
                    "node {node} exceeds the supported maximum of 64 nodes"
                )));
            }
            let bit = 1u64 << node.index();
            if mask & bit != 0 {
                return Err(Error::InvalidConfiguration(format!(
                    "duplicate node {node}"
                )));
            }
            mask |= bit;
        }
        if mask == 0 {
            return Err(Error::InvalidConfiguration("no servers".into()));
        }
        Ok(Configuration { mask })
    }

    pub fn from_mask(mask: u64) -> Self {
        Configuration { mask }
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// Number of servers.
    pub fn k(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < 64 && self.mask & (1u64 << node.index()) != 0
    }

    /// Occupied nodes in increasing id order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        let mask = self.mask;
        (0..64u32)
            .filter(move |&i| mask & (1u64 << i) != 0)
            .map(NodeId)
    }

    pub fn check_for(&self, space: &NodeSpace, k: usize) -> Result<()> {
        if self.k() != k {
            return Err(Error::InvalidConfiguration(format!(
                "expected {k} servers, got {}",
                self.k()
            )));
        }
        for node in self.nodes() {
            space.check_node(node)?;
        }
        Ok(())
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for node in self.nodes() {
            if !first {
                write!(f, "|")?;
            }
            write!(f, "{node}")?;
            first = false;
        }
        Ok(())
    }
}

/// One service step: which server (by source node) covers a request, at
/// what cost. A covered request has `source == request` and cost 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceDecision {
    pub request: NodeId,
    pub source: NodeId,
    pub cost: Cost,
}

/// Apply a service decision, yielding the next configuration.
pub fn apply_decision(config: Configuration, decision: &ServiceDecision) -> Result<Configuration> {
    if decision.source == decision.request {
        if !config.contains(decision.request) {
            return Err(Error::InvalidDecision(format!(
                "zero-move service of request {} but no server there",
                decision.request
            )));
        }
        if decision.cost != 0 {
            return Err(Error::InvalidDecision(format!(
                "covered request {} must cost 0, got {}",
                decision.request, decision.cost
            )));
        }
        return Ok(config);
    }
    if !config.contains(decision.source) {
        return Err(Error::InvalidDecision(format!(
            "source node {} has no server",
            decision.source
        )));
    }
    if config.contains(decision.request) {
        return Err(Error::InvalidDecision(format!(
            "request node {} already occupied but source is {}",
            decision.request, decision.source
        )));
    }
    let mask = (config.mask & !(1u64 << decision.source.index()))
        | 1u64 << decision.request.index();
    Ok(Configuration { mask })
}
