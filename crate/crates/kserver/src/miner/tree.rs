//! Decision-tree induction over case tables.
//!
//! Top-down induction choosing the attribute with the best information
//! gain ratio: the request attribute splits n ways, occupancy bits split
//! two ways, and no attribute is tested twice on a path. Subtrees are
//! pruned bottom-up by pessimistic error estimates (upper binomial
//! confidence limit on the observed error rate).
//!
//! Because the request attribute splits n ways, a test case can present a
//! request value absent from the local training data; each n-way node
//! records its most populous child as the default branch so
//! classification is total.

use crate::domain::{Configuration, NodeId};
use crate::miner::cases::CaseTable;
use crate::{Error, Result};

const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct BuildParams {
    pub min_cases: usize,
    pub confidence: f64,
    pub prune: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            min_cases: 2,
            confidence: 0.25,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TreeNode {
    Leaf {
        class: NodeId,
    },
    /// n-way split on the request attribute; `children[v]` is present for
    /// request values seen in training.
    RequestSplit {
        children: Vec<Option<Box<TreeNode>>>,
        default_value: u32,
    },
    /// 2-way split on one occupancy bit.
    OccSplit {
        bit: u32,
        zero: Box<TreeNode>,
        one: Box<TreeNode>,
    },
}

/// Mined classifier mapping (request, occupancy) to a source node.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    n: usize,
    k: usize,
    case_count: usize,
    root: TreeNode,
}

impl DecisionTree {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn case_count(&self) -> usize {
        self.case_count
    }

    /// Deterministic total classification of a test case.
    pub fn classify(&self, request: NodeId, config: Configuration) -> NodeId {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class } => return *class,
                TreeNode::RequestSplit {
                    children,
                    default_value,
                } => {
                    let v = request.index().min(children.len() - 1);
                    node = match &children[v] {
                        Some(child) => child,
                        None => children[*default_value as usize]
                            .as_ref()
                            .expect("default branch exists"),
                    };
                }
                TreeNode::OccSplit { bit, zero, one } => {
                    node = if config.contains(NodeId(*bit)) {
                        one
                    } else {
                        zero
                    };
                }
            }
        }
    }

    pub fn decision_node_count(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::RequestSplit { children, .. } => {
                    1 + children
                        .iter()
                        .flatten()
                        .map(|c| walk(c))
                        .sum::<usize>()
                }
                TreeNode::OccSplit { zero, one, .. } => 1 + walk(zero) + walk(one),
            }
        }
        walk(&self.root)
    }

    pub fn leaf_count(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::RequestSplit { children, .. } => {
                    children.iter().flatten().map(|c| walk(c)).sum()
                }
                TreeNode::OccSplit { zero, one, .. } => walk(zero) + walk(one),
            }
        }
        walk(&self.root)
    }

    /// Does the root test the request attribute?
    pub fn root_tests_request(&self) -> bool {
        matches!(self.root, TreeNode::RequestSplit { .. })
    }

    /// Fraction of table cases the tree classifies correctly.
    pub fn training_accuracy(&self, table: &CaseTable) -> f64 {
        if table.cases.is_empty() {
            return 1.0;
        }
        let hits = table
            .cases
            .iter()
            .filter(|c| self.classify(c.request, Configuration::from_mask(c.occupancy)) == c.class)
            .count();
        hits as f64 / table.cases.len() as f64
    }
}

// ---------------------------------------------------------------------------
// induction

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attribute {
    Request,
    Occupancy(u32),
}

fn class_counts(table: &CaseTable, indices: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; table.n];
    for &i in indices {
        counts[table.cases[i].class.index()] += 1;
    }
    counts
}

/// Majority class; ties go to the smallest node id.
fn majority_class(counts: &[usize]) -> NodeId {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    NodeId(best as u32)
}

fn entropy(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

fn attribute_value(table: &CaseTable, case: usize, attr: Attribute) -> usize {
    let c = &table.cases[case];
    match attr {
        Attribute::Request => c.request.index(),
        Attribute::Occupancy(bit) => c.occupied(bit as usize) as usize,
    }
}

struct SplitEval {
    gain: f64,
    gain_ratio: f64,
    branches: usize,
}

fn evaluate_split(
    table: &CaseTable,
    indices: &[usize],
    attr: Attribute,
    base_entropy: f64,
) -> SplitEval {
    let arity = match attr {
        Attribute::Request => table.n,
        Attribute::Occupancy(_) => 2,
    };
    let mut branch_counts: Vec<Vec<usize>> = vec![vec![0; table.n]; arity];
    let mut branch_totals = vec![0usize; arity];
    for &i in indices {
        let v = attribute_value(table, i, attr);
        branch_counts[v][table.cases[i].class.index()] += 1;
        branch_totals[v] += 1;
    }
    let total = indices.len() as f64;
    let mut split_entropy = 0.0;
    let mut split_info = 0.0;
    let mut branches = 0usize;
    for v in 0..arity {
        if branch_totals[v] == 0 {
            continue;
        }
        branches += 1;
        let weight = branch_totals[v] as f64 / total;
        split_entropy += weight * entropy(&branch_counts[v], branch_totals[v]);
        split_info -= weight * weight.log2();
    }
    let gain = base_entropy - split_entropy;
    let gain_ratio = if split_info > 0.0 { gain / split_info } else { 0.0 };
    SplitEval {
        gain,
        gain_ratio,
        branches,
    }
}

fn build_node(
    table: &CaseTable,
    indices: &[usize],
    request_available: bool,
    occ_available: u64,
    params: &BuildParams,
) -> TreeNode {
    let counts = class_counts(table, indices);
    let majority = majority_class(&counts);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || indices.len() < params.min_cases {
        return TreeNode::Leaf { class: majority };
    }

    let base_entropy = entropy(&counts, indices.len());
    let mut candidates: Vec<Attribute> = Vec::with_capacity(table.n + 1);
    if request_available {
        candidates.push(Attribute::Request);
    }
    for bit in 0..table.n as u32 {
        if occ_available & (1u64 << bit) != 0 {
            candidates.push(Attribute::Occupancy(bit));
        }
    }

    let mut best: Option<(Attribute, SplitEval)> = None;
    let mut fallback: Option<Attribute> = None;
    for attr in candidates {
        let eval = evaluate_split(table, indices, attr, base_entropy);
        if eval.branches < 2 {
            continue;
        }
        if fallback.is_none() {
            fallback = Some(attr);
        }
        if eval.gain > GAIN_EPSILON
            && best
                .as_ref()
                .map(|(_, b)| eval.gain_ratio > b.gain_ratio)
                .unwrap_or(true)
        {
            best = Some((attr, eval));
        }
    }
    // an impure node with no informative attribute still splits on any
    // multi-valued attribute left, so consistent tables are fit exactly
    let attr = match best.map(|(a, _)| a).or(fallback) {
        Some(attr) => attr,
        None => return TreeNode::Leaf { class: majority },
    };

    match attr {
        Attribute::Request => {
            let mut subsets: Vec<Vec<usize>> = vec![Vec::new(); table.n];
            for &i in indices {
                subsets[table.cases[i].request.index()].push(i);
            }
            let default_value = (0..table.n)
                .max_by_key(|&v| (subsets[v].len(), std::cmp::Reverse(v)))
                .unwrap() as u32;
            let children = subsets
                .iter()
                .map(|subset| {
                    if subset.is_empty() {
                        None
                    } else {
                        Some(Box::new(build_node(
                            table,
                            subset,
                            false,
                            occ_available,
                            params,
                        )))
                    }
                })
                .collect();
            TreeNode::RequestSplit {
                children,
                default_value,
            }
        }
        Attribute::Occupancy(bit) => {
            let mut zero = Vec::new();
            let mut one = Vec::new();
            for &i in indices {
                if table.cases[i].occupied(bit as usize) {
                    one.push(i);
                } else {
                    zero.push(i);
                }
            }
            let rest = occ_available & !(1u64 << bit);
            TreeNode::OccSplit {
                bit,
                zero: Box::new(build_node(table, &zero, request_available, rest, params)),
                one: Box::new(build_node(table, &one, request_available, rest, params)),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// pessimistic pruning

/// Upper confidence limit for a binomial error rate: the largest p with
/// `P[Bin(n, p) <= errors] >= cf`, found by bisection on the exact CDF.
fn upper_error_rate(errors: usize, n: usize, cf: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if errors >= n {
        return 1.0;
    }
    let cdf = |p: f64| -> f64 {
        if p <= 0.0 {
            return 1.0;
        }
        if p >= 1.0 {
            return 0.0;
        }
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        let mut log_choose = 0.0; // ln C(n, 0)
        let mut sum = 0.0;
        for i in 0..=errors {
            if i > 0 {
                log_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
            }
            sum += (log_choose + i as f64 * lp + (n - i) as f64 * lq).exp();
        }
        sum
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = (lo + hi) / 2.0;
        if cdf(mid) >= cf {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

/// Estimated errors if this set were a single leaf.
fn leaf_error_estimate(counts: &[usize], total: usize, cf: f64) -> f64 {
    let majority = majority_class(counts);
    let errors = total - counts[majority.index()];
    total as f64 * upper_error_rate(errors, total, cf)
}

fn prune_node(table: &CaseTable, indices: &[usize], node: TreeNode, cf: f64) -> (TreeNode, f64) {
    let counts = class_counts(table, indices);
    let as_leaf = leaf_error_estimate(&counts, indices.len(), cf);
    match node {
        TreeNode::Leaf { class } => {
            let errors = indices.len() - counts[class.index()];
            let est = indices.len() as f64 * upper_error_rate(errors, indices.len(), cf);
            (TreeNode::Leaf { class }, est)
        }
        TreeNode::RequestSplit {
            children,
            default_value,
        } => {
            let mut subsets: Vec<Vec<usize>> = vec![Vec::new(); table.n];
            for &i in indices {
                subsets[table.cases[i].request.index()].push(i);
            }
            let mut subtree_est = 0.0;
            let pruned: Vec<Option<Box<TreeNode>>> = children
                .into_iter()
                .enumerate()
                .map(|(v, child)| {
                    child.map(|child| {
                        let (p, e) = prune_node(table, &subsets[v], *child, cf);
                        subtree_est += e;
                        Box::new(p)
                    })
                })
                .collect();
            if as_leaf <= subtree_est {
                (
                    TreeNode::Leaf {
                        class: majority_class(&counts),
                    },
                    as_leaf,
                )
            } else {
                (
                    TreeNode::RequestSplit {
                        children: pruned,
                        default_value,
                    },
                    subtree_est,
                )
            }
        }
        TreeNode::OccSplit { bit, zero, one } => {
            let mut zero_set = Vec::new();
            let mut one_set = Vec::new();
            for &i in indices {
                if table.cases[i].occupied(bit as usize) {
                    one_set.push(i);
                } else {
                    zero_set.push(i);
                }
            }
            let (zero, ze) = prune_node(table, &zero_set, *zero, cf);
            let (one, oe) = prune_node(table, &one_set, *one, cf);
            let subtree_est = ze + oe;
            if as_leaf <= subtree_est {
                (
                    TreeNode::Leaf {
                        class: majority_class(&counts),
                    },
                    as_leaf,
                )
            } else {
                (
                    TreeNode::OccSplit {
                        bit,
                        zero: Box::new(zero),
                        one: Box::new(one),
                    },
                    subtree_est,
                )
            }
        }
    }
}

/// Induce a decision tree from a non-empty case table.
pub fn build_tree(table: &CaseTable, params: &BuildParams) -> Result<DecisionTree> {
    if table.cases.is_empty() {
        return Err(Error::CaseTable("cannot build a tree from zero cases".into()));
    }
    if table.n > 64 {
        return Err(Error::CaseTable(format!("n={} exceeds 64 nodes", table.n)));
    }
    let indices: Vec<usize> = (0..table.cases.len()).collect();
    let occ_available = if table.n == 64 {
        u64::MAX
    } else {
        (1u64 << table.n) - 1
    };
    let mut root = build_node(table, &indices, true, occ_available, params);
    if params.prune {
        root = prune_node(table, &indices, root, params.confidence).0;
    }
    Ok(DecisionTree {
        n: table.n,
        k: table.k,
        case_count: table.cases.len(),
        root,
    })
}

// ---------------------------------------------------------------------------
// serialization: indented text, one branch per line

impl DecisionTree {
    /// Render in the tree file format: a header line, then the indented
    /// branch layout. The default branch of an n-way split is marked `*`.
    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "kserver-tree v1 n={} k={} cases={}\n",
            self.n, self.k, self.case_count
        );
        match &self.root {
            TreeNode::Leaf { class } => out.push_str(&format!("Class = {class}\n")),
            node => render(node, 0, &mut out),
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::TreeParse {
                line: 1,
                msg: "empty tree file".into(),
            })?;
        let (n, k, case_count) = parse_header(header)?;
        let body: Vec<(usize, usize, &str)> = lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(ln, l)| {
                let mut rest = l;
                let mut depth = 0;
                while let Some(stripped) = rest.strip_prefix("|   ") {
                    rest = stripped;
                    depth += 1;
                }
                (ln + 1, depth, rest)
            })
            .collect();
        if body.is_empty() {
            return Err(Error::TreeParse {
                line: 2,
                msg: "tree file has no body".into(),
            });
        }
        let mut pos = 0usize;
        let root = if let Some(rest) = body[0].2.strip_prefix("Class = ") {
            pos = 1;
            TreeNode::Leaf {
                class: parse_class(rest, n, body[0].0)?,
            }
        } else {
            parse_group(&body, &mut pos, 0, n)?
        };
        if pos != body.len() {
            return Err(Error::TreeParse {
                line: body[pos].0,
                msg: "trailing content after tree".into(),
            });
        }
        Ok(DecisionTree {
            n,
            k,
            case_count,
            root,
        })
    }
}

fn render(node: &TreeNode, depth: usize, out: &mut String) {
    let prefix = "|   ".repeat(depth);
    match node {
        TreeNode::Leaf { .. } => unreachable!("leaves render inline"),
        TreeNode::RequestSplit {
            children,
            default_value,
        } => {
            for (v, child) in children.iter().enumerate() {
                let Some(child) = child else { continue };
                let marker = if v == *default_value as usize { " *" } else { "" };
                match child.as_ref() {
                    TreeNode::Leaf { class } => {
                        out.push_str(&format!("{prefix}Request from = {v}{marker}: {class}\n"));
                    }
                    inner => {
                        out.push_str(&format!("{prefix}Request from = {v}{marker}:\n"));
                        render(inner, depth + 1, out);
                    }
                }
            }
        }
        TreeNode::OccSplit { bit, zero, one } => {
            for (value, child) in [(0, zero), (1, one)] {
                match child.as_ref() {
                    TreeNode::Leaf { class } => {
                        out.push_str(&format!("{prefix}Node {bit} status = {value}: {class}\n"));
                    }
                    inner => {
                        out.push_str(&format!("{prefix}Node {bit} status = {value}:\n"));
                        render(inner, depth + 1, out);
                    }
                }
            }
        }
    }
}

fn parse_header(header: &str) -> Result<(usize, usize, usize)> {
    let err = |msg: &str| Error::TreeParse {
        line: 1,
        msg: msg.into(),
    };
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "kserver-tree" || toks[1] != "v1" {
        return Err(err("expected `kserver-tree v1 n=<n> k=<k> cases=<c>`"));
    }
    let field = |tok: &str, name: &str| -> Result<usize> {
        tok.strip_prefix(name)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(&format!("bad header field {tok:?}")))
    };
    Ok((
        field(toks[2], "n=")?,
        field(toks[3], "k=")?,
        field(toks[4], "cases=")?,
    ))
}

fn parse_class(text: &str, n: usize, line: usize) -> Result<NodeId> {
    let v: usize = text.trim().parse().map_err(|_| Error::TreeParse {
        line,
        msg: format!("bad class {text:?}"),
    })?;
    if v >= n {
        return Err(Error::TreeParse {
            line,
            msg: format!("class {v} out of range for n={n}"),
        });
    }
    Ok(NodeId(v as u32))
}

/// Parse `<intro> = <value>[ *]: [<class>]`, returning the value, the
/// default marker, and the inline class if present.
fn parse_branch_line<'a>(
    content: &'a str,
    intro: &str,
    line: usize,
) -> Result<(usize, bool, Option<&'a str>)> {
    let err = |msg: String| Error::TreeParse { line, msg };
    let rest = content
        .strip_prefix(intro)
        .ok_or_else(|| err(format!("expected {intro:?}")))?;
    let rest = rest
        .strip_prefix(" = ")
        .ok_or_else(|| err("expected ` = ` after attribute".into()))?;
    let colon = rest
        .find(':')
        .ok_or_else(|| err("missing `:`".into()))?;
    let (mut value_part, tail) = rest.split_at(colon);
    let tail = &tail[1..];
    let mut default = false;
    if let Some(stripped) = value_part.strip_suffix(" *") {
        default = true;
        value_part = stripped;
    }
    let value: usize = value_part
        .trim()
        .parse()
        .map_err(|_| err(format!("bad attribute value {value_part:?}")))?;
    let tail = tail.trim();
    Ok((value, default, (!tail.is_empty()).then_some(tail)))
}

fn parse_group(
    body: &[(usize, usize, &str)],
    pos: &mut usize,
    depth: usize,
    n: usize,
) -> Result<TreeNode> {
    let (line, d, content) = body[*pos];
    if d != depth {
        return Err(Error::TreeParse {
            line,
            msg: format!("expected indent depth {depth}, found {d}"),
        });
    }
    if content.starts_with("Request from") {
        let mut children: Vec<Option<Box<TreeNode>>> = vec![None; n];
        let mut default_value: Option<u32> = None;
        let mut first_value: Option<u32> = None;
        while *pos < body.len() {
            let (line, d, content) = body[*pos];
            if d != depth || !content.starts_with("Request from") {
                break;
            }
            let (value, is_default, inline) = parse_branch_line(content, "Request from", line)?;
            if value >= n {
                return Err(Error::TreeParse {
                    line,
                    msg: format!("request value {value} out of range"),
                });
            }
            if children[value].is_some() {
                return Err(Error::TreeParse {
                    line,
                    msg: format!("duplicate branch for request {value}"),
                });
            }
            first_value.get_or_insert(value as u32);
            if is_default {
                default_value = Some(value as u32);
            }
            *pos += 1;
            let child = match inline {
                Some(class) => TreeNode::Leaf {
                    class: parse_class(class, n, line)?,
                },
                None => parse_group(body, pos, depth + 1, n)?,
            };
            children[value] = Some(Box::new(child));
        }
        Ok(TreeNode::RequestSplit {
            children,
            default_value: default_value
                .or(first_value)
                .expect("group has at least one branch"),
        })
    } else if content.starts_with("Node ") {
        let mut branches: [Option<TreeNode>; 2] = [None, None];
        let mut bit: Option<usize> = None;
        for expected in 0..2 {
            if *pos >= body.len() {
                return Err(Error::TreeParse {
                    line,
                    msg: "occupancy split is missing a branch".into(),
                });
            }
            let (line, d, content) = body[*pos];
            if d != depth {
                return Err(Error::TreeParse {
                    line,
                    msg: "occupancy split is missing a branch".into(),
                });
            }
            let rest = content.strip_prefix("Node ").ok_or(Error::TreeParse {
                line,
                msg: "expected `Node <i> status = <b>`".into(),
            })?;
            let space = rest.find(' ').ok_or(Error::TreeParse {
                line,
                msg: "expected bit index".into(),
            })?;
            let this_bit: usize = rest[..space].parse().map_err(|_| Error::TreeParse {
                line,
                msg: format!("bad bit index {:?}", &rest[..space]),
            })?;
            if this_bit >= n {
                return Err(Error::TreeParse {
                    line,
                    msg: format!("bit {this_bit} out of range"),
                });
            }
            match bit {
                None => bit = Some(this_bit),
                Some(b) if b != this_bit => {
                    return Err(Error::TreeParse {
                        line,
                        msg: format!("branch tests bit {this_bit}, expected {b}"),
                    })
                }
                _ => {}
            }
            let (value, _, inline) =
                parse_branch_line(rest[space..].trim_start(), "status", line)?;
            if value != expected {
                return Err(Error::TreeParse {
                    line,
                    msg: format!("expected status {expected} branch, found {value}"),
                });
            }
            *pos += 1;
            let child = match inline {
                Some(class) => TreeNode::Leaf {
                    class: parse_class(class, n, line)?,
                },
                None => parse_group(body, pos, depth + 1, n)?,
            };
            branches[expected] = Some(child);
        }
        let [zero, one] = branches;
        Ok(TreeNode::OccSplit {
            bit: bit.unwrap() as u32,
            zero: Box::new(zero.unwrap()),
            one: Box::new(one.unwrap()),
        })
    } else {
        Err(Error::TreeParse {
            line,
            msg: format!("unrecognized branch line {content:?}"),
        })
    }
}
