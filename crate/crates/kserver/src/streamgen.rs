//! Transition matrices and seeded request-stream generation.
//!
//! Streams are Markov: entry `p[i][j]` of a transition matrix is the
//! probability that the next request is for node `j` given the previous
//! request was for node `i`. A 2-matrix stream alternates between two
//! matrices every `block` requests, carrying the previous request across
//! the switchover.
//!
//! All randomness comes from ChaCha8 seeded with an explicit 64-bit seed,
//! so every generator here is a pure function of its arguments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::NodeId;
use crate::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Row-stochastic n x n matrix of request-generation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    p: Vec<f64>, // row-major
}

/// Nonzero-entry density class: 10-20% or 80-90% of all n^2 cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    Sparse,
    Dense,
}

impl Density {
    /// Inclusive bounds on the global nonzero count for an n x n matrix.
    fn nonzero_bounds(self, n: usize) -> (usize, usize) {
        let cells = n * n;
        match self {
            Density::Sparse => ((cells + 9) / 10, cells / 5),
            Density::Dense => ((cells * 8 + 9) / 10, cells * 9 / 10),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Density::Sparse => "sparse",
            Density::Dense => "dense",
        }
    }
}

impl std::str::FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Density::Sparse),
            "dense" => Ok(Density::Dense),
            other => Err(Error::Parse(format!("unknown density {other:?}"))),
        }
    }
}

impl TransitionMatrix {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            return Err(Error::InvalidMatrix(format!(
                "need {} entries, got {}",
                n * n,
                p.len()
            )));
        }
        let m = TransitionMatrix { n, p };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for row in 0..self.n {
            let mut sum = 0.0;
            let mut positive = 0;
            for col in 0..self.n {
                let v = self.prob_at(row, col);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({row},{col}) = {v} outside [0,1]"
                    )));
                }
                if v > 0.0 {
                    positive += 1;
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidMatrix(format!(
                    "row {row} sums to {sum}, expected 1"
                )));
            }
            if positive == 0 {
                return Err(Error::InvalidMatrix(format!("row {row} has no positive entry")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn prob_at(&self, row: usize, col: usize) -> f64 {
        self.p[row * self.n + col]
    }

    pub fn prob(&self, from: NodeId, to: NodeId) -> f64 {
        self.prob_at(from.index(), to.index())
    }

    pub fn nonzero_count(&self) -> usize {
        self.p.iter().filter(|&&v| v > 0.0).count()
    }

    /// Parse the matrix file format: first line `n`, then `n` rows of `n`
    /// probabilities. An optional column-header line and optional row
    /// labels (leading token equal to the row index) are tolerated, so the
    /// published matrix layout can be typed in directly.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::MatrixParse("empty matrix file".into()))?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|_| Error::MatrixParse(format!("bad header {header:?}, expected n")))?;
        if n == 0 {
            return Err(Error::MatrixParse("n must be positive".into()));
        }
        let rest: Vec<&str> = lines.collect();
        let mut rows = rest.as_slice();
        // optional column-header line: n integer labels 0..n-1
        if rows.len() == n + 1 {
            let toks: Vec<&str> = rows[0].split_whitespace().collect();
            let is_labels = toks.len() == n
                && toks
                    .iter()
                    .enumerate()
                    .all(|(i, t)| t.parse::<usize>().map(|v| v == i).unwrap_or(false));
            if is_labels {
                rows = &rows[1..];
            }
        }
        if rows.len() != n {
            return Err(Error::MatrixParse(format!(
                "expected {n} rows, got {}",
                rows.len()
            )));
        }
        let mut p = Vec::with_capacity(n * n);
        for (row_idx, line) in rows.iter().enumerate() {
            let mut toks: Vec<&str> = line.split_whitespace().collect();
            // optional row label
            if toks.len() == n + 1 && toks[0].parse::<usize>() == Ok(row_idx) {
                toks.remove(0);
            }
            if toks.len() != n {
                return Err(Error::MatrixParse(format!(
                    "row {row_idx} has {} entries, expected {n}",
                    toks.len()
                )));
            }
            for tok in toks {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::MatrixParse(format!("bad entry {tok:?} in row {row_idx}"))
                })?;
                if v < 0.0 {
                    return Err(Error::MatrixParse(format!(
                        "negative entry {v} in row {row_idx}"
                    )));
                }
                p.push(v);
            }
        }
        TransitionMatrix::new(n, p).map_err(|e| match e {
            Error::InvalidMatrix(msg) => Error::MatrixParse(msg),
            other => other,
        })
    }

    /// Render in the parseable file format with 2-decimal probabilities.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for row in 0..self.n {
            let cells: Vec<String> = (0..self.n)
                .map(|col| format!("{:.2}", self.prob_at(row, col)))
                .collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Generate a random row-stochastic matrix whose global nonzero fraction
/// lands in the density class's range. Probabilities are exact hundredths:
/// per row, weights are drawn uniformly, converted to integer percent
/// shares, and the largest share absorbs the rounding residue.
pub fn gen_matrix(n: usize, density: Density, seed: u64) -> Result<TransitionMatrix> {
    if n < 2 {
        return Err(Error::InvalidMatrix(format!("n must be >= 2, got {n}")));
    }
    let (lo, hi) = density.nonzero_bounds(n);
    let lo = lo.max(n); // every row needs at least one nonzero entry
    let hi = hi.min(n * n);
    if lo > hi {
        return Err(Error::Infeasible(format!(
            "no nonzero count meets the {} density bounds for n={n}",
            density.name()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.gen_range(lo..=hi);

    // one nonzero per row, then spread the remainder randomly
    let mut counts = vec![1usize; n];
    for _ in 0..target - n {
        loop {
            let r = rng.gen_range(0..n);
            if counts[r] < n.min(100) {
                counts[r] += 1;
                break;
            }
        }
    }

    let mut p = vec![0.0; n * n];
    let mut columns: Vec<usize> = (0..n).collect();
    for (row, &count) in counts.iter().enumerate() {
        // partial Fisher-Yates: first `count` entries are the chosen columns
        for i in 0..count {
            let j = rng.gen_range(i..n);
            columns.swap(i, j);
        }
        // heavily skewed weights give rows a dominant successor, so
        // streams carry learnable structure instead of uniform noise
        let weights: Vec<f64> = (0..count)
            .map(|_| (1.0 - rng.gen::<f64>()).powi(4))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut shares: Vec<i64> = weights
            .iter()
            .map(|w| ((w / total * 100.0).round() as i64).max(1))
            .collect();
        let residue: i64 = 100 - shares.iter().sum::<i64>();
        let largest = (0..count)
            .max_by_key(|&i| (shares[i], std::cmp::Reverse(i)))
            .unwrap();
        shares[largest] += residue;
        debug_assert!(shares[largest] >= 1);
        for i in 0..count {
            p[row * n + columns[i]] = shares[i] as f64 / 100.0;
        }
    }
    TransitionMatrix::new(n, p)
}

/// Which matrices drive a stream, and the block length for alternation.
#[derive(Debug, Clone)]
pub enum StreamMatrices {
    One(TransitionMatrix),
    Two {
        first: TransitionMatrix,
        second: TransitionMatrix,
        block: usize,
    },
}

/// Full description of a request stream; `gen_stream` is a pure function
/// of this value.
#[derive(Debug, Clone)]
pub struct StreamSpec {
    pub matrices: StreamMatrices,
    pub length: usize,
    pub seed: u64,
    pub initial: NodeId,
}

impl StreamSpec {
    pub fn n(&self) -> usize {
        match &self.matrices {
            StreamMatrices::One(m) => m.n(),
            StreamMatrices::Two { first, .. } => first.n(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidStreamSpec("stream length must be >= 1".into()));
        }
        if let StreamMatrices::Two { first, second, block } = &self.matrices {
            if first.n() != second.n() {
                return Err(Error::InvalidStreamSpec(format!(
                    "matrix dimensions differ: {} vs {}",
                    first.n(),
                    second.n()
                )));
            }
            if *block == 0 {
                return Err(Error::InvalidStreamSpec("block length must be >= 1".into()));
            }
        }
        if self.initial.index() >= self.n() {
            return Err(Error::InvalidStreamSpec(format!(
                "initial node {} out of range for n={}",
                self.initial,
                self.n()
            )));
        }
        Ok(())
    }

    /// Matrix active at 1-based step `m`.
    pub fn active_matrix(&self, m: usize) -> &TransitionMatrix {
        match &self.matrices {
            StreamMatrices::One(mat) => mat,
            StreamMatrices::Two { first, second, block } => {
                if ((m - 1) / block) % 2 == 0 {
                    first
                } else {
                    second
                }
            }
        }
    }
}

/// A generated request sequence `T_1..T_s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestStream {
    pub requests: Vec<NodeId>,
}

impl RequestStream {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Parse the whitespace-separated node-id stream format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut requests = Vec::new();
        for tok in text.split_whitespace() {
            let id: u32 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad stream entry {tok:?}")))?;
            requests.push(NodeId(id));
        }
        if requests.is_empty() {
            return Err(Error::Parse("empty stream file".into()));
        }
        Ok(RequestStream { requests })
    }

    pub fn to_file_string(&self) -> String {
        let ids: Vec<String> = self.requests.iter().map(|r| r.to_string()).collect();
        let mut s = ids.join(" ");
        s.push('\n');
        s
    }
}

/// Generate a stream: `T_1` is sampled from the row of `initial` in the
/// first active matrix; each subsequent request is sampled from the row of
/// the previous request in whichever matrix governs that step.
pub fn gen_stream(spec: &StreamSpec) -> Result<RequestStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut requests = Vec::with_capacity(spec.length);
    let mut prev = spec.initial;
    for m in 1..=spec.length {
        let matrix = spec.active_matrix(m);
        let next = sample_row(matrix, prev, &mut rng);
        requests.push(next);
        prev = next;
    }
    Ok(RequestStream { requests })
}

fn sample_row(matrix: &TransitionMatrix, from: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for col in 0..matrix.n() {
        let p = matrix.prob(from, NodeId(col as u32));
        if p > 0.0 {
            cumulative += p;
            last_positive = Some(col);
            if u < cumulative {
                return NodeId(col as u32);
            }
        }
    }
    // float residue at the top of the row; every row has a positive entry
    NodeId(last_positive.expect("validated matrix row") as u32)
}
