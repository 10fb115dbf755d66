//! Flat key=value experiment descriptions.

use std::path::PathBuf;

use crate::domain::{DistanceFunction, NodeId, NodeSpace};
use crate::streamgen::Density;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Greedy,
    Balance,
    Harmonic,
    Moo,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Balance => "balance",
            PolicyKind::Harmonic => "harmonic",
            PolicyKind::Moo => "moo",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "greedy" => Some(PolicyKind::Greedy),
            "balance" => Some(PolicyKind::Balance),
            "harmonic" => Some(PolicyKind::Harmonic),
            "moo" => Some(PolicyKind::Moo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPolicy {
    /// One seeded configuration shared by training and every run.
    Fixed,
    /// A fresh seeded configuration per run; training keeps run 0's.
    PerRun,
}

#[derive(Debug, Clone)]
pub enum MatrixSource {
    Generate {
        density: Density,
        second: Option<Density>,
    },
    Files {
        first: PathBuf,
        second: Option<PathBuf>,
    },
}

/// Everything needed to rerun an experiment bit-for-bit.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub space: NodeSpace,
    pub distance: DistanceFunction,
    pub n: usize,
    pub k: usize,
    pub matrices: MatrixSource,
    pub block: usize,
    pub s_train: usize,
    pub s_test: usize,
    pub policies: Vec<PolicyKind>,
    pub runs: usize,
    pub seed: u64,
    pub start: StartPolicy,
    pub reuse_training_as_test: bool,
    pub initial: NodeId,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::ExperimentSpec(msg));
        if self.n != self.space.n() {
            return err(format!("n={} does not match space size {}", self.n, self.space.n()));
        }
        if self.k == 0 || self.k > self.n {
            return err(format!("k={} out of range for n={}", self.k, self.n));
        }
        if self.s_train == 0 || self.s_test == 0 {
            return err("s_train and s_test must be >= 1".into());
        }
        if self.runs == 0 {
            return err("runs must be >= 1".into());
        }
        if self.block == 0 {
            return err("block must be >= 1".into());
        }
        if self.policies.is_empty() {
            return err("at least one policy is required".into());
        }
        if self.initial.index() >= self.n {
            return err(format!("initial node {} out of range", self.initial));
        }
        self.distance.check_space(&self.space)
    }

    /// Parse the flat `key=value` format. Lines starting with `#` and
    /// blank lines are skipped; every key is required-or-defaulted as
    /// documented in the README.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |msg: String| Error::ExperimentSpec(msg);
        let mut fields = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            if fields.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(err(format!("duplicate key {:?}", key.trim())));
            }
        }
        let known = [
            "space", "width", "height", "n", "distance", "table_file", "k", "density", "density2",
            "matrix_file", "matrix2_file", "block", "s_train", "s_test", "policies", "runs",
            "seed", "start", "reuse_training_as_test", "initial",
        ];
        for key in fields.keys() {
            if !known.contains(&key.as_str()) {
                return Err(err(format!("unknown key {key:?}")));
            }
        }
        let get = |key: &str| fields.get(key).map(String::as_str);
        let require = |key: &str| get(key).ok_or_else(|| err(format!("missing key {key:?}")));
        let parse_num = |key: &str, value: &str| -> Result<usize> {
            value
                .parse()
                .map_err(|_| err(format!("bad value for {key}: {value:?}")))
        };

        let space = match get("space").unwrap_or("line") {
            "line" => {
                let n = parse_num("n", require("n")?)?;
                NodeSpace::line(n)
            }
            "grid" => NodeSpace::grid(
                parse_num("width", require("width")?)?,
                parse_num("height", require("height")?)?,
            ),
            other => return Err(err(format!("unknown space {other:?}"))),
        };
        let n = space.n();
        if let Some(value) = get("n") {
            if parse_num("n", value)? != n {
                return Err(err(format!("n={value} does not match the space")));
            }
        }

        let distance_kind = require("distance")?;
        let distance = if distance_kind == "table" {
            let path = require("table_file")?;
            let table = crate::domain::DistanceTable::parse(&std::fs::read_to_string(path)?)?;
            DistanceFunction::Table(table)
        } else {
            DistanceFunction::from_kind(distance_kind)
                .ok_or_else(|| err(format!("unknown distance {distance_kind:?}")))?
        };

        let density = |key: &str| -> Result<Option<Density>> {
            get(key)
                .map(|v| match v {
                    "sparse" => Ok(Density::Sparse),
                    "dense" => Ok(Density::Dense),
                    other => Err(err(format!("bad {key}: {other:?}"))),
                })
                .transpose()
        };
        let matrices = match (get("matrix_file"), density("density")?) {
            (Some(first), None) => MatrixSource::Files {
                first: PathBuf::from(first),
                second: get("matrix2_file").map(PathBuf::from),
            },
            (None, Some(first)) => {
                if get("matrix2_file").is_some() {
                    return Err(err("matrix2_file requires matrix_file".into()));
                }
                MatrixSource::Generate {
                    density: first,
                    second: density("density2")?,
                }
            }
            (Some(_), Some(_)) => return Err(err("give either matrix_file or density, not both".into())),
            (None, None) => return Err(err("one of matrix_file or density is required".into())),
        };

        let policies = get("policies")
            .unwrap_or("moo,greedy,balance,harmonic")
            .split(',')
            .map(|p| {
                PolicyKind::from_name(p.trim()).ok_or_else(|| err(format!("unknown policy {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut deduped = Vec::new();
        for p in policies {
            if !deduped.contains(&p) {
                deduped.push(p);
            }
        }

        let start = match get("start").unwrap_or("fixed") {
            "fixed" => StartPolicy::Fixed,
            "random" => StartPolicy::PerRun,
            other => return Err(err(format!("bad start {other:?} (fixed|random)"))),
        };
        let reuse = match get("reuse_training_as_test").unwrap_or("false") {
            "true" => true,
            "false" => false,
            other => return Err(err(format!("bad reuse_training_as_test {other:?}"))),
        };

        let spec = ExperimentSpec {
            space,
            distance,
            n,
            k: parse_num("k", require("k")?)?,
            matrices,
            block: get("block").map(|v| parse_num("block", v)).transpose()?.unwrap_or(10),
            s_train: parse_num("s_train", require("s_train")?)?,
            s_test: get("s_test")
                .map(|v| parse_num("s_test", v))
                .transpose()?
                .unwrap_or_else(|| fields["s_train"].parse().unwrap()),
            policies: deduped,
            runs: get("runs").map(|v| parse_num("runs", v)).transpose()?.unwrap_or(3),
            seed: require("seed")?
                .parse()
                .map_err(|_| err("bad value for seed".into()))?,
            start,
            reuse_training_as_test: reuse,
            initial: NodeId(
                get("initial")
                    .map(|v| parse_num("initial", v))
                    .transpose()?
                    .unwrap_or(0) as u32,
            ),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1_SPEC: &str = "\
# strong-pattern benchmark layout
space = line
n = 9
distance = line_sq
k = 5
density = sparse
s_train = 2000
s_test = 2000
policies = moo,balance,harmonic
runs = 1
seed = 7
start = fixed
reuse_training_as_test = true
";

    #[test]
    fn parses_full_spec() {
        let spec = ExperimentSpec::parse(TABLE1_SPEC).unwrap();
        assert_eq!(spec.n, 9);
        assert_eq!(spec.k, 5);
        assert_eq!(spec.distance.kind_name(), "line_sq");
        assert!(matches!(
            spec.matrices,
            MatrixSource::Generate {
                density: Density::Sparse,
                second: None
            }
        ));
        assert_eq!(
            spec.policies,
            vec![PolicyKind::Moo, PolicyKind::Balance, PolicyKind::Harmonic]
        );
        assert!(spec.reuse_training_as_test);
        assert_eq!(spec.start, StartPolicy::Fixed);
        assert_eq!(spec.s_test, 2000);
        assert_eq!(spec.block, 10);
    }

    #[test]
    fn defaults_and_two_matrix_mode() {
        let text = "space = line\nn = 6\ndistance = line_asym\nk = 5\n\
                    density = dense\ndensity2 = dense\ns_train = 50\nseed = 3\nstart = random\n";
        let spec = ExperimentSpec::parse(text).unwrap();
        assert_eq!(spec.s_test, 50);
        assert_eq!(spec.runs, 3);
        assert_eq!(spec.policies.len(), 4);
        assert!(matches!(
            spec.matrices,
            MatrixSource::Generate {
                second: Some(Density::Dense),
                ..
            }
        ));
        assert_eq!(spec.start, StartPolicy::PerRun);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            "space = line\nn = 9\ndistance = line_sq\nk = 5\ns_train = 10\nseed = 1\n", // no matrices
            "space = line\nn = 9\ndistance = grid_asym\nk = 5\ndensity = sparse\ns_train = 10\nseed = 1\n", // wrong space
            "space = line\nn = 9\ndistance = line_sq\nk = 10\ndensity = sparse\ns_train = 10\nseed = 1\n", // k > n
            "space = line\nn = 9\ndistance = line_sq\nk = 5\ndensity = sparse\ns_train = 10\nseed = 1\nfrobnicate = 9\n", // unknown key
            "space = line\nn = 9\ndistance = line_sq\nk = 5\ndensity = sparse\ns_train = 10\nseed = 1\nn = 9\n", // duplicate key
        ];
        for text in bad {
            assert!(ExperimentSpec::parse(text).is_err(), "accepted: {text}");
        }
    }
}
