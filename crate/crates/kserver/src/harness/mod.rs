//! Experiment orchestration: build the training pipeline, run repeated
//! seeded experiments against the offline optimum, and emit reports.

mod report;
mod spec;

pub use report::{emit_report, parse_report_csv, ExperimentReport, PolicyMean, ReportFormat, RunRecord};
pub use spec::{ExperimentSpec, MatrixSource, PolicyKind, StartPolicy};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::Configuration;
use crate::miner::{build_tree, extract_cases, BuildParams, DecisionTree};
use crate::offline::{optimum_flow, OptTrace};
use crate::policies::{competitive_ratio, run_policy, Policy};
use crate::streamgen::{gen_matrix, gen_stream, RequestStream, StreamMatrices, StreamSpec, TransitionMatrix};
use crate::Result;

/// Randomness role mixed into a derived seed, so a run's stream, start
/// configuration and Harmonic draws are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedRole {
    Stream,
    StartConfig,
    Harmonic,
    Matrix,
    Matrix2,
}

impl SeedRole {
    fn tag(self) -> u64 {
        match self {
            SeedRole::Stream => 1,
            SeedRole::StartConfig => 2,
            SeedRole::Harmonic => 3,
            SeedRole::Matrix => 4,
            SeedRole::Matrix2 => 5,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for (master seed, run index, role): three splitmix64 rounds over
/// the mixed inputs. Fixed for the life of the file formats.
pub fn derive_seed(master: u64, run: u64, role: SeedRole) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ run;
    let b = splitmix64(&mut state);
    let mut state = b ^ role.tag();
    splitmix64(&mut state)
}

/// Uniformly random k-subset of the n nodes.
pub fn random_start_config(n: usize, k: usize, seed: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<u64> = (0..n as u64).collect();
    nodes.shuffle(&mut rng);
    Configuration::from_mask(nodes[..k].iter().map(|b| 1u64 << b).sum())
}

/// Matrices resolved for one experiment (shared by training and tests).
fn resolve_matrices(spec: &ExperimentSpec) -> Result<StreamMatrices> {
    let (first, second) = match &spec.matrices {
        MatrixSource::Generate { density, second } => {
            let first = gen_matrix(spec.n, *density, derive_seed(spec.seed, 0, SeedRole::Matrix))?;
            let second = second
                .map(|d| gen_matrix(spec.n, d, derive_seed(spec.seed, 0, SeedRole::Matrix2)))
                .transpose()?;
            (first, second)
        }
        MatrixSource::Files { first, second } => {
            let read = |path: &std::path::Path| -> Result<TransitionMatrix> {
                TransitionMatrix::parse(&std::fs::read_to_string(path)?)
            };
            (read(first)?, second.as_deref().map(read).transpose()?)
        }
    };
    Ok(match second {
        None => StreamMatrices::One(first),
        Some(second) => StreamMatrices::Two {
            first,
            second,
            block: spec.block,
        },
    })
}

fn stream_of(spec: &ExperimentSpec, matrices: &StreamMatrices, length: usize, seed: u64) -> Result<RequestStream> {
    gen_stream(&StreamSpec {
        matrices: matrices.clone(),
        length,
        seed,
        initial: spec.initial,
    })
}

/// Start configuration used for training and, in fixed mode, all runs.
fn base_start(spec: &ExperimentSpec) -> Configuration {
    random_start_config(spec.n, spec.k, derive_seed(spec.seed, 0, SeedRole::StartConfig))
}

/// Training half of an experiment: generate the training stream, solve it
/// offline, extract cases, induce the tree.
pub fn run_moo_pipeline(spec: &ExperimentSpec) -> Result<(DecisionTree, OptTrace)> {
    let matrices = resolve_matrices(spec)?;
    let stream = stream_of(spec, &matrices, spec.s_train, derive_seed(spec.seed, 0, SeedRole::Stream))?;
    let start = base_start(spec);
    train(spec, start, &stream)
}

fn train(
    spec: &ExperimentSpec,
    start: Configuration,
    stream: &RequestStream,
) -> Result<(DecisionTree, OptTrace)> {
    let began = Instant::now();
    let trace = optimum_flow(&spec.space, &spec.distance, start, stream)?;
    eprintln!(
        "training solve: s={} cost={} in {:.2?}",
        stream.len(),
        trace.total_cost,
        began.elapsed()
    );
    let cases = extract_cases(spec.n, start, stream, &trace)?;
    let tree = build_tree(&cases, &BuildParams::default())?;
    Ok((tree, trace))
}

/// Run the full experiment: train once, then evaluate every requested
/// policy on each run's test stream against that run's offline optimum.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let matrices = resolve_matrices(spec)?;
    let training_seed = derive_seed(spec.seed, 0, SeedRole::Stream);
    let training_stream = stream_of(spec, &matrices, spec.s_train, training_seed)?;
    let training_start = base_start(spec);

    let tree = if spec.policies.contains(&PolicyKind::Moo) {
        Some(train(spec, training_start, &training_stream)?.0)
    } else {
        None
    };

    let matrix = spec.distance.cost_matrix(&spec.space)?;
    let mut rows = Vec::new();
    for run in 0..spec.runs {
        let stream_seed = if spec.reuse_training_as_test {
            training_seed
        } else {
            derive_seed(spec.seed, run as u64, SeedRole::Stream)
        };
        let test_stream = if spec.reuse_training_as_test {
            training_stream.clone()
        } else {
            stream_of(spec, &matrices, spec.s_test, stream_seed)?
        };
        let start = match spec.start {
            StartPolicy::Fixed => training_start,
            StartPolicy::PerRun => {
                random_start_config(spec.n, spec.k, derive_seed(spec.seed, run as u64, SeedRole::StartConfig))
            }
        };

        let began = Instant::now();
        let opt = optimum_flow(&spec.space, &spec.distance, start, &test_stream)?;
        eprintln!(
            "run {run} solve: s={} cost={} in {:.2?}",
            test_stream.len(),
            opt.total_cost,
            began.elapsed()
        );

        for kind in &spec.policies {
            let policy = match kind {
                PolicyKind::Greedy => Policy::Greedy,
                PolicyKind::Balance => Policy::Balance,
                PolicyKind::Harmonic => Policy::Harmonic {
                    seed: derive_seed(spec.seed, run as u64, SeedRole::Harmonic),
                },
                PolicyKind::Moo => Policy::Moo {
                    tree: tree.clone().expect("tree built when moo is requested"),
                },
            };
            let result = run_policy(&policy, &matrix, start, &test_stream)?;
            rows.push(RunRecord {
                run,
                policy: kind.name().to_string(),
                opt_cost: opt.total_cost,
                cost: result.total_cost,
                ratio: competitive_ratio(result.total_cost, opt.total_cost)?,
                invalid: result.invalid_count,
                seed: stream_seed,
                start,
            });
        }
    }

    let means = spec
        .policies
        .iter()
        .map(|kind| {
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.policy == kind.name())
                .map(|r| r.ratio)
                .collect();
            PolicyMean {
                policy: kind.name().to_string(),
                mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
            }
        })
        .collect();
    Ok(ExperimentReport { rows, means })
}
