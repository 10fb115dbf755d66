use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kserver::domain::{Configuration, DistanceFunction, DistanceTable, NodeId, NodeSpace};
use kserver::harness::{
    emit_report, run_experiment, ExperimentSpec, ReportFormat,
};
use kserver::miner::{build_tree, extract_cases, BuildParams, CaseTable, DecisionTree};
use kserver::offline::{optimum_flow, OptTrace};
use kserver::policies::{run_policy, Policy};
use kserver::streamgen::{gen_matrix, gen_stream, Density, RequestStream, StreamMatrices, StreamSpec, TransitionMatrix};
use kserver::{Error, Result};

/// k-server simulation toolkit: stream generation, exact offline optima,
/// decision-tree mining and online-policy benchmarks.
#[derive(Parser)]
#[command(name = "kserver", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DensityArg {
    Sparse,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Greedy,
    Balance,
    Harmonic,
    Moo,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a row-stochastic transition matrix.
    GenMatrix {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        density: DensityArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a request stream from one or two matrices.
    GenStream {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        matrix2: Option<PathBuf>,
        /// Steps per matrix before alternating (two-matrix mode).
        #[arg(long, default_value_t = 10)]
        block: usize,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        seed: u64,
        /// Row used to sample the first request.
        #[arg(long, default_value_t = 0)]
        initial: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the exact offline optimum service trace.
    SolveOffline {
        /// `line:<n>` or `grid:<w>x<h>`.
        #[arg(long)]
        space: String,
        /// `line_abs|line_sq|line_asym|grid_manhattan|grid_asym|table:<file>`.
        #[arg(long)]
        distance: String,
        /// Comma-separated start nodes, e.g. `0,3,6`.
        #[arg(long)]
        start: String,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a stream plus optimum trace into a training case table.
    ExtractCases {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        start: String,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Induce a decision tree from a case table.
    Mine {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_cases: usize,
        #[arg(long, default_value_t = 0.25)]
        confidence: f64,
    },
    /// Classify one (request, configuration) case with a mined tree.
    Classify {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        request: u32,
        /// Comma-separated occupied nodes.
        #[arg(long)]
        config: String,
    },
    /// Serve a stream with one online policy and report its cost.
    RunPolicy {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        /// Mined tree file (moo only).
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        space: String,
        #[arg(long)]
        distance: String,
        #[arg(long)]
        start: String,
        #[arg(long)]
        stream: PathBuf,
        /// Harmonic's draw seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full repeated experiment from a key=value spec file.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
}

fn parse_space(text: &str) -> Result<NodeSpace> {
    let err = || Error::Parse(format!("bad space {text:?}; use line:<n> or grid:<w>x<h>"));
    let (kind, size) = text.split_once(':').ok_or_else(err)?;
    match kind {
        "line" => Ok(NodeSpace::line(size.parse().map_err(|_| err())?)),
        "grid" => {
            let (w, h) = size.split_once('x').ok_or_else(err)?;
            Ok(NodeSpace::grid(
                w.parse().map_err(|_| err())?,
                h.parse().map_err(|_| err())?,
            ))
        }
        _ => Err(err()),
    }
}

fn parse_distance(text: &str) -> Result<DistanceFunction> {
    if let Some(path) = text.strip_prefix("table:") {
        let table = DistanceTable::parse(&std::fs::read_to_string(path)?)?;
        return Ok(DistanceFunction::Table(table));
    }
    DistanceFunction::from_kind(text)
        .ok_or_else(|| Error::Parse(format!("unknown distance kind {text:?}")))
}

fn parse_config(text: &str) -> Result<Configuration> {
    let nodes = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map(NodeId)
                .map_err(|_| Error::Parse(format!("bad node id {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Configuration::from_nodes(nodes)
}

fn read_stream(path: &PathBuf) -> Result<RequestStream> {
    RequestStream::parse(&std::fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenMatrix { n, density, seed, out } => {
            let density = match density {
                DensityArg::Sparse => Density::Sparse,
                DensityArg::Dense => Density::Dense,
            };
            let matrix = gen_matrix(n, density, seed)?;
            std::fs::write(out, matrix.to_file_string())?;
        }
        Command::GenStream {
            matrix,
            matrix2,
            block,
            length,
            seed,
            initial,
            out,
        } => {
            let first = TransitionMatrix::parse(&std::fs::read_to_string(matrix)?)?;
            let matrices = match matrix2 {
                None => StreamMatrices::One(first),
                Some(path) => StreamMatrices::Two {
                    first,
                    second: TransitionMatrix::parse(&std::fs::read_to_string(path)?)?,
                    block,
                },
            };
            let stream = gen_stream(&StreamSpec {
                matrices,
                length,
                seed,
                initial: NodeId(initial),
            })?;
            std::fs::write(out, stream.to_file_string())?;
        }
        Command::SolveOffline {
            space,
            distance,
            start,
            stream,
            out,
        } => {
            let space = parse_space(&space)?;
            let distance = parse_distance(&distance)?;
            let start = parse_config(&start)?;
            let stream = read_stream(&stream)?;
            let trace = optimum_flow(&space, &distance, start, &stream)?;
            std::fs::write(out, trace.to_file_string())?;
            println!("optimum cost: {}", trace.total_cost);
        }
        Command::ExtractCases {
            n,
            start,
            stream,
            trace,
            out,
        } => {
            let start = parse_config(&start)?;
            let stream = read_stream(&stream)?;
            let trace = OptTrace::parse(&std::fs::read_to_string(trace)?)?;
            let cases = extract_cases(n, start, &stream, &trace)?;
            std::fs::write(out, cases.to_csv())?;
        }
        Command::Mine {
            cases,
            out,
            min_cases,
            confidence,
        } => {
            let table = CaseTable::parse_csv(&std::fs::read_to_string(cases)?)?;
            let params = BuildParams {
                min_cases,
                confidence,
                prune: true,
            };
            let tree = build_tree(&table, &params)?;
            std::fs::write(out, tree.to_file_string())?;
            eprintln!(
                "tree: {} decision nodes, {} leaves",
                tree.decision_node_count(),
                tree.leaf_count()
            );
        }
        Command::Classify { tree, request, config } => {
            let tree = DecisionTree::parse(&std::fs::read_to_string(tree)?)?;
            let config = parse_config(&config)?;
            println!("{}", tree.classify(NodeId(request), config));
        }
        Command::RunPolicy {
            policy,
            tree,
            space,
            distance,
            start,
            stream,
            seed,
        } => {
            let space = parse_space(&space)?;
            let distance = parse_distance(&distance)?;
            let start = parse_config(&start)?;
            let stream = read_stream(&stream)?;
            let policy = match policy {
                PolicyArg::Greedy => Policy::Greedy,
                PolicyArg::Balance => Policy::Balance,
                PolicyArg::Harmonic => Policy::Harmonic { seed },
                PolicyArg::Moo => {
                    let path = tree.ok_or_else(|| {
                        Error::Parse("--tree is required for the moo policy".into())
                    })?;
                    Policy::Moo {
                        tree: DecisionTree::parse(&std::fs::read_to_string(path)?)?,
                    }
                }
            };
            let matrix = distance.cost_matrix(&space)?;
            let result = run_policy(&policy, &matrix, start, &stream)?;
            println!(
                "policy: {}\ncost: {}\ninvalid: {}\nfinal: {}",
                policy.name(),
                result.total_cost,
                result.invalid_count,
                result.final_config
            );
        }
        Command::Experiment { spec, out, format } => {
            let spec = ExperimentSpec::parse(&std::fs::read_to_string(spec)?)?;
            let report = run_experiment(&spec)?;
            let format = match format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Table => ReportFormat::TsvTable,
            };
            std::fs::write(out, emit_report(&report, format))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successful exits; real usage
            // errors map to exit code 1
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
