//! Property tests for the module invariants.

use proptest::prelude::*;

use kserver::domain::{apply_decision, DistanceFunction, NodeId, NodeSpace, ServiceDecision};
use kserver::harness::random_start_config;
use kserver::miner::{build_tree, extract_cases, BuildParams, CaseTable, DecisionTree};
use kserver::offline::{optimum_flow, OptTrace};
use kserver::policies::{run_policy, Policy};
use kserver::streamgen::{gen_matrix, gen_stream, Density, RequestStream, StreamMatrices, StreamSpec};

fn line_distances() -> impl Strategy<Value = DistanceFunction> {
    prop_oneof![
        Just(DistanceFunction::LineAbs),
        Just(DistanceFunction::LineSq),
        Just(DistanceFunction::LineAsym),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_are_nonnegative_and_zero_on_diagonal(
        n in 2usize..20,
        d in line_distances(),
    ) {
        let space = NodeSpace::line(n);
        for from in 0..n as u32 {
            for to in 0..n as u32 {
                let cost = d.distance(&space, NodeId(from), NodeId(to)).unwrap();
                prop_assert!(cost >= 0);
                prop_assert_eq!(cost == 0, from == to);
            }
        }
    }

    #[test]
    fn symmetric_kinds_satisfy_the_triangle_inequality(
        n in 2usize..12,
        square in proptest::bool::ANY,
    ) {
        // line_abs is a metric; line_sq is symmetric but may violate the
        // triangle inequality, which is exactly why it is interesting
        let d = if square { DistanceFunction::LineSq } else { DistanceFunction::LineAbs };
        let space = NodeSpace::line(n);
        let dist = |a: u32, b: u32| d.distance(&space, NodeId(a), NodeId(b)).unwrap();
        let mut triangle_holds = true;
        for a in 0..n as u32 {
            for b in 0..n as u32 {
                prop_assert_eq!(dist(a, b), dist(b, a));
                for c in 0..n as u32 {
                    triangle_holds &= dist(a, c) <= dist(a, b) + dist(b, c);
                }
            }
        }
        if !square {
            prop_assert!(triangle_holds);
        }
    }

    #[test]
    fn decisions_preserve_server_count(
        n in 3usize..16,
        k_seed in 0u64..1000,
        request in 0u32..16,
        source_pick in 0usize..8,
    ) {
        let k = 2 + (k_seed as usize % (n - 1)).min(3);
        let config = random_start_config(n, k, k_seed);
        let request = NodeId(request % n as u32);
        let source = if config.contains(request) {
            request
        } else {
            let nodes: Vec<NodeId> = config.nodes().collect();
            nodes[source_pick % nodes.len()]
        };
        let cost = if source == request { 0 } else { 1 };
        let next = apply_decision(config, &ServiceDecision { request, source, cost }).unwrap();
        prop_assert_eq!(next.k(), k);
        prop_assert!(next.contains(request));
    }

    #[test]
    fn generated_matrices_are_exact_hundredths(
        n in 5usize..12,
        seed in 0u64..500,
        dense in proptest::bool::ANY,
    ) {
        let density = if dense { Density::Dense } else { Density::Sparse };
        let m = gen_matrix(n, density, seed).unwrap();
        for from in 0..n as u32 {
            let mut row_hundredths = 0i64;
            for to in 0..n as u32 {
                let p = m.prob(NodeId(from), NodeId(to));
                let h = (p * 100.0).round();
                prop_assert!((p * 100.0 - h).abs() < 1e-9);
                row_hundredths += h as i64;
            }
            prop_assert_eq!(row_hundredths, 100);
        }
        let (lo, hi) = match density {
            Density::Sparse => (10, 20),
            Density::Dense => (80, 90),
        };
        let frac = m.nonzero_count() as f64 / (n * n) as f64 * 100.0;
        prop_assert!(frac >= lo as f64 - 1e-9 && frac <= hi as f64 + 1e-9);
    }

    #[test]
    fn streams_are_deterministic_and_respect_support(
        n in 5usize..10,
        seed in 0u64..200,
        length in 1usize..120,
    ) {
        let matrix = gen_matrix(n, Density::Sparse, seed).unwrap();
        let spec = StreamSpec {
            matrices: StreamMatrices::One(matrix.clone()),
            length,
            seed: seed ^ 0x5151,
            initial: NodeId(0),
        };
        let a = gen_stream(&spec).unwrap();
        let b = gen_stream(&spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), length);
        let mut prev = NodeId(0);
        for &req in &a.requests {
            prop_assert!(matrix.prob(prev, req) > 0.0);
            prev = req;
        }
    }

    #[test]
    fn optimum_is_a_lower_bound_and_traces_replay(
        n in 3usize..9,
        seed in 0u64..300,
        length in 1usize..40,
        d in line_distances(),
    ) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        let k = 1 + next() % (n - 1);
        let space = NodeSpace::line(n);
        let start = random_start_config(n, k, seed);
        let stream = RequestStream {
            requests: (0..length).map(|_| NodeId((next() % n) as u32)).collect(),
        };
        let opt = optimum_flow(&space, &d, start, &stream).unwrap();
        let matrix = d.cost_matrix(&space).unwrap();
        opt.verify(&matrix, start, &stream).unwrap();
        for policy in [Policy::Greedy, Policy::Balance, Policy::Harmonic { seed }] {
            let run = run_policy(&policy, &matrix, start, &stream).unwrap();
            prop_assert!(run.total_cost >= opt.total_cost);
        }
        // trace file round-trip
        let text = opt.to_file_string();
        let parsed = OptTrace::parse(&text).unwrap();
        prop_assert_eq!(parsed.to_file_string(), text);
    }

    #[test]
    fn mined_trees_round_trip_and_stay_deterministic(
        n in 4usize..9,
        seed in 0u64..200,
        length in 2usize..60,
    ) {
        let mut state = seed.wrapping_add(99);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        let k = 1 + next() % (n - 1);
        let space = NodeSpace::line(n);
        let start = random_start_config(n, k, seed);
        let stream = RequestStream {
            requests: (0..length).map(|_| NodeId((next() % n) as u32)).collect(),
        };
        let opt = optimum_flow(&space, &DistanceFunction::LineSq, start, &stream).unwrap();
        let cases = extract_cases(n, start, &stream, &opt).unwrap();
        let tree = build_tree(&cases, &BuildParams::default()).unwrap();
        let text = tree.to_file_string();
        let parsed = DecisionTree::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &tree);
        prop_assert_eq!(parsed.to_file_string(), text);
        // case table round-trip as well
        let csv = cases.to_csv();
        prop_assert_eq!(CaseTable::parse_csv(&csv).unwrap().to_csv(), csv);
        prop_assert_eq!(build_tree(&cases, &BuildParams::default()).unwrap(), tree);
    }

    #[test]
    fn moo_policy_total_cost_counts_every_uncovered_request(
        seed in 0u64..100,
        length in 1usize..50,
    ) {
        let n = 7;
        let mut state = seed.wrapping_add(7);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        let space = NodeSpace::line(n);
        let start = random_start_config(n, 3, seed);
        let stream = RequestStream {
            requests: (0..length).map(|_| NodeId((next() % n) as u32)).collect(),
        };
        let opt = optimum_flow(&space, &DistanceFunction::LineAbs, start, &stream).unwrap();
        let cases = extract_cases(n, start, &stream, &opt).unwrap();
        let tree = build_tree(&cases, &BuildParams::default()).unwrap();
        let matrix = DistanceFunction::LineAbs.cost_matrix(&space).unwrap();
        let run = run_policy(&Policy::Moo { tree }, &matrix, start, &stream).unwrap();
        prop_assert_eq!(run.decisions.len(), stream.len());
        let mut config = start;
        let mut total = 0;
        for decision in &run.decisions {
            prop_assert_eq!(decision.cost, matrix.cost(decision.source, decision.request));
            config = apply_decision(config, decision).unwrap();
            total += decision.cost;
        }
        prop_assert_eq!(total, run.total_cost);
        prop_assert_eq!(config, run.final_config);
    }
}
