//! Acceptance gate: one test per release criterion. Each test prints a
//! `criterion N: PASS/FAIL` line (visible with `--nocapture` or on
//! failure) before asserting.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kserver::domain::{
    Configuration, DistanceFunction, DistanceTable, NodeId, NodeSpace,
};
use kserver::harness::{
    derive_seed, random_start_config, run_experiment, ExperimentSpec, MatrixSource, PolicyKind,
    SeedRole, StartPolicy,
};
use kserver::miner::{build_tree, extract_cases, BuildParams};
use kserver::offline::{optimum_bruteforce, optimum_flow};
use kserver::policies::{harmonic_choose, run_policy, Policy};
use kserver::streamgen::{gen_stream, Density, RequestStream, StreamMatrices, StreamSpec, TransitionMatrix};

const S1_TEXT: &str = include_str!("../data/s1.txt");

fn random_instance(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_k: usize,
    max_s: usize,
) -> (NodeSpace, DistanceFunction, Configuration, RequestStream) {
    let n = rng.gen_range(2..=max_n);
    let k = rng.gen_range(1..=max_k.min(n));
    let space = NodeSpace::line(n);
    // random integer tables: zero diagonal, otherwise unconstrained, so
    // asymmetric and triangle-violating cases arise constantly
    let mut costs = vec![0i64; n * n];
    for from in 0..n {
        for to in 0..n {
            if from != to {
                costs[from * n + to] = rng.gen_range(0..=20);
            }
        }
    }
    let d = DistanceFunction::Table(DistanceTable::new(n, costs).unwrap());
    let start = random_start_config(n, k, rng.gen());
    let s = rng.gen_range(1..=max_s);
    let requests = (0..s).map(|_| NodeId(rng.gen_range(0..n as u32))).collect();
    (space, d, start, RequestStream { requests })
}

#[test]
fn criterion_1_oracle_equivalence() {
    let began = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    for case in 0..200 {
        let (space, d, start, stream) = random_instance(&mut rng, 6, 3, 8);
        let flow = optimum_flow(&space, &d, start, &stream).unwrap();
        let brute = optimum_bruteforce(&space, &d, start, &stream).unwrap();
        assert_eq!(
            flow.total_cost, brute,
            "case {case}: flow {} != brute force {brute}",
            flow.total_cost
        );
        let matrix = d.cost_matrix(&space).unwrap();
        flow.verify(&matrix, start, &stream).unwrap();
    }
    let elapsed = began.elapsed();
    println!(
        "criterion 1: PASS — flow = brute force on 200 random non-metric instances in {elapsed:.2?}"
    );
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
}

#[test]
fn criterion_2_policies_never_beat_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0002);
    for case in 0..50 {
        let (space, d, start, stream) = random_instance(&mut rng, 12, 5, 300);
        let opt = optimum_flow(&space, &d, start, &stream).unwrap();
        let cases = extract_cases(space.n(), start, &stream, &opt).unwrap();
        let tree = build_tree(&cases, &BuildParams::default()).unwrap();
        let matrix = d.cost_matrix(&space).unwrap();
        let policies = [
            Policy::Greedy,
            Policy::Balance,
            Policy::Harmonic { seed: rng.gen() },
            Policy::Moo { tree },
        ];
        for policy in policies {
            let result = run_policy(&policy, &matrix, start, &stream).unwrap();
            assert!(
                result.total_cost >= opt.total_cost,
                "case {case}: {} cost {} below optimum {}",
                policy.name(),
                result.total_cost,
                opt.total_cost
            );
        }
    }
    println!("criterion 2: PASS — optimum is a lower bound for all policies on 50 instances");
}

fn strong_pattern_spec(seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        space: NodeSpace::line(9),
        distance: DistanceFunction::LineSq,
        n: 9,
        k: 5,
        matrices: MatrixSource::Generate {
            density: Density::Sparse,
            second: None,
        },
        block: 10,
        s_train: 2000,
        s_test: 2000,
        policies: vec![
            PolicyKind::Moo,
            PolicyKind::Greedy,
            PolicyKind::Balance,
            PolicyKind::Harmonic,
        ],
        runs: 1,
        seed,
        start: StartPolicy::Fixed,
        reuse_training_as_test: true,
        initial: NodeId(0),
    }
}

/// Mean ratio per policy over several master seeds, plus the total MOO
/// invalid count and number of MOO runs.
fn means_over_seeds(base: impl Fn(u64) -> ExperimentSpec, seeds: &[u64]) -> (Vec<(String, f64)>, usize, usize) {
    let mut totals: Vec<(String, f64)> = Vec::new();
    let mut invalid = 0usize;
    let mut moo_runs = 0usize;
    for &seed in seeds {
        let report = run_experiment(&base(seed)).unwrap();
        for row in &report.rows {
            match totals.iter_mut().find(|(p, _)| *p == row.policy) {
                Some((_, sum)) => *sum += row.ratio,
                None => totals.push((row.policy.clone(), row.ratio)),
            }
            if row.policy == "moo" {
                invalid += row.invalid;
                moo_runs += 1;
            }
        }
    }
    let runs = seeds.len() as f64 * {
        // all experiments share the run count
        base(seeds[0]).runs as f64
    };
    for (_, sum) in &mut totals {
        *sum /= runs;
    }
    (totals, invalid, moo_runs)
}

fn mean_of<'a>(means: &'a [(String, f64)], policy: &str) -> f64 {
    means.iter().find(|(p, _)| p == policy).unwrap().1
}

#[test]
fn criterion_3_strong_pattern_table() {
    let (means, _, _) = means_over_seeds(strong_pattern_spec, &[1, 2, 3, 4, 5]);
    let moo = mean_of(&means, "moo");
    let balance = mean_of(&means, "balance");
    let harmonic = mean_of(&means, "harmonic");
    let pass = moo <= 1.15 && harmonic >= 3.0 && moo < balance && moo < harmonic;
    println!(
        "criterion 3: {} — strong pattern means: moo {moo:.2}, balance {balance:.2}, harmonic {harmonic:.2}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(moo <= 1.15, "mean moo ratio {moo:.3} > 1.15");
    assert!(harmonic >= 3.0, "mean harmonic ratio {harmonic:.3} < 3.0");
    assert!(moo < balance, "moo {moo:.3} not below balance {balance:.3}");
    assert!(moo < harmonic, "moo {moo:.3} not below harmonic {harmonic:.3}");
}

#[test]
fn criterion_4_weak_pattern_table() {
    let spec = |seed| ExperimentSpec {
        matrices: MatrixSource::Generate {
            density: Density::Dense,
            second: None,
        },
        runs: 3,
        start: StartPolicy::PerRun,
        reuse_training_as_test: false,
        ..strong_pattern_spec(seed)
    };
    let (means, invalid, moo_runs) = means_over_seeds(spec, &[1, 2, 3, 4, 5]);
    let moo = mean_of(&means, "moo");
    let smallest = means.iter().all(|(p, r)| p == "moo" || moo < *r);
    let invalid_frac = invalid as f64 / (moo_runs * 2000) as f64;
    let pass = moo <= 1.5 && smallest && invalid_frac <= 0.01;
    println!(
        "criterion 4: {} — weak pattern means: {:?}; moo invalid {invalid} of {} requests ({:.2}%)",
        if pass { "PASS" } else { "FAIL" },
        means
            .iter()
            .map(|(p, r)| format!("{p} {r:.2}"))
            .collect::<Vec<_>>(),
        moo_runs * 2000,
        invalid_frac * 100.0
    );
    assert!(moo <= 1.5, "mean moo ratio {moo:.3} > 1.5");
    assert!(smallest, "moo mean {moo:.3} is not strictly smallest: {means:?}");
    assert!(
        invalid_frac <= 0.01,
        "moo invalid fraction {:.3}% above 1%",
        invalid_frac * 100.0
    );
}

#[test]
fn criterion_5_asymmetric_distance_figure() {
    let spec = |seed| ExperimentSpec {
        space: NodeSpace::line(6),
        distance: DistanceFunction::LineAsym,
        n: 6,
        matrices: MatrixSource::Generate {
            density: Density::Dense,
            second: Some(Density::Dense),
        },
        runs: 3,
        start: StartPolicy::PerRun,
        reuse_training_as_test: false,
        ..strong_pattern_spec(seed)
    };
    let (means, _, _) = means_over_seeds(spec, &[1, 2, 3, 4, 5]);
    let moo = mean_of(&means, "moo");
    let greedy = mean_of(&means, "greedy");
    let harmonic = mean_of(&means, "harmonic");
    let pass = harmonic >= 5.0 && greedy >= 5.0 && moo <= 2.5;
    println!(
        "criterion 5: {} — asymmetric means: moo {moo:.2}, greedy {greedy:.2}, harmonic {harmonic:.2}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(harmonic >= 5.0, "mean harmonic ratio {harmonic:.3} < 5");
    assert!(moo <= 2.5, "mean moo ratio {moo:.3} > 2.5");
    // Known conflict: with ties broken by smallest NodeId (as the policy
    // module requires), Greedy walks its vacancy to the cheap end of the
    // asymmetric line and stays near the optimum, so this bound is not
    // reachable on unbiased dense streams.
    assert!(greedy >= 5.0, "mean greedy ratio {greedy:.3} < 5");
}

#[test]
fn criterion_6_strong_pattern_tree_shape() {
    let matrix = TransitionMatrix::parse(S1_TEXT).unwrap();
    let space = NodeSpace::line(9);
    let stream = gen_stream(&StreamSpec {
        matrices: StreamMatrices::One(matrix),
        length: 2000,
        seed: derive_seed(6, 0, SeedRole::Stream),
        initial: NodeId(0),
    })
    .unwrap();
    let start = random_start_config(9, 5, derive_seed(6, 0, SeedRole::StartConfig));
    let trace = optimum_flow(&space, &DistanceFunction::LineSq, start, &stream).unwrap();
    let cases = extract_cases(9, start, &stream, &trace).unwrap();
    let tree = build_tree(&cases, &BuildParams::default()).unwrap();
    let pass = tree.root_tests_request() && tree.decision_node_count() < 100;
    println!(
        "criterion 6: {} — mined tree has {} decision nodes, root tests request: {}",
        if pass { "PASS" } else { "FAIL" },
        tree.decision_node_count(),
        tree.root_tests_request()
    );
    assert!(tree.root_tests_request(), "root does not test the request");
    assert!(
        tree.decision_node_count() < 100,
        "{} decision nodes",
        tree.decision_node_count()
    );
}

#[test]
fn criterion_7_harmonic_distribution() {
    let space = NodeSpace::line(9);
    let matrix = DistanceFunction::LineAbs.cost_matrix(&space).unwrap();
    let config = Configuration::from_nodes([NodeId(3), NodeId(6)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0007);
    let draws = 30_000;
    let mut hits = 0usize;
    for _ in 0..draws {
        if harmonic_choose(&mut rng, &matrix, config, NodeId(4)) == NodeId(3) {
            hits += 1;
        }
    }
    let freq = hits as f64 / draws as f64;
    let pass = (freq - 2.0 / 3.0).abs() <= 0.01;
    println!(
        "criterion 7: {} — P(3) = {freq:.4} over {draws} draws (expected 2/3)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "frequency {freq:.4} outside 2/3 +- 0.01");
}

// Criterion 8 (byte-identical CLI reruns) lives in tests/cli.rs, which
// drives the built binary; its determinism test prints the line.

#[test]
fn criterion_9_stream_statistics() {
    let matrix = TransitionMatrix::parse(S1_TEXT).unwrap();
    let n = matrix.n();
    let stream = gen_stream(&StreamSpec {
        matrices: StreamMatrices::One(matrix.clone()),
        length: 50_000,
        seed: 0xACCE_0009,
        initial: NodeId(0),
    })
    .unwrap();
    let mut visits = vec![0usize; n];
    let mut transitions = vec![0usize; n * n];
    let mut prev = NodeId(0);
    for (step, &req) in stream.requests.iter().enumerate() {
        if step > 0 {
            visits[prev.index()] += 1;
            transitions[prev.index() * n + req.index()] += 1;
        }
        prev = req;
    }
    let mut worst: f64 = 0.0;
    for from in 0..n {
        for to in 0..n {
            let count = transitions[from * n + to];
            let p = matrix.prob(NodeId(from as u32), NodeId(to as u32));
            assert!(
                count == 0 || p > 0.0,
                "observed transition {from}->{to} has probability 0"
            );
            if visits[from] >= 1000 {
                let freq = count as f64 / visits[from] as f64;
                worst = worst.max((freq - p).abs());
            }
        }
    }
    let pass = worst <= 0.02;
    println!(
        "criterion 9: {} — max |frequency - probability| = {worst:.4} over well-visited states",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "worst deviation {worst:.4} above 0.02");
}
