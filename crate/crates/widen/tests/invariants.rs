//! Cross-module properties that do not belong to a single unit.

mod common;

use rand::Rng;

use widen::downsample::{DownsampleConfig, DownsampleMode};
use widen::eval::evaluate_transductive;
use widen::graph::{ingest, SplitFractions, SplitTag};
use widen::model::{ModelDims, ModelParams};
use widen::numeric::{matmul, softmax_rows, Matrix};
use widen::sampler::sample_all;
use widen::synth::{write_files, SynthConfig, SynthMode};
use widen::trainer::{train, TrainConfig};

#[test]
#[allow(clippy::needless_range_loop)]
fn matmul_agrees_with_triple_loop_reference() {
    let mut r = common::rng(404);
    for _ in 0..50 {
        let a: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..5).map(|_| r.gen_range(-3.0..3.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..5).map(|_| r.gen_range(-3.0..3.0)).collect())
            .collect();
        let expected = common::matmul_reference(&a, &b);
        let am = Matrix::from_rows(&a).unwrap();
        let bm = Matrix::from_rows(&b).unwrap();
        let got = matmul(&am, &bm).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!(
                    (got.get(i, j) - expected[i][j]).abs() < 1e-12,
                    "({i},{j}): {} vs {}",
                    got.get(i, j),
                    expected[i][j]
                );
            }
        }
    }
}

#[test]
fn softmax_is_shift_invariant() {
    let mut r = common::rng(405);
    for _ in 0..200 {
        let n = r.gen_range(1..8);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(-4.0..4.0)).collect();
        let shift = r.gen_range(-10.0..10.0);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let base = softmax_rows(&Matrix::row_vector(&scores), None).unwrap();
        let moved = softmax_rows(&Matrix::row_vector(&shifted), None).unwrap();
        for (a, b) in base.data().iter().zip(moved.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn ingest_preserves_record_counts() {
    let config = SynthConfig {
        nodes: 150,
        seed: 9,
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let nodes = dir.path().join("nodes.tsv");
    let edges = dir.path().join("edges.tsv");
    write_files(&config, &nodes, &edges).unwrap();
    let node_lines = std::fs::read_to_string(&nodes).unwrap().lines().count();
    let edge_lines = std::fs::read_to_string(&edges).unwrap().lines().count();
    let g = ingest(&nodes, &edges, true).unwrap();
    assert_eq!(g.num_nodes(), node_lines);
    assert_eq!(g.edge_record_count(), edge_lines);
}

#[test]
fn untrained_params_score_at_chance_on_balanced_labels() {
    // null features and neutral edges: any fixed decision rule is
    // independent of the labels
    let mut graph = widen::synth::build_graph(&SynthConfig {
        nodes: 1000,
        centroid_sep: 0.0,
        homophily: 0.5,
        seed: 88,
        ..SynthConfig::default()
    })
    .unwrap();
    graph
        .split(
            SplitFractions {
                train: 0.0,
                validation: 0.0,
                test: 1.0,
            },
            1.0,
            88,
        )
        .unwrap();
    let cache = sample_all(&graph, 5, 5, 1, 88);
    let params = ModelParams::init(ModelDims::for_graph(&graph, 16), 123);
    let result = evaluate_transductive(
        &graph,
        &cache,
        &params,
        SplitTag::Test,
        Default::default(),
        1,
    )
    .unwrap();
    assert!(
        (result.micro_f1 - 0.5).abs() <= 0.05,
        "untrained F1 {}",
        result.micro_f1
    );
}

#[test]
fn ten_node_fixture_is_memorized_perfectly() {
    let mut g = common::circulant_fixture(10);
    g.split(
        SplitFractions {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
        },
        1.0,
        4,
    )
    .unwrap();
    let config = TrainConfig {
        embed_dim: 8,
        n_wide: 3,
        n_deep: 3,
        phi: 2,
        batch_size: 10,
        learning_rate: 5e-3,
        max_epochs: 300,
        l2_strength: 0.0,
        downsample: DownsampleConfig {
            mode: DownsampleMode::Off,
            ..DownsampleConfig::default()
        },
        seed: 4,
        threads: 1,
        ..TrainConfig::default()
    };
    let mut cache = sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
    let (params, _) = train(&g, &mut cache, &config).unwrap();
    let once = evaluate_transductive(&g, &cache, &params, SplitTag::Train, config.forward, 1)
        .unwrap()
        .micro_f1;
    assert_eq!(once, 1.0, "capacity check: scored {once}");
    let again = evaluate_transductive(&g, &cache, &params, SplitTag::Train, config.forward, 1)
        .unwrap()
        .micro_f1;
    assert_eq!(once, again);
}

fn null_signal_f1() -> f64 {
    // no feature separation, no homophily signal: nothing to learn
    let mut g = widen::synth::build_graph(&SynthConfig {
        mode: SynthMode::Blocks,
        nodes: 200,
        homophily: 0.5,
        centroid_sep: 0.0,
        seed: 61,
        ..SynthConfig::default()
    })
    .unwrap();
    g.split(SplitFractions::default(), 1.0, 61).unwrap();
    let config = TrainConfig {
        embed_dim: 16,
        n_wide: 5,
        n_deep: 5,
        phi: 2,
        batch_size: 32,
        learning_rate: 1e-3,
        max_epochs: 15,
        l2_strength: 0.0,
        seed: 61,
        threads: 1,
        ..TrainConfig::default()
    };
    let mut cache = sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
    let (params, _) = train(&g, &mut cache, &config).unwrap();
    evaluate_transductive(&g, &cache, &params, SplitTag::Test, config.forward, 1)
        .unwrap()
        .micro_f1
}

#[test]
fn null_signal_fixture_trains_to_chance() {
    let f1 = null_signal_f1();
    assert!((f1 - 0.5).abs() <= 0.12, "null-signal F1 {f1}");
}

#[test]
fn downsampling_on_and_off_reach_similar_validation_f1() {
    let run = |mode: DownsampleMode| {
        let mut g = widen::synth::build_graph(&SynthConfig {
            nodes: 200,
            centroid_sep: 2.5,
            seed: 71,
            ..SynthConfig::default()
        })
        .unwrap();
        g.split(SplitFractions::default(), 1.0, 71).unwrap();
        let config = TrainConfig {
            embed_dim: 16,
            n_wide: 8,
            n_deep: 8,
            phi: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: 15,
            l2_strength: 0.0,
            downsample: DownsampleConfig {
                mode,
                r_wide: f64::INFINITY,
                r_deep: f64::INFINITY,
                k_wide: 3,
                k_deep: 3,
            },
            seed: 71,
            threads: 1,
            ..TrainConfig::default()
        };
        let mut cache = sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
        let (_, report) = train(&g, &mut cache, &config).unwrap();
        report.epochs.last().unwrap().val_f1.unwrap()
    };
    let with = run(DownsampleMode::On);
    let without = run(DownsampleMode::Off);
    assert!(
        (with - without).abs() <= 0.05,
        "downsampling on {with} vs off {without}"
    );
}
