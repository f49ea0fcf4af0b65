//! `widen train|eval|embed|synth` entry points.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/IO error.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{EvalSplit, Protocol, RunConfig};
use widen::checkpoint;
use widen::eval::{evaluate_inductive, evaluate_transductive, export_embeddings, EvalResult};
use widen::graph::{ingest, SplitTag};
use widen::model::ForwardOptions;
use widen::sampler::sample_all;
use widen::synth::write_files;
use widen::trainer::train;
use widen::{Result, SplitFractions};

#[derive(Parser)]
#[command(
    name = "widen",
    version,
    about = "Wide-and-deep attentive message passing on heterogeneous graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a graph, train a node classifier, write checkpoint + report
    Train(KeyArgs),
    /// Score a trained checkpoint under a protocol
    Eval(KeyArgs),
    /// Export embeddings for every node
    Embed(KeyArgs),
    /// Generate a synthetic typed-graph fixture
    Synth(KeyArgs),
}

/// Every config key as an optional flag; flags override the config file.
#[derive(Args, Default)]
struct KeyArgs {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    edges: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    holdout: Option<String>,
    #[arg(long)]
    label_fraction: Option<String>,
    #[arg(long)]
    train_fraction: Option<String>,
    #[arg(long)]
    val_fraction: Option<String>,
    #[arg(long)]
    test_fraction: Option<String>,
    #[arg(long)]
    eval_split: Option<String>,
    #[arg(long)]
    directed: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    n_wide: Option<String>,
    #[arg(long)]
    n_deep: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    r_wide: Option<String>,
    #[arg(long)]
    r_deep: Option<String>,
    #[arg(long)]
    k_wide: Option<String>,
    #[arg(long)]
    k_deep: Option<String>,
    #[arg(long)]
    downsampling: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    eval_seed: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    deep_values: Option<String>,
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    synth_mode: Option<String>,
    #[arg(long)]
    synth_nodes: Option<String>,
    #[arg(long)]
    synth_node_types: Option<String>,
    #[arg(long)]
    synth_edge_types: Option<String>,
    #[arg(long)]
    synth_classes: Option<String>,
    #[arg(long)]
    homophily: Option<String>,
    #[arg(long)]
    synth_feature_dim: Option<String>,
    #[arg(long)]
    centroid_sep: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    avg_degree: Option<String>,
}

impl KeyArgs {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        let pairs: [(&'static str, &Option<String>); 43] = [
            ("nodes", &self.nodes),
            ("edges", &self.edges),
            ("checkpoint", &self.checkpoint),
            ("report", &self.report),
            ("embeddings", &self.embeddings),
            ("protocol", &self.protocol),
            ("holdout", &self.holdout),
            ("label_fraction", &self.label_fraction),
            ("train_fraction", &self.train_fraction),
            ("val_fraction", &self.val_fraction),
            ("test_fraction", &self.test_fraction),
            ("eval_split", &self.eval_split),
            ("directed", &self.directed),
            ("d", &self.d),
            ("n_wide", &self.n_wide),
            ("n_deep", &self.n_deep),
            ("phi", &self.phi),
            ("batch_size", &self.batch_size),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("gamma", &self.gamma),
            ("r_wide", &self.r_wide),
            ("r_deep", &self.r_deep),
            ("k_wide", &self.k_wide),
            ("k_deep", &self.k_deep),
            ("downsampling", &self.downsampling),
            ("seed", &self.seed),
            ("eval_seed", &self.eval_seed),
            ("optimizer", &self.optimizer),
            ("patience", &self.patience),
            ("threads", &self.threads),
            ("deep_values", &self.deep_values),
            ("ablation", &self.ablation),
            ("synth_mode", &self.synth_mode),
            ("synth_nodes", &self.synth_nodes),
            ("synth_node_types", &self.synth_node_types),
            ("synth_edge_types", &self.synth_edge_types),
            ("synth_classes", &self.synth_classes),
            ("homophily", &self.homophily),
            ("synth_feature_dim", &self.synth_feature_dim),
            ("centroid_sep", &self.centroid_sep),
            ("noise", &self.noise),
            ("avg_degree", &self.avg_degree),
        ];
        pairs
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|s| (*k, s)))
            .collect()
    }
}

fn effective_config(args: &KeyArgs) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    if let Some(path) = &args.config {
        rc.load_file(path)?;
    }
    if let Ok(threads) = std::env::var("WIDEN_THREADS") {
        rc.apply("threads", &threads)?;
    }
    for (key, value) in args.overrides() {
        rc.apply(key, value)?;
    }
    Ok(rc)
}

fn header_lines(rc: &RunConfig) -> Vec<String> {
    rc.entries()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect()
}

fn cmd_train(rc: RunConfig) -> Result<()> {
    let nodes = rc.require("nodes", &rc.nodes)?;
    let edges = rc.require("edges", &rc.edges)?;
    let checkpoint_path = rc.require("checkpoint", &rc.checkpoint)?;

    let mut g = ingest(&nodes, &edges, !rc.directed)?;
    let train_graph = match rc.protocol {
        Protocol::Transductive => {
            g.split(rc.split_fractions(), rc.label_fraction, rc.seed)?;
            g
        }
        Protocol::Inductive => {
            // holdout nodes leave the graph entirely; all remaining labeled
            // nodes train (hyperparameters come tuned from the transductive
            // run, so no validation split is sampled)
            g.mark_inductive_holdout(rc.holdout, rc.seed)?;
            let mut filtered = g.without_holdout();
            filtered.split(
                SplitFractions {
                    train: 1.0,
                    validation: 0.0,
                    test: 0.0,
                },
                rc.label_fraction,
                rc.seed,
            )?;
            filtered
        }
    };

    let config = rc.train_config();
    let mut cache = sample_all(
        &train_graph,
        config.n_wide,
        config.n_deep,
        config.phi,
        config.seed,
    );
    let (params, report) = train(&train_graph, &mut cache, &config)?;
    checkpoint::save(&checkpoint_path, &params, &train_graph, rc.deep_values)?;

    if let Some(report_path) = &rc.report {
        fs::write(report_path, report.to_tsv(&header_lines(&rc))).map_err(|e| {
            widen::Error::Io {
                path: report_path.display().to_string(),
                msg: e.to_string(),
            }
        })?;
    }

    let last = report.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs  loss {:.6}  val_f1 {}  checkpoint {}",
        last.epoch,
        last.loss,
        last.val_f1
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4}")),
        checkpoint_path.display()
    );
    Ok(())
}

fn print_metrics(protocol: &str, split: &str, result: &EvalResult) {
    println!("{protocol}\t{split}\t{}\t{:.6}", result.count, result.micro_f1);
    println!(
        "micro-F1 {:.4} over {} nodes ({protocol}, {split} split)",
        result.micro_f1, result.count
    );
}

fn cmd_eval(rc: RunConfig) -> Result<()> {
    let nodes = rc.require("nodes", &rc.nodes)?;
    let edges = rc.require("edges", &rc.edges)?;
    let checkpoint_path = rc.require("checkpoint", &rc.checkpoint)?;

    let mut g = ingest(&nodes, &edges, !rc.directed)?;
    let cp = checkpoint::load(&checkpoint_path)?;
    checkpoint::check_compatible(&cp, &g)?;
    checkpoint::check_labels_compatible(&cp, &g)?;
    let opts = ForwardOptions {
        deep_values: cp.deep_values,
        ablation: rc.ablation,
        steps: 1,
    };

    match rc.protocol {
        Protocol::Transductive => {
            g.split(rc.split_fractions(), rc.label_fraction, rc.seed)?;
            let cache = sample_all(&g, rc.n_wide, rc.n_deep, rc.phi, rc.seed);
            let (tag, name) = match rc.eval_split {
                EvalSplit::Train => (SplitTag::Train, "train"),
                EvalSplit::Validation => (SplitTag::Validation, "validation"),
                EvalSplit::Test => (SplitTag::Test, "test"),
            };
            let result = evaluate_transductive(&g, &cache, &cp.params, tag, opts, rc.threads)?;
            print_metrics("transductive", name, &result);
        }
        Protocol::Inductive => {
            g.mark_inductive_holdout(rc.holdout, rc.seed)?;
            let holdout = g.indices_with_tag(SplitTag::InductiveHoldout);
            let result = evaluate_inductive(
                &g,
                &holdout,
                &cp.params,
                rc.n_wide,
                rc.n_deep,
                rc.phi,
                rc.eval_seed,
                opts,
                rc.threads,
            )?;
            print_metrics("inductive", "holdout", &result);
        }
    }
    Ok(())
}

fn cmd_embed(rc: RunConfig) -> Result<()> {
    let nodes = rc.require("nodes", &rc.nodes)?;
    let edges = rc.require("edges", &rc.edges)?;
    let checkpoint_path = rc.require("checkpoint", &rc.checkpoint)?;
    let out = rc.require("embeddings", &rc.embeddings)?;

    let g = ingest(&nodes, &edges, !rc.directed)?;
    let cp = checkpoint::load(&checkpoint_path)?;
    checkpoint::check_compatible(&cp, &g)?;
    let opts = ForwardOptions {
        deep_values: cp.deep_values,
        ablation: rc.ablation,
        steps: 1,
    };
    let cache = sample_all(&g, rc.n_wide, rc.n_deep, rc.phi, rc.seed);
    export_embeddings(&g, &cache, &cp.params, opts, rc.threads, &out)?;
    println!("wrote {} embeddings to {}", g.num_nodes(), out.display());
    Ok(())
}

fn cmd_synth(rc: RunConfig) -> Result<()> {
    let nodes = rc.require("nodes", &rc.nodes)?;
    let edges = rc.require("edges", &rc.edges)?;
    let config = rc.synth_config();
    write_files(&config, &nodes, &edges)?;
    println!(
        "wrote fixture: {} and {}",
        nodes.display(),
        edges.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(effective_config(&args)?),
        Command::Eval(args) => cmd_eval(effective_config(&args)?),
        Command::Embed(args) => cmd_embed(effective_config(&args)?),
        Command::Synth(args) => cmd_synth(effective_config(&args)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("widen: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
