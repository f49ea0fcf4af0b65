//! Flat `key = value` run configuration. A config file, the CLI flags, and
//! the `WIDEN_THREADS` environment variable all funnel through the same
//! setter, so every key round-trips identically whichever way it arrives;
//! flags override file values.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use widen::downsample::{DownsampleConfig, DownsampleMode};
use widen::model::{Ablation, DeepValues, ForwardOptions};
use widen::synth::{SynthConfig, SynthMode};
use widen::trainer::{Optimizer, TrainConfig};
use widen::{Error, Result, SplitFractions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Transductive,
    Inductive,
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transductive" => Ok(Protocol::Transductive),
            "inductive" => Ok(Protocol::Inductive),
            other => Err(Error::Config(format!(
                "protocol must be transductive|inductive, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for EvalSplit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(EvalSplit::Train),
            "validation" => Ok(EvalSplit::Validation),
            "test" => Ok(EvalSplit::Test),
            other => Err(Error::Config(format!(
                "eval_split must be train|validation|test, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,

    pub protocol: Protocol,
    pub holdout: f64,
    pub label_fraction: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub eval_split: EvalSplit,
    pub directed: bool,

    pub d: usize,
    pub n_wide: usize,
    pub n_deep: usize,
    pub phi: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub gamma: f64,
    pub r_wide: f64,
    pub r_deep: f64,
    pub k_wide: usize,
    pub k_deep: usize,
    pub downsampling: DownsampleMode,
    pub seed: u64,
    pub eval_seed: u64,
    pub optimizer: Optimizer,
    pub patience: usize,
    pub threads: usize,
    pub deep_values: DeepValues,
    pub ablation: Ablation,

    pub synth_mode: SynthMode,
    pub synth_nodes: usize,
    pub synth_node_types: usize,
    pub synth_edge_types: usize,
    pub synth_classes: usize,
    pub homophily: f64,
    pub synth_feature_dim: usize,
    pub centroid_sep: f64,
    pub noise: f64,
    pub avg_degree: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let ds = DownsampleConfig::default();
        let synth = SynthConfig::default();
        RunConfig {
            nodes: None,
            edges: None,
            checkpoint: None,
            report: None,
            embeddings: None,
            protocol: Protocol::Transductive,
            holdout: 0.2,
            label_fraction: 1.0,
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            eval_split: EvalSplit::Test,
            directed: false,
            d: train.embed_dim,
            n_wide: train.n_wide,
            n_deep: train.n_deep,
            phi: train.phi,
            batch_size: train.batch_size,
            lr: train.learning_rate,
            epochs: train.max_epochs,
            gamma: train.l2_strength,
            r_wide: ds.r_wide,
            r_deep: ds.r_deep,
            k_wide: ds.k_wide,
            k_deep: ds.k_deep,
            downsampling: ds.mode,
            seed: 0,
            eval_seed: 1,
            optimizer: train.optimizer,
            patience: train.patience,
            threads: train.threads,
            deep_values: DeepValues::Packs,
            ablation: Ablation::None,
            synth_mode: synth.mode,
            synth_nodes: synth.nodes,
            synth_node_types: synth.node_types,
            synth_edge_types: synth.edge_types,
            synth_classes: synth.classes,
            homophily: synth.homophily,
            synth_feature_dim: synth.feature_dim,
            centroid_sep: synth.centroid_sep,
            noise: synth.noise,
            avg_degree: synth.avg_degree,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

/// Every recognized key, in the order the effective config is echoed.
pub const KEYS: &[&str] = &[
    "nodes",
    "edges",
    "checkpoint",
    "report",
    "embeddings",
    "protocol",
    "holdout",
    "label_fraction",
    "train_fraction",
    "val_fraction",
    "test_fraction",
    "eval_split",
    "directed",
    "d",
    "n_wide",
    "n_deep",
    "phi",
    "batch_size",
    "lr",
    "epochs",
    "gamma",
    "r_wide",
    "r_deep",
    "k_wide",
    "k_deep",
    "downsampling",
    "seed",
    "eval_seed",
    "optimizer",
    "patience",
    "threads",
    "deep_values",
    "ablation",
    "synth_mode",
    "synth_nodes",
    "synth_node_types",
    "synth_edge_types",
    "synth_classes",
    "homophily",
    "synth_feature_dim",
    "centroid_sep",
    "noise",
    "avg_degree",
];

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nodes" => self.nodes = Some(PathBuf::from(value)),
            "edges" => self.edges = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "report" => self.report = Some(PathBuf::from(value)),
            "embeddings" => self.embeddings = Some(PathBuf::from(value)),
            "protocol" => self.protocol = value.parse()?,
            "holdout" => self.holdout = parse(key, value)?,
            "label_fraction" => self.label_fraction = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "eval_split" => self.eval_split = value.parse()?,
            "directed" => self.directed = parse_bool(key, value)?,
            "d" => self.d = parse(key, value)?,
            "n_wide" => self.n_wide = parse(key, value)?,
            "n_deep" => self.n_deep = parse(key, value)?,
            "phi" => self.phi = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "r_wide" => self.r_wide = parse_threshold(key, value)?,
            "r_deep" => self.r_deep = parse_threshold(key, value)?,
            "k_wide" => self.k_wide = parse(key, value)?,
            "k_deep" => self.k_deep = parse(key, value)?,
            "downsampling" => self.downsampling = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "eval_seed" => self.eval_seed = parse(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "patience" => self.patience = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "deep_values" => self.deep_values = value.parse()?,
            "ablation" => self.ablation = value.parse()?,
            "synth_mode" => self.synth_mode = value.parse()?,
            "synth_nodes" => self.synth_nodes = parse(key, value)?,
            "synth_node_types" => self.synth_node_types = parse(key, value)?,
            "synth_edge_types" => self.synth_edge_types = parse(key, value)?,
            "synth_classes" => self.synth_classes = parse(key, value)?,
            "homophily" => self.homophily = parse(key, value)?,
            "synth_feature_dim" => self.synth_feature_dim = parse(key, value)?,
            "centroid_sep" => self.centroid_sep = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "avg_degree" => self.avg_degree = parse(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let raw = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        for (lineno, line) in raw.replace("\r\n", "\n").lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected 'key = value'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The effective configuration as echoed into report headers.
    pub fn entries(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or_else(|| "-".to_string(), |p| p.display().to_string())
        };
        let mut map: HashMap<&str, String> = HashMap::new();
        map.insert("nodes", path(&self.nodes));
        map.insert("edges", path(&self.edges));
        map.insert("checkpoint", path(&self.checkpoint));
        map.insert("report", path(&self.report));
        map.insert("embeddings", path(&self.embeddings));
        map.insert(
            "protocol",
            match self.protocol {
                Protocol::Transductive => "transductive".into(),
                Protocol::Inductive => "inductive".into(),
            },
        );
        map.insert("holdout", self.holdout.to_string());
        map.insert("label_fraction", self.label_fraction.to_string());
        map.insert("train_fraction", self.train_fraction.to_string());
        map.insert("val_fraction", self.val_fraction.to_string());
        map.insert("test_fraction", self.test_fraction.to_string());
        map.insert(
            "eval_split",
            match self.eval_split {
                EvalSplit::Train => "train".into(),
                EvalSplit::Validation => "validation".into(),
                EvalSplit::Test => "test".into(),
            },
        );
        map.insert("directed", self.directed.to_string());
        map.insert("d", self.d.to_string());
        map.insert("n_wide", self.n_wide.to_string());
        map.insert("n_deep", self.n_deep.to_string());
        map.insert("phi", self.phi.to_string());
        map.insert("batch_size", self.batch_size.to_string());
        map.insert("lr", self.lr.to_string());
        map.insert("epochs", self.epochs.to_string());
        map.insert("gamma", self.gamma.to_string());
        map.insert("r_wide", self.r_wide.to_string());
        map.insert("r_deep", self.r_deep.to_string());
        map.insert("k_wide", self.k_wide.to_string());
        map.insert("k_deep", self.k_deep.to_string());
        map.insert("downsampling", self.downsampling.to_string());
        map.insert("seed", self.seed.to_string());
        map.insert("eval_seed", self.eval_seed.to_string());
        map.insert(
            "optimizer",
            match self.optimizer {
                Optimizer::Sgd => "sgd".into(),
                Optimizer::Adam { .. } => "adam".into(),
            },
        );
        map.insert("patience", self.patience.to_string());
        map.insert("threads", self.threads.to_string());
        map.insert(
            "deep_values",
            match self.deep_values {
                DeepValues::Packs => "packs".into(),
                DeepValues::Refined => "refined".into(),
            },
        );
        map.insert(
            "ablation",
            match self.ablation {
                Ablation::None => "none".into(),
                Ablation::NoWide => "no-wide".into(),
                Ablation::NoDeep => "no-deep".into(),
            },
        );
        map.insert(
            "synth_mode",
            match self.synth_mode {
                SynthMode::Blocks => "blocks".into(),
                SynthMode::TwoHop => "twohop".into(),
            },
        );
        map.insert("synth_nodes", self.synth_nodes.to_string());
        map.insert("synth_node_types", self.synth_node_types.to_string());
        map.insert("synth_edge_types", self.synth_edge_types.to_string());
        map.insert("synth_classes", self.synth_classes.to_string());
        map.insert("homophily", self.homophily.to_string());
        map.insert("synth_feature_dim", self.synth_feature_dim.to_string());
        map.insert("centroid_sep", self.centroid_sep.to_string());
        map.insert("noise", self.noise.to_string());
        map.insert("avg_degree", self.avg_degree.to_string());
        KEYS.iter()
            .map(|&k| (k.to_string(), map.remove(k).unwrap()))
            .collect()
    }

    pub fn split_fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train_fraction,
            validation: self.val_fraction,
            test: self.test_fraction,
        }
    }

    pub fn forward_options(&self) -> ForwardOptions {
        ForwardOptions {
            deep_values: self.deep_values,
            ablation: self.ablation,
            steps: 1,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            embed_dim: self.d,
            n_wide: self.n_wide,
            n_deep: self.n_deep,
            phi: self.phi,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            max_epochs: self.epochs,
            l2_strength: self.gamma,
            downsample: DownsampleConfig {
                mode: self.downsampling,
                r_wide: self.r_wide,
                r_deep: self.r_deep,
                k_wide: self.k_wide,
                k_deep: self.k_deep,
            },
            seed: self.seed,
            optimizer: self.optimizer,
            patience: self.patience,
            threads: self.threads,
            forward: self.forward_options(),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            mode: self.synth_mode,
            nodes: self.synth_nodes,
            node_types: self.synth_node_types,
            edge_types: self.synth_edge_types,
            classes: self.synth_classes,
            homophily: self.homophily,
            feature_dim: self.synth_feature_dim,
            centroid_sep: self.centroid_sep,
            noise: self.noise,
            avg_degree: self.avg_degree,
            seed: self.seed,
        }
    }

    pub fn require(&self, what: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        value
            .clone()
            .ok_or_else(|| Error::Config(format!("missing required path '{what}'")))
    }
}

/// Thresholds accept `inf` for an always-pass trigger comparison.
fn parse_threshold(key: &str, value: &str) -> Result<f64> {
    match value {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        v => parse(key, v),
    }
}
