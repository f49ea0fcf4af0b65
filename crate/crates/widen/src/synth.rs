//! Synthetic typed-graph fixtures, desk-scale stand-ins for real datasets.
//!
//! Two generators:
//! - `Blocks`: stochastic-block-style graph with class-correlated features
//!   (class centroid + noise) and tunable intra-class edge probability.
//! - `TwoHop`: labels are carried by feature-bearing nodes exactly two hops
//!   from the labeled cores, whose own features are pure noise; classifying
//!   a core requires information from its deep walks.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, HeteroGraph};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    Blocks,
    TwoHop,
}

impl std::str::FromStr for SynthMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(SynthMode::Blocks),
            "twohop" => Ok(SynthMode::TwoHop),
            other => Err(Error::Config(format!(
                "synth_mode must be blocks|twohop, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub mode: SynthMode,
    /// Blocks: total node count. TwoHop: number of labeled core nodes
    /// (each core brings 2 intermediates and 4 signal nodes).
    pub nodes: usize,
    pub node_types: usize,
    pub edge_types: usize,
    pub classes: usize,
    /// Probability that a generated edge connects two same-class nodes.
    pub homophily: f64,
    pub feature_dim: usize,
    /// Distance of each class centroid from the origin; 0 removes all
    /// feature signal.
    pub centroid_sep: f64,
    pub noise: f64,
    pub avg_degree: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mode: SynthMode::Blocks,
            nodes: 200,
            node_types: 2,
            edge_types: 3,
            classes: 2,
            homophily: 0.9,
            feature_dim: 8,
            centroid_sep: 2.0,
            noise: 1.0,
            avg_degree: 6.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 1
            || self.node_types < 1
            || self.edge_types < 1
            || self.classes < 1
            || self.feature_dim < 1
        {
            return Err(Error::Config("synth counts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::Config("homophily must be in [0, 1]".into()));
        }
        Ok(())
    }
}

struct NodeRow {
    id: String,
    node_type: String,
    label: Option<String>,
    features: Vec<f64>,
}

struct Records {
    nodes: Vec<NodeRow>,
    edges: Vec<(String, String, String)>,
}

fn gaussian_features(
    dim: usize,
    centroid_axis: Option<usize>,
    sep: f64,
    noise: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let base = match centroid_axis {
                Some(axis) if axis == i => sep,
                _ => 0.0,
            };
            let z: f64 = rng.sample(StandardNormal);
            base + noise * z
        })
        .collect()
}

fn blocks(config: &SynthConfig) -> Records {
    let mut rng = rng::stream(config.seed, rng::ROLE_SYNTH, 0, 0);
    let n = config.nodes;
    let class_of = |i: usize| i % config.classes;
    let mut class_members: Vec<Vec<usize>> = vec![Vec::new(); config.classes];
    for i in 0..n {
        class_members[class_of(i)].push(i);
    }

    let nodes = (0..n)
        .map(|i| {
            let class = class_of(i);
            NodeRow {
                id: format!("n{i}"),
                node_type: format!("t{}", i % config.node_types),
                label: Some(format!("c{class}")),
                features: gaussian_features(
                    config.feature_dim,
                    Some(class % config.feature_dim),
                    config.centroid_sep,
                    config.noise,
                    &mut rng,
                ),
            }
        })
        .collect();

    let edge_count = ((n as f64) * config.avg_degree / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(edge_count);
    for e in 0..edge_count {
        let u = rng.gen_range(0..n);
        let same_class = rng.gen::<f64>() < config.homophily;
        let pool_class = if same_class {
            class_of(u)
        } else if config.classes > 1 {
            let mut c = rng.gen_range(0..config.classes);
            while c == class_of(u) {
                c = rng.gen_range(0..config.classes);
            }
            c
        } else {
            class_of(u)
        };
        let pool = &class_members[pool_class];
        let mut v = pool[rng.gen_range(0..pool.len())];
        let mut guard = 0;
        while v == u && guard < 64 {
            v = pool[rng.gen_range(0..pool.len())];
            guard += 1;
        }
        if v == u {
            continue;
        }
        edges.push((
            format!("n{u}"),
            format!("n{v}"),
            format!("r{}", e % config.edge_types),
        ));
    }
    Records { nodes, edges }
}

const TWOHOP_MIDS_PER_CORE: usize = 2;
const TWOHOP_LEAVES_PER_MID: usize = 2;

fn twohop(config: &SynthConfig) -> Records {
    let mut rng = rng::stream(config.seed, rng::ROLE_SYNTH, 1, 0);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for i in 0..config.nodes {
        let class = i % config.classes;
        let core = format!("core{i}");
        nodes.push(NodeRow {
            id: core.clone(),
            node_type: "hub".into(),
            label: Some(format!("c{class}")),
            features: gaussian_features(config.feature_dim, None, 0.0, config.noise, &mut rng),
        });
        for j in 0..TWOHOP_MIDS_PER_CORE {
            let mid = format!("mid{i}_{j}");
            nodes.push(NodeRow {
                id: mid.clone(),
                node_type: "mid".into(),
                label: None,
                features: gaussian_features(config.feature_dim, None, 0.0, config.noise, &mut rng),
            });
            edges.push((core.clone(), mid.clone(), "t1".into()));
            for k in 0..TWOHOP_LEAVES_PER_MID {
                let leaf = format!("leaf{i}_{j}_{k}");
                nodes.push(NodeRow {
                    id: leaf.clone(),
                    node_type: "leaf".into(),
                    label: None,
                    features: gaussian_features(
                        config.feature_dim,
                        Some(class % config.feature_dim),
                        config.centroid_sep,
                        config.noise,
                        &mut rng,
                    ),
                });
                edges.push((mid.clone(), leaf.clone(), "t2".into()));
            }
        }
    }
    Records { nodes, edges }
}

fn records(config: &SynthConfig) -> Result<Records> {
    config.validate()?;
    Ok(match config.mode {
        SynthMode::Blocks => blocks(config),
        SynthMode::TwoHop => twohop(config),
    })
}

fn to_tsv(records: &Records) -> (String, String) {
    let mut nodes = String::new();
    for r in &records.nodes {
        nodes.push_str(&r.id);
        nodes.push('\t');
        nodes.push_str(&r.node_type);
        nodes.push('\t');
        nodes.push_str(r.label.as_deref().unwrap_or("-"));
        nodes.push('\t');
        for (i, v) in r.features.iter().enumerate() {
            if i > 0 {
                nodes.push(',');
            }
            nodes.push_str(&format!("{v}"));
        }
        nodes.push('\n');
    }
    let mut edges = String::new();
    for (src, dst, ty) in &records.edges {
        edges.push_str(&format!("{src}\t{dst}\t{ty}\n"));
    }
    (nodes, edges)
}

/// Writes the fixture in the ingestion TSV formats.
pub fn write_files(config: &SynthConfig, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    let recs = records(config)?;
    let (nodes, edges) = to_tsv(&recs);
    for (path, content) in [(nodes_path, nodes), (edges_path, edges)] {
        fs::write(path, content).map_err(|e| Error::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
    }
    Ok(())
}

/// Builds the fixture directly as a graph (same records as the files).
pub fn build_graph(config: &SynthConfig) -> Result<HeteroGraph> {
    let recs = records(config)?;
    let mut b = GraphBuilder::new();
    for r in recs.nodes {
        b.add_node(r.id, r.node_type, r.label.as_deref(), r.features);
    }
    for (src, dst, ty) in recs.edges {
        b.add_edge(src, dst, ty);
    }
    b.build()
}
