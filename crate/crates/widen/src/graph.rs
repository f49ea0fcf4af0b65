//! Immutable heterogeneous graph with typed nodes/edges, raw features,
//! labels, and train/validation/test tags.
//!
//! Node and edge files are UTF-8 TSV:
//!
//! ```text
//! # nodes: node_id <TAB> node_type <TAB> label-or-"-" <TAB> f1,f2,...,fd
//! # edges: src_id  <TAB> dst_id    <TAB> edge_type
//! ```
//!
//! Lines starting with `#` are comments; CRLF endings are normalized to LF.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Prefix of synthesized per-node-type self-loop edge types.
pub const SELF_LOOP_PREFIX: &str = "self-loop:";

/// Insertion-ordered bidirectional name <-> id table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TypeTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl TypeTable {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Unlabeled,
    Train,
    Validation,
    Test,
    InductiveHoldout,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitTag::Unlabeled => "unlabeled",
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
            SplitTag::InductiveHoldout => "inductive-holdout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: String,
    pub node_type: usize,
    pub features: Vec<f64>,
    pub label: Option<usize>,
    pub split: SplitTag,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

/// Typed node/edge store. Structure is frozen after construction; only
/// split tags are assigned afterwards.
#[derive(Debug, Clone)]
pub struct HeteroGraph {
    nodes: Vec<NodeRecord>,
    adjacency: Vec<Vec<(usize, usize)>>,
    node_types: TypeTable,
    edge_types: TypeTable,
    labels: TypeTable,
    /// node type id -> synthesized self-loop edge type id
    self_loop: Vec<usize>,
    feature_dim: usize,
    id_index: HashMap<String, usize>,
    edge_record_count: usize,
}

struct NodeSpec {
    id: String,
    node_type: String,
    label: Option<String>,
    features: Vec<f64>,
    line: usize,
}

struct EdgeSpec {
    src: String,
    dst: String,
    edge_type: String,
    line: usize,
}

impl HeteroGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Total number of edge types, including the synthesized self-loop types.
    pub fn num_edge_types(&self) -> usize {
        self.edge_types.len()
    }

    pub fn num_node_types(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn node(&self, t: usize) -> &NodeRecord {
        &self.nodes[t]
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn node_types(&self) -> &TypeTable {
        &self.node_types
    }

    pub fn edge_types(&self) -> &TypeTable {
        &self.edge_types
    }

    pub fn labels(&self) -> &TypeTable {
        &self.labels
    }

    /// Number of edge records in the input (before any reverse insertion).
    pub fn edge_record_count(&self) -> usize {
        self.edge_record_count
    }

    /// Stored adjacency list of `t`, insertion-ordered; empty for isolated
    /// nodes. Entries are `(neighbor global index, edge type id)`.
    pub fn neighbors(&self, t: usize) -> Result<&[(usize, usize)]> {
        self.adjacency
            .get(t)
            .map(|v| v.as_slice())
            .ok_or(Error::Bounds {
                index: t,
                len: self.nodes.len(),
            })
    }

    pub fn degree(&self, t: usize) -> usize {
        self.adjacency.get(t).map_or(0, |v| v.len())
    }

    /// Synthesized self-loop edge type for a node type.
    pub fn self_loop_type(&self, node_type: usize) -> Result<usize> {
        self.self_loop.get(node_type).copied().ok_or_else(|| {
            Error::UnknownType {
                kind: "node type id",
                name: node_type.to_string(),
            }
        })
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].label.is_some())
            .collect()
    }

    pub fn indices_with_tag(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].split == tag)
            .collect()
    }

    /// Deterministically assigns train/validation/test tags to labeled
    /// nodes, then thins the train set to `label_fraction` of its size.
    /// Nodes already tagged as inductive holdout are never reassigned.
    pub fn split(
        &mut self,
        fractions: SplitFractions,
        label_fraction: f64,
        seed: u64,
    ) -> Result<()> {
        for (name, f) in [
            ("train", fractions.train),
            ("validation", fractions.validation),
            ("test", fractions.test),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} fraction {f} not in [0, 1]")));
            }
        }
        if fractions.train + fractions.validation + fractions.test > 1.0 + 1e-12 {
            return Err(Error::Config("split fractions sum to more than 1".into()));
        }
        if !(label_fraction > 0.0 && label_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "label fraction {label_fraction} not in (0, 1]"
            )));
        }

        let mut labeled: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| {
                self.nodes[i].label.is_some() && self.nodes[i].split != SplitTag::InductiveHoldout
            })
            .collect();
        if labeled.is_empty() {
            return Err(Error::contract("split: the graph has no labeled nodes"));
        }
        let mut rng = rng::stream(seed, rng::ROLE_SPLIT, 0, 0);
        labeled.shuffle(&mut rng);

        let total = labeled.len();
        let n_train = (fractions.train * total as f64).floor() as usize;
        let n_val = (fractions.validation * total as f64).floor() as usize;
        let n_test = (fractions.test * total as f64).floor() as usize;
        let kept_train = (label_fraction * n_train as f64).floor() as usize;

        for (pos, &idx) in labeled.iter().enumerate() {
            self.nodes[idx].split = if pos < kept_train {
                SplitTag::Train
            } else if pos < n_train {
                SplitTag::Unlabeled
            } else if pos < n_train + n_val {
                SplitTag::Validation
            } else if pos < n_train + n_val + n_test {
                SplitTag::Test
            } else {
                SplitTag::Unlabeled
            };
        }
        Ok(())
    }

    /// Tags a deterministic fraction of labeled nodes as inductive holdout.
    pub fn mark_inductive_holdout(&mut self, fraction: f64, seed: u64) -> Result<()> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!(
                "holdout fraction {fraction} not in [0, 1)"
            )));
        }
        let mut labeled = self.labeled_indices();
        if labeled.is_empty() {
            return Err(Error::contract("holdout: the graph has no labeled nodes"));
        }
        let mut rng = rng::stream(seed, rng::ROLE_HOLDOUT, 0, 0);
        labeled.shuffle(&mut rng);
        let n = (fraction * labeled.len() as f64).floor() as usize;
        for &idx in labeled.iter().take(n) {
            self.nodes[idx].split = SplitTag::InductiveHoldout;
        }
        Ok(())
    }

    /// Copy of the graph with every holdout node and all incident edges
    /// removed. Type and label tables are preserved so checkpoints trained
    /// on the filtered graph stay compatible with the full one.
    pub fn without_holdout(&self) -> HeteroGraph {
        let keep: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].split != SplitTag::InductiveHoldout)
            .collect();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let nodes: Vec<NodeRecord> = keep.iter().map(|&i| self.nodes[i].clone()).collect();
        let adjacency: Vec<Vec<(usize, usize)>> = keep
            .iter()
            .map(|&i| {
                self.adjacency[i]
                    .iter()
                    .filter(|(n, _)| remap[*n] != usize::MAX)
                    .map(|&(n, ty)| (remap[n], ty))
                    .collect()
            })
            .collect();
        let id_index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        HeteroGraph {
            nodes,
            adjacency,
            node_types: self.node_types.clone(),
            edge_types: self.edge_types.clone(),
            labels: self.labels.clone(),
            self_loop: self.self_loop.clone(),
            feature_dim: self.feature_dim,
            id_index,
            edge_record_count: self.edge_record_count,
        }
    }
}

/// Programmatic graph construction; `ingest` funnels into the same assembly.
#[derive(Default)]
pub struct GraphBuilder {
    nodes: Vec<NodeSpec>,
    edges: Vec<EdgeSpec>,
    undirected: bool,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            edges: Vec::new(),
            undirected: true,
        }
    }

    pub fn directed(mut self) -> Self {
        self.undirected = false;
        self
    }

    pub fn add_node(
        &mut self,
        id: impl Into<String>,
        node_type: impl Into<String>,
        label: Option<&str>,
        features: Vec<f64>,
    ) -> &mut Self {
        self.nodes.push(NodeSpec {
            id: id.into(),
            node_type: node_type.into(),
            label: label.map(|s| s.to_string()),
            features,
            line: 0,
        });
        self
    }

    pub fn add_edge(
        &mut self,
        src: impl Into<String>,
        dst: impl Into<String>,
        edge_type: impl Into<String>,
    ) -> &mut Self {
        self.edges.push(EdgeSpec {
            src: src.into(),
            dst: dst.into(),
            edge_type: edge_type.into(),
            line: 0,
        });
        self
    }

    pub fn build(self) -> Result<HeteroGraph> {
        assemble(self.nodes, self.edges, self.undirected, "<builder>")
    }
}

fn assemble(
    specs: Vec<NodeSpec>,
    edges: Vec<EdgeSpec>,
    undirected: bool,
    origin: &str,
) -> Result<HeteroGraph> {
    let mut node_types = TypeTable::default();
    let mut labels = TypeTable::default();
    let mut id_index: HashMap<String, usize> = HashMap::new();
    let mut nodes = Vec::with_capacity(specs.len());
    let mut feature_dim = None;

    for spec in specs {
        if id_index.contains_key(&spec.id) {
            return Err(Error::Ingest {
                path: origin.to_string(),
                line: spec.line,
                msg: format!("duplicate node id '{}'", spec.id),
            });
        }
        let dim = *feature_dim.get_or_insert(spec.features.len());
        if spec.features.len() != dim {
            return Err(Error::Ingest {
                path: origin.to_string(),
                line: spec.line,
                msg: format!(
                    "ragged feature row: expected {} values, found {}",
                    dim,
                    spec.features.len()
                ),
            });
        }
        let node_type = node_types.intern(&spec.node_type);
        let label = spec.label.as_deref().map(|l| labels.intern(l));
        id_index.insert(spec.id.clone(), nodes.len());
        nodes.push(NodeRecord {
            id: spec.id,
            node_type,
            features: spec.features,
            label,
            split: SplitTag::Unlabeled,
        });
    }

    let mut edge_types = TypeTable::default();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    let edge_record_count = edges.len();
    for edge in edges {
        if edge.edge_type.starts_with(SELF_LOOP_PREFIX) {
            return Err(Error::Ingest {
                path: origin.to_string(),
                line: edge.line,
                msg: format!(
                    "edge type '{}' uses the reserved '{}' prefix",
                    edge.edge_type, SELF_LOOP_PREFIX
                ),
            });
        }
        let src = *id_index.get(&edge.src).ok_or_else(|| Error::Ingest {
            path: origin.to_string(),
            line: edge.line,
            msg: format!("unknown node id '{}'", edge.src),
        })?;
        let dst = *id_index.get(&edge.dst).ok_or_else(|| Error::Ingest {
            path: origin.to_string(),
            line: edge.line,
            msg: format!("unknown node id '{}'", edge.dst),
        })?;
        let ty = edge_types.intern(&edge.edge_type);
        adjacency[src].push((dst, ty));
        if undirected && src != dst {
            adjacency[dst].push((src, ty));
        }
    }

    // one synthesized self-loop type per node type, after all real types
    let mut self_loop = Vec::with_capacity(node_types.len());
    for id in 0..node_types.len() {
        let name = format!("{}{}", SELF_LOOP_PREFIX, node_types.name(id).unwrap());
        self_loop.push(edge_types.intern(&name));
    }

    Ok(HeteroGraph {
        nodes,
        adjacency,
        node_types,
        edge_types,
        labels,
        self_loop,
        feature_dim: feature_dim.unwrap_or(0),
        id_index,
        edge_record_count,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(raw.replace("\r\n", "\n").lines().map(String::from).collect())
}

/// Builds a [`HeteroGraph`] from a nodes file and an edges file.
///
/// With `undirected` (the default everywhere in the pipeline) every edge is
/// also inserted reversed with the same type; a self-referencing edge is
/// inserted once.
pub fn ingest(nodes_path: &Path, edges_path: &Path, undirected: bool) -> Result<HeteroGraph> {
    let mut specs = Vec::new();
    for (lineno, line) in read_lines(nodes_path)?.iter().enumerate() {
        let line_num = lineno + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Ingest {
                path: nodes_path.display().to_string(),
                line: line_num,
                msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let mut features = Vec::new();
        if !fields[3].is_empty() {
            for piece in fields[3].split(',') {
                let v: f64 = piece.trim().parse().map_err(|_| Error::Ingest {
                    path: nodes_path.display().to_string(),
                    line: line_num,
                    msg: format!("bad feature value '{piece}'"),
                })?;
                features.push(v);
            }
        }
        specs.push(NodeSpec {
            id: fields[0].to_string(),
            node_type: fields[1].to_string(),
            label: match fields[2] {
                "-" => None,
                l => Some(l.to_string()),
            },
            features,
            line: line_num,
        });
    }

    let mut edges = Vec::new();
    for (lineno, line) in read_lines(edges_path)?.iter().enumerate() {
        let line_num = lineno + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Ingest {
                path: edges_path.display().to_string(),
                line: line_num,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        edges.push(EdgeSpec {
            src: fields[0].to_string(),
            dst: fields[1].to_string(),
            edge_type: fields[2].to_string(),
            line: line_num,
        });
    }

    // edge errors should point at the edges file
    let origin = edges_path.display().to_string();
    assemble(specs, edges, undirected, &origin).map_err(|e| match e {
        Error::Ingest { path, line, msg } if path == "<builder>" => Error::Ingest {
            path: origin.clone(),
            line,
            msg,
        },
        other => other,
    })
}
