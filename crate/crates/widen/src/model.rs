//! Message packaging, wide attentive passing, masked successive
//! self-attention with deep passing, and wide/deep fusion: the single-step
//! forward pass producing the updated target embedding and the attention
//! distributions the downsampler consumes.

use std::collections::HashMap;

use crate::downsample::DeepPackSnapshot;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::numeric::{Matrix, Tape, Var};
use crate::rng;
use crate::sampler::{DeepWalk, WideSet};

/// Identity of one trainable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKey {
    GNode,
    GEdge,
    WideQ,
    WideK,
    WideV,
    DeepQ,
    DeepK,
    DeepV,
    DeepPrimeQ,
    DeepPrimeK,
    DeepPrimeV,
    FuseW,
    FuseB,
    Classifier,
}

impl ParamKey {
    pub const ALL: [ParamKey; 14] = [
        ParamKey::GNode,
        ParamKey::GEdge,
        ParamKey::WideQ,
        ParamKey::WideK,
        ParamKey::WideV,
        ParamKey::DeepQ,
        ParamKey::DeepK,
        ParamKey::DeepV,
        ParamKey::DeepPrimeQ,
        ParamKey::DeepPrimeK,
        ParamKey::DeepPrimeV,
        ParamKey::FuseW,
        ParamKey::FuseB,
        ParamKey::Classifier,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKey::GNode => "g_node",
            ParamKey::GEdge => "g_edge",
            ParamKey::WideQ => "wide_q",
            ParamKey::WideK => "wide_k",
            ParamKey::WideV => "wide_v",
            ParamKey::DeepQ => "deep_q",
            ParamKey::DeepK => "deep_k",
            ParamKey::DeepV => "deep_v",
            ParamKey::DeepPrimeQ => "deep_prime_q",
            ParamKey::DeepPrimeK => "deep_prime_k",
            ParamKey::DeepPrimeV => "deep_prime_v",
            ParamKey::FuseW => "fuse_w",
            ParamKey::FuseB => "fuse_b",
            ParamKey::Classifier => "classifier",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamKey> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn shape(self, dims: ModelDims) -> (usize, usize) {
        let d = dims.embed_dim;
        match self {
            ParamKey::GNode => (dims.feature_dim, d),
            ParamKey::GEdge => (dims.num_edge_types, d),
            ParamKey::FuseW => (2 * d, d),
            ParamKey::FuseB => (1, d),
            ParamKey::Classifier => (d, dims.num_classes),
            _ => (d, d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub num_edge_types: usize,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn for_graph(g: &HeteroGraph, embed_dim: usize) -> Self {
        ModelDims {
            feature_dim: g.feature_dim(),
            embed_dim,
            num_edge_types: g.num_edge_types(),
            num_classes: g.num_classes(),
        }
    }
}

/// All trainable tensors. Exactly these receive gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    tensors: Vec<Matrix>,
}

impl ModelParams {
    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` for every weight matrix,
    /// zeros for the fusion bias.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let tensors = ParamKey::ALL
            .iter()
            .map(|&key| {
                let (rows, cols) = key.shape(dims);
                if key == ParamKey::FuseB {
                    return Matrix::zeros(rows, cols);
                }
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                let mut rng = rng::stream(seed, rng::ROLE_INIT, key.index() as u64, 0);
                let data = (0..rows * cols)
                    .map(|_| {
                        use rand::Rng;
                        bound * (2.0 * rng.gen::<f64>() - 1.0)
                    })
                    .collect();
                Matrix::from_vec(rows, cols, data).unwrap()
            })
            .collect();
        ModelParams { dims, tensors }
    }

    pub fn from_tensors(dims: ModelDims, tensors: Vec<Matrix>) -> Result<Self> {
        if tensors.len() != ParamKey::ALL.len() {
            return Err(Error::contract(format!(
                "expected {} tensors, got {}",
                ParamKey::ALL.len(),
                tensors.len()
            )));
        }
        for (key, t) in ParamKey::ALL.iter().zip(&tensors) {
            if t.shape() != key.shape(dims) {
                return Err(Error::dim(key.name(), key.shape(dims), t.shape()));
            }
        }
        Ok(ModelParams { dims, tensors })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn get(&self, key: ParamKey) -> &Matrix {
        &self.tensors[key.index()]
    }

    pub fn get_mut(&mut self, key: ParamKey) -> &mut Matrix {
        &mut self.tensors[key.index()]
    }

    pub fn tensors(&self) -> impl Iterator<Item = (ParamKey, &Matrix)> {
        ParamKey::ALL.iter().map(move |&k| (k, &self.tensors[k.index()]))
    }

    pub fn tensors_vec(&self) -> &[Matrix] {
        &self.tensors
    }

    /// Sum of squared entries over every tensor (the L2 penalty body).
    pub fn squared_norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Gradients for every trainable tensor, in [`ParamKey::ALL`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    tensors: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            tensors: params
                .tensors
                .iter()
                .map(|t| Matrix::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn get(&self, key: ParamKey) -> &Matrix {
        &self.tensors[key.index()]
    }

    pub fn get_mut(&mut self, key: ParamKey) -> &mut Matrix {
        &mut self.tensors[key.index()]
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(b, scale);
        }
    }

    /// Name of the first tensor containing a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        ParamKey::ALL
            .iter()
            .find(|k| !self.tensors[k.index()].all_finite())
            .map(|k| k.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeepValues {
    /// Values taken from the raw packs (the published form of the deep pass).
    Packs,
    /// Values taken from the sequentially refined packs.
    Refined,
}

impl std::str::FromStr for DeepValues {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "packs" => Ok(DeepValues::Packs),
            "refined" => Ok(DeepValues::Refined),
            other => Err(Error::Config(format!(
                "deep_values must be packs|refined, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    None,
    /// Zeroes the wide half of the fusion input.
    NoWide,
    /// Zeroes the deep half of the fusion input.
    NoDeep,
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no-wide" => Ok(Ablation::NoWide),
            "no-deep" => Ok(Ablation::NoDeep),
            other => Err(Error::Config(format!(
                "ablation must be none|no-wide|no-deep, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub deep_values: DeepValues,
    pub ablation: Ablation,
    /// Stacked message passing steps. 1 everywhere in practice; higher
    /// values re-run the pipeline with the previous output as the self
    /// embedding.
    pub steps: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            deep_values: DeepValues::Packs,
            ablation: Ablation::None,
            steps: 1,
        }
    }
}

/// Trainable tensors registered on a tape for one forward/backward pass.
pub struct ParamVars {
    vars: Vec<Var>,
    dims: ModelDims,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        let vars = params
            .tensors
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect();
        ParamVars {
            vars,
            dims: params.dims,
        }
    }

    pub fn var(&self, key: ParamKey) -> Var {
        self.vars[key.index()]
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    /// Gradients accumulated by the tape; tensors off the loss path get
    /// zeros.
    pub fn collect_grads(&self, tape: &Tape, params: &ModelParams) -> Gradients {
        let mut grads = Gradients::zeros_like(params);
        for &key in &ParamKey::ALL {
            if let Some(g) = tape.grad(self.var(key)) {
                grads.get_mut(key).add_scaled(g, 1.0);
            }
        }
        grads
    }
}

/// Successive-attention mask: position (row, col) is kept when
/// `row <= col`, so each pack draws only from itself and deeper ones.
pub fn build_mask(n: usize) -> Matrix {
    let mut mask = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..r {
            mask.set(r, c, f64::NEG_INFINITY);
        }
    }
    mask
}

/// `v_t = x_t G_node`, on tape.
pub fn node_embedding(tape: &mut Tape, pv: &ParamVars, x: &[f64]) -> Result<Var> {
    if x.len() != pv.dims.feature_dim {
        return Err(Error::dim(
            "node_embedding",
            (1, pv.dims.feature_dim),
            (1, x.len()),
        ));
    }
    let xc = tape.constant(Matrix::row_vector(x));
    tape.matmul(xc, pv.var(ParamKey::GNode))
}

/// Type embedding of an edge: row `edge_type` of `G_edge`, on tape.
pub fn edge_embedding(tape: &mut Tape, pv: &ParamVars, edge_type: usize) -> Result<Var> {
    if edge_type >= pv.dims.num_edge_types {
        return Err(Error::Bounds {
            index: edge_type,
            len: pv.dims.num_edge_types,
        });
    }
    tape.select_row(pv.var(ParamKey::GEdge), edge_type)
}

#[derive(Default)]
struct EmbedCache(HashMap<usize, Var>);

fn cached_node_embedding(
    tape: &mut Tape,
    pv: &ParamVars,
    g: &HeteroGraph,
    node: usize,
    cache: &mut EmbedCache,
) -> Result<Var> {
    if let Some(&v) = cache.0.get(&node) {
        return Ok(v);
    }
    let v = node_embedding(tape, pv, &g.node(node).features)?;
    cache.0.insert(node, v);
    Ok(v)
}

fn self_pack(
    tape: &mut Tape,
    pv: &ParamVars,
    g: &HeteroGraph,
    target: usize,
    self_emb: Var,
) -> Result<Var> {
    let loop_type = g.self_loop_type(g.node(target).node_type)?;
    let e = edge_embedding(tape, pv, loop_type)?;
    tape.hadamard(self_emb, e)
}

/// Wide message matrix: row 0 is the self pack, rows 1.. are the members'
/// packs in local-index order.
fn pack_wide(
    tape: &mut Tape,
    pv: &ParamVars,
    g: &HeteroGraph,
    set: &WideSet,
    self_emb: Var,
    cache: &mut EmbedCache,
) -> Result<Var> {
    let mut rows = Vec::with_capacity(set.len() + 1);
    rows.push(self_pack(tape, pv, g, set.target, self_emb)?);
    for member in &set.members {
        let v = cached_node_embedding(tape, pv, g, member.global, cache)?;
        let e = edge_embedding(tape, pv, member.edge_type)?;
        rows.push(tape.hadamard(v, e)?);
    }
    tape.stack_rows(&rows)
}

/// Deep message matrix plus the detached pack/edge values the pruner needs
/// for relay edges. A step with a relay override packs against the stored
/// constant instead of its edge type embedding.
fn pack_deep(
    tape: &mut Tape,
    pv: &ParamVars,
    g: &HeteroGraph,
    walk: &DeepWalk,
    self_emb: Var,
    cache: &mut EmbedCache,
) -> Result<(Var, DeepPackSnapshot)> {
    let d = pv.dims.embed_dim;
    let mut rows = Vec::with_capacity(walk.len() + 1);
    rows.push(self_pack(tape, pv, g, walk.target, self_emb)?);
    let mut snapshot = DeepPackSnapshot {
        packs: Vec::with_capacity(walk.len()),
        edges: Vec::with_capacity(walk.len()),
    };
    for step in &walk.steps {
        let v = cached_node_embedding(tape, pv, g, step.global, cache)?;
        let e = match &step.relay_override {
            Some(relay) => {
                if relay.len() != d {
                    return Err(Error::contract(format!(
                        "relay override of length {} on a d={} model",
                        relay.len(),
                        d
                    )));
                }
                tape.constant(Matrix::row_vector(relay))
            }
            None => edge_embedding(tape, pv, step.edge_type)?,
        };
        let pack = tape.hadamard(v, e)?;
        snapshot.edges.push(tape.value(e).data().to_vec());
        snapshot.packs.push(tape.value(pack).data().to_vec());
        rows.push(pack);
    }
    Ok((tape.stack_rows(&rows)?, snapshot))
}

/// Wide attentive pass: the self pack queries every pack, the attention
/// distribution weights the projected packs.
fn pass_wide(tape: &mut Tape, pv: &ParamVars, m: Var) -> Result<(Var, Var)> {
    let d = pv.dims.embed_dim;
    let m_t = tape.select_row(m, 0)?;
    let q = tape.matmul(m_t, pv.var(ParamKey::WideQ))?;
    let k = tape.matmul(m, pv.var(ParamKey::WideK))?;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let a = tape.softmax_rows(scaled, None)?;
    let v = tape.matmul(m, pv.var(ParamKey::WideV))?;
    let h = tape.matmul(a, v)?;
    Ok((h, a))
}

/// Masked self-attention over the pack sequence: each pack is refined by
/// itself and the packs deeper in the walk, never by shallower ones.
fn successive_attention(tape: &mut Tape, pv: &ParamVars, m: Var) -> Result<(Var, Var)> {
    let d = pv.dims.embed_dim;
    let n = tape.value(m).rows();
    let q = tape.matmul(m, pv.var(ParamKey::DeepQ))?;
    let k = tape.matmul(m, pv.var(ParamKey::DeepK))?;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let mask = build_mask(n);
    let a = tape.softmax_rows(scaled, Some(&mask))?;
    let v = tape.matmul(m, pv.var(ParamKey::DeepV))?;
    let h = tape.matmul(a, v)?;
    Ok((h, a))
}

/// Deep pass: the self pack queries the refined packs; values come from the
/// raw packs by default (`DeepValues::Packs`) or the refined ones.
fn pass_deep(
    tape: &mut Tape,
    pv: &ParamVars,
    refined: Var,
    m: Var,
    deep_values: DeepValues,
) -> Result<(Var, Var)> {
    let d = pv.dims.embed_dim;
    if tape.value(refined).shape() != tape.value(m).shape() {
        return Err(Error::dim(
            "pass_deep",
            tape.value(refined).shape(),
            tape.value(m).shape(),
        ));
    }
    let m_t = tape.select_row(m, 0)?;
    let q = tape.matmul(m_t, pv.var(ParamKey::DeepPrimeQ))?;
    let k = tape.matmul(refined, pv.var(ParamKey::DeepPrimeK))?;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let a = tape.softmax_rows(scaled, None)?;
    let value_source = match deep_values {
        DeepValues::Packs => m,
        DeepValues::Refined => refined,
    };
    let v = tape.matmul(value_source, pv.var(ParamKey::DeepPrimeV))?;
    let h = tape.matmul(a, v)?;
    Ok((h, a))
}

/// Mean-pools the deep representations, concatenates with the wide one,
/// then affine + ReLU + L2 normalization. An ablated branch contributes
/// zeros.
pub(crate) fn fuse(
    tape: &mut Tape,
    pv: &ParamVars,
    h_wide: Option<Var>,
    h_deep: &[Var],
) -> Result<Var> {
    let d = pv.dims.embed_dim;
    let wide = match h_wide {
        Some(h) => h,
        None => tape.constant(Matrix::zeros(1, d)),
    };
    let deep = if h_deep.is_empty() {
        tape.constant(Matrix::zeros(1, d))
    } else {
        let mut acc = h_deep[0];
        for &h in &h_deep[1..] {
            acc = tape.add(acc, h)?;
        }
        tape.scale(acc, 1.0 / h_deep.len() as f64)
    };
    let cat = tape.concat_cols(wide, deep)?;
    let affine = tape.matmul(cat, pv.var(ParamKey::FuseW))?;
    let biased = tape.add(affine, pv.var(ParamKey::FuseB))?;
    let activated = tape.relu(biased);
    tape.l2_normalize_row(activated, false)
}

/// Everything one forward pass produces besides the tape itself.
pub struct ForwardStep {
    /// Unit-norm 1 x d output embedding, on tape.
    pub v_prime: Var,
    /// Wide attention distribution (self first); empty under `NoWide`.
    pub wide_dist: Vec<f64>,
    /// Per-walk deep attention distributions; empty under `NoDeep`.
    pub deep_dists: Vec<Vec<f64>>,
    /// Per-walk successive-attention weight matrices, detached.
    pub deep_attention: Vec<Matrix>,
    /// Per-walk detached pack values for relay-edge construction.
    pub deep_snapshots: Vec<DeepPackSnapshot>,
}

/// Composes packaging, wide pass, per-walk successive attention and deep
/// pass, and fusion, all on one tape.
pub fn forward(
    tape: &mut Tape,
    pv: &ParamVars,
    g: &HeteroGraph,
    wide: &WideSet,
    walks: &[DeepWalk],
    opts: ForwardOptions,
) -> Result<ForwardStep> {
    let target = wide.target;
    if walks.iter().any(|w| w.target != target) {
        return Err(Error::contract(
            "forward: deep walks belong to a different target",
        ));
    }
    if opts.ablation != Ablation::NoDeep && walks.is_empty() {
        return Err(Error::contract("forward needs at least one deep walk"));
    }
    if opts.steps == 0 {
        return Err(Error::contract("forward needs at least one step"));
    }

    let mut cache = EmbedCache::default();
    let mut self_emb = cached_node_embedding(tape, pv, g, target, &mut cache)?;
    let mut result = None;
    for _ in 0..opts.steps {
        let (h_wide, wide_dist) = if opts.ablation == Ablation::NoWide {
            (None, Vec::new())
        } else {
            let m = pack_wide(tape, pv, g, wide, self_emb, &mut cache)?;
            let (h, a) = pass_wide(tape, pv, m)?;
            (Some(h), tape.value(a).data().to_vec())
        };

        let mut h_deep = Vec::new();
        let mut deep_dists = Vec::new();
        let mut deep_attention = Vec::new();
        let mut deep_snapshots = Vec::new();
        if opts.ablation != Ablation::NoDeep {
            for walk in walks {
                let (m, snapshot) = pack_deep(tape, pv, g, walk, self_emb, &mut cache)?;
                let (refined, attn) = successive_attention(tape, pv, m)?;
                let (h, a) = pass_deep(tape, pv, refined, m, opts.deep_values)?;
                h_deep.push(h);
                deep_dists.push(tape.value(a).data().to_vec());
                deep_attention.push(tape.value(attn).clone());
                deep_snapshots.push(snapshot);
            }
        }

        let v_prime = fuse(tape, pv, h_wide, &h_deep)?;
        self_emb = v_prime;
        result = Some(ForwardStep {
            v_prime,
            wide_dist,
            deep_dists,
            deep_attention,
            deep_snapshots,
        });
    }
    Ok(result.unwrap())
}

/// Class logits for an embedding: `v C`, on tape.
pub fn logits(tape: &mut Tape, pv: &ParamVars, v: Var) -> Result<Var> {
    tape.matmul(v, pv.var(ParamKey::Classifier))
}
