//! Independent scalar-loop reference implementations and random fixture
//! builders shared by the integration suites.
//!
//! Everything here computes with plain `Vec<f64>` loops and never calls the
//! library's matrix or tape code, so agreement is evidence rather than
//! tautology.

// each test binary uses its own subset of this module; the explicit index
// loops are the point of a reference implementation
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use widen::graph::{GraphBuilder, HeteroGraph};
use widen::model::{DeepValues, ModelDims, ModelParams, ParamKey};
use widen::sampler::{fingerprint, DeepStep, DeepWalk, WideMember, WideSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

// ---- scalar kernels -----------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// x (len r) times an r x c matrix read entry-by-entry.
fn vec_mat(x: &[f64], rows: usize, cols: usize, at: &dyn Fn(usize, usize) -> f64) -> Vec<f64> {
    assert_eq!(x.len(), rows);
    let mut out = vec![0.0; cols];
    for j in 0..cols {
        for i in 0..rows {
            out[j] += x[i] * at(i, j);
        }
    }
    out
}

fn softmax(scores: &[f64], keep: &dyn Fn(usize) -> bool) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if keep(i) && s > max {
            max = s;
        }
    }
    let mut out = vec![0.0; scores.len()];
    let mut sum = 0.0;
    for (i, &s) in scores.iter().enumerate() {
        if keep(i) {
            out[i] = (s - max).exp();
            sum += out[i];
        }
    }
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Scalar triple-loop matrix product over nested vectors.
pub fn matmul_reference(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

// ---- scalar forward reference -------------------------------------------

fn param_at<'a>(params: &'a ModelParams, key: ParamKey) -> impl Fn(usize, usize) -> f64 + 'a {
    move |r, c| params.get(key).get(r, c)
}

fn embed(g: &HeteroGraph, params: &ModelParams, node: usize) -> Vec<f64> {
    let dims = params.dims();
    vec_mat(
        &g.node(node).features,
        dims.feature_dim,
        dims.embed_dim,
        &param_at(params, ParamKey::GNode),
    )
}

fn edge_vec(params: &ModelParams, ty: usize) -> Vec<f64> {
    let d = params.dims().embed_dim;
    (0..d).map(|j| params.get(ParamKey::GEdge).get(ty, j)).collect()
}

fn had(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn self_pack(g: &HeteroGraph, params: &ModelParams, target: usize) -> Vec<f64> {
    let loop_ty = g.self_loop_type(g.node(target).node_type).unwrap();
    had(&embed(g, params, target), &edge_vec(params, loop_ty))
}

fn attention_1q(
    params: &ModelParams,
    packs: &[Vec<f64>],
    q_key: ParamKey,
    k_key: ParamKey,
    v_key: ParamKey,
    values: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let d = params.dims().embed_dim;
    let q = vec_mat(&packs[0], d, d, &param_at(params, q_key));
    let keys: Vec<Vec<f64>> = packs
        .iter()
        .map(|p| vec_mat(p, d, d, &param_at(params, k_key)))
        .collect();
    let scores: Vec<f64> = keys.iter().map(|k| dot(&q, k) / (d as f64).sqrt()).collect();
    let a = softmax(&scores, &|_| true);
    let projected: Vec<Vec<f64>> = values
        .iter()
        .map(|v| vec_mat(v, d, d, &param_at(params, v_key)))
        .collect();
    let mut h = vec![0.0; d];
    for (w, vp) in a.iter().zip(&projected) {
        for j in 0..d {
            h[j] += w * vp[j];
        }
    }
    (h, a)
}

/// Fully independent forward pass; returns the output embedding, the wide
/// distribution, and the per-walk deep distributions.
pub fn oracle_forward(
    g: &HeteroGraph,
    params: &ModelParams,
    wide: &WideSet,
    walks: &[DeepWalk],
    deep_values: DeepValues,
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let d = params.dims().embed_dim;
    let t = wide.target;

    // wide packs and pass
    let mut wide_packs = vec![self_pack(g, params, t)];
    for m in &wide.members {
        wide_packs.push(had(&embed(g, params, m.global), &edge_vec(params, m.edge_type)));
    }
    let (h_wide, a_wide) = attention_1q(
        params,
        &wide_packs,
        ParamKey::WideQ,
        ParamKey::WideK,
        ParamKey::WideV,
        &wide_packs,
    );

    // deep walks
    let mut h_deep_all = Vec::new();
    let mut a_deep_all = Vec::new();
    for walk in walks {
        let mut packs = vec![self_pack(g, params, t)];
        for step in &walk.steps {
            let e = match &step.relay_override {
                Some(r) => r.clone(),
                None => edge_vec(params, step.edge_type),
            };
            packs.push(had(&embed(g, params, step.global), &e));
        }
        let n = packs.len();

        // masked successive self-attention: row r keeps cols >= r
        let qs: Vec<Vec<f64>> = packs
            .iter()
            .map(|p| vec_mat(p, d, d, &param_at(params, ParamKey::DeepQ)))
            .collect();
        let ks: Vec<Vec<f64>> = packs
            .iter()
            .map(|p| vec_mat(p, d, d, &param_at(params, ParamKey::DeepK)))
            .collect();
        let vs: Vec<Vec<f64>> = packs
            .iter()
            .map(|p| vec_mat(p, d, d, &param_at(params, ParamKey::DeepV)))
            .collect();
        let mut refined = vec![vec![0.0; d]; n];
        for r in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|c| dot(&qs[r], &ks[c]) / (d as f64).sqrt())
                .collect();
            let a = softmax(&scores, &|c| c >= r);
            for (c, w) in a.iter().enumerate() {
                for j in 0..d {
                    refined[r][j] += w * vs[c][j];
                }
            }
        }

        // second pass: query from the self pack, keys from refined packs,
        // values from raw or refined packs
        let q2 = vec_mat(&packs[0], d, d, &param_at(params, ParamKey::DeepPrimeQ));
        let k2: Vec<Vec<f64>> = refined
            .iter()
            .map(|h| vec_mat(h, d, d, &param_at(params, ParamKey::DeepPrimeK)))
            .collect();
        let scores: Vec<f64> = k2.iter().map(|k| dot(&q2, k) / (d as f64).sqrt()).collect();
        let a2 = softmax(&scores, &|_| true);
        let source = match deep_values {
            DeepValues::Packs => &packs,
            DeepValues::Refined => &refined,
        };
        let v2: Vec<Vec<f64>> = source
            .iter()
            .map(|p| vec_mat(p, d, d, &param_at(params, ParamKey::DeepPrimeV)))
            .collect();
        let mut h = vec![0.0; d];
        for (w, vp) in a2.iter().zip(&v2) {
            for j in 0..d {
                h[j] += w * vp[j];
            }
        }
        h_deep_all.push(h);
        a_deep_all.push(a2);
    }

    // fuse: mean deep, concat, affine, relu, normalize
    let mut mean_deep = vec![0.0; d];
    for h in &h_deep_all {
        for j in 0..d {
            mean_deep[j] += h[j] / h_deep_all.len() as f64;
        }
    }
    let mut cat = h_wide.clone();
    cat.extend_from_slice(&mean_deep);
    let mut pre = vec_mat(&cat, 2 * d, d, &param_at(params, ParamKey::FuseW));
    for j in 0..d {
        pre[j] += params.get(ParamKey::FuseB).get(0, j);
        if pre[j] < 0.0 {
            pre[j] = 0.0;
        }
    }
    let norm = dot(&pre, &pre).sqrt();
    let denom = norm + 1e-12;
    let v_prime = pre.iter().map(|x| x / denom).collect();
    (v_prime, a_wide, a_deep_all)
}

// ---- random fixtures -----------------------------------------------------

pub struct OracleFixture {
    pub graph: HeteroGraph,
    pub params: ModelParams,
    pub wide: WideSet,
    pub walks: Vec<DeepWalk>,
    pub deep_values: DeepValues,
}

/// Small random graph plus hand-assembled neighbor sets (sizes <= 4,
/// d <= 4), occasionally with relay overrides, for oracle comparisons.
pub fn random_fixture(seed: u64) -> OracleFixture {
    random_fixture_with(seed, 2, 4)
}

/// As [`random_fixture`] with a caller-chosen embedding width range.
pub fn random_fixture_with(seed: u64, d_min: usize, d_max: usize) -> OracleFixture {
    let mut r = rng(seed);
    let d = r.gen_range(d_min..=d_max);
    let d0 = r.gen_range(2..=5usize);
    let n_nodes = 8;
    let node_types = r.gen_range(1..=3usize);
    let edge_types = r.gen_range(1..=3usize);

    let mut builder = GraphBuilder::new();
    for i in 0..n_nodes {
        let features: Vec<f64> = (0..d0).map(|_| r.gen_range(-1.5..1.5)).collect();
        builder.add_node(
            format!("n{i}"),
            format!("t{}", i % node_types),
            Some(if i % 2 == 0 { "c0" } else { "c1" }),
            features,
        );
    }
    for i in 0..n_nodes {
        builder.add_edge(
            format!("n{i}"),
            format!("n{}", (i + 1) % n_nodes),
            format!("r{}", i % edge_types),
        );
    }
    let graph = builder.build().unwrap();
    let params = ModelParams::init(ModelDims::for_graph(&graph, d), seed.wrapping_add(101));

    let target = r.gen_range(0..n_nodes);
    let pick_other = |r: &mut ChaCha8Rng| {
        let mut v = r.gen_range(0..n_nodes);
        while v == target {
            v = r.gen_range(0..n_nodes);
        }
        v
    };

    let wide_len = r.gen_range(0..=4usize);
    let members: Vec<WideMember> = (0..wide_len)
        .map(|i| WideMember {
            local: i + 1,
            global: pick_other(&mut r),
            edge_type: r.gen_range(0..graph.num_edge_types()),
        })
        .collect();
    let wide = WideSet {
        target,
        fingerprint: fingerprint(members.iter().map(|m| m.global)),
        members,
    };

    let phi = r.gen_range(1..=3usize);
    let walks: Vec<DeepWalk> = (0..phi)
        .map(|_| {
            let len = r.gen_range(0..=4usize);
            let steps: Vec<DeepStep> = (0..len)
                .map(|s| DeepStep {
                    local: s + 1,
                    global: pick_other(&mut r),
                    edge_type: r.gen_range(0..graph.num_edge_types()),
                    relay_override: if r.gen_bool(0.3) {
                        Some((0..d).map(|_| r.gen_range(-1.0..1.0)).collect())
                    } else {
                        None
                    },
                })
                .collect();
            DeepWalk {
                target,
                fingerprint: fingerprint(steps.iter().map(|s| s.global)),
                steps,
            }
        })
        .collect();

    let deep_values = if r.gen_bool(0.5) {
        DeepValues::Packs
    } else {
        DeepValues::Refined
    };
    OracleFixture {
        graph,
        params,
        wide,
        walks,
        deep_values,
    }
}

/// Circulant graph (every node linked to its three successors both ways):
/// min degree 6, so wide sets reach `n_wide = 5` and walks never dead-end.
pub fn circulant_fixture(n: usize) -> HeteroGraph {
    let mut b = GraphBuilder::new();
    for i in 0..n {
        b.add_node(
            format!("n{i}"),
            if i % 2 == 0 { "A" } else { "B" },
            Some(if i % 2 == 0 { "c0" } else { "c1" }),
            vec![(i % 5) as f64 * 0.3 - 0.6, 1.0 - (i % 3) as f64 * 0.4, 0.1],
        );
    }
    for i in 0..n {
        for offset in 1..=3 {
            b.add_edge(
                format!("n{i}"),
                format!("n{}", (i + offset) % n),
                format!("r{}", (i + offset) % 3),
            );
        }
    }
    b.build().unwrap()
}
