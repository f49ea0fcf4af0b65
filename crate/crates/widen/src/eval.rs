//! Micro-F1 scoring, transductive and inductive evaluation protocols, and
//! embedding export.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, SplitTag};
use crate::model::{forward, logits, ForwardOptions, ModelParams, ParamVars};
use crate::numeric::Tape;
use crate::parallel;
use crate::sampler::{sample_node, DeepWalk, NeighborCache, WideSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub micro_f1: f64,
    pub per_class: Vec<ClassCounts>,
    pub count: usize,
}

/// Micro-averaged F1 over globally pooled per-class counts:
/// `sum TP / (sum TP + (sum FP + sum FN) / 2)`. For single-label multiclass
/// this equals plain accuracy.
pub fn micro_f1(predictions: &[usize], labels: &[usize]) -> Result<EvalResult> {
    if predictions.is_empty() {
        return Err(Error::contract("micro_f1 on empty input"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::dim(
            "micro_f1",
            (1, predictions.len()),
            (1, labels.len()),
        ));
    }
    let classes = predictions
        .iter()
        .chain(labels)
        .max()
        .map_or(0, |&m| m + 1);
    let mut per_class = vec![ClassCounts::default(); classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            per_class[p].tp += 1;
        } else {
            per_class[p].fp += 1;
            per_class[y].fn_ += 1;
        }
    }
    let tp: usize = per_class.iter().map(|c| c.tp).sum();
    let fp: usize = per_class.iter().map(|c| c.fp).sum();
    let fun: usize = per_class.iter().map(|c| c.fn_).sum();
    let f1 = tp as f64 / (tp as f64 + 0.5 * (fp + fun) as f64);

    let accuracy = tp as f64 / predictions.len() as f64;
    debug_assert!(
        (f1 - accuracy).abs() < 1e-12,
        "micro-F1 {f1} must equal accuracy {accuracy} for single-label input"
    );
    Ok(EvalResult {
        micro_f1: f1,
        per_class,
        count: predictions.len(),
    })
}

/// One inference forward; returns the predicted class (argmax with ties
/// toward the lowest class id) and the embedding.
pub fn infer(
    g: &HeteroGraph,
    params: &ModelParams,
    wide: &WideSet,
    walks: &[DeepWalk],
    opts: ForwardOptions,
) -> Result<(usize, Vec<f64>)> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let step = forward(&mut tape, &pv, g, wide, walks, opts)?;
    let z = logits(&mut tape, &pv, step.v_prime)?;
    let scores = tape.value(z).data();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((best, tape.value(step.v_prime).data().to_vec()))
}

/// Scores every node carrying `tag`, forwarding each with its (possibly
/// downsampled) cached neighbor sets.
pub fn evaluate_transductive(
    g: &HeteroGraph,
    cache: &NeighborCache,
    params: &ModelParams,
    tag: SplitTag,
    opts: ForwardOptions,
    threads: usize,
) -> Result<EvalResult> {
    let nodes = g.indices_with_tag(tag);
    if nodes.is_empty() {
        return Err(Error::contract(format!("no nodes tagged {tag} to evaluate")));
    }
    let outcomes = parallel::ordered_map(&nodes, threads, |&t| {
        infer(g, params, &cache.wide[t], &cache.deep[t], opts).map(|(pred, _)| pred)
    });
    let mut predictions = Vec::with_capacity(nodes.len());
    for r in outcomes {
        predictions.push(r?);
    }
    let labels: Vec<usize> = nodes
        .iter()
        .map(|&t| {
            g.node(t)
                .label
                .ok_or_else(|| Error::contract(format!("node {t} has no label")))
        })
        .collect::<Result<_>>()?;
    micro_f1(&predictions, &labels)
}

/// Scores holdout nodes on the full graph with freshly sampled neighbor
/// sets (no downsampling at inference).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_inductive(
    full_graph: &HeteroGraph,
    holdout: &[usize],
    params: &ModelParams,
    n_wide: usize,
    n_deep: usize,
    phi: usize,
    eval_seed: u64,
    opts: ForwardOptions,
    threads: usize,
) -> Result<EvalResult> {
    if holdout.is_empty() {
        return Err(Error::contract("no holdout nodes to evaluate"));
    }
    let outcomes = parallel::ordered_map(holdout, threads, |&t| {
        let (wide, walks) = sample_node(full_graph, t, n_wide, n_deep, phi, eval_seed);
        infer(full_graph, params, &wide, &walks, opts).map(|(pred, _)| pred)
    });
    let mut predictions = Vec::with_capacity(holdout.len());
    for r in outcomes {
        predictions.push(r?);
    }
    let labels: Vec<usize> = holdout
        .iter()
        .map(|&t| {
            full_graph
                .node(t)
                .label
                .ok_or_else(|| Error::contract(format!("holdout node {t} has no label")))
        })
        .collect::<Result<_>>()?;
    micro_f1(&predictions, &labels)
}

/// Writes one line per node, in global index order:
/// `node_id <TAB> v1,v2,...,vd`.
pub fn export_embeddings(
    g: &HeteroGraph,
    cache: &NeighborCache,
    params: &ModelParams,
    opts: ForwardOptions,
    threads: usize,
    out_path: &Path,
) -> Result<()> {
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let outcomes = parallel::ordered_map(&nodes, threads, |&t| {
        infer(g, params, &cache.wide[t], &cache.deep[t], opts).map(|(_, emb)| emb)
    });
    let mut buffer = String::new();
    for (t, r) in outcomes.into_iter().enumerate() {
        let emb = r?;
        buffer.push_str(&g.node(t).id);
        buffer.push('\t');
        for (i, v) in emb.iter().enumerate() {
            if i > 0 {
                buffer.push(',');
            }
            buffer.push_str(&format!("{v}"));
        }
        buffer.push('\n');
    }
    fs::File::create(out_path)
        .and_then(|mut f| f.write_all(buffer.as_bytes()))
        .map_err(|e| Error::Io {
            path: out_path.display().to_string(),
            msg: e.to_string(),
        })
}
