//! Seeded sampling of wide neighbor sets and deep random-walk sequences.
//!
//! Sets are sampled once before training and afterwards mutated only by the
//! downsampler; the KL trigger depends on a set staying identical across
//! consecutive epochs, which the fingerprints make checkable.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::downsample::KlSlot;
use crate::graph::HeteroGraph;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct WideMember {
    /// 1-based index local to the set; contiguous, re-assigned after shrinks.
    pub local: usize,
    /// Global node index.
    pub global: usize,
    /// Type of the edge linking the member to the target.
    pub edge_type: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WideSet {
    pub target: usize,
    pub members: Vec<WideMember>,
    /// Order-sensitive hash of member global indexes.
    pub fingerprint: u64,
}

impl WideSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn reindex(&mut self) {
        for (i, m) in self.members.iter_mut().enumerate() {
            m.local = i + 1;
        }
        self.fingerprint = fingerprint(self.members.iter().map(|m| m.global));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepStep {
    /// 1-based position in the walk; step 1 is a first-order neighbor of the
    /// target and its edge type is the edge linking it to the target.
    pub local: usize,
    pub global: usize,
    /// Type of the edge traversed from the predecessor (or target, for step 1).
    pub edge_type: usize,
    /// Contextualized relay edge replacing the type embedding during
    /// packaging after an upstream step was pruned. Length d.
    pub relay_override: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepWalk {
    pub target: usize,
    pub steps: Vec<DeepStep>,
    pub fingerprint: u64,
}

impl DeepWalk {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn reindex(&mut self) {
        for (i, s) in self.steps.iter_mut().enumerate() {
            s.local = i + 1;
        }
        self.fingerprint = fingerprint(self.steps.iter().map(|s| s.global));
    }
}

pub fn fingerprint(globals: impl Iterator<Item = usize>) -> u64 {
    let mut hasher = DefaultHasher::new();
    let mut count = 0usize;
    for g in globals {
        g.hash(&mut hasher);
        count += 1;
    }
    count.hash(&mut hasher);
    hasher.finish()
}

/// Per-node wide set, deep walks, and the KL bookkeeping that drives the
/// downsampling trigger.
#[derive(Debug, Clone)]
pub struct NeighborCache {
    pub wide: Vec<WideSet>,
    /// `deep[t][phi]`
    pub deep: Vec<Vec<DeepWalk>>,
    pub wide_slots: Vec<KlSlot>,
    pub deep_slots: Vec<Vec<KlSlot>>,
}

impl NeighborCache {
    pub fn num_nodes(&self) -> usize {
        self.wide.len()
    }

    pub fn phi(&self) -> usize {
        self.deep.first().map_or(0, |w| w.len())
    }

    pub fn total_wide_members(&self) -> usize {
        self.wide.iter().map(|w| w.len()).sum()
    }

    pub fn total_deep_members(&self) -> usize {
        self.deep
            .iter()
            .map(|walks| walks.iter().map(|w| w.len()).sum::<usize>())
            .sum()
    }

    /// Combined order-sensitive hash over every set, for whole-cache
    /// mutation checks.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        for w in &self.wide {
            w.fingerprint.hash(&mut hasher);
        }
        for walks in &self.deep {
            for w in walks {
                w.fingerprint.hash(&mut hasher);
            }
        }
        hasher.finish()
    }
}

/// Uniform sample without replacement of up to `n_wide` first-order
/// neighbors; the target itself is never a member. Low-degree nodes yield
/// the whole neighborhood rather than padded duplicates.
pub fn sample_wide(g: &HeteroGraph, t: usize, n_wide: usize, rng: &mut impl Rng) -> WideSet {
    let candidates: Vec<(usize, usize)> = g
        .neighbors(t)
        .expect("sample_wide: valid target")
        .iter()
        .copied()
        .filter(|&(n, _)| n != t)
        .collect();
    let amount = candidates.len().min(n_wide);
    let picked = rand::seq::index::sample(rng, candidates.len(), amount);
    let mut members: Vec<WideMember> = picked
        .iter()
        .map(|i| WideMember {
            local: 0,
            global: candidates[i].0,
            edge_type: candidates[i].1,
        })
        .collect();
    for (i, m) in members.iter_mut().enumerate() {
        m.local = i + 1;
    }
    let fp = fingerprint(members.iter().map(|m| m.global));
    WideSet {
        target: t,
        members,
        fingerprint: fp,
    }
}

/// Random walk of up to `n_deep` steps from `t`, choosing uniformly among
/// the current node's neighbors. The walk may revisit nodes but never steps
/// onto the target itself; it truncates at dead ends.
pub fn sample_deep(g: &HeteroGraph, t: usize, n_deep: usize, rng: &mut impl Rng) -> DeepWalk {
    let mut steps = Vec::new();
    let mut current = t;
    for s in 1..=n_deep {
        let candidates: Vec<(usize, usize)> = g
            .neighbors(current)
            .expect("sample_deep: valid node")
            .iter()
            .copied()
            .filter(|&(n, _)| n != t)
            .collect();
        if candidates.is_empty() {
            break;
        }
        let (global, edge_type) = candidates[rng.gen_range(0..candidates.len())];
        steps.push(DeepStep {
            local: s,
            global,
            edge_type,
            relay_override: None,
        });
        current = global;
    }
    let fp = fingerprint(steps.iter().map(|s| s.global));
    DeepWalk {
        target: t,
        steps,
        fingerprint: fp,
    }
}

/// One wide set and `phi` walks for every node, each drawn from an
/// independent stream keyed by `(seed, node, role, phi)`.
pub fn sample_all(
    g: &HeteroGraph,
    n_wide: usize,
    n_deep: usize,
    phi: usize,
    seed: u64,
) -> NeighborCache {
    let n = g.num_nodes();
    let mut wide = Vec::with_capacity(n);
    let mut deep = Vec::with_capacity(n);
    for t in 0..n {
        let mut wrng = rng::stream(seed, rng::ROLE_WIDE, t as u64, 0);
        wide.push(sample_wide(g, t, n_wide, &mut wrng));
        let mut walks = Vec::with_capacity(phi);
        for p in 0..phi {
            let mut drng = rng::stream(seed, rng::ROLE_DEEP, t as u64, p as u64);
            walks.push(sample_deep(g, t, n_deep, &mut drng));
        }
        deep.push(walks);
    }
    NeighborCache {
        wide_slots: vec![KlSlot::default(); n],
        deep_slots: vec![vec![KlSlot::default(); phi]; n],
        wide,
        deep,
    }
}

/// Fresh sets for a single node, used at inference time.
pub fn sample_node(
    g: &HeteroGraph,
    t: usize,
    n_wide: usize,
    n_deep: usize,
    phi: usize,
    seed: u64,
) -> (WideSet, Vec<DeepWalk>) {
    let mut wrng = rng::stream(seed, rng::ROLE_WIDE, t as u64, 0);
    let wide = sample_wide(g, t, n_wide, &mut wrng);
    let walks = (0..phi)
        .map(|p| {
            let mut drng = rng::stream(seed, rng::ROLE_DEEP, t as u64, p as u64);
            sample_deep(g, t, n_deep, &mut drng)
        })
        .collect();
    (wide, walks)
}
