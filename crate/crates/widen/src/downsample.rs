//! Attentive neighbor pruning: wide shrinking, deep pruning with
//! contextualized relay edges, and the KL-divergence trigger that gates
//! both.
//!
//! A set is only pruned when (a) it survived unchanged for two consecutive
//! epochs, (b) the attention distribution over it barely moved (KL below the
//! threshold), and (c) it is still above the lower bound. Every prune
//! changes the set fingerprint, so the next epoch's trigger is forced to
//! re-observe before it can fire again.

use crate::error::{Error, Result};
use crate::numeric::maxpool_pair;
use crate::sampler::{DeepWalk, WideSet};

/// Attention distribution recorded for one set in one epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KlSlot {
    pub dist: Option<Vec<f64>>,
    pub fingerprint: u64,
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownsampleMode {
    On,
    Off,
    /// Uses the signed variant `sum p_{z-1} ln(p_z / p_{z-1})` in the
    /// trigger comparison instead of the standard nonnegative divergence.
    LiteralKl,
}

impl std::str::FromStr for DownsampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(DownsampleMode::On),
            "off" => Ok(DownsampleMode::Off),
            "literal-kl" => Ok(DownsampleMode::LiteralKl),
            other => Err(Error::Config(format!(
                "downsampling must be on|off|literal-kl, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for DownsampleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DownsampleMode::On => "on",
            DownsampleMode::Off => "off",
            DownsampleMode::LiteralKl => "literal-kl",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DownsampleConfig {
    pub mode: DownsampleMode,
    pub r_wide: f64,
    pub r_deep: f64,
    pub k_wide: usize,
    pub k_deep: usize,
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        DownsampleConfig {
            mode: DownsampleMode::On,
            r_wide: 0.001,
            r_deep: 0.001,
            k_wide: 5,
            k_deep: 5,
        }
    }
}

impl DownsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_wide < 0.0 || self.r_deep < 0.0 {
            return Err(Error::Config("downsampling thresholds must be >= 0".into()));
        }
        if self.k_wide < 1 || self.k_deep < 1 {
            return Err(Error::Config("downsampling lower bounds must be >= 1".into()));
        }
        Ok(())
    }
}

/// `KL(prev || curr) = sum p_{z-1} ln(p_{z-1} / p_z)`, with the conventions
/// `0 ln(0/q) = 0` and `p > 0, q = 0 -> +inf`. A set that changed between
/// epochs has no comparable distribution: `+inf`.
pub fn kl_divergence(prev: &[f64], curr: &[f64], same_set: bool) -> Result<f64> {
    if !same_set {
        return Ok(f64::INFINITY);
    }
    if prev.len() != curr.len() {
        return Err(Error::contract(format!(
            "kl_divergence over the same set needs equal lengths, got {} and {}",
            prev.len(),
            curr.len()
        )));
    }
    let mut sum = 0.0;
    for (&p, &q) in prev.iter().zip(curr) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += p * (p / q).ln();
    }
    Ok(sum.max(0.0))
}

/// The formula as printed reads `sum p_{z-1} ln(p_z / p_{z-1})`, which is
/// `-KL(prev || curr) <= 0`; kept selectable for fidelity experiments.
pub fn literal_signed_kl(prev: &[f64], curr: &[f64], same_set: bool) -> Result<f64> {
    kl_divergence(prev, curr, same_set).map(|v| if v.is_finite() { -v } else { v })
}

/// Removes the member with the minimum neighbor attention weight (self
/// excluded, first occurrence on ties) and re-assigns contiguous local
/// indexes. `dist` covers the self position followed by the members.
pub fn shrink_wide(set: &mut WideSet, dist: &[f64]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::contract("shrink_wide on an empty set"));
    }
    if dist.len() != set.len() + 1 {
        return Err(Error::contract(format!(
            "shrink_wide: distribution of length {} does not cover a set of size {}",
            dist.len(),
            set.len()
        )));
    }
    let neighbor_weights = &dist[1..];
    let mut argmin = 0;
    for (i, &w) in neighbor_weights.iter().enumerate() {
        if w < neighbor_weights[argmin] {
            argmin = i;
        }
    }
    set.members.remove(argmin);
    set.reindex();
    Ok(())
}

/// Detached pack values from the epoch's packaging, used to build relay
/// edges. Index `i` corresponds to walk step `i + 1`.
#[derive(Debug, Clone)]
pub struct DeepPackSnapshot {
    /// Message pack of each step (`v_s` times its effective edge).
    pub packs: Vec<Vec<f64>>,
    /// Effective edge vector of each step (relay override if present,
    /// otherwise the edge type embedding).
    pub edges: Vec<Vec<f64>>,
}

/// Deletes the walk step with the minimum neighbor attention weight. If a
/// successor survives, it receives a contextualized relay edge
/// `maxpool(successor's effective edge, deleted step's pack)` so the path
/// semantics are preserved. Relay values are detached constants.
pub fn prune_deep(walk: &mut DeepWalk, dist: &[f64], snapshot: &DeepPackSnapshot) -> Result<()> {
    if walk.is_empty() {
        return Err(Error::contract("prune_deep on an empty walk"));
    }
    if dist.len() != walk.len() + 1 {
        return Err(Error::contract(format!(
            "prune_deep: distribution of length {} does not cover a walk of length {}",
            dist.len(),
            walk.len()
        )));
    }
    if snapshot.packs.len() != walk.len() || snapshot.edges.len() != walk.len() {
        return Err(Error::contract(
            "prune_deep: pack snapshot does not match the walk length",
        ));
    }
    let neighbor_weights = &dist[1..];
    let mut argmin = 0;
    for (i, &w) in neighbor_weights.iter().enumerate() {
        if w < neighbor_weights[argmin] {
            argmin = i;
        }
    }
    let s_prime = argmin + 1; // 1-based step to delete
    if s_prime < walk.len() {
        let relay = maxpool_pair(&snapshot.edges[s_prime], &snapshot.packs[s_prime - 1])?;
        walk.steps[s_prime].relay_override = Some(relay);
    }
    walk.steps.remove(s_prime - 1);
    walk.reindex();
    Ok(())
}

/// Evaluates the trigger for one set and records the current distribution
/// in its slot (the slot is always updated, fire or not).
#[allow(clippy::too_many_arguments)]
pub fn should_downsample(
    slot: &mut KlSlot,
    curr: &[f64],
    curr_fingerprint: u64,
    epoch: usize,
    threshold: f64,
    lower_bound: usize,
    set_size: usize,
    mode: DownsampleMode,
) -> Result<bool> {
    let fire = match (&slot.dist, mode) {
        (_, DownsampleMode::Off) => false,
        (None, _) => false,
        (Some(prev), _) => {
            let same_set = slot.fingerprint == curr_fingerprint;
            let kl = match mode {
                DownsampleMode::LiteralKl => literal_signed_kl(prev, curr, same_set)?,
                _ => kl_divergence(prev, curr, same_set)?,
            };
            epoch > 1 && kl < threshold && set_size > lower_bound
        }
    };
    slot.dist = Some(curr.to_vec());
    slot.fingerprint = curr_fingerprint;
    slot.epoch = epoch;
    Ok(fire)
}
