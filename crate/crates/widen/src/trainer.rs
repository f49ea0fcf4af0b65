//! Mini-batch training: cross-entropy objective with optional L2
//! regularization, gradient steps, epoch accounting, and downsampling
//! orchestration.
//!
//! Each batch forwards its targets on private tapes, merges gradients in
//! target order (deterministic for any thread count), takes one optimizer
//! step, and only then applies the recorded attention distributions to the
//! downsampling triggers.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::downsample::{
    prune_deep, should_downsample, shrink_wide, DeepPackSnapshot, DownsampleConfig,
};
use crate::error::{Error, Result};
use crate::eval::evaluate_transductive;
use crate::graph::{HeteroGraph, SplitTag};
use crate::model::{
    forward, logits, ForwardOptions, Gradients, ModelDims, ModelParams, ParamVars,
};
use crate::numeric::{Matrix, Tape};
use crate::parallel;
use crate::rng;
use crate::sampler::NeighborCache;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::adam()),
            other => Err(Error::Config(format!(
                "optimizer must be sgd|adam, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub n_wide: usize,
    pub n_deep: usize,
    pub phi: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// L2 strength; 0 disables the penalty.
    pub l2_strength: f64,
    pub downsample: DownsampleConfig,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Early-stop epochs without validation improvement; 0 disables.
    pub patience: usize,
    pub threads: usize,
    pub forward: ForwardOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 128,
            n_wide: 20,
            n_deep: 20,
            phi: 10,
            batch_size: 32,
            learning_rate: 1e-4,
            max_epochs: 100,
            l2_strength: 0.01,
            downsample: DownsampleConfig::default(),
            seed: 0,
            optimizer: Optimizer::adam(),
            patience: 0,
            threads: 1,
            forward: ForwardOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 1 {
            return Err(Error::Config("embed dim must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max epochs must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.phi < 1 {
            return Err(Error::Config("phi must be >= 1".into()));
        }
        if self.threads < 1 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        self.downsample.validate()
    }
}

/// Everything one epoch reports.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub val_f1: Option<f64>,
    pub seconds: f64,
    /// Surviving members over all wide sets at epoch end.
    pub wide_members: usize,
    /// Surviving members over all deep walks at epoch end.
    pub deep_members: usize,
    /// Shrinks plus prunes fired during the epoch.
    pub prunes_fired: usize,
    /// Attention positions processed this epoch, from set sizes at forward
    /// time: `sum (|W|+1) + sum_phi (|D_phi|+1)` over batch targets.
    pub analytic_messages: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// TSV with columns `epoch loss val_f1 seconds wide_members
    /// deep_members`, preceded by `#`-prefixed header lines.
    pub fn to_tsv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("epoch\tloss\tval_f1\tseconds\twide_members\tdeep_members\n");
        for e in &self.epochs {
            let val = e
                .val_f1
                .map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!(
                "{}\t{:.9}\t{}\t{:.6}\t{}\t{}\n",
                e.epoch, e.loss, val, e.seconds, e.wide_members, e.deep_members
            ));
        }
        out
    }
}

/// Adam moment estimates (unused for plain SGD).
pub struct OptimizerState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: usize,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors_vec()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One gradient step with rate `tau`. Rejects non-finite gradients,
/// naming the offending tensor.
pub fn step(
    params: &mut ModelParams,
    grads: &Gradients,
    optimizer: Optimizer,
    tau: f64,
    state: &mut OptimizerState,
) -> Result<()> {
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient for tensor '{name}'")));
    }
    match optimizer {
        Optimizer::Sgd => {
            for &key in &crate::model::ParamKey::ALL {
                let g = grads.get(key).clone();
                params.get_mut(key).add_scaled(&g, -tau);
            }
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            for idx in 0..params.tensors_vec().len() {
                let key = crate::model::ParamKey::ALL[idx];
                let g = grads.get(key);
                let m = &mut state.m[idx];
                for (mi, &gi) in m.data_mut().iter_mut().zip(g.data()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                }
                let v = &mut state.v[idx];
                for (vi, &gi) in v.data_mut().iter_mut().zip(g.data()) {
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                }
                let theta = params.get_mut(key);
                for ((ti, &mi), &vi) in theta
                    .data_mut()
                    .iter_mut()
                    .zip(state.m[idx].data())
                    .zip(state.v[idx].data())
                {
                    let m_hat = mi / bc1;
                    let v_hat = vi / bc2;
                    *ti -= tau * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
    }
    Ok(())
}

/// Distributions and pack snapshots recorded for one batch target.
#[derive(Debug)]
pub struct TargetRecord {
    pub target: usize,
    pub wide_dist: Vec<f64>,
    pub deep_dists: Vec<Vec<f64>>,
    pub deep_snapshots: Vec<DeepPackSnapshot>,
}

/// Forwards and backwards one batch of labeled targets. Returns the batch
/// loss (mean cross-entropy plus the L2 penalty), merged gradients, and the
/// per-target attention records.
pub fn batch_pass(
    g: &HeteroGraph,
    cache: &NeighborCache,
    params: &ModelParams,
    targets: &[usize],
    config: &TrainConfig,
) -> Result<(f64, Gradients, Vec<TargetRecord>)> {
    if targets.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let outcomes = parallel::ordered_map(targets, config.threads, |&t| -> Result<_> {
        let label = g.node(t).label.ok_or_else(|| {
            Error::contract(format!("unlabeled node {} ('{}') in batch", t, g.node(t).id))
        })?;
        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, params);
        let step = forward(&mut tape, &pv, g, &cache.wide[t], &cache.deep[t], config.forward)?;
        let z = logits(&mut tape, &pv, step.v_prime)?;
        let ce = tape.cross_entropy_logits(z, label)?;
        let value = tape.value(ce).scalar();
        tape.backward(ce)?;
        let grads = pv.collect_grads(&tape, params);
        Ok((
            value,
            grads,
            TargetRecord {
                target: t,
                wide_dist: step.wide_dist,
                deep_dists: step.deep_dists,
                deep_snapshots: step.deep_snapshots,
            },
        ))
    });

    let scale = 1.0 / targets.len() as f64;
    let mut total = 0.0;
    let mut merged = Gradients::zeros_like(params);
    let mut records = Vec::with_capacity(targets.len());
    for outcome in outcomes {
        let (value, grads, record) = outcome?;
        total += value * scale;
        merged.add_scaled(&grads, scale);
        records.push(record);
    }

    if config.l2_strength > 0.0 {
        total += config.l2_strength * params.squared_norm();
        for (key, tensor) in params.tensors() {
            merged
                .get_mut(key)
                .add_scaled(tensor, 2.0 * config.l2_strength);
        }
    }
    Ok((total, merged, records))
}

/// Loss value only, as a pure function of the parameters; the
/// finite-difference oracle re-evaluates this under perturbation.
pub fn batch_loss_value(
    g: &HeteroGraph,
    cache: &NeighborCache,
    params: &ModelParams,
    targets: &[usize],
    config: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for &t in targets {
        let label = g.node(t).label.ok_or_else(|| {
            Error::contract(format!("unlabeled node {} ('{}') in batch", t, g.node(t).id))
        })?;
        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, params);
        let step = forward(&mut tape, &pv, g, &cache.wide[t], &cache.deep[t], config.forward)?;
        let z = logits(&mut tape, &pv, step.v_prime)?;
        let ce = tape.cross_entropy_logits(z, label)?;
        total += tape.value(ce).scalar();
    }
    total /= targets.len() as f64;
    if config.l2_strength > 0.0 {
        total += config.l2_strength * params.squared_norm();
    }
    Ok(total)
}

fn apply_downsampling(
    cache: &mut NeighborCache,
    records: &[TargetRecord],
    epoch: usize,
    config: &DownsampleConfig,
) -> Result<usize> {
    let mut fired = 0;
    for record in records {
        let t = record.target;
        let wide = &mut cache.wide[t];
        if !record.wide_dist.is_empty() && !wide.is_empty() {
            let fire = should_downsample(
                &mut cache.wide_slots[t],
                &record.wide_dist,
                wide.fingerprint,
                epoch,
                config.r_wide,
                config.k_wide,
                wide.len(),
                config.mode,
            )?;
            if fire {
                shrink_wide(wide, &record.wide_dist)?;
                fired += 1;
            }
        }
        for (phi, dist) in record.deep_dists.iter().enumerate() {
            let walk = &mut cache.deep[t][phi];
            if dist.is_empty() || walk.is_empty() {
                continue;
            }
            let fire = should_downsample(
                &mut cache.deep_slots[t][phi],
                dist,
                walk.fingerprint,
                epoch,
                config.r_deep,
                config.k_deep,
                walk.len(),
                config.mode,
            )?;
            if fire {
                prune_deep(walk, dist, &record.deep_snapshots[phi])?;
                fired += 1;
            }
        }
    }
    Ok(fired)
}

const CONVERGENCE_REL_TOL: f64 = 1e-5;
const CONVERGENCE_WINDOW: usize = 3;

fn converged(losses: &[f64]) -> bool {
    if losses.len() < CONVERGENCE_WINDOW + 1 {
        return false;
    }
    losses
        .windows(2)
        .rev()
        .take(CONVERGENCE_WINDOW)
        .all(|w| (w[1] - w[0]).abs() / w[0].abs().max(1e-12) < CONVERGENCE_REL_TOL)
}

/// Runs the training loop over the train-tagged nodes: seeded epoch
/// shuffles, batch gradient steps, post-step downsampling, and stopping on
/// loss convergence, validation patience, or the epoch cap.
pub fn train(
    g: &HeteroGraph,
    cache: &mut NeighborCache,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    let train_nodes = g.indices_with_tag(SplitTag::Train);
    if train_nodes.is_empty() {
        return Err(Error::contract("training needs at least one train-tagged node"));
    }
    let val_nodes = g.indices_with_tag(SplitTag::Validation);

    let dims = ModelDims::for_graph(g, config.embed_dim);
    let mut params = ModelParams::init(dims, config.seed);
    let mut opt_state = OptimizerState::new(&params);
    let mut report = TrainReport::default();
    let mut losses = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut patience_left = config.patience;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut order = train_nodes.clone();
        order.shuffle(&mut rng::stream(config.seed, rng::ROLE_SHUFFLE, epoch as u64, 0));

        let mut epoch_loss = 0.0;
        let mut prunes_fired = 0;
        let mut analytic_messages = 0usize;
        for batch in order.chunks(config.batch_size) {
            for &t in batch {
                analytic_messages += cache.wide[t].len() + 1;
                analytic_messages += cache.deep[t].iter().map(|w| w.len() + 1).sum::<usize>();
            }
            let (value, grads, records) = batch_pass(g, cache, &params, batch, config)?;
            step(
                &mut params,
                &grads,
                config.optimizer,
                config.learning_rate,
                &mut opt_state,
            )?;
            prunes_fired += apply_downsampling(cache, &records, epoch, &config.downsample)?;
            epoch_loss += value * batch.len() as f64;
        }
        epoch_loss /= order.len() as f64;
        losses.push(epoch_loss);

        let val_f1 = if val_nodes.is_empty() {
            None
        } else {
            Some(
                evaluate_transductive(
                    g,
                    cache,
                    &params,
                    SplitTag::Validation,
                    config.forward,
                    config.threads,
                )?
                .micro_f1,
            )
        };

        report.epochs.push(EpochStats {
            epoch,
            loss: epoch_loss,
            val_f1,
            seconds: started.elapsed().as_secs_f64(),
            wide_members: cache.total_wide_members(),
            deep_members: cache.total_deep_members(),
            prunes_fired,
            analytic_messages,
        });

        if converged(&losses) {
            break;
        }
        if config.patience > 0 {
            if let Some(v) = val_f1 {
                if v > best_val {
                    best_val = v;
                    patience_left = config.patience;
                } else if patience_left == 0 {
                    break;
                } else {
                    patience_left -= 1;
                }
            }
        }
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::downsample::DownsampleMode;
    use crate::graph::{GraphBuilder, SplitFractions};
    use crate::model::ParamKey;
    use crate::sampler::sample_all;

    fn small_fixture(n: usize) -> HeteroGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            let class = i % 2;
            b.add_node(
                format!("n{i}"),
                if i % 2 == 0 { "A" } else { "B" },
                Some(&format!("c{class}")),
                vec![
                    if class == 0 { 1.0 } else { -1.0 },
                    0.25 * (i as f64 % 4.0),
                    if class == 0 { -0.5 } else { 0.5 },
                ],
            );
        }
        for i in 0..n {
            b.add_edge(format!("n{i}"), format!("n{}", (i + 2) % n), format!("r{}", i % 3));
        }
        b.build().unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            embed_dim: 8,
            n_wide: 3,
            n_deep: 3,
            phi: 2,
            batch_size: 8,
            learning_rate: 1e-2,
            max_epochs: 5,
            l2_strength: 0.0,
            seed: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sgd_step_example() {
        let g = small_fixture(6);
        let dims = ModelDims::for_graph(&g, 2);
        let mut params = ModelParams::init(dims, 0);
        for (key, _) in params.clone().tensors() {
            params.get_mut(key).data_mut().fill(1.0);
        }
        let mut grads = Gradients::zeros_like(&params);
        for &key in &ParamKey::ALL {
            grads.get_mut(key).data_mut().fill(2.0);
        }
        let mut state = OptimizerState::new(&params);
        step(&mut params, &grads, Optimizer::Sgd, 0.1, &mut state).unwrap();
        for (_, t) in params.tensors() {
            for &v in t.data() {
                assert!((v - 0.8).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let g = small_fixture(6);
        let dims = ModelDims::for_graph(&g, 2);
        let mut params = ModelParams::init(dims, 3);
        let before = params.clone();
        let grads = Gradients::zeros_like(&params);
        let mut state = OptimizerState::new(&params);
        step(&mut params, &grads, Optimizer::adam(), 0.1, &mut state).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_moves_by_tau_in_minus_sign_direction() {
        let g = small_fixture(6);
        let dims = ModelDims::for_graph(&g, 2);
        let mut params = ModelParams::init(dims, 4);
        let before = params.clone();
        let mut grads = Gradients::zeros_like(&params);
        grads.get_mut(ParamKey::FuseB).data_mut().fill(3.0);
        let mut state = OptimizerState::new(&params);
        let tau = 0.05;
        step(&mut params, &grads, Optimizer::adam(), tau, &mut state).unwrap();
        // bias-corrected m_hat / sqrt(v_hat) = sign(g) on the first step
        for (a, b) in params
            .get(ParamKey::FuseB)
            .data()
            .iter()
            .zip(before.get(ParamKey::FuseB).data())
        {
            assert!((a - (b - tau)).abs() < tau * 1e-6, "{a} vs {b}");
        }
        // untouched tensors stay put
        assert_eq!(params.get(ParamKey::WideQ), before.get(ParamKey::WideQ));
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let g = small_fixture(6);
        let dims = ModelDims::for_graph(&g, 2);
        let mut params = ModelParams::init(dims, 5);
        let mut grads = Gradients::zeros_like(&params);
        grads.get_mut(ParamKey::DeepK).data_mut()[0] = f64::NAN;
        let mut state = OptimizerState::new(&params);
        let err = step(&mut params, &grads, Optimizer::Sgd, 0.1, &mut state)
            .unwrap_err()
            .to_string();
        assert!(err.contains("deep_k"), "{err}");
    }

    #[test]
    fn uniform_prediction_loss_is_ln_c() {
        // all-zero params give a zero embedding and zero logits
        let mut g = small_fixture(8);
        g.split(SplitFractions { train: 1.0, validation: 0.0, test: 0.0 }, 1.0, 0)
            .unwrap();
        let cache = sample_all(&g, 3, 3, 2, 0);
        let config = quick_config();
        let dims = ModelDims::for_graph(&g, config.embed_dim);
        let mut params = ModelParams::init(dims, 0);
        for &key in &ParamKey::ALL {
            params.get_mut(key).data_mut().fill(0.0);
        }
        let targets = g.indices_with_tag(SplitTag::Train);
        let loss = batch_loss_value(&g, &cache, &params, &targets, &config).unwrap();
        assert!((loss - (g.num_classes() as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn l2_penalty_worked_example() {
        let g = small_fixture(8);
        let dims = ModelDims::for_graph(&g, 2);
        let mut params = ModelParams::init(dims, 0);
        for &key in &ParamKey::ALL {
            params.get_mut(key).data_mut().fill(0.0);
        }
        params.get_mut(ParamKey::FuseB).data_mut().copy_from_slice(&[1.0, 2.0]);
        assert!((0.01 * params.squared_norm() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unlabeled_node_in_batch_is_a_contract_violation() {
        let mut b = GraphBuilder::new();
        b.add_node("u", "A", None, vec![1.0]);
        let g = b.build().unwrap();
        let cache = sample_all(&g, 2, 2, 1, 0);
        let config = quick_config();
        let dims = ModelDims::for_graph(&g, config.embed_dim);
        let params = ModelParams::init(dims, 0);
        let err = batch_pass(&g, &cache, &params, &[0], &config).unwrap_err();
        assert!(err.to_string().contains("unlabeled"));
    }

    #[test]
    fn training_loss_decreases_on_fixture() {
        let mut g = small_fixture(24);
        g.split(SplitFractions { train: 0.8, validation: 0.2, test: 0.0 }, 1.0, 2)
            .unwrap();
        let config = quick_config();
        let mut cache = sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
        let (_, report) = train(&g, &mut cache, &config).unwrap();
        assert!(report.epochs.len() >= 2);
        let first = report.epochs.first().unwrap().loss;
        let last = report.epochs.last().unwrap().loss;
        assert!(last < first, "loss {first} -> {last}");
    }

    #[test]
    fn single_epoch_never_downsamples() {
        let mut g = small_fixture(16);
        g.split(SplitFractions { train: 1.0, validation: 0.0, test: 0.0 }, 1.0, 2)
            .unwrap();
        let mut config = quick_config();
        config.max_epochs = 1;
        config.downsample.r_wide = f64::INFINITY;
        config.downsample.r_deep = f64::INFINITY;
        config.downsample.k_wide = 1;
        config.downsample.k_deep = 1;
        let mut cache = sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
        let before = cache.fingerprint();
        let (_, report) = train(&g, &mut cache, &config).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert_eq!(report.epochs[0].prunes_fired, 0);
        assert_eq!(cache.fingerprint(), before);
    }

    #[test]
    fn downsampling_off_never_mutates_the_cache() {
        let mut g = small_fixture(16);
        g.split(SplitFractions { train: 1.0, validation: 0.0, test: 0.0 }, 1.0, 2)
            .unwrap();
        let mut config = quick_config();
        config.max_epochs = 6;
        config.downsample.mode = DownsampleMode::Off;
        let mut cache = sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
        let before = cache.fingerprint();
        let (_, report) = train(&g, &mut cache, &config).unwrap();
        assert_eq!(cache.fingerprint(), before);
        assert!(report.epochs.iter().all(|e| e.prunes_fired == 0));
        let w0 = report.epochs[0].wide_members;
        assert!(report.epochs.iter().all(|e| e.wide_members == w0));
    }

    #[test]
    fn training_is_deterministic() {
        let mut g = small_fixture(16);
        g.split(SplitFractions { train: 0.75, validation: 0.25, test: 0.0 }, 1.0, 2)
            .unwrap();
        let config = quick_config();
        let run = || {
            let mut cache =
                sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
            train(&g, &mut cache, &config).unwrap()
        };
        let (p1, r1) = run();
        let (p2, r2) = run();
        assert_eq!(p1, p2);
        assert_eq!(r1.epochs.len(), r2.epochs.len());
        for (a, b) in r1.epochs.iter().zip(&r2.epochs) {
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.val_f1, b.val_f1);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut g = small_fixture(16);
        g.split(SplitFractions { train: 1.0, validation: 0.0, test: 0.0 }, 1.0, 2)
            .unwrap();
        let mut config = quick_config();
        config.max_epochs = 3;
        let run = |threads: usize| {
            let mut c = config.clone();
            c.threads = threads;
            let mut cache = sample_all(&g, c.n_wide, c.n_deep, c.phi, c.seed);
            train(&g, &mut cache, &c).unwrap().0
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn patience_stops_training_early() {
        let mut g = small_fixture(24);
        g.split(SplitFractions { train: 0.5, validation: 0.5, test: 0.0 }, 1.0, 2)
            .unwrap();
        let mut config = quick_config();
        config.max_epochs = 40;
        config.learning_rate = 1e-6; // validation F1 cannot improve
        config.patience = 2;
        let mut cache = sample_all(&g, config.n_wide, config.n_deep, config.phi, config.seed);
        let (_, report) = train(&g, &mut cache, &config).unwrap();
        assert!(
            report.epochs.len() < 40,
            "ran all {} epochs",
            report.epochs.len()
        );
    }

    #[test]
    fn convergence_window_detects_a_plateau() {
        assert!(!converged(&[1.0, 1.0, 1.0]));
        assert!(converged(&[1.0, 1.0, 1.0, 1.0]));
        assert!(!converged(&[2.0, 1.5, 1.0, 0.5]));
        assert!(converged(&[2.0, 1.0, 1.0 + 1e-9, 1.0, 1.0 - 1e-9]));
    }
}
