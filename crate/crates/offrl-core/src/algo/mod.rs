//! Offline learners: behavior cloning, TD3-BC, BCQ, and IQL.
//!
//! Each learner exposes a single-gradient-update `update` call plus
//! immutable [`PolicyCheckpoint`] snapshots, and trains purely from a
//! [`TransitionDataset`] — there is no environment handle anywhere in the
//! training path.

mod bc;
mod bcq;
mod iql;
mod td3bc;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{compute_normalization, NormalizationStats, TransitionDataset};
use crate::env::Policy;
use crate::error::CoreError;
use crate::nn::{forward, init_params, Adam, MlpSpec, Params};
use crate::rng::{stream_rng, Stream};

pub use iql::expectile_loss;

/// Algorithm identifiers, stable across config files and run records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AlgoId {
    Bc,
    Td3Bc,
    Bcq,
    Iql,
}

impl AlgoId {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgoId::Bc => "bc",
            AlgoId::Td3Bc => "td3bc",
            AlgoId::Bcq => "bcq",
            AlgoId::Iql => "iql",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s {
            "bc" => Ok(AlgoId::Bc),
            "td3bc" => Ok(AlgoId::Td3Bc),
            "bcq" => Ok(AlgoId::Bcq),
            "iql" => Ok(AlgoId::Iql),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown algorithm '{other}'; valid ids: bc, td3bc, bcq, iql"
            ))),
        }
    }

    pub fn all() -> &'static [AlgoId] {
        &[AlgoId::Bc, AlgoId::Td3Bc, AlgoId::Bcq, AlgoId::Iql]
    }
}

/// TD3-BC specific hyperparameters (cited-work defaults).
#[derive(Debug, Clone, PartialEq)]
pub struct Td3BcConfig {
    pub alpha: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: u64,
}

impl Default for Td3BcConfig {
    fn default() -> Self {
        Self { alpha: 2.5, policy_noise: 0.2, noise_clip: 0.5, policy_delay: 2 }
    }
}

/// BCQ specific hyperparameters (cited-work defaults). The VAE latent width
/// is derived as `2 * action_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct BcqConfig {
    pub n_candidates: usize,
    pub phi: f64,
    pub lambda_min: f64,
}

impl Default for BcqConfig {
    fn default() -> Self {
        Self { n_candidates: 10, phi: 0.05, lambda_min: 0.75 }
    }
}

/// IQL specific hyperparameters (cited-work defaults).
#[derive(Debug, Clone, PartialEq)]
pub struct IqlConfig {
    pub expectile: f64,
    pub beta: f64,
    pub weight_clip: f64,
}

impl Default for IqlConfig {
    fn default() -> Self {
        Self { expectile: 0.7, beta: 3.0, weight_clip: 100.0 }
    }
}

/// Full learner configuration for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub id: AlgoId,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub td3bc: Td3BcConfig,
    pub bcq: BcqConfig,
    pub iql: IqlConfig,
}

impl AlgoConfig {
    pub fn new(id: AlgoId) -> Self {
        Self {
            id,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            td3bc: Td3BcConfig::default(),
            bcq: BcqConfig::default(),
            iql: IqlConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let mut problems: Vec<String> = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            problems.push(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if !(self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.td3bc.policy_delay == 0 {
            problems.push("td3bc.policy_delay must be >= 1".into());
        }
        if self.td3bc.alpha < 0.0 {
            problems.push("td3bc.alpha must be >= 0".into());
        }
        if self.bcq.n_candidates == 0 {
            problems.push("bcq.n_candidates must be >= 1".into());
        }
        if self.bcq.phi < 0.0 {
            problems.push("bcq.phi must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.bcq.lambda_min) {
            problems.push(format!("bcq.lambda_min must be in [0, 1], got {}", self.bcq.lambda_min));
        }
        if !(self.iql.expectile > 0.0 && self.iql.expectile < 1.0) {
            problems.push(format!("iql.expectile must be in (0, 1), got {}", self.iql.expectile));
        }
        if !(self.iql.weight_clip > 0.0) {
            problems.push("iql.weight_clip must be > 0".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidSpec(problems.join("; ")))
        }
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// The algorithm's actor objective on this batch (before the step for
    /// BC; the most recent delayed value for TD3-BC).
    pub actor_loss: f64,
    pub critic_loss: Option<f64>,
    pub aux: BTreeMap<&'static str, f64>,
}

impl UpdateReport {
    pub fn is_finite(&self) -> bool {
        self.actor_loss.is_finite()
            && self.critic_loss.map_or(true, |c| c.is_finite())
            && self.aux.values().all(|v| v.is_finite())
    }
}

/// Architecture plus parameter snapshot of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSnapshot {
    pub spec: MlpSpec,
    pub params: Params<f32>,
}

/// Algorithm-specific networks inside a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointNets {
    Bc {
        actor: NetSnapshot,
    },
    Td3Bc {
        actor: NetSnapshot,
        q1: NetSnapshot,
        q2: NetSnapshot,
    },
    Bcq {
        encoder: NetSnapshot,
        decoder: NetSnapshot,
        perturbation: NetSnapshot,
        q1: NetSnapshot,
        q2: NetSnapshot,
        /// Fixed latent candidates (`n_candidates * latent_dim`), drawn once
        /// at learner construction so action selection is deterministic.
        latents: Vec<f32>,
        latent_dim: usize,
        phi: f64,
    },
    Iql {
        actor: NetSnapshot,
        q1: NetSnapshot,
        q2: NetSnapshot,
        value: NetSnapshot,
    },
}

/// Snapshot of learner parameters at a gradient-update index; the unit of
/// policy evaluation and persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub update_index: u64,
    pub algo: AlgoId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f32>,
    pub action_high: Vec<f32>,
    pub norm: NormalizationStats,
    pub nets: CheckpointNets,
}

impl PolicyCheckpoint {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Wraps a fixed linear map `action = weights * state + bias` as a BC
    /// checkpoint (used for oracle policies such as the LQR expert).
    pub fn linear(
        weights: &[f32],
        bias: &[f32],
        state_dim: usize,
        action_dim: usize,
        action_low: Vec<f32>,
        action_high: Vec<f32>,
    ) -> Result<Self, CoreError> {
        if weights.len() != state_dim * action_dim || bias.len() != action_dim {
            return Err(CoreError::DimMismatch {
                expected: state_dim * action_dim,
                got: weights.len(),
                what: "linear policy weights",
            });
        }
        let spec = MlpSpec::new(
            state_dim,
            action_dim,
            vec![],
            crate::nn::Activation::Relu,
            crate::nn::OutputTransform::Identity,
        )?;
        let mut data = Vec::with_capacity(spec.param_count());
        data.extend_from_slice(weights);
        data.extend_from_slice(bias);
        let params = Params::from_flat(&spec, data)?;
        Ok(Self {
            update_index: 0,
            algo: AlgoId::Bc,
            state_dim,
            action_dim,
            action_low,
            action_high,
            norm: NormalizationStats::identity(state_dim),
            nets: CheckpointNets::Bc { actor: NetSnapshot { spec, params } },
        })
    }

    /// Deterministic action for one state, clamped to the action bounds.
    pub fn select_action(&self, state: &[f32]) -> Result<Vec<f32>, CoreError> {
        self.act_batch(state)
    }

    /// Batched action selection on row-major states.
    pub fn act_batch(&self, states: &[f32]) -> Result<Vec<f32>, CoreError> {
        if states.is_empty() || states.len() % self.state_dim != 0 {
            return Err(CoreError::DimMismatch {
                expected: self.state_dim,
                got: states.len(),
                what: "state width",
            });
        }
        let n = states.len() / self.state_dim;
        let mut normalized = vec![0.0f32; states.len()];
        for r in 0..n {
            self.norm.normalize_into(
                &states[r * self.state_dim..(r + 1) * self.state_dim],
                &mut normalized[r * self.state_dim..(r + 1) * self.state_dim],
            );
        }
        let mut actions = match &self.nets {
            CheckpointNets::Bc { actor }
            | CheckpointNets::Td3Bc { actor, .. }
            | CheckpointNets::Iql { actor, .. } => {
                forward(&actor.spec, &actor.params, &normalized)?
            }
            CheckpointNets::Bcq {
                decoder,
                perturbation,
                q1,
                latents,
                latent_dim,
                phi,
                ..
            } => self.bcq_select(
                &normalized,
                n,
                decoder,
                perturbation,
                q1,
                latents,
                *latent_dim,
                *phi,
            )?,
        };
        for r in 0..n {
            for d in 0..self.action_dim {
                let v = &mut actions[r * self.action_dim + d];
                *v = v.clamp(self.action_low[d], self.action_high[d]);
            }
        }
        Ok(actions)
    }

    #[allow(clippy::too_many_arguments)]
    fn bcq_select(
        &self,
        states: &[f32],
        n: usize,
        decoder: &NetSnapshot,
        perturbation: &NetSnapshot,
        q1: &NetSnapshot,
        latents: &[f32],
        latent_dim: usize,
        phi: f64,
    ) -> Result<Vec<f32>, CoreError> {
        let n_candidates = latents.len() / latent_dim;
        let sd = self.state_dim;
        let ad = self.action_dim;
        let rows = n * n_candidates;

        // Decode one candidate action per (state, fixed latent) pair.
        let mut dec_in = Vec::with_capacity(rows * (sd + latent_dim));
        for r in 0..n {
            let s = &states[r * sd..(r + 1) * sd];
            for c in 0..n_candidates {
                dec_in.extend_from_slice(s);
                dec_in.extend_from_slice(&latents[c * latent_dim..(c + 1) * latent_dim]);
            }
        }
        let decoded = forward(&decoder.spec, &decoder.params, &dec_in)?;

        let mut pert_in = Vec::with_capacity(rows * (sd + ad));
        for r in 0..n {
            let s = &states[r * sd..(r + 1) * sd];
            for c in 0..n_candidates {
                let row = r * n_candidates + c;
                pert_in.extend_from_slice(s);
                pert_in.extend_from_slice(&decoded[row * ad..(row + 1) * ad]);
            }
        }
        let xi = forward(&perturbation.spec, &perturbation.params, &pert_in)?;

        let phi = phi as f32;
        let mut candidates = vec![0.0f32; rows * ad];
        for i in 0..rows * ad {
            let d = i % ad;
            let corr = xi[i].clamp(-phi, phi);
            candidates[i] =
                (decoded[i] + corr).clamp(self.action_low[d], self.action_high[d]);
        }

        let mut q_in = Vec::with_capacity(rows * (sd + ad));
        for r in 0..n {
            let s = &states[r * sd..(r + 1) * sd];
            for c in 0..n_candidates {
                let row = r * n_candidates + c;
                q_in.extend_from_slice(s);
                q_in.extend_from_slice(&candidates[row * ad..(row + 1) * ad]);
            }
        }
        let q_values = forward(&q1.spec, &q1.params, &q_in)?;

        let mut actions = vec![0.0f32; n * ad];
        for r in 0..n {
            let mut best = 0usize;
            let mut best_q = f32::NEG_INFINITY;
            for c in 0..n_candidates {
                let q = q_values[r * n_candidates + c];
                if q > best_q {
                    best_q = q;
                    best = c;
                }
            }
            let row = r * n_candidates + best;
            actions[r * ad..(r + 1) * ad]
                .copy_from_slice(&candidates[row * ad..(row + 1) * ad]);
        }
        Ok(actions)
    }

    /// Adapter implementing [`Policy`] for rollouts.
    pub fn as_policy(&self) -> CheckpointPolicy<'_> {
        CheckpointPolicy { checkpoint: self }
    }
}

/// Borrowing [`Policy`] adapter for a checkpoint.
pub struct CheckpointPolicy<'a> {
    checkpoint: &'a PolicyCheckpoint,
}

impl Policy for CheckpointPolicy<'_> {
    fn act(&mut self, state: &[f32]) -> Vec<f32> {
        self.checkpoint
            .select_action(state)
            .expect("checkpoint/state dimensions verified at construction")
    }
}

/// A trainable network: spec + parameters + optimizer state.
#[derive(Debug, Clone)]
pub(crate) struct TrainNet {
    pub spec: MlpSpec,
    pub params: Params<f32>,
    pub adam: Adam<f32>,
}

impl TrainNet {
    pub fn new(spec: MlpSpec, learning_rate: f64, seed: u64) -> Self {
        let params = init_params(&spec, seed);
        let adam = Adam::new(learning_rate, params.len());
        Self { spec, params, adam }
    }

    pub fn step(&mut self, grad: &[f32]) {
        self.adam.step(&mut self.params, grad);
    }

    pub fn snapshot(&self) -> NetSnapshot {
        NetSnapshot { spec: self.spec.clone(), params: self.params.clone() }
    }
}

/// Gathered mini-batch in flat row-major arrays; states are already
/// normalized with the learner's statistics.
#[derive(Debug, Default, Clone)]
pub(crate) struct Batch {
    pub states: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    pub not_done: Vec<f32>,
    pub size: usize,
}

impl Batch {
    fn gather(
        &mut self,
        data: &TransitionDataset,
        norm: &NormalizationStats,
        rng: &mut ChaCha8Rng,
        batch_size: usize,
    ) {
        let sd = data.state_dim;
        let ad = data.action_dim;
        self.size = batch_size;
        self.states.clear();
        self.actions.clear();
        self.rewards.clear();
        self.next_states.clear();
        self.not_done.clear();
        self.states.resize(batch_size * sd, 0.0);
        self.next_states.resize(batch_size * sd, 0.0);
        for b in 0..batch_size {
            let i = rng.gen_range(0..data.len());
            norm.normalize_into(data.state(i), &mut self.states[b * sd..(b + 1) * sd]);
            norm.normalize_into(data.next_state(i), &mut self.next_states[b * sd..(b + 1) * sd]);
            self.actions.extend_from_slice(data.action(i));
            self.rewards.push(data.rewards[i]);
            self.not_done.push(if data.dones[i] { 0.0 } else { 1.0 });
        }
        debug_assert_eq!(self.actions.len(), batch_size * ad);
    }
}

/// Environment-facing information a learner needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    pub low: Vec<f32>,
    pub high: Vec<f32>,
}

impl ActionSpace {
    pub fn new(low: Vec<f32>, high: Vec<f32>) -> Result<Self, CoreError> {
        if low.len() != high.len() || low.is_empty() {
            return Err(CoreError::InvalidSpec("action bounds must be non-empty and equal length".into()));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(CoreError::InvalidSpec("action_low must be < action_high elementwise".into()));
        }
        Ok(Self { low, high })
    }

    pub fn from_env_spec(spec: &crate::env::EnvSpec) -> Self {
        Self { low: spec.action_low.clone(), high: spec.action_high.clone() }
    }

    /// Symmetric magnitude used as the actor's tanh output scale.
    pub fn bound(&self) -> f64 {
        self.low
            .iter()
            .chain(self.high.iter())
            .map(|v| v.abs() as f64)
            .fold(0.0, f64::max)
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }
}

enum LearnerKind {
    Bc(bc::BcState),
    Td3Bc(td3bc::Td3BcState),
    Bcq(bcq::BcqState),
    Iql(iql::IqlState),
}

/// One training run's mutable state.
pub struct Learner {
    cfg: AlgoConfig,
    space: ActionSpace,
    state_dim: usize,
    norm: NormalizationStats,
    update_count: u64,
    rng_batch: ChaCha8Rng,
    rng_noise: ChaCha8Rng,
    batch: Batch,
    kind: LearnerKind,
}

impl Learner {
    /// Builds learner state for `cfg` on the given training split.
    ///
    /// State normalization statistics are computed here, from the training
    /// split only, and baked into every checkpoint.
    pub fn new(
        cfg: AlgoConfig,
        data: &TransitionDataset,
        space: ActionSpace,
        seed: u64,
    ) -> Result<Self, CoreError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(CoreError::InvalidArgument("training dataset is empty".into()));
        }
        if data.action_dim != space.dim() {
            return Err(CoreError::DimMismatch {
                expected: space.dim(),
                got: data.action_dim,
                what: "dataset action width",
            });
        }
        let norm = if cfg.id == AlgoId::Td3Bc {
            compute_normalization(data)?
        } else {
            NormalizationStats::identity(data.state_dim)
        };
        let kind = match cfg.id {
            AlgoId::Bc => LearnerKind::Bc(bc::BcState::new(&cfg, data, &space, seed)?),
            AlgoId::Td3Bc => LearnerKind::Td3Bc(td3bc::Td3BcState::new(&cfg, data, &space, seed)?),
            AlgoId::Bcq => LearnerKind::Bcq(bcq::BcqState::new(&cfg, data, &space, seed)?),
            AlgoId::Iql => LearnerKind::Iql(iql::IqlState::new(&cfg, data, &space, seed)?),
        };
        Ok(Self {
            state_dim: data.state_dim,
            norm,
            update_count: 0,
            rng_batch: stream_rng(seed, Stream::Batch),
            rng_noise: stream_rng(seed, Stream::AlgoNoise),
            batch: Batch::default(),
            kind,
            cfg,
            space,
        })
    }

    pub fn config(&self) -> &AlgoConfig {
        &self.cfg
    }

    pub fn normalization(&self) -> &NormalizationStats {
        &self.norm
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// One gradient update on a batch sampled with replacement.
    pub fn update(&mut self, data: &TransitionDataset) -> Result<UpdateReport, CoreError> {
        self.batch.gather(data, &self.norm, &mut self.rng_batch, self.cfg.batch_size);
        self.update_count += 1;
        let report = match &mut self.kind {
            LearnerKind::Bc(s) => s.update(&self.batch)?,
            LearnerKind::Td3Bc(s) => {
                s.update(&self.batch, self.update_count, &mut self.rng_noise)?
            }
            LearnerKind::Bcq(s) => s.update(&self.batch, &mut self.rng_noise)?,
            LearnerKind::Iql(s) => s.update(&self.batch)?,
        };
        Ok(report)
    }

    /// Immutable parameter snapshot at the given update index.
    pub fn checkpoint(&self, update_index: u64) -> PolicyCheckpoint {
        let nets = match &self.kind {
            LearnerKind::Bc(s) => s.snapshot(),
            LearnerKind::Td3Bc(s) => s.snapshot(),
            LearnerKind::Bcq(s) => s.snapshot(),
            LearnerKind::Iql(s) => s.snapshot(),
        };
        PolicyCheckpoint {
            update_index,
            algo: self.cfg.id,
            state_dim: self.state_dim,
            action_dim: self.space.dim(),
            action_low: self.space.low.clone(),
            action_high: self.space.high.clone(),
            norm: self.norm.clone(),
            nets,
        }
    }
}

/// Trains for `n_updates`, snapshotting every `checkpoint_every` updates
/// (plus update 0), streaming per-update reports into `on_report`.
pub fn train_agent(
    cfg: &AlgoConfig,
    data: &TransitionDataset,
    space: &ActionSpace,
    n_updates: u64,
    checkpoint_every: u64,
    seed: u64,
    mut on_report: impl FnMut(u64, &UpdateReport),
) -> Result<Vec<PolicyCheckpoint>, CoreError> {
    if checkpoint_every == 0 {
        return Err(CoreError::InvalidArgument("checkpoint_every must be >= 1".into()));
    }
    let mut learner = Learner::new(cfg.clone(), data, space.clone(), seed)?;
    let mut checkpoints = Vec::with_capacity((n_updates / checkpoint_every) as usize + 1);
    checkpoints.push(learner.checkpoint(0));
    for u in 1..=n_updates {
        let report = learner.update(data)?;
        on_report(u, &report);
        if u % checkpoint_every == 0 {
            checkpoints.push(learner.checkpoint(u));
        }
    }
    Ok(checkpoints)
}

/// Builds the actor spec shared by BC, TD3-BC, and IQL.
pub(crate) fn actor_spec(
    cfg: &AlgoConfig,
    state_dim: usize,
    space: &ActionSpace,
) -> Result<MlpSpec, CoreError> {
    MlpSpec::new(
        state_dim,
        space.dim(),
        cfg.hidden.clone(),
        crate::nn::Activation::Relu,
        crate::nn::OutputTransform::TanhScaled(space.bound()),
    )
}

/// Builds a state-action value net spec: `Q(s, a) -> scalar`.
pub(crate) fn critic_spec(cfg: &AlgoConfig, state_dim: usize, action_dim: usize) -> Result<MlpSpec, CoreError> {
    MlpSpec::new(
        state_dim + action_dim,
        1,
        cfg.hidden.clone(),
        crate::nn::Activation::Relu,
        crate::nn::OutputTransform::Identity,
    )
}

/// Concatenates state rows with action rows into `[s, a]` network input.
pub(crate) fn concat_rows(
    states: &[f32],
    sd: usize,
    actions: &[f32],
    ad: usize,
    out: &mut Vec<f32>,
) {
    let n = states.len() / sd;
    debug_assert_eq!(actions.len() / ad, n);
    out.clear();
    out.reserve(n * (sd + ad));
    for r in 0..n {
        out.extend_from_slice(&states[r * sd..(r + 1) * sd]);
        out.extend_from_slice(&actions[r * ad..(r + 1) * ad]);
    }
}
