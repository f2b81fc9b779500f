//! Offline datasets: expert collection, size subsampling, and the
//! trajectory-level train/validation split.

// Float method resolution under no_std (unused when std is enabled).
#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::{rollout, Env, Policy, Trajectory};
use crate::error::CoreError;
use crate::rng::{derive_seed, stream_rng, Stream};

/// One `(s, a, r, s', done)` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub done: bool,
}

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Generated,
    Imported,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Generated => "generated",
            Source::Imported => "imported",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s {
            "generated" => Ok(Source::Generated),
            "imported" => Ok(Source::Imported),
            other => Err(CoreError::InvalidArgument(format!("unknown source tag '{other}'"))),
        }
    }
}

/// Episode-grouped dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub trajectories: Vec<Trajectory>,
    pub source: Source,
    pub env_name: String,
}

impl TrajectoryDataset {
    pub fn new(
        trajectories: Vec<Trajectory>,
        source: Source,
        env_name: &str,
    ) -> Result<Self, CoreError> {
        if trajectories.iter().any(|t| t.is_empty()) {
            return Err(CoreError::InvalidArgument("trajectories must be non-empty".into()));
        }
        if let Some(first) = trajectories.first() {
            let sd = first.states[0].len();
            let ad = first.actions[0].len();
            for t in &trajectories {
                let lens_equal = t.states.len() == t.actions.len()
                    && t.states.len() == t.rewards.len()
                    && t.states.len() == t.dones.len();
                if !lens_equal {
                    return Err(CoreError::InvalidArgument(
                        "trajectory sequences must have equal lengths".into(),
                    ));
                }
                if t.states.iter().any(|s| s.len() != sd)
                    || t.final_state.len() != sd
                    || t.actions.iter().any(|a| a.len() != ad)
                {
                    return Err(CoreError::InvalidArgument(
                        "inconsistent state/action dimensions across trajectories".into(),
                    ));
                }
            }
        }
        Ok(Self { trajectories, source, env_name: env_name.into() })
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories.first().map(|t| t.states[0].len()).unwrap_or(0)
    }

    pub fn action_dim(&self) -> usize {
        self.trajectories.first().map(|t| t.actions[0].len()).unwrap_or(0)
    }

    /// Mean undiscounted return across trajectories.
    pub fn mean_return(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .trajectories
            .iter()
            .map(|t| t.rewards.iter().map(|r| *r as f64).sum::<f64>())
            .sum();
        total / self.trajectories.len() as f64
    }

    /// Flattens every trajectory, in stored order, into columnar form.
    pub fn to_transitions(&self) -> TransitionDataset {
        let mut out = TransitionDataset::with_capacity(
            self.state_dim(),
            self.action_dim(),
            self.n_transitions(),
        );
        for t in &self.trajectories {
            for i in 0..t.len() {
                out.push(&t.states[i], &t.actions[i], t.rewards[i], t.next_state(i), t.dones[i]);
            }
        }
        out
    }
}

/// Columnar `(s, a, r, s', done)` storage.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    pub dones: Vec<bool>,
    size: usize,
}

impl TransitionDataset {
    pub fn with_capacity(state_dim: usize, action_dim: usize, n: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            states: Vec::with_capacity(n * state_dim),
            actions: Vec::with_capacity(n * action_dim),
            rewards: Vec::with_capacity(n),
            next_states: Vec::with_capacity(n * state_dim),
            dones: Vec::with_capacity(n),
            size: 0,
        }
    }

    pub fn push(&mut self, state: &[f32], action: &[f32], reward: f32, next_state: &[f32], done: bool) {
        debug_assert_eq!(state.len(), self.state_dim);
        debug_assert_eq!(action.len(), self.action_dim);
        debug_assert_eq!(next_state.len(), self.state_dim);
        self.states.extend_from_slice(state);
        self.actions.extend_from_slice(action);
        self.rewards.push(reward);
        self.next_states.extend_from_slice(next_state);
        self.dones.push(done);
        self.size += 1;
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn state(&self, i: usize) -> &[f32] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f32] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f32] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            state: self.state(i).to_vec(),
            action: self.action(i).to_vec(),
            reward: self.rewards[i],
            next_state: self.next_state(i).to_vec(),
            done: self.dones[i],
        }
    }

    /// Row subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> TransitionDataset {
        let mut out = Self::with_capacity(self.state_dim, self.action_dim, indices.len());
        for &i in indices {
            out.push(self.state(i), self.action(i), self.rewards[i], self.next_state(i), self.dones[i]);
        }
        out
    }

    /// Mean per-step reward.
    pub fn mean_reward(&self) -> f64 {
        if self.size == 0 {
            return 0.0;
        }
        self.rewards.iter().map(|r| *r as f64).sum::<f64>() / self.size as f64
    }
}

/// Per-dimension state normalization computed from a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub state_mean: Vec<f32>,
    pub state_std: Vec<f32>,
}

impl NormalizationStats {
    /// Identity transform of the given width.
    pub fn identity(state_dim: usize) -> Self {
        Self { state_mean: vec![0.0; state_dim], state_std: vec![1.0; state_dim] }
    }

    #[inline]
    pub fn normalize_into(&self, state: &[f32], out: &mut [f32]) {
        for ((o, s), (m, sd)) in out
            .iter_mut()
            .zip(state)
            .zip(self.state_mean.iter().zip(&self.state_std))
        {
            *o = (s - m) / sd;
        }
    }

    pub fn normalize(&self, state: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; state.len()];
        self.normalize_into(state, &mut out);
        out
    }
}

/// Population mean/std of the states, std floored at `1e-3`.
pub fn compute_normalization(data: &TransitionDataset) -> Result<NormalizationStats, CoreError> {
    if data.len() < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "normalization needs at least 2 transitions, got {}",
            data.len()
        )));
    }
    let d = data.state_dim;
    let n = data.len() as f64;
    let mut mean = vec![0.0f64; d];
    for i in 0..data.len() {
        for (m, s) in mean.iter_mut().zip(data.state(i)) {
            *m += *s as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0f64; d];
    for i in 0..data.len() {
        for ((v, s), m) in var.iter_mut().zip(data.state(i)).zip(&mean) {
            let e = *s as f64 - *m;
            *v += e * e;
        }
    }
    let stats = NormalizationStats {
        state_mean: mean.iter().map(|m| *m as f32).collect(),
        state_std: var.iter().map(|v| ((*v / n).sqrt() as f32).max(1e-3)).collect(),
    };
    Ok(stats)
}

/// Rolls `expert` until at least `n_transitions` steps exist, truncating the
/// final episode mid-trajectory to land exactly on the target.
///
/// Episode `k` uses the derived seed `(seed, Data, k)`, so the collection is
/// a pure function of its arguments.
pub fn collect_expert_dataset(
    env: &mut dyn Env,
    expert: &mut dyn Policy,
    n_transitions: usize,
    action_noise_std: f64,
    seed: u64,
) -> Result<TrajectoryDataset, CoreError> {
    if n_transitions == 0 {
        return Err(CoreError::InvalidArgument("n_transitions must be >= 1".into()));
    }
    let horizon = env.spec().max_episode_steps;
    let env_name = env.spec().name.clone();
    let mut trajectories = Vec::new();
    let mut collected = 0usize;
    let mut episode = 0u64;
    while collected < n_transitions {
        let ep_seed = derive_seed(seed, Stream::Data, episode);
        let mut traj = rollout(env, expert, horizon, ep_seed, action_noise_std)?;
        let remaining = n_transitions - collected;
        if traj.len() > remaining {
            traj.final_state = traj.states[remaining].clone();
            traj.states.truncate(remaining);
            traj.actions.truncate(remaining);
            traj.rewards.truncate(remaining);
            traj.dones.truncate(remaining);
        }
        collected += traj.len();
        trajectories.push(traj);
        episode += 1;
    }
    TrajectoryDataset::new(trajectories, Source::Generated, &env_name)
}

/// Subsampling protocols for the dataset-size sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsampleMode {
    /// Whole trajectories in stored order, last one truncated.
    TrajectoryPrefix,
    /// Transitions sampled uniformly without replacement.
    UniformTransitions,
    /// Whole trajectories sampled uniformly without replacement, then
    /// truncated to the target.
    TrajectoryUniform,
}

impl SubsampleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SubsampleMode::TrajectoryPrefix => "trajectory_prefix",
            SubsampleMode::UniformTransitions => "uniform_transitions",
            SubsampleMode::TrajectoryUniform => "trajectory_uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s {
            "trajectory_prefix" => Ok(SubsampleMode::TrajectoryPrefix),
            "uniform_transitions" => Ok(SubsampleMode::UniformTransitions),
            "trajectory_uniform" => Ok(SubsampleMode::TrajectoryUniform),
            other => Err(CoreError::InvalidArgument(format!("unknown subsample mode '{other}'"))),
        }
    }
}

/// Sample `k` of `n` indices without replacement (partial Fisher-Yates);
/// order is the sampled order.
fn sample_without_replacement<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.gen_range(0..n - i);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

/// Reduces a trajectory dataset to exactly `target_size` transitions.
pub fn subsample(
    data: &TrajectoryDataset,
    target_size: usize,
    mode: SubsampleMode,
    seed: u64,
) -> Result<TransitionDataset, CoreError> {
    let total = data.n_transitions();
    if target_size == 0 || target_size > total {
        return Err(CoreError::InvalidArgument(format!(
            "target_size must be in 1..={total}, got {target_size}"
        )));
    }
    let mut out = TransitionDataset::with_capacity(data.state_dim(), data.action_dim(), target_size);
    match mode {
        SubsampleMode::TrajectoryPrefix => {
            let mut left = target_size;
            'outer: for t in &data.trajectories {
                for i in 0..t.len() {
                    if left == 0 {
                        break 'outer;
                    }
                    out.push(&t.states[i], &t.actions[i], t.rewards[i], t.next_state(i), t.dones[i]);
                    left -= 1;
                }
            }
        }
        SubsampleMode::UniformTransitions => {
            let flat = data.to_transitions();
            let mut rng = stream_rng(seed, Stream::Data);
            for i in sample_without_replacement(total, target_size, &mut rng) {
                out.push(flat.state(i), flat.action(i), flat.rewards[i], flat.next_state(i), flat.dones[i]);
            }
        }
        SubsampleMode::TrajectoryUniform => {
            let mut rng = stream_rng(seed, Stream::Data);
            let order =
                sample_without_replacement(data.n_trajectories(), data.n_trajectories(), &mut rng);
            let mut left = target_size;
            'outer2: for ti in order {
                let t = &data.trajectories[ti];
                for i in 0..t.len() {
                    if left == 0 {
                        break 'outer2;
                    }
                    out.push(&t.states[i], &t.actions[i], t.rewards[i], t.next_state(i), t.dones[i]);
                    left -= 1;
                }
            }
        }
    }
    debug_assert_eq!(out.len(), target_size);
    Ok(out)
}

/// Splits off `n_val_trajectories` whole held-out trajectories (chosen
/// without replacement by `seed`) and flattens them into the validation
/// set. Training code must only ever see the first element of the pair.
pub fn hold_out_validation(
    data: &TrajectoryDataset,
    n_val_trajectories: usize,
    seed: u64,
) -> Result<(TrajectoryDataset, TransitionDataset), CoreError> {
    if n_val_trajectories == 0 {
        return Err(CoreError::InvalidArgument(
            "validation protocol requires at least 1 held-out trajectory".into(),
        ));
    }
    if n_val_trajectories >= data.n_trajectories() {
        return Err(CoreError::InvalidArgument(format!(
            "cannot hold out {n_val_trajectories} of {} trajectories",
            data.n_trajectories()
        )));
    }
    let mut rng = stream_rng(seed, Stream::Data);
    let mut chosen = sample_without_replacement(data.n_trajectories(), n_val_trajectories, &mut rng);
    chosen.sort_unstable();

    let mut val_flags = vec![false; data.n_trajectories()];
    for &i in &chosen {
        val_flags[i] = true;
    }
    let mut train = Vec::with_capacity(data.n_trajectories() - n_val_trajectories);
    let mut val = TransitionDataset::with_capacity(
        data.state_dim(),
        data.action_dim(),
        chosen.iter().map(|&i| data.trajectories[i].len()).sum(),
    );
    for (i, t) in data.trajectories.iter().enumerate() {
        if val_flags[i] {
            for s in 0..t.len() {
                val.push(&t.states[s], &t.actions[s], t.rewards[s], t.next_state(s), t.dones[s]);
            }
        } else {
            train.push(t.clone());
        }
    }
    let train = TrajectoryDataset::new(train, data.source, &data.env_name)?;
    Ok((train, val))
}
