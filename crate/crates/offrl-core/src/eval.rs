//! Both evaluation channels: online rollout returns with score
//! normalization, and the fully offline action-MSE metrics with the
//! overfitting gap and early-stop selection.

// Float method resolution under no_std (unused when std is enabled).
#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::algo::PolicyCheckpoint;
use crate::dataset::TransitionDataset;
use crate::env::{rollout, Env, Trajectory};
use crate::error::CoreError;

/// Return anchors used for score normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreAnchors {
    pub random_score: f64,
    pub expert_score: f64,
}

impl ScoreAnchors {
    pub fn new(random_score: f64, expert_score: f64) -> Result<Self, CoreError> {
        if !(random_score.is_finite() && expert_score.is_finite()) {
            return Err(CoreError::NonFinite("score anchors"));
        }
        if random_score == expert_score {
            return Err(CoreError::InvalidArgument(
                "anchor scores must differ for normalization".into(),
            ));
        }
        Ok(Self { random_score, expert_score })
    }
}

/// One evaluation record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub update_index: u64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub online_return: Option<f64>,
    pub normalized_score: Option<f64>,
    pub seed: u64,
    pub dataset_size: usize,
    pub algorithm: String,
}

/// `sum_t gamma^t r_t` over one trajectory.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> Result<f64, CoreError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(CoreError::InvalidArgument(format!("gamma must be in (0, 1], got {gamma}")));
    }
    let mut total = 0.0f64;
    let mut weight = 1.0f64;
    for r in &traj.rewards {
        total += weight * *r as f64;
        weight *= gamma;
    }
    Ok(total)
}

/// Mean undiscounted return of `n_episodes` deterministic-policy rollouts.
///
/// Episode `k` runs on seed `seed + k`, so a single-episode evaluation on
/// seed `s` reproduces `rollout(env, policy, ..., s, 0.0)` exactly.
pub fn online_evaluate(
    checkpoint: &PolicyCheckpoint,
    env: &mut dyn Env,
    n_episodes: usize,
    seed: u64,
) -> Result<f64, CoreError> {
    if n_episodes == 0 {
        return Err(CoreError::InvalidArgument("n_episodes must be >= 1".into()));
    }
    let horizon = env.spec().max_episode_steps;
    let mut policy = checkpoint.as_policy();
    let mut total = 0.0f64;
    for k in 0..n_episodes {
        let traj = rollout(env, &mut policy, horizon, seed + k as u64, 0.0)?;
        total += traj.rewards.iter().map(|r| *r as f64).sum::<f64>();
    }
    Ok(total / n_episodes as f64)
}

/// `100 * (raw - random) / (expert - random)`.
pub fn normalized_score(raw: f64, anchors: &ScoreAnchors) -> f64 {
    100.0 * (raw - anchors.random_score) / (anchors.expert_score - anchors.random_score)
}

/// Mean squared deviation between policy actions and logged actions.
///
/// Rows are visited in stored order and accumulated in `f64`, so the result
/// does not depend on the forward-pass chunk size.
pub fn action_mse(checkpoint: &PolicyCheckpoint, data: &TransitionDataset) -> Result<f64, CoreError> {
    action_mse_chunked(checkpoint, data, 256)
}

/// [`action_mse`] with an explicit evaluation chunk size (exposed for the
/// batch-size-invariance property).
pub fn action_mse_chunked(
    checkpoint: &PolicyCheckpoint,
    data: &TransitionDataset,
    chunk: usize,
) -> Result<f64, CoreError> {
    if data.is_empty() {
        return Err(CoreError::InvalidArgument("action_mse needs a non-empty slice".into()));
    }
    if chunk == 0 {
        return Err(CoreError::InvalidArgument("chunk size must be >= 1".into()));
    }
    if data.action_dim != checkpoint.action_dim() {
        return Err(CoreError::DimMismatch {
            expected: checkpoint.action_dim(),
            got: data.action_dim,
            what: "action width",
        });
    }
    if data.state_dim != checkpoint.state_dim() {
        return Err(CoreError::DimMismatch {
            expected: checkpoint.state_dim(),
            got: data.state_dim,
            what: "state width",
        });
    }
    let dim = data.action_dim;
    let mut sum_sq = 0.0f64;
    let mut start = 0usize;
    while start < data.len() {
        let end = (start + chunk).min(data.len());
        let states = &data.states[start * data.state_dim..end * data.state_dim];
        let predicted = checkpoint.act_batch(states)?;
        let logged = &data.actions[start * dim..end * dim];
        for (p, a) in predicted.iter().zip(logged) {
            let e = *p as f64 - *a as f64;
            sum_sq += e * e;
        }
        start = end;
    }
    Ok(sum_sq / (data.len() * dim) as f64)
}

/// Validation minus training MSE.
pub fn overfit_gap(train_mse: f64, val_mse: f64) -> f64 {
    val_mse - train_mse
}

/// Spearman rank correlation with average ranks for ties.
pub fn rank_correlation(xs: &[f64], ys: &[f64]) -> Result<f64, CoreError> {
    if xs.len() != ys.len() {
        return Err(CoreError::DimMismatch { expected: xs.len(), got: ys.len(), what: "rank series" });
    }
    if xs.len() < 3 {
        return Err(CoreError::InvalidArgument("rank correlation needs at least 3 points".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(core::cmp::Ordering::Equal));
    let mut ranks = alloc::vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average rank for the tie group [i, j], 1-based.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, CoreError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(CoreError::InvalidArgument(
            "rank correlation undefined: zero rank variance".into(),
        ));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Index of the row with minimal validation MSE; ties resolve to the
/// earliest update index.
pub fn early_stop_select(rows: &[MetricsRow]) -> Result<u64, CoreError> {
    if rows.is_empty() {
        return Err(CoreError::InvalidArgument("early_stop_select needs at least one row".into()));
    }
    let mut best = &rows[0];
    for row in &rows[1..] {
        let better = row.val_mse < best.val_mse
            || (row.val_mse == best.val_mse && row.update_index < best.update_index);
        if better {
            best = row;
        }
    }
    Ok(best.update_index)
}
