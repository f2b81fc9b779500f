//! Toy continuous-control environments.
//!
//! Three native tasks stand in for physics benchmarks: a 2-d point reacher,
//! the classic pendulum swing-up, and a linear-quadratic system with a
//! closed-form optimal expert. All of them terminate on the time limit
//! only, so recorded `done` flags mark true terminal states exclusively
//! (never truncation) and are therefore always `false` for these tasks.

mod lin_quad;
mod pendulum;
mod point_reacher;

pub use lin_quad::{LinQuad, LinQuadSpec};
pub use pendulum::Pendulum;
pub use point_reacher::PointReacher;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::CoreError;
use crate::rng::{stream_rng, Stream};

/// Process-wide environment interaction counter.
///
/// Incremented on every `step` of every instance; offline-purity checks
/// assert it does not move while a learner trains.
static ENV_STEPS: AtomicU64 = AtomicU64::new(0);

/// Total `step` calls across all environment instances in this process.
pub fn total_env_steps() -> u64 {
    ENV_STEPS.load(Ordering::Relaxed)
}

fn count_step() {
    ENV_STEPS.fetch_add(1, Ordering::Relaxed);
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f32>,
    pub action_high: Vec<f32>,
    pub max_episode_steps: usize,
    pub gamma: f64,
}

impl EnvSpec {
    pub fn new(
        name: &str,
        state_dim: usize,
        action_dim: usize,
        action_low: Vec<f32>,
        action_high: Vec<f32>,
        max_episode_steps: usize,
        gamma: f64,
    ) -> Result<Self, CoreError> {
        if state_dim == 0 || action_dim == 0 {
            return Err(CoreError::InvalidSpec("state_dim and action_dim must be >= 1".into()));
        }
        if action_low.len() != action_dim || action_high.len() != action_dim {
            return Err(CoreError::InvalidSpec("action bound lengths must equal action_dim".into()));
        }
        if action_low.iter().zip(&action_high).any(|(lo, hi)| !(lo < hi)) {
            return Err(CoreError::InvalidSpec("action_low must be < action_high elementwise".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(CoreError::InvalidSpec(format!("gamma must be in (0, 1], got {gamma}")));
        }
        if max_episode_steps == 0 {
            return Err(CoreError::InvalidSpec("max_episode_steps must be >= 1".into()));
        }
        Ok(Self { name: name.into(), state_dim, action_dim, action_low, action_high, max_episode_steps, gamma })
    }

    /// Clamps an action into the box bounds (copies into a new vector).
    pub fn clip_action(&self, action: &[f32]) -> Vec<f32> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }
}

/// Result of one environment step.
///
/// `done` is true when the episode is over, i.e. a terminal predicate fired
/// or the step count reached `max_episode_steps`. For the native tasks only
/// the time limit applies.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f32>,
    pub reward: f32,
    pub done: bool,
}

/// One episode: per-step states, actions (already clipped), rewards, and
/// terminal flags, all of equal length. `final_state` is the state observed
/// after the last action, kept so every step has a successor.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f32>>,
    pub actions: Vec<Vec<f32>>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    pub final_state: Vec<f32>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Successor state of step `t`.
    pub fn next_state(&self, t: usize) -> &[f32] {
        if t + 1 < self.states.len() {
            &self.states[t + 1]
        } else {
            &self.final_state
        }
    }
}

/// A single-threaded environment state machine.
pub trait Env {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode from the seeded initial distribution.
    fn reset(&mut self, seed: u64) -> Vec<f32>;

    /// Advances one step. The action is clipped to the bounds before the
    /// dynamics apply; stepping before any `reset` is an error.
    fn step(&mut self, action: &[f32]) -> Result<StepResult, CoreError>;

    /// Steps taken by this instance since construction.
    fn steps_taken(&self) -> u64;
}

/// Helper shared by the native envs: per-instance bookkeeping.
#[derive(Debug, Clone, Default)]
struct EpisodeClock {
    started: bool,
    step_in_episode: usize,
    total_steps: u64,
}

impl EpisodeClock {
    fn reset(&mut self) {
        self.started = true;
        self.step_in_episode = 0;
    }

    /// Returns whether the episode hit the time limit after this step.
    fn tick(&mut self, max_steps: usize) -> Result<bool, CoreError> {
        if !self.started {
            return Err(CoreError::EnvNotReset);
        }
        self.step_in_episode += 1;
        self.total_steps += 1;
        count_step();
        Ok(self.step_in_episode >= max_steps)
    }
}

/// Action source used by rollouts and evaluation.
pub trait Policy {
    fn act(&mut self, state: &[f32]) -> Vec<f32>;
}

/// Uniform-random policy over the action box.
pub struct RandomPolicy {
    low: Vec<f32>,
    high: Vec<f32>,
    rng: rand_chacha::ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(spec: &EnvSpec, seed: u64) -> Self {
        Self {
            low: spec.action_low.clone(),
            high: spec.action_high.clone(),
            rng: stream_rng(seed, Stream::ActionNoise),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _state: &[f32]) -> Vec<f32> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(lo, hi)| {
                let u: f64 = self.rng.gen();
                (*lo as f64 + u * (*hi - *lo) as f64) as f32
            })
            .collect()
    }
}

/// Rolls out `policy` for at most `horizon` steps (or until the episode
/// ends), optionally adding Gaussian action noise before clipping.
///
/// The environment is reset with `seed`; the noise stream is derived from
/// the same seed, so the whole trajectory is a function of
/// `(env, policy, horizon, seed, action_noise_std)`.
pub fn rollout(
    env: &mut dyn Env,
    policy: &mut dyn Policy,
    horizon: usize,
    seed: u64,
    action_noise_std: f64,
) -> Result<Trajectory, CoreError> {
    if horizon == 0 {
        return Err(CoreError::InvalidArgument("rollout horizon must be >= 1".into()));
    }
    let mut noise_rng = stream_rng(seed, Stream::ActionNoise);
    let max_steps = env.spec().max_episode_steps;
    let mut state = env.reset(seed);
    let mut traj = Trajectory {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        final_state: Vec::new(),
    };
    for t in 0..horizon {
        let mut action = policy.act(&state);
        if action_noise_std > 0.0 {
            for a in action.iter_mut() {
                *a += (crate::rng::next_normal(&mut noise_rng) * action_noise_std) as f32;
            }
        }
        let action = env.spec().clip_action(&action);
        let result = env.step(&action)?;
        // `done` on the very last permitted step is the time limit, not a
        // terminal state; the native envs have no terminal predicate.
        let terminal = result.done && t + 1 < max_steps;
        traj.states.push(state);
        traj.actions.push(action);
        traj.rewards.push(result.reward);
        traj.dones.push(terminal);
        state = result.next_state;
        if result.done {
            break;
        }
    }
    traj.final_state = state;
    Ok(traj)
}

/// Names accepted by [`make_env`].
pub fn env_names() -> &'static [&'static str] {
    &["pointreacher-v0", "pendulum-v0", "linquad-v0"]
}

/// Instantiates a registered environment by name.
pub fn make_env(name: &str) -> Result<Box<dyn Env>, CoreError> {
    match name {
        "pointreacher-v0" => Ok(Box::new(PointReacher::new())),
        "pendulum-v0" => Ok(Box::new(Pendulum::new())),
        "linquad-v0" => Ok(Box::new(LinQuad::new(LinQuadSpec::default_2d())?)),
        other => Err(CoreError::InvalidArgument(format!(
            "unknown environment '{other}'; known: {}",
            env_names().join(", ")
        ))),
    }
}

/// The scripted expert for a registered environment.
pub fn make_expert(name: &str) -> Result<Box<dyn Policy>, CoreError> {
    match name {
        "pointreacher-v0" => Ok(Box::new(point_reacher::ReacherExpert)),
        "pendulum-v0" => Ok(Box::new(pendulum::SwingUpExpert)),
        "linquad-v0" => {
            let spec = LinQuadSpec::default_2d();
            let gamma = LinQuad::new(spec.clone())?.spec().gamma;
            Ok(Box::new(crate::lqr::LqrPolicy::for_spec(&spec, gamma)?))
        }
        other => Err(CoreError::InvalidArgument(format!(
            "unknown environment '{other}'; known: {}",
            env_names().join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_rejects_unknown_names() {
        let err = match make_env("walker-v99") {
            Err(e) => e,
            Ok(_) => panic!("unknown env must be rejected"),
        };
        let msg = alloc::format!("{err}");
        assert!(msg.contains("pointreacher-v0"), "error should list envs: {msg}");
    }

    #[test]
    fn reset_is_seed_deterministic() {
        for name in env_names() {
            let mut env = make_env(name).unwrap();
            let a = env.reset(0);
            let b = env.reset(0);
            assert_eq!(a, b, "{name} reset must be deterministic");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut env = make_env("pendulum-v0").unwrap();
        let a = env.reset(0);
        let b = env.reset(1);
        assert_ne!(a, b);
    }

    #[test]
    fn step_before_reset_errors() {
        for name in env_names() {
            let mut env = make_env(name).unwrap();
            let action = alloc::vec![0.0; env.spec().action_dim];
            assert_eq!(env.step(&action).unwrap_err(), CoreError::EnvNotReset, "{name}");
        }
    }

    #[test]
    fn out_of_bounds_action_equals_clipped() {
        for name in env_names() {
            let mut env = make_env(name).unwrap();
            env.reset(3);
            let spec = env.spec().clone();
            let wild: Vec<f32> = spec.action_high.iter().map(|h| h * 10.0).collect();
            let a = env.step(&wild).unwrap();
            env.reset(3);
            let b = env.step(&spec.action_high.clone()).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn rollout_hits_horizon_and_is_deterministic() {
        let mut env = make_env("pointreacher-v0").unwrap();
        let mut expert = make_expert("pointreacher-v0").unwrap();
        let t1 = rollout(env.as_mut(), expert.as_mut(), 5, 7, 0.0).unwrap();
        assert_eq!(t1.len(), 5);
        assert!(t1.dones.iter().all(|d| !d));
        let t2 = rollout(env.as_mut(), expert.as_mut(), 5, 7, 0.0).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn rollout_actions_respect_bounds() {
        let mut env = make_env("pendulum-v0").unwrap();
        let spec = env.spec().clone();
        let mut random = RandomPolicy::new(&spec, 5);
        let traj = rollout(env.as_mut(), &mut random, 50, 11, 1.5).unwrap();
        for a in &traj.actions {
            for (v, (lo, hi)) in a.iter().zip(spec.action_low.iter().zip(&spec.action_high)) {
                assert!(v >= lo && v <= hi);
            }
        }
    }

    #[test]
    fn step_counter_counts() {
        let before = total_env_steps();
        let mut env = make_env("pointreacher-v0").unwrap();
        env.reset(0);
        env.step(&[0.0, 0.0]).unwrap();
        env.step(&[0.0, 0.0]).unwrap();
        assert!(total_env_steps() >= before + 2);
        assert_eq!(env.steps_taken(), 2);
    }
}
