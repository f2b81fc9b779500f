//! 2-d point reacher: drive a point mass to a per-episode goal.
//!
//! State is `[px, py, gx - px, gy - py]` (absolute position plus the offset
//! to the goal), action is a velocity command in `[-1, 1]^2` integrated
//! with `dt = 0.1`. Reward is `-(|p - g|^2 + 0.05 * |a|^2)`, so sitting on
//! the goal with zero action scores zero. Positions are confined to the
//! `[-2, 2]^2 arena`; start and goal are uniform on `[-1, 1]^2`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{EnvSpec, EpisodeClock, StepResult};
use crate::error::CoreError;
use crate::rng::{stream_rng, Stream};

const DT: f32 = 0.1;
const ARENA: f32 = 2.0;
const ACTION_COST: f32 = 0.05;

pub struct PointReacher {
    spec: EnvSpec,
    pos: [f32; 2],
    goal: [f32; 2],
    clock: EpisodeClock,
}

impl PointReacher {
    pub fn new() -> Self {
        let spec = EnvSpec::new(
            "pointreacher-v0",
            4,
            2,
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            200,
            0.99,
        )
        .expect("static spec is valid");
        Self { spec, pos: [0.0; 2], goal: [0.0; 2], clock: EpisodeClock::default() }
    }

    /// Places the agent and goal directly; used by tests and diagnostics.
    pub fn reset_to(&mut self, pos: [f32; 2], goal: [f32; 2]) -> Vec<f32> {
        self.pos = pos;
        self.goal = goal;
        self.clock.reset();
        self.observe()
    }

    fn observe(&self) -> Vec<f32> {
        vec![
            self.pos[0],
            self.pos[1],
            self.goal[0] - self.pos[0],
            self.goal[1] - self.pos[1],
        ]
    }
}

impl Default for PointReacher {
    fn default() -> Self {
        Self::new()
    }
}

impl super::Env for PointReacher {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f32> {
        let mut rng = stream_rng(seed, Stream::Env);
        let mut draw = || (rng.gen::<f64>() * 2.0 - 1.0) as f32;
        self.pos = [draw(), draw()];
        self.goal = [draw(), draw()];
        self.clock.reset();
        self.observe()
    }

    fn step(&mut self, action: &[f32]) -> Result<StepResult, CoreError> {
        if action.len() != self.spec.action_dim {
            return Err(CoreError::DimMismatch {
                expected: self.spec.action_dim,
                got: action.len(),
                what: "action",
            });
        }
        let a = self.spec.clip_action(action);
        let done = self.clock.tick(self.spec.max_episode_steps)?;
        for i in 0..2 {
            self.pos[i] = (self.pos[i] + DT * a[i]).clamp(-ARENA, ARENA);
        }
        let dx = self.pos[0] - self.goal[0];
        let dy = self.pos[1] - self.goal[1];
        let reward = -(dx * dx + dy * dy + ACTION_COST * (a[0] * a[0] + a[1] * a[1]));
        Ok(StepResult { next_state: self.observe(), reward, done })
    }

    fn steps_taken(&self) -> u64 {
        self.clock.total_steps
    }
}

/// Proportional controller toward the goal, saturated at the bounds.
pub struct ReacherExpert;

impl super::Policy for ReacherExpert {
    fn act(&mut self, state: &[f32]) -> Vec<f32> {
        let gain = 4.0;
        vec![
            (gain * state[2]).clamp(-1.0, 1.0),
            (gain * state[3]).clamp(-1.0, 1.0),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, Policy};

    #[test]
    fn on_goal_zero_action_is_fixed_point_with_zero_reward() {
        let mut env = PointReacher::new();
        env.reset_to([0.0, 0.0], [0.0, 0.0]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.next_state, vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn expert_closes_distance() {
        let mut env = PointReacher::new();
        let mut state = env.reset_to([-1.0, -1.0], [1.0, 1.0]);
        let mut expert = ReacherExpert;
        let d0 = state[2] * state[2] + state[3] * state[3];
        for _ in 0..100 {
            let a = expert.act(&state);
            state = env.step(&a).unwrap().next_state;
        }
        let d1 = state[2] * state[2] + state[3] * state[3];
        assert!(d1 < 1e-3 && d1 < d0, "expert should reach the goal, got {d1}");
    }
}
