//! Pendulum swing-up with torque control.
//!
//! Classic formulation: state `[cos(theta), sin(theta), theta_dot]` with
//! `theta = 0` upright, torque in `[-2, 2]`. Dynamics integrate
//! `theta_dd = 3g/(2l) sin(theta) + 3/(m l^2) u` with `dt = 0.05` and
//! angular velocity clamped to `[-8, 8]`. Reward is
//! `-(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2)`.

// Float method resolution under no_std (unused when std is enabled).
#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{EnvSpec, EpisodeClock, StepResult};
use crate::error::CoreError;
use crate::rng::{stream_rng, Stream};

const DT: f64 = 0.05;
const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f32 = 2.0;

fn wrap_angle(theta: f64) -> f64 {
    let two_pi = core::f64::consts::TAU;
    let mut t = (theta + core::f64::consts::PI) % two_pi;
    if t < 0.0 {
        t += two_pi;
    }
    t - core::f64::consts::PI
}

pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    clock: EpisodeClock,
}

impl Pendulum {
    pub fn new() -> Self {
        let spec = EnvSpec::new(
            "pendulum-v0",
            3,
            1,
            vec![-MAX_TORQUE],
            vec![MAX_TORQUE],
            200,
            0.99,
        )
        .expect("static spec is valid");
        Self { spec, theta: 0.0, theta_dot: 0.0, clock: EpisodeClock::default() }
    }

    fn observe(&self) -> Vec<f32> {
        vec![
            self.theta.cos() as f32,
            self.theta.sin() as f32,
            self.theta_dot as f32,
        ]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl super::Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f32> {
        let mut rng = stream_rng(seed, Stream::Env);
        self.theta = (rng.gen::<f64>() * 2.0 - 1.0) * core::f64::consts::PI;
        self.theta_dot = rng.gen::<f64>() * 2.0 - 1.0;
        self.clock.reset();
        self.observe()
    }

    fn step(&mut self, action: &[f32]) -> Result<StepResult, CoreError> {
        if action.len() != 1 {
            return Err(CoreError::DimMismatch { expected: 1, got: action.len(), what: "action" });
        }
        let u = action[0].clamp(-MAX_TORQUE, MAX_TORQUE) as f64;
        let done = self.clock.tick(self.spec.max_episode_steps)?;

        let angle = wrap_angle(self.theta);
        let reward = -(angle * angle + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);

        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + DT * accel).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += DT * self.theta_dot;

        Ok(StepResult { next_state: self.observe(), reward: reward as f32, done })
    }

    fn steps_taken(&self) -> u64 {
        self.clock.total_steps
    }
}

/// Energy-pumping swing-up with a PD stabilizer near the top.
pub struct SwingUpExpert;

impl super::Policy for SwingUpExpert {
    fn act(&mut self, state: &[f32]) -> Vec<f32> {
        let cos_t = state[0] as f64;
        let sin_t = state[1] as f64;
        let theta_dot = state[2] as f64;
        let theta = sin_t.atan2(cos_t);

        let inertia = MASS * LENGTH * LENGTH / 3.0;
        // Energy relative to hanging straight down; target is the upright.
        let energy = 0.5 * inertia * theta_dot * theta_dot
            + MASS * GRAVITY * (LENGTH / 2.0) * (cos_t + 1.0);
        let target = 2.0 * MASS * GRAVITY * (LENGTH / 2.0);

        // dE/dt = theta_dot * u for these dynamics, so pushing along the
        // sign of theta_dot scaled by the energy deficit regulates E to the
        // upright value; a PD law takes over near the top.
        let u = if cos_t > 0.95 && theta_dot.abs() < 2.5 {
            -12.0 * theta - 2.5 * theta_dot
        } else {
            let deficit = target - energy;
            let direction = if theta_dot >= 0.0 { 1.0 } else { -1.0 };
            6.0 * deficit * direction
        };
        vec![(u as f32).clamp(-MAX_TORQUE, MAX_TORQUE)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, Env, RandomPolicy};

    #[test]
    fn wrap_angle_is_symmetric() {
        assert!((wrap_angle(core::f64::consts::PI + 0.1) + core::f64::consts::PI - 0.1).abs() < 1e-12);
        assert!((wrap_angle(-0.3) + 0.3).abs() < 1e-12);
    }

    #[test]
    fn expert_beats_random() {
        let mut env = Pendulum::new();
        let spec = env.spec().clone();
        let mut expert = SwingUpExpert;
        let mut random = RandomPolicy::new(&spec, 0);
        let mut expert_total = 0.0;
        let mut random_total = 0.0;
        for ep in 0..5 {
            let t = rollout(&mut env, &mut expert, 200, ep, 0.0).unwrap();
            expert_total += t.rewards.iter().map(|r| *r as f64).sum::<f64>();
            let t = rollout(&mut env, &mut random, 200, ep, 0.0).unwrap();
            random_total += t.rewards.iter().map(|r| *r as f64).sum::<f64>();
        }
        assert!(
            expert_total > random_total + 100.0,
            "expert {expert_total} vs random {random_total}"
        );
    }
}
