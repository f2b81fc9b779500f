//! Linear-quadratic regulator environment.
//!
//! Dynamics `x' = A x + B u + noise`, reward `-(x^T Q x + u^T R u)`. The
//! closed-form optimal policy comes from the discounted Riccati equation
//! (see [`crate::lqr`]), which makes this the oracle task for expert-data
//! generation and least-squares checks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{EnvSpec, EpisodeClock, StepResult};
use crate::error::CoreError;
use crate::rng::{next_normal, stream_rng, Stream};

/// Matrices defining the linear-quadratic task.
#[derive(Debug, Clone, PartialEq)]
pub struct LinQuadSpec {
    pub a_dyn: DMatrix<f64>,
    pub b_dyn: DMatrix<f64>,
    pub q_cost: DMatrix<f64>,
    pub r_cost: DMatrix<f64>,
    pub process_noise_std: f64,
    pub init_std: f64,
    pub action_bound: f64,
}

impl LinQuadSpec {
    pub fn new(
        a_dyn: DMatrix<f64>,
        b_dyn: DMatrix<f64>,
        q_cost: DMatrix<f64>,
        r_cost: DMatrix<f64>,
        process_noise_std: f64,
        init_std: f64,
        action_bound: f64,
    ) -> Result<Self, CoreError> {
        let n = a_dyn.nrows();
        let m = b_dyn.ncols();
        if a_dyn.ncols() != n {
            return Err(CoreError::InvalidSpec("A must be square".into()));
        }
        if b_dyn.nrows() != n {
            return Err(CoreError::InvalidSpec("B must have state_dim rows".into()));
        }
        if q_cost.shape() != (n, n) || r_cost.shape() != (m, m) {
            return Err(CoreError::InvalidSpec("Q must be n x n and R must be m x m".into()));
        }
        if process_noise_std < 0.0 || init_std < 0.0 {
            return Err(CoreError::InvalidSpec("noise levels must be nonnegative".into()));
        }
        if !(action_bound > 0.0) {
            return Err(CoreError::InvalidSpec("action bound must be positive".into()));
        }
        check_symmetric(&q_cost, "Q")?;
        check_symmetric(&r_cost, "R")?;
        // R strictly positive definite; Q positive semidefinite.
        if r_cost.clone().cholesky().is_none() {
            return Err(CoreError::InvalidSpec("R must be strictly positive definite".into()));
        }
        let eig = q_cost.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|l| *l < -1e-10) {
            return Err(CoreError::InvalidSpec("Q must be positive semidefinite".into()));
        }
        Ok(Self { a_dyn, b_dyn, q_cost, r_cost, process_noise_std, init_std, action_bound })
    }

    /// The registry default: a lightly coupled 2-state / 2-input system.
    pub fn default_2d() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 0.1,
            0.01,
            0.5,
            5.0,
        )
        .expect("default spec is valid")
    }

    pub fn state_dim(&self) -> usize {
        self.a_dyn.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b_dyn.ncols()
    }
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<(), CoreError> {
    let mut max_asym = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if max_asym > 1e-9 {
        return Err(CoreError::InvalidSpec(String::from(name) + " must be symmetric"));
    }
    Ok(())
}

pub struct LinQuad {
    spec: EnvSpec,
    lq: LinQuadSpec,
    state: DVector<f64>,
    noise_rng: rand_chacha::ChaCha8Rng,
    clock: EpisodeClock,
}

impl LinQuad {
    pub fn new(lq: LinQuadSpec) -> Result<Self, CoreError> {
        let n = lq.state_dim();
        let m = lq.action_dim();
        let bound = lq.action_bound as f32;
        let spec = EnvSpec::new(
            "linquad-v0",
            n,
            m,
            vec![-bound; m],
            vec![bound; m],
            200,
            0.99,
        )?;
        Ok(Self {
            spec,
            lq,
            state: DVector::zeros(n),
            noise_rng: stream_rng(0, Stream::Env),
            clock: EpisodeClock::default(),
        })
    }

    pub fn lin_quad_spec(&self) -> &LinQuadSpec {
        &self.lq
    }

    fn observe(&self) -> Vec<f32> {
        self.state.iter().map(|x| *x as f32).collect()
    }
}

impl super::Env for LinQuad {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f32> {
        self.noise_rng = stream_rng(seed, Stream::Env);
        let n = self.lq.state_dim();
        self.state = DVector::from_fn(n, |_, _| {
            next_normal(&mut self.noise_rng) * self.lq.init_std
        });
        self.clock.reset();
        self.observe()
    }

    fn step(&mut self, action: &[f32]) -> Result<StepResult, CoreError> {
        let m = self.spec.action_dim;
        if action.len() != m {
            return Err(CoreError::DimMismatch { expected: m, got: action.len(), what: "action" });
        }
        let clipped = self.spec.clip_action(action);
        let done = self.clock.tick(self.spec.max_episode_steps)?;

        let u = DVector::from_iterator(m, clipped.iter().map(|a| *a as f64));
        let cost = (self.state.transpose() * &self.lq.q_cost * &self.state)[(0, 0)]
            + (u.transpose() * &self.lq.r_cost * &u)[(0, 0)];

        let mut next = &self.lq.a_dyn * &self.state + &self.lq.b_dyn * &u;
        if self.lq.process_noise_std > 0.0 {
            for v in next.iter_mut() {
                *v += next_normal(&mut self.noise_rng) * self.lq.process_noise_std;
            }
        }
        self.state = next;
        Ok(StepResult { next_state: self.observe(), reward: -cost as f32, done })
    }

    fn steps_taken(&self) -> u64 {
        self.clock.total_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    #[test]
    fn zero_init_std_resets_to_origin() {
        let mut spec = LinQuadSpec::default_2d();
        spec.init_std = 0.0;
        let mut env = LinQuad::new(spec).unwrap();
        assert_eq!(env.reset(123), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_dynamics_add_action() {
        let spec = LinQuadSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            0.0,
            0.0,
            5.0,
        )
        .unwrap();
        let mut env = LinQuad::new(spec).unwrap();
        env.reset(0);
        let r = env.step(&[0.5, -1.0]).unwrap();
        assert!((r.next_state[0] - 0.5).abs() < 1e-6);
        assert!((r.next_state[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_indefinite_r() {
        let err = LinQuadSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            0.0,
            0.0,
            5.0,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::InvalidSpec(_)));
    }
}
