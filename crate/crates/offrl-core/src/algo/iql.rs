//! Implicit Q-learning with a deterministic advantage-weighted actor.
//!
//! Per update, in order: expectile regression of V toward the target-critic
//! values, twin-critic regression toward `r + gamma V(s')`, then an actor
//! step on advantage-weighted MSE to the data action with weight
//! `min(exp(beta * A), weight_clip)`.

// Float method resolution under no_std (unused when std is enabled).
#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::TransitionDataset;
use crate::error::CoreError;
use crate::nn::{
    backward, forward, forward_cached, gradient, polyak_update, Activation, MlpSpec, MseLoss,
    OutputTransform, Params, WeightedMseLoss,
};
use crate::rng::{derive_seed, Stream};

use super::{
    actor_spec, concat_rows, critic_spec, ActionSpace, AlgoConfig, Batch, CheckpointNets,
    TrainNet, UpdateReport,
};

/// Asymmetric squared loss `|tau - 1(u < 0)| * u^2`.
pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    let weight = if u < 0.0 { 1.0 - tau } else { tau };
    weight * u * u
}

pub(crate) struct IqlState {
    actor: TrainNet,
    q1: TrainNet,
    q2: TrainNet,
    q1_target: Params<f32>,
    q2_target: Params<f32>,
    value: TrainNet,
    expectile: f32,
    beta: f64,
    weight_clip: f64,
    gamma: f32,
    tau: f32,
    action_dim: usize,
    scratch: Vec<f32>,
}

impl IqlState {
    pub fn new(
        cfg: &AlgoConfig,
        data: &TransitionDataset,
        space: &ActionSpace,
        seed: u64,
    ) -> Result<Self, CoreError> {
        let sd = data.state_dim;
        let a_spec = actor_spec(cfg, sd, space)?;
        let c_spec = critic_spec(cfg, sd, space.dim())?;
        let v_spec = MlpSpec::new(
            sd,
            1,
            cfg.hidden.clone(),
            Activation::Relu,
            OutputTransform::Identity,
        )?;
        let lr = cfg.learning_rate;
        let actor = TrainNet::new(a_spec, lr, derive_seed(seed, Stream::ActorInit, 0));
        let q1 = TrainNet::new(c_spec.clone(), lr, derive_seed(seed, Stream::CriticInit, 0));
        let q2 = TrainNet::new(c_spec, lr, derive_seed(seed, Stream::CriticInit, 1));
        let value = TrainNet::new(v_spec, lr, derive_seed(seed, Stream::CriticInit, 2));
        Ok(Self {
            q1_target: q1.params.clone(),
            q2_target: q2.params.clone(),
            actor,
            q1,
            q2,
            value,
            expectile: cfg.iql.expectile as f32,
            beta: cfg.iql.beta,
            weight_clip: cfg.iql.weight_clip,
            gamma: cfg.gamma as f32,
            tau: cfg.tau as f32,
            action_dim: space.dim(),
            scratch: Vec::new(),
        })
    }

    pub fn update(&mut self, batch: &Batch) -> Result<UpdateReport, CoreError> {
        let b = batch.size;
        let sd = batch.states.len() / b;
        let ad = self.action_dim;

        // Frozen targets for both the value regression and the advantage.
        concat_rows(&batch.states, sd, &batch.actions, ad, &mut self.scratch);
        let sa = self.scratch.clone();
        let q1_t = forward(&self.q1.spec, &self.q1_target, &sa)?;
        let q2_t = forward(&self.q2.spec, &self.q2_target, &sa)?;
        let q_target: Vec<f32> = q1_t.iter().zip(&q2_t).map(|(a, b)| a.min(*b)).collect();

        // 1) Value step: expectile regression of V(s) toward q_target.
        let v_cache = forward_cached(&self.value.spec, &self.value.params, &batch.states)?;
        let v_out = v_cache.output();
        let mut grad_v = vec![0.0f32; b];
        let mut value_loss = 0.0f64;
        for i in 0..b {
            let u = q_target[i] - v_out[i];
            let w = if u < 0.0 { 1.0 - self.expectile } else { self.expectile };
            value_loss += (w as f64) * (u as f64) * (u as f64);
            grad_v[i] = -2.0 * w * u / b as f32;
        }
        value_loss /= b as f64;
        let v_grads = backward(&self.value.spec, &self.value.params, &v_cache, &grad_v, false);
        self.value.step(&v_grads.params);

        // 2) Critic step toward r + gamma * (1 - done) * V(s').
        let v_next = forward(&self.value.spec, &self.value.params, &batch.next_states)?;
        let targets: Vec<f32> = (0..b)
            .map(|i| batch.rewards[i] + self.gamma * batch.not_done[i] * v_next[i])
            .collect();
        let (l1, g1) = gradient(&self.q1.spec, &self.q1.params, &sa, &MseLoss { targets: &targets })?;
        self.q1.step(&g1);
        let (l2, g2) = gradient(&self.q2.spec, &self.q2.params, &sa, &MseLoss { targets: &targets })?;
        self.q2.step(&g2);

        // 3) Actor step: advantage-weighted regression onto data actions.
        let v_now = forward(&self.value.spec, &self.value.params, &batch.states)?;
        let weights: Vec<f32> = (0..b)
            .map(|i| {
                let adv = (q_target[i] - v_now[i]) as f64;
                (self.beta * adv).exp().min(self.weight_clip) as f32
            })
            .collect();
        let (actor_loss, a_grads) = gradient(
            &self.actor.spec,
            &self.actor.params,
            &batch.states,
            &WeightedMseLoss { targets: &batch.actions, row_weights: &weights, row_dim: ad },
        )?;
        self.actor.step(&a_grads);

        polyak_update(&mut self.q1_target, &self.q1.params, self.tau);
        polyak_update(&mut self.q2_target, &self.q2.params, self.tau);

        let mut aux = BTreeMap::new();
        aux.insert("value_loss", value_loss);
        Ok(UpdateReport {
            actor_loss: actor_loss as f64,
            critic_loss: Some(0.5 * (l1 as f64 + l2 as f64)),
            aux,
        })
    }

    pub fn snapshot(&self) -> CheckpointNets {
        CheckpointNets::Iql {
            actor: self.actor.snapshot(),
            q1: self.q1.snapshot(),
            q2: self.q2.snapshot(),
            value: self.value.snapshot(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectile_loss_examples() {
        assert!((expectile_loss(1.0, 0.7) - 0.7).abs() < 1e-12);
        assert!((expectile_loss(-1.0, 0.7) - 0.3).abs() < 1e-12);
        // tau = 0.5 halves the squared error regardless of sign.
        for u in [-2.0, -0.5, 0.0, 0.3, 4.0] {
            assert!((expectile_loss(u, 0.5) - 0.5 * u * u).abs() < 1e-12);
        }
    }

    #[test]
    fn advantage_weights_clamp() {
        let beta = 3.0f64;
        let clip = 100.0f64;
        let w = |adv: f64| (beta * adv).exp().min(clip);
        assert!((w(0.0) - 1.0).abs() < 1e-12);
        // beta = 3, advantage = 2: exp(6) ~ 403.4 clamps to 100.
        assert!((w(2.0) - 100.0).abs() < 1e-12);
    }

    /// Expectile regression keeps the fitted value inside the sample range.
    #[test]
    fn fitted_value_brackets_targets() {
        use crate::nn::{init_params, Adam};
        // One distinct state with a handful of Q samples; regress V until
        // convergence and check min <= V <= max.
        let spec = MlpSpec::new(2, 1, vec![8], Activation::Relu, OutputTransform::Identity).unwrap();
        let mut params = init_params::<f32>(&spec, 0);
        let mut adam = Adam::new(1e-2, params.len());
        let states = [0.4f32, -0.7, 0.4, -0.7, 0.4, -0.7, 0.4, -0.7];
        let q_samples = [1.0f32, 3.0, -1.0, 0.5];
        let expectile = 0.7f32;
        for _ in 0..4000 {
            let cache = crate::nn::forward_cached(&spec, &params, &states).unwrap();
            let out = cache.output().to_vec();
            let mut grad = vec![0.0f32; out.len()];
            for (i, v) in out.iter().enumerate() {
                let u = q_samples[i] - v;
                let w = if u < 0.0 { 1.0 - expectile } else { expectile };
                grad[i] = -2.0 * w * u / out.len() as f32;
            }
            let grads = backward(&spec, &params, &cache, &grad, false);
            adam.step(&mut params, &grads.params);
        }
        let v = forward(&spec, &params, &states[..2]).unwrap()[0];
        assert!(
            (-1.0..=3.0).contains(&v),
            "fitted expectile {v} must lie within the target range"
        );
        // With expectile > 0.5 it should sit above the mean.
        let mean = q_samples.iter().sum::<f32>() / 4.0;
        assert!(v > mean, "expectile 0.7 fit {v} should exceed the mean {mean}");
    }
}
