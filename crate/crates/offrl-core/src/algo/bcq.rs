//! Batch-constrained Q-learning (continuous-action variant).
//!
//! A conditional VAE models the batch action distribution; candidate
//! actions are decoded latents plus a small clamped perturbation, and the
//! critic target mixes the twin Q estimates with
//! `lambda_min * min + (1 - lambda_min) * max` before maximizing over
//! candidates.

// Float method resolution under no_std (unused when std is enabled).
#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::dataset::TransitionDataset;
use crate::error::CoreError;
use crate::nn::{
    backward, backward_input, forward, forward_cached, gradient, polyak_update, Activation,
    MlpSpec, MseLoss, OutputTransform, Params,
};
use crate::rng::{derive_seed, next_normal, stream_rng, Stream};

use super::{
    concat_rows, critic_spec, ActionSpace, AlgoConfig, Batch, CheckpointNets, TrainNet,
    UpdateReport,
};

const LOG_STD_MIN: f32 = -4.0;
const LOG_STD_MAX: f32 = 15.0;
/// Sampled latents are clipped to this radius, matching the prior range the
/// decoder sees during training.
const LATENT_CLIP: f64 = 0.5;

pub(crate) struct BcqState {
    encoder: TrainNet,
    decoder: TrainNet,
    perturbation: TrainNet,
    perturbation_target: Params<f32>,
    q1: TrainNet,
    q2: TrainNet,
    q1_target: Params<f32>,
    q2_target: Params<f32>,
    /// Fixed latent set for deterministic action selection.
    selection_latents: Vec<f32>,
    latent_dim: usize,
    n_candidates: usize,
    phi: f32,
    lambda_min: f32,
    gamma: f32,
    tau: f32,
    low: Vec<f32>,
    high: Vec<f32>,
    scratch: Vec<f32>,
}

impl BcqState {
    pub fn new(
        cfg: &AlgoConfig,
        data: &TransitionDataset,
        space: &ActionSpace,
        seed: u64,
    ) -> Result<Self, CoreError> {
        let sd = data.state_dim;
        let ad = space.dim();
        let latent_dim = 2 * ad;
        let enc_spec = MlpSpec::new(
            sd + ad,
            2 * latent_dim,
            cfg.hidden.clone(),
            Activation::Relu,
            OutputTransform::Identity,
        )?;
        let dec_spec = MlpSpec::new(
            sd + latent_dim,
            ad,
            cfg.hidden.clone(),
            Activation::Relu,
            OutputTransform::TanhScaled(space.bound()),
        )?;
        let pert_spec = MlpSpec::new(
            sd + ad,
            ad,
            cfg.hidden.clone(),
            Activation::Relu,
            OutputTransform::Identity,
        )?;
        let c_spec = critic_spec(cfg, sd, ad)?;

        let lr = cfg.learning_rate;
        let encoder = TrainNet::new(enc_spec, lr, derive_seed(seed, Stream::AuxInit, 0));
        let decoder = TrainNet::new(dec_spec, lr, derive_seed(seed, Stream::AuxInit, 1));
        let perturbation =
            TrainNet::new(pert_spec, lr, derive_seed(seed, Stream::ActorInit, 0));
        let q1 = TrainNet::new(c_spec.clone(), lr, derive_seed(seed, Stream::CriticInit, 0));
        let q2 = TrainNet::new(c_spec, lr, derive_seed(seed, Stream::CriticInit, 1));

        let mut latent_rng = stream_rng(derive_seed(seed, Stream::AuxInit, 2), Stream::AlgoNoise);
        let selection_latents: Vec<f32> = (0..cfg.bcq.n_candidates * latent_dim)
            .map(|_| clipped_normal(&mut latent_rng))
            .collect();

        Ok(Self {
            perturbation_target: perturbation.params.clone(),
            q1_target: q1.params.clone(),
            q2_target: q2.params.clone(),
            encoder,
            decoder,
            perturbation,
            q1,
            q2,
            selection_latents,
            latent_dim,
            n_candidates: cfg.bcq.n_candidates,
            phi: cfg.bcq.phi as f32,
            lambda_min: cfg.bcq.lambda_min as f32,
            gamma: cfg.gamma as f32,
            tau: cfg.tau as f32,
            low: space.low.clone(),
            high: space.high.clone(),
            scratch: Vec::new(),
        })
    }

    fn vae_step(&mut self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<(f64, f64, f64), CoreError> {
        let b = batch.size;
        let sd = batch.states.len() / b;
        let ad = self.low.len();
        let latent = self.latent_dim;

        concat_rows(&batch.states, sd, &batch.actions, ad, &mut self.scratch);
        let enc_cache = forward_cached(&self.encoder.spec, &self.encoder.params, &self.scratch)?;
        let enc_out = enc_cache.output();

        // Per row: first `latent` entries are means, the rest raw log-stds.
        let mut mu = vec![0.0f32; b * latent];
        let mut log_std = vec![0.0f32; b * latent];
        let mut clamp_mask = vec![true; b * latent];
        for r in 0..b {
            for j in 0..latent {
                mu[r * latent + j] = enc_out[r * 2 * latent + j];
                let raw = enc_out[r * 2 * latent + latent + j];
                let clamped = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamp_mask[r * latent + j] = raw > LOG_STD_MIN && raw < LOG_STD_MAX;
                log_std[r * latent + j] = clamped;
            }
        }
        let std: Vec<f32> = log_std.iter().map(|t| t.exp()).collect();
        let eps: Vec<f32> = (0..b * latent).map(|_| next_normal(rng) as f32).collect();
        let z: Vec<f32> = mu
            .iter()
            .zip(&std)
            .zip(&eps)
            .map(|((m, s), e)| m + s * e)
            .collect();

        concat_rows(&batch.states, sd, &z, latent, &mut self.scratch);
        let dec_cache = forward_cached(&self.decoder.spec, &self.decoder.params, &self.scratch)?;
        let recon = dec_cache.output();

        // Reconstruction MSE over all elements.
        let n_out = (b * ad) as f32;
        let mut grad_recon = vec![0.0f32; recon.len()];
        let mut recon_loss = 0.0f64;
        for i in 0..recon.len() {
            let e = recon[i] - batch.actions[i];
            recon_loss += (e as f64) * (e as f64);
            grad_recon[i] = 2.0 * e / n_out;
        }
        recon_loss /= n_out as f64;

        // KL(N(mu, std^2) || N(0, 1)), averaged over all latent elements.
        let n_lat = (b * latent) as f64;
        let mut kl = 0.0f64;
        for i in 0..b * latent {
            let m = mu[i] as f64;
            let t = log_std[i] as f64;
            kl += -0.5 * (1.0 + 2.0 * t - m * m - (2.0 * t).exp());
        }
        kl /= n_lat;
        let vae_loss = recon_loss + 0.5 * kl;

        // Decoder gradients come from the reconstruction term only.
        let dec_grads = backward(&self.decoder.spec, &self.decoder.params, &dec_cache, &grad_recon, true);
        let grad_dec_in = dec_grads.input.expect("input gradient requested");

        // Chain into the encoder outputs: z = mu + std * eps.
        let mut grad_enc = vec![0.0f32; b * 2 * latent];
        let n_lat_f = n_lat as f32;
        for r in 0..b {
            for j in 0..latent {
                let i = r * latent + j;
                let gz = grad_dec_in[r * (sd + latent) + sd + j];
                // d vae / d mu = gz * dz/dmu + 0.5 * d kl / d mu.
                let g_mu = gz + 0.5 * mu[i] / n_lat_f;
                // d vae / d log_std = gz * std * eps + 0.5 * (std^2 - 1) / n.
                let s = std[i];
                let mut g_t = gz * s * eps[i] + 0.5 * (s * s - 1.0) / n_lat_f;
                if !clamp_mask[i] {
                    g_t = 0.0;
                }
                grad_enc[r * 2 * latent + j] = g_mu;
                grad_enc[r * 2 * latent + latent + j] = g_t;
            }
        }
        let enc_grads = backward(&self.encoder.spec, &self.encoder.params, &enc_cache, &grad_enc, false);
        self.encoder.step(&enc_grads.params);
        self.decoder.step(&dec_grads.params);
        Ok((vae_loss, recon_loss, kl))
    }

    /// Decodes candidate actions for the given (repeated) states using the
    /// supplied latent draws, perturbs with `pert_params`, and clamps.
    fn decode_candidates(
        &mut self,
        states_rep: &[f32],
        latents: &[f32],
        pert_params: &Params<f32>,
    ) -> Result<Vec<f32>, CoreError> {
        let ad = self.low.len();
        let rows = latents.len() / self.latent_dim;
        let sdim = states_rep.len() / rows;
        concat_rows(states_rep, sdim, latents, self.latent_dim, &mut self.scratch);
        let decoded = forward(&self.decoder.spec, &self.decoder.params, &self.scratch)?;
        concat_rows(states_rep, sdim, &decoded, ad, &mut self.scratch);
        let xi = forward(&self.perturbation.spec, pert_params, &self.scratch)?;
        let mut out = vec![0.0f32; rows * ad];
        for i in 0..rows * ad {
            let d = i % ad;
            let corr = xi[i].clamp(-self.phi, self.phi);
            out[i] = (decoded[i] + corr).clamp(self.low[d], self.high[d]);
        }
        Ok(out)
    }

    fn critic_step(&mut self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<f64, CoreError> {
        let b = batch.size;
        let sd = batch.states.len() / b;
        let ad = self.low.len();
        let nc = self.n_candidates;

        // Repeat each next state once per candidate.
        let mut s2_rep = Vec::with_capacity(b * nc * sd);
        for r in 0..b {
            let row = &batch.next_states[r * sd..(r + 1) * sd];
            for _ in 0..nc {
                s2_rep.extend_from_slice(row);
            }
        }
        let latents: Vec<f32> =
            (0..b * nc * self.latent_dim).map(|_| clipped_normal(rng)).collect();
        let pert_t = self.perturbation_target.clone();
        let candidates = self.decode_candidates(&s2_rep, &latents, &pert_t)?;

        concat_rows(&s2_rep, sd, &candidates, ad, &mut self.scratch);
        let q1 = forward(&self.q1.spec, &self.q1_target, &self.scratch)?;
        let q2 = forward(&self.q2.spec, &self.q2_target, &self.scratch)?;

        let mut targets = Vec::with_capacity(b);
        for r in 0..b {
            let mut best = f32::NEG_INFINITY;
            for c in 0..nc {
                let i = r * nc + c;
                let mixed = self.lambda_min * q1[i].min(q2[i])
                    + (1.0 - self.lambda_min) * q1[i].max(q2[i]);
                best = best.max(mixed);
            }
            targets.push(batch.rewards[r] + self.gamma * batch.not_done[r] * best);
        }

        concat_rows(&batch.states, sd, &batch.actions, ad, &mut self.scratch);
        let sa = self.scratch.clone();
        let (l1, g1) = gradient(&self.q1.spec, &self.q1.params, &sa, &MseLoss { targets: &targets })?;
        self.q1.step(&g1);
        let (l2, g2) = gradient(&self.q2.spec, &self.q2.params, &sa, &MseLoss { targets: &targets })?;
        self.q2.step(&g2);
        Ok(0.5 * (l1 as f64 + l2 as f64))
    }

    fn perturbation_step(&mut self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<f64, CoreError> {
        let b = batch.size;
        let sd = batch.states.len() / b;
        let ad = self.low.len();

        // Fresh decoded actions for the observed states (treated constant).
        let latents: Vec<f32> = (0..b * self.latent_dim).map(|_| clipped_normal(rng)).collect();
        concat_rows(&batch.states, sd, &latents, self.latent_dim, &mut self.scratch);
        let decoded = forward(&self.decoder.spec, &self.decoder.params, &self.scratch)?;

        concat_rows(&batch.states, sd, &decoded, ad, &mut self.scratch);
        let pert_cache = forward_cached(&self.perturbation.spec, &self.perturbation.params, &self.scratch)?;
        let xi_raw = pert_cache.output();

        let mut perturbed = vec![0.0f32; b * ad];
        let mut pass_through = vec![false; b * ad];
        for i in 0..b * ad {
            let d = i % ad;
            let xi = xi_raw[i].clamp(-self.phi, self.phi);
            let unclamped = decoded[i] + xi;
            let clamped = unclamped.clamp(self.low[d], self.high[d]);
            perturbed[i] = clamped;
            pass_through[i] = xi_raw[i].abs() < self.phi && unclamped == clamped;
        }

        concat_rows(&batch.states, sd, &perturbed, ad, &mut self.scratch);
        let q_cache = forward_cached(&self.q1.spec, &self.q1.params, &self.scratch)?;
        let q_vals = q_cache.output();
        let loss = -q_vals.iter().map(|q| *q as f64).sum::<f64>() / b as f64;

        let gq = vec![-1.0f32 / b as f32; b];
        let grad_sa = backward_input(&self.q1.spec, &self.q1.params, &q_cache, &gq);
        let mut grad_xi = vec![0.0f32; b * ad];
        for r in 0..b {
            for d in 0..ad {
                let i = r * ad + d;
                if pass_through[i] {
                    grad_xi[i] = grad_sa[r * (sd + ad) + sd + d];
                }
            }
        }
        let grads = backward(&self.perturbation.spec, &self.perturbation.params, &pert_cache, &grad_xi, false);
        self.perturbation.step(&grads.params);
        Ok(loss)
    }

    pub fn update(&mut self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<UpdateReport, CoreError> {
        let (vae_loss, recon, kl) = self.vae_step(batch, rng)?;
        let critic_loss = self.critic_step(batch, rng)?;
        let actor_loss = self.perturbation_step(batch, rng)?;

        polyak_update(&mut self.q1_target, &self.q1.params, self.tau);
        polyak_update(&mut self.q2_target, &self.q2.params, self.tau);
        polyak_update(&mut self.perturbation_target, &self.perturbation.params, self.tau);

        let mut aux = BTreeMap::new();
        aux.insert("vae_loss", vae_loss);
        aux.insert("vae_recon", recon);
        aux.insert("vae_kl", kl);
        Ok(UpdateReport { actor_loss, critic_loss: Some(critic_loss), aux })
    }

    pub fn snapshot(&self) -> CheckpointNets {
        CheckpointNets::Bcq {
            encoder: self.encoder.snapshot(),
            decoder: self.decoder.snapshot(),
            perturbation: self.perturbation.snapshot(),
            q1: self.q1.snapshot(),
            q2: self.q2.snapshot(),
            latents: self.selection_latents.clone(),
            latent_dim: self.latent_dim,
            phi: self.phi as f64,
        }
    }
}

fn clipped_normal(rng: &mut ChaCha8Rng) -> f32 {
    (next_normal(rng).clamp(-LATENT_CLIP, LATENT_CLIP)) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::tests::synthetic_data;
    use crate::algo::{AlgoConfig, AlgoId};

    fn space() -> ActionSpace {
        ActionSpace::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn perturbation_is_clamped_before_adding() {
        // xi raw output of 0.2 with phi = 0.05 contributes exactly 0.05.
        let data = synthetic_data(32, 0);
        let cfg = AlgoConfig { hidden: vec![4], batch_size: 8, ..AlgoConfig::new(AlgoId::Bcq) };
        let mut state = BcqState::new(&cfg, &data, &space(), 0).unwrap();
        // Force the perturbation net to a constant raw output of 0.2 and
        // the decoder to a constant 0 action: zero weights, fixed biases.
        let n = state.perturbation.params.len();
        let mut flat = vec![0.0f32; n];
        flat[n - 1] = 0.2;
        flat[n - 2] = 0.2;
        state.perturbation.params =
            Params::from_flat(&state.perturbation.spec, flat).unwrap();
        let dec_zero = vec![0.0f32; state.decoder.params.len()];
        state.decoder.params = Params::from_flat(&state.decoder.spec, dec_zero).unwrap();

        let states_rep = vec![0.1f32, 0.2, 0.3];
        let latents = vec![0.0f32; state.latent_dim];
        let pert = state.perturbation.params.clone();
        let out = state.decode_candidates(&states_rep, &latents, &pert).unwrap();
        assert!((out[0] - 0.05).abs() < 1e-6, "got {}", out[0]);
        assert!((out[1] - 0.05).abs() < 1e-6);
    }

    #[test]
    fn lambda_min_one_uses_pure_min() {
        // Direct check of the mixing arithmetic.
        let lambda = 1.0f32;
        let (q1, q2) = (2.0f32, 5.0f32);
        let mixed = lambda * q1.min(q2) + (1.0 - lambda) * q1.max(q2);
        assert_eq!(mixed, 2.0);
    }

    #[test]
    fn single_candidate_zero_perturbation_returns_decoded_action() {
        let data = synthetic_data(32, 1);
        let mut cfg = AlgoConfig { hidden: vec![4], batch_size: 8, ..AlgoConfig::new(AlgoId::Bcq) };
        cfg.bcq.n_candidates = 1;
        let mut learner = crate::algo::Learner::new(cfg, &data, space(), 2).unwrap();
        learner.update(&data).unwrap();
        // Zero the perturbation net so candidates are pure decoder output.
        if let crate::algo::LearnerKind::Bcq(s) = &mut learner.kind {
            let z = vec![0.0f32; s.perturbation.params.len()];
            s.perturbation.params = Params::from_flat(&s.perturbation.spec, z).unwrap();
        } else {
            unreachable!()
        }
        let ckpt = learner.checkpoint(1);
        let s = [0.3f32, -0.2, 0.5];
        let chosen = ckpt.select_action(&s).unwrap();
        if let CheckpointNets::Bcq { decoder, latents, latent_dim, .. } = &ckpt.nets {
            let mut input = s.to_vec();
            input.extend_from_slice(&latents[..*latent_dim]);
            let direct = forward(&decoder.spec, &decoder.params, &input).unwrap();
            let clamped: Vec<f32> = direct.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
            assert_eq!(chosen, clamped);
        } else {
            unreachable!()
        }
    }
}
