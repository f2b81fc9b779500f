//! Behavior cloning: one optimizer step per update on `MSE(pi(s), a)`.

use crate::dataset::TransitionDataset;
use crate::error::CoreError;
use crate::nn::{gradient, MseLoss};

use super::{actor_spec, ActionSpace, AlgoConfig, Batch, CheckpointNets, TrainNet, UpdateReport};
use crate::rng::{derive_seed, Stream};

pub(crate) struct BcState {
    actor: TrainNet,
}

impl BcState {
    pub fn new(
        cfg: &AlgoConfig,
        data: &TransitionDataset,
        space: &ActionSpace,
        seed: u64,
    ) -> Result<Self, CoreError> {
        let spec = actor_spec(cfg, data.state_dim, space)?;
        Ok(Self {
            actor: TrainNet::new(spec, cfg.learning_rate, derive_seed(seed, Stream::ActorInit, 0)),
        })
    }

    pub fn update(&mut self, batch: &Batch) -> Result<UpdateReport, CoreError> {
        let (loss, grad) = gradient(
            &self.actor.spec,
            &self.actor.params,
            &batch.states,
            &MseLoss { targets: &batch.actions },
        )?;
        self.actor.step(&grad);
        Ok(UpdateReport {
            actor_loss: loss as f64,
            critic_loss: None,
            aux: Default::default(),
        })
    }

    pub fn snapshot(&self) -> CheckpointNets {
        CheckpointNets::Bc { actor: self.actor.snapshot() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{AlgoConfig, AlgoId, Learner};
    use crate::dataset::TransitionDataset;

    /// With the policy already equal to the data map, the loss is zero and
    /// the optimizer has nothing to move.
    #[test]
    fn perfect_policy_has_zero_loss_and_stays_put() {
        // Data: a = 0 everywhere; a zero-initialized linear actor matches.
        let mut data = TransitionDataset::with_capacity(2, 1, 8);
        for i in 0..8 {
            let s = [i as f32 * 0.1, -(i as f32) * 0.2];
            data.push(&s, &[0.0], 0.0, &s, false);
        }
        let cfg = AlgoConfig {
            hidden: alloc::vec![],
            batch_size: 8,
            ..AlgoConfig::new(AlgoId::Bc)
        };
        let space = super::super::ActionSpace::new(alloc::vec![-1.0], alloc::vec![1.0]).unwrap();
        let spec = actor_spec(&cfg, 2, &space).unwrap();
        let mut state = BcState::new(&cfg, &data, &space, 0).unwrap();
        // Overwrite with the exact solution (all zeros).
        state.actor.params = crate::nn::Params::from_flat(
            &spec,
            alloc::vec![0.0; spec.param_count()],
        )
        .unwrap();
        let mut batch = Batch::default();
        batch.gather(&data, &crate::dataset::NormalizationStats::identity(2), &mut crate::rng::stream_rng(0, crate::rng::Stream::Batch), 8);
        let report = state.update(&batch).unwrap();
        assert_eq!(report.actor_loss, 0.0);
        assert!(state.actor.params.data.iter().all(|p| *p == 0.0));
    }

    /// Identical learner state and batch produce identical reports.
    #[test]
    fn identical_batches_identical_reports() {
        let data = crate::algo::tests::synthetic_data(64, 5);
        let space = super::super::ActionSpace::new(
            alloc::vec![-1.0, -1.0],
            alloc::vec![1.0, 1.0],
        )
        .unwrap();
        let cfg = AlgoConfig { hidden: alloc::vec![8], batch_size: 16, ..AlgoConfig::new(AlgoId::Bc) };
        let mut a = Learner::new(cfg.clone(), &data, space.clone(), 7).unwrap();
        let mut b = Learner::new(cfg, &data, space, 7).unwrap();
        for _ in 0..5 {
            assert_eq!(a.update(&data).unwrap(), b.update(&data).unwrap());
        }
    }
}
