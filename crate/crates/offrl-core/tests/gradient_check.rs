//! Finite-difference verification of every gradient path.
//!
//! The oracle is central differences at 64-bit precision with step 1e-5,
//! run against the analytic reverse-mode gradients. These checks are the
//! ground truth for the whole training stack: the learners only ever
//! compose the passes verified here.

use offrl_core::nn::{
    backward, backward_input, forward, forward_cached, gradient, init_params, Activation,
    MlpSpec, MseLoss, OutputLoss, OutputTransform, Params, WeightedMseLoss,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const MAX_REL_ERR: f64 = 1e-4;

fn random_spec(rng: &mut ChaCha8Rng) -> MlpSpec {
    let input_dim = rng.gen_range(1..5);
    let output_dim = rng.gen_range(1..4);
    let n_hidden = rng.gen_range(0..3);
    let hidden: Vec<usize> = (0..n_hidden).map(|_| rng.gen_range(2..8)).collect();
    let activation = if rng.gen_bool(0.5) { Activation::Relu } else { Activation::Tanh };
    let output = if rng.gen_bool(0.5) {
        OutputTransform::Identity
    } else {
        OutputTransform::TanhScaled(rng.gen_range(0.5..3.0))
    };
    MlpSpec::new(input_dim, output_dim, hidden, activation, output).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, width: usize) -> Vec<f64> {
    let rows = rng.gen_range(1..6);
    (0..rows * width).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

/// Central finite differences of `loss(params)` in each coordinate.
fn fd_param_gradient(
    spec: &MlpSpec,
    params: &Params<f64>,
    input: &[f64],
    loss: &impl OutputLoss<f64>,
) -> Vec<f64> {
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.data[i] += FD_STEP;
        let mut minus = params.clone();
        minus.data[i] -= FD_STEP;
        let eval = |p: &Params<f64>| {
            let out = forward(spec, p, input).unwrap();
            let mut sink = vec![0.0; out.len()];
            loss.eval(&out, &mut sink)
        };
        grad.push((eval(&plus) - eval(&minus)) / (2.0 * FD_STEP));
    }
    grad
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs()).max(1.0);
            (a - n).abs() / scale
        })
        .fold(0.0, f64::max)
}

#[test]
fn mse_gradients_match_central_differences_on_20_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFD);
    for case in 0..20 {
        let spec = random_spec(&mut rng);
        let params: Params<f64> = init_params(&spec, rng.gen());
        let input = random_batch(&mut rng, spec.input_dim);
        let rows = input.len() / spec.input_dim;
        let targets: Vec<f64> =
            (0..rows * spec.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = MseLoss { targets: &targets };

        let (_, analytic) = gradient(&spec, &params, &input, &loss).unwrap();
        let numeric = fd_param_gradient(&spec, &params, &input, &loss);
        let err = max_relative_error(&analytic, &numeric);
        assert!(
            err < MAX_REL_ERR,
            "case {case}: relative error {err:.3e} for spec {spec:?}"
        );
    }
}

#[test]
fn weighted_mse_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF);
    for _ in 0..10 {
        let spec = random_spec(&mut rng);
        let params: Params<f64> = init_params(&spec, rng.gen());
        let input = random_batch(&mut rng, spec.input_dim);
        let rows = input.len() / spec.input_dim;
        let targets: Vec<f64> =
            (0..rows * spec.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.0..3.0)).collect();
        let loss =
            WeightedMseLoss { targets: &targets, row_weights: &weights, row_dim: spec.output_dim };

        let (_, analytic) = gradient(&spec, &params, &input, &loss).unwrap();
        let numeric = fd_param_gradient(&spec, &params, &input, &loss);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < MAX_REL_ERR, "relative error {err:.3e}");
    }
}

/// Input gradients (the critic-through-actor path) against central
/// differences on the inputs.
#[test]
fn input_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11);
    for _ in 0..10 {
        let spec = random_spec(&mut rng);
        let params: Params<f64> = init_params(&spec, rng.gen());
        let input = random_batch(&mut rng, spec.input_dim);
        let rows = input.len() / spec.input_dim;
        // Scalar objective: mean of all outputs.
        let n = (rows * spec.output_dim) as f64;
        let grad_out = vec![1.0 / n; rows * spec.output_dim];

        let cache = forward_cached(&spec, &params, &input).unwrap();
        let analytic = backward_input(&spec, &params, &cache, &grad_out);
        // Cross-check against the full backward pass's input gradient.
        let full = backward(&spec, &params, &cache, &grad_out, true);
        assert_eq!(full.input.as_deref(), Some(analytic.as_slice()));

        let mut numeric = Vec::with_capacity(input.len());
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus[i] += FD_STEP;
            let mut minus = input.clone();
            minus[i] -= FD_STEP;
            let mean = |x: &[f64]| {
                forward(&spec, &params, x).unwrap().iter().sum::<f64>() / n
            };
            numeric.push((mean(&plus) - mean(&minus)) / (2.0 * FD_STEP));
        }
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < MAX_REL_ERR, "relative error {err:.3e}");
    }
}

/// The composed actor-through-critic objective used by TD3-BC and BCQ:
/// `L = mean Q(s, A(s))` differentiated with respect to actor parameters.
#[test]
fn actor_through_critic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for _ in 0..10 {
        let sd = rng.gen_range(1..4);
        let ad = rng.gen_range(1..3);
        let actor_spec = MlpSpec::new(
            sd,
            ad,
            vec![rng.gen_range(2..6)],
            Activation::Tanh,
            OutputTransform::TanhScaled(1.0),
        )
        .unwrap();
        let critic_spec = MlpSpec::new(
            sd + ad,
            1,
            vec![rng.gen_range(2..6)],
            Activation::Tanh,
            OutputTransform::Identity,
        )
        .unwrap();
        let actor: Params<f64> = init_params(&actor_spec, rng.gen());
        let critic: Params<f64> = init_params(&critic_spec, rng.gen());
        let states = random_batch(&mut rng, sd);
        let rows = states.len() / sd;

        let objective = |a: &Params<f64>| -> f64 {
            let actions = forward(&actor_spec, a, &states).unwrap();
            let mut sa = Vec::with_capacity(rows * (sd + ad));
            for r in 0..rows {
                sa.extend_from_slice(&states[r * sd..(r + 1) * sd]);
                sa.extend_from_slice(&actions[r * ad..(r + 1) * ad]);
            }
            forward(&critic_spec, &critic, &sa).unwrap().iter().sum::<f64>() / rows as f64
        };

        // Analytic: backprop through the critic input, slice the action
        // columns, feed as output gradient of the actor.
        let actor_cache = forward_cached(&actor_spec, &actor, &states).unwrap();
        let actions = actor_cache.output().to_vec();
        let mut sa = Vec::with_capacity(rows * (sd + ad));
        for r in 0..rows {
            sa.extend_from_slice(&states[r * sd..(r + 1) * sd]);
            sa.extend_from_slice(&actions[r * ad..(r + 1) * ad]);
        }
        let critic_cache = forward_cached(&critic_spec, &critic, &sa).unwrap();
        let gq = vec![1.0 / rows as f64; rows];
        let grad_sa = backward_input(&critic_spec, &critic, &critic_cache, &gq);
        let mut grad_actions = vec![0.0; rows * ad];
        for r in 0..rows {
            for d in 0..ad {
                grad_actions[r * ad + d] = grad_sa[r * (sd + ad) + sd + d];
            }
        }
        let analytic =
            backward(&actor_spec, &actor, &actor_cache, &grad_actions, false).params;

        let mut numeric = Vec::with_capacity(actor.len());
        for i in 0..actor.len() {
            let mut plus = actor.clone();
            plus.data[i] += FD_STEP;
            let mut minus = actor.clone();
            minus.data[i] -= FD_STEP;
            numeric.push((objective(&plus) - objective(&minus)) / (2.0 * FD_STEP));
        }
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < MAX_REL_ERR, "relative error {err:.3e}");
    }
}
