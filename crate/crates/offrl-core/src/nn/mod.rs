//! Small feed-forward approximators with exact reverse-mode gradients.
//!
//! The module is deliberately narrow: batched MLP forward passes, the
//! matching vector-Jacobian products (with respect to parameters and, when
//! needed, inputs), an adaptive-moment optimizer, and Polyak target
//! averaging. Training runs at `f32`; gradient-check tests instantiate the
//! same code at `f64`.

mod math;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{Debug, Display};
use core::ops::AddAssign;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;

pub use math::{axpy, dot};

/// Scalar type of a network: `f32` in training, `f64` in oracle tests.
pub trait Real:
    Float + AddAssign + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// Transform applied to the final linear output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputTransform {
    Identity,
    /// `bound * tanh(z)`: output bounded to `[-bound, bound]`.
    TanhScaled(f64),
}

/// Architecture description. Parameters are kept separately in [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output: OutputTransform,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        output: OutputTransform,
    ) -> Result<Self, CoreError> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|&w| w == 0) {
            return Err(CoreError::InvalidSpec(alloc::format!(
                "all layer widths must be >= 1 (got in={input_dim}, hidden={hidden:?}, out={output_dim})"
            )));
        }
        if let OutputTransform::TanhScaled(b) = output {
            if !(b > 0.0) || !b.is_finite() {
                return Err(CoreError::InvalidSpec(alloc::format!(
                    "tanh_scaled bound must be positive and finite, got {b}"
                )));
            }
        }
        Ok(Self { input_dim, output_dim, hidden, activation, output })
    }

    /// `(fan_in, fan_out)` of each linear layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Total parameter count: `sum((fan_in + 1) * fan_out)`.
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }
}

/// Flat parameter vector plus its per-layer shape table.
///
/// Layout per layer: weight matrix row-major `[fan_out][fan_in]`, then bias
/// `[fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub data: Vec<F>,
    shapes: Vec<(usize, usize)>,
}

impl<F: Real> Params<F> {
    /// Wraps an existing flat vector; length must match the spec.
    pub fn from_flat(spec: &MlpSpec, data: Vec<F>) -> Result<Self, CoreError> {
        if data.len() != spec.param_count() {
            return Err(CoreError::DimMismatch {
                expected: spec.param_count(),
                got: data.len(),
                what: "parameter vector",
            });
        }
        Ok(Self { data, shapes: spec.layer_dims() })
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self { data: vec![F::zero(); spec.param_count()], shapes: spec.layer_dims() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    /// `(weights, bias)` slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[F], &[F]) {
        let (start, (fan_in, fan_out)) = self.layer_offset(l);
        let w_end = start + fan_in * fan_out;
        (&self.data[start..w_end], &self.data[w_end..w_end + fan_out])
    }

    fn layer_offset(&self, l: usize) -> (usize, (usize, usize)) {
        let mut off = 0;
        for &(fi, fo) in &self.shapes[..l] {
            off += (fi + 1) * fo;
        }
        (off, self.shapes[l])
    }
}

/// Documented initialization: every weight and bias of a layer with fan-in
/// `n` is drawn uniformly from `[-1/sqrt(n), 1/sqrt(n)]`. Deterministic in
/// `seed`.
pub fn init_params<F: Real>(spec: &MlpSpec, seed: u64) -> Params<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..(fan_in + 1) * fan_out {
            let u: f64 = rng.gen::<f64>();
            data.push(F::from_f64((2.0 * u - 1.0) * bound));
        }
    }
    Params { data, shapes: spec.layer_dims() }
}

/// Cached intermediate activations of one batched forward pass.
///
/// `activations[0]` is the input; `activations[l + 1]` is the
/// post-activation output of layer `l` (post-transform for the last layer).
pub struct ForwardCache<F> {
    pub batch: usize,
    activations: Vec<Vec<F>>,
}

impl<F: Real> ForwardCache<F> {
    /// Final network output.
    pub fn output(&self) -> &[F] {
        self.activations.last().expect("cache holds at least the input")
    }
}

fn batch_of<F: Real>(spec: &MlpSpec, input: &[F]) -> Result<usize, CoreError> {
    if spec.input_dim == 0 || input.len() % spec.input_dim != 0 {
        return Err(CoreError::DimMismatch {
            expected: spec.input_dim,
            got: input.len(),
            what: "forward input width",
        });
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::NonFinite("forward input"));
    }
    Ok(input.len() / spec.input_dim)
}

fn linear_layer<F: Real>(
    x: &[F],
    batch: usize,
    fan_in: usize,
    fan_out: usize,
    weights: &[F],
    bias: &[F],
    out: &mut Vec<F>,
) {
    math::linear_forward(x, batch, fan_in, fan_out, weights, bias, out);
}

fn apply_activation<F: Real>(activation: Activation, z: &mut [F]) {
    match activation {
        Activation::Relu => {
            for v in z.iter_mut() {
                if *v < F::zero() {
                    *v = F::zero();
                }
            }
        }
        Activation::Tanh => {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
    }
}

fn apply_output<F: Real>(output: OutputTransform, z: &mut [F]) {
    match output {
        OutputTransform::Identity => {}
        OutputTransform::TanhScaled(bound) => {
            let b = F::from_f64(bound);
            for v in z.iter_mut() {
                *v = b * v.tanh();
            }
        }
    }
}

/// Batched forward pass. Input is row-major `[batch, input_dim]` flattened;
/// the batch size is inferred. Errors on non-finite input.
pub fn forward<F: Real>(
    spec: &MlpSpec,
    params: &Params<F>,
    input: &[F],
) -> Result<Vec<F>, CoreError> {
    let batch = batch_of(spec, input)?;
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let mut current: Vec<F> = Vec::new();
    let mut next: Vec<F> = Vec::new();
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let (w, b) = params.layer(l);
        let x = if l == 0 { input } else { current.as_slice() };
        linear_layer(x, batch, fan_in, fan_out, w, b, &mut next);
        if l + 1 < n_layers {
            apply_activation(spec.activation, &mut next);
        } else {
            apply_output(spec.output, &mut next);
        }
        core::mem::swap(&mut current, &mut next);
    }
    Ok(current)
}

/// Forward pass that keeps every layer's post-activation for [`backward`].
pub fn forward_cached<F: Real>(
    spec: &MlpSpec,
    params: &Params<F>,
    input: &[F],
) -> Result<ForwardCache<F>, CoreError> {
    let batch = batch_of(spec, input)?;
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let mut activations: Vec<Vec<F>> = Vec::with_capacity(n_layers + 1);
    activations.push(input.to_vec());
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let (w, b) = params.layer(l);
        let mut z = Vec::new();
        linear_layer(activations[l].as_slice(), batch, fan_in, fan_out, w, b, &mut z);
        if l + 1 < n_layers {
            apply_activation(spec.activation, &mut z);
        } else {
            apply_output(spec.output, &mut z);
        }
        activations.push(z);
    }
    Ok(ForwardCache { batch, activations })
}

/// Gradients produced by [`backward`].
pub struct Gradients<F> {
    /// Same layout as the flat parameter vector.
    pub params: Vec<F>,
    /// `dL/d input`, row-major `[batch, input_dim]`; `None` unless requested.
    pub input: Option<Vec<F>>,
}

/// Exact reverse-mode pass for `grad_output = dL/d output`.
///
/// `want_input` additionally computes `dL/d input`, which is how actor
/// objectives differentiate through a critic.
pub fn backward<F: Real>(
    spec: &MlpSpec,
    params: &Params<F>,
    cache: &ForwardCache<F>,
    grad_output: &[F],
    want_input: bool,
) -> Gradients<F> {
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let batch = cache.batch;
    assert_eq!(grad_output.len(), batch * spec.output_dim, "grad_output shape");

    let mut grad_params = vec![F::zero(); spec.param_count()];
    // delta = dL/d z_l (pre-activation gradient), starting from the output.
    let mut delta: Vec<F> = grad_output.to_vec();
    match spec.output {
        OutputTransform::Identity => {}
        OutputTransform::TanhScaled(bound) => {
            let b = F::from_f64(bound);
            let out = cache.activations[n_layers].as_slice();
            for (d, y) in delta.iter_mut().zip(out) {
                // d tanh_scaled/dz = b * (1 - tanh^2) = b - y^2 / b
                *d = *d * (b - *y * *y / b);
            }
        }
    }

    let mut layer_starts = Vec::with_capacity(n_layers);
    let mut off = 0;
    for &(fi, fo) in &dims {
        layer_starts.push(off);
        off += (fi + 1) * fo;
    }

    let mut grad_input = None;
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = dims[l];
        let x = cache.activations[l].as_slice();
        let start = layer_starts[l];
        let (w_all, rest) = params.data[start..].split_at(fan_in * fan_out);
        let _bias = &rest[..fan_out];
        {
            let gslice = &mut grad_params[start..start + (fan_in + 1) * fan_out];
            let (gw, gb) = gslice.split_at_mut(fan_in * fan_out);
            math::weight_grad(&delta, x, batch, fan_out, fan_in, gw, gb);
        }

        let need_prev = l > 0 || want_input;
        if !need_prev {
            break;
        }
        let mut prev = vec![F::zero(); batch * fan_in];
        math::matvec_rows(&delta, batch, fan_out, fan_in, w_all, &mut prev);
        if l > 0 {
            // Chain through the previous layer's activation.
            match spec.activation {
                Activation::Relu => {
                    for (p, a) in prev.iter_mut().zip(x) {
                        if *a <= F::zero() {
                            *p = F::zero();
                        }
                    }
                }
                Activation::Tanh => {
                    for (p, a) in prev.iter_mut().zip(x) {
                        *p = *p * (F::one() - *a * *a);
                    }
                }
            }
            delta = prev;
        } else {
            grad_input = Some(prev);
        }
    }

    Gradients { params: grad_params, input: grad_input }
}

/// Reverse pass that only propagates `dL/d input`, skipping parameter
/// gradients. Used where a network is differentiated through (a critic in
/// an actor objective) rather than trained.
pub fn backward_input<F: Real>(
    spec: &MlpSpec,
    params: &Params<F>,
    cache: &ForwardCache<F>,
    grad_output: &[F],
) -> Vec<F> {
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let batch = cache.batch;
    assert_eq!(grad_output.len(), batch * spec.output_dim, "grad_output shape");

    let mut delta: Vec<F> = grad_output.to_vec();
    match spec.output {
        OutputTransform::Identity => {}
        OutputTransform::TanhScaled(bound) => {
            let b = F::from_f64(bound);
            let out = cache.activations[n_layers].as_slice();
            for (d, y) in delta.iter_mut().zip(out) {
                *d = *d * (b - *y * *y / b);
            }
        }
    }

    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = dims[l];
        let (w_all, _bias) = params.layer(l);
        let x = cache.activations[l].as_slice();
        let mut prev = vec![F::zero(); batch * fan_in];
        math::matvec_rows(&delta, batch, fan_out, fan_in, w_all, &mut prev);
        if l > 0 {
            match spec.activation {
                Activation::Relu => {
                    for (p, a) in prev.iter_mut().zip(x) {
                        if *a <= F::zero() {
                            *p = F::zero();
                        }
                    }
                }
                Activation::Tanh => {
                    for (p, a) in prev.iter_mut().zip(x) {
                        *p = *p * (F::one() - *a * *a);
                    }
                }
            }
        }
        delta = prev;
    }
    delta
}

/// Scalar loss defined on a network's batched outputs.
///
/// This is the primitive set behind [`gradient`]: any loss expressible as a
/// differentiable function of the outputs alone.
pub trait OutputLoss<F> {
    /// Returns the loss and writes `dL/d output` into `grad_out`.
    fn eval(&self, outputs: &[F], grad_out: &mut [F]) -> F;
}

/// Mean squared error over every output element.
pub struct MseLoss<'a, F> {
    pub targets: &'a [F],
}

impl<F: Real> OutputLoss<F> for MseLoss<'_, F> {
    fn eval(&self, outputs: &[F], grad_out: &mut [F]) -> F {
        assert_eq!(outputs.len(), self.targets.len(), "mse target shape");
        let n = F::from_f64(outputs.len() as f64);
        let mut loss = F::zero();
        let two = F::from_f64(2.0);
        for ((g, y), t) in grad_out.iter_mut().zip(outputs).zip(self.targets) {
            let e = *y - *t;
            loss += e * e;
            *g = two * e / n;
        }
        loss / n
    }
}

/// MSE with a per-row weight (rows of width `row_dim`), normalized like
/// [`MseLoss`] by the total element count.
pub struct WeightedMseLoss<'a, F> {
    pub targets: &'a [F],
    pub row_weights: &'a [F],
    pub row_dim: usize,
}

impl<F: Real> OutputLoss<F> for WeightedMseLoss<'_, F> {
    fn eval(&self, outputs: &[F], grad_out: &mut [F]) -> F {
        assert_eq!(outputs.len(), self.targets.len(), "mse target shape");
        assert_eq!(outputs.len(), self.row_weights.len() * self.row_dim, "weight shape");
        let n = F::from_f64(outputs.len() as f64);
        let two = F::from_f64(2.0);
        let mut loss = F::zero();
        for r in 0..self.row_weights.len() {
            let w = self.row_weights[r];
            for d in 0..self.row_dim {
                let i = r * self.row_dim + d;
                let e = outputs[i] - self.targets[i];
                loss += w * e * e;
                grad_out[i] = two * w * e / n;
            }
        }
        loss / n
    }
}

/// Exact gradient of `loss` with respect to `params` at the given inputs.
pub fn gradient<F: Real>(
    spec: &MlpSpec,
    params: &Params<F>,
    input: &[F],
    loss: &impl OutputLoss<F>,
) -> Result<(F, Vec<F>), CoreError> {
    let cache = forward_cached(spec, params, input)?;
    let mut grad_out = vec![F::zero(); cache.output().len()];
    let value = loss.eval(cache.output(), &mut grad_out);
    let grads = backward(spec, params, &cache, &grad_out, false);
    Ok((value, grads.params))
}

/// Adaptive-moment optimizer state (bias-corrected).
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    m: Vec<F>,
    v: Vec<F>,
    step_count: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Self {
            learning_rate: F::from_f64(learning_rate),
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            eps: F::from_f64(1e-8),
            m: vec![F::zero(); n_params],
            v: vec![F::zero(); n_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut Params<F>, grad: &[F]) {
        assert_eq!(grad.len(), params.data.len(), "gradient shape");
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = F::one() - self.beta1.powi(t);
        let c2 = F::one() - self.beta2.powi(t);
        let one = F::one();
        for ((p, g), (m, v)) in params
            .data
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (one - self.beta1) * *g;
            *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Polyak averaging: `target = tau * online + (1 - tau) * target`.
pub fn polyak_update<F: Real>(target: &mut Params<F>, online: &Params<F>, tau: F) {
    assert_eq!(target.data.len(), online.data.len(), "polyak shape");
    let one_minus = F::one() - tau;
    for (t, o) in target.data.iter_mut().zip(&online.data) {
        *t = tau * *o + one_minus * *t;
    }
}
