//! Discounted discrete-time Riccati solver and the resulting LQR expert.
//!
//! Minimizing the discounted quadratic cost over `x' = A x + B u` leads to
//! the fixed point
//!
//! ```text
//! P = Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA
//! K = g (R + g B'PB)^-1 B'PA,    u* = -K x
//! ```
//!
//! solved here by fixed-point iteration from `P = Q`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::env::{LinQuadSpec, Policy};
use crate::error::CoreError;

const MAX_ITERATIONS: usize = 100_000;
const CONVERGENCE_TOL: f64 = 1e-12;

fn riccati_map(
    spec: &LinQuadSpec,
    gamma: f64,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, CoreError> {
    let a = &spec.a_dyn;
    let b = &spec.b_dyn;
    let at_p = a.transpose() * p;
    let bt_p = b.transpose() * p;
    let gain_denominator = &spec.r_cost + gamma * (&bt_p * b);
    let chol = gain_denominator.cholesky().ok_or_else(|| {
        CoreError::InvalidSpec("R + g B'PB is not positive definite".into())
    })?;
    let bt_p_a = &bt_p * a;
    let solved = chol.solve(&bt_p_a);
    Ok(&spec.q_cost + gamma * (&at_p * a) - gamma * gamma * (at_p * b) * solved)
}

/// Max-abs-entry residual `|P - f(P)|` of the Riccati fixed point.
pub fn riccati_residual(spec: &LinQuadSpec, gamma: f64, p: &DMatrix<f64>) -> f64 {
    match riccati_map(spec, gamma, p) {
        Ok(next) => (p - next).abs().max(),
        Err(_) => f64::INFINITY,
    }
}

/// Solves the discounted Riccati equation, returning the value matrix `P`.
pub fn solve_riccati(spec: &LinQuadSpec, gamma: f64) -> Result<DMatrix<f64>, CoreError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    let mut p = spec.q_cost.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let next = riccati_map(spec, gamma, &p)?;
        residual = (&next - &p).abs().max();
        p = next;
        if residual <= CONVERGENCE_TOL {
            return Ok(p);
        }
    }
    Err(CoreError::NoConvergence { iterations: MAX_ITERATIONS, residual })
}

/// Optimal linear gain `K` with expert action `u = -K x`.
pub fn lqr_gain(spec: &LinQuadSpec, gamma: f64) -> Result<DMatrix<f64>, CoreError> {
    let p = solve_riccati(spec, gamma)?;
    let b = &spec.b_dyn;
    let bt_p = b.transpose() * &p;
    let denom = &spec.r_cost + gamma * (&bt_p * b);
    let chol = denom
        .cholesky()
        .ok_or_else(|| CoreError::InvalidSpec("R + g B'PB is not positive definite".into()))?;
    Ok(chol.solve(&(&bt_p * &spec.a_dyn)) * gamma)
}

/// Expert policy `u = -K x`.
#[derive(Debug, Clone)]
pub struct LqrPolicy {
    gain: DMatrix<f64>,
}

impl LqrPolicy {
    pub fn for_spec(spec: &LinQuadSpec, gamma: f64) -> Result<Self, CoreError> {
        Ok(Self { gain: lqr_gain(spec, gamma)? })
    }

    pub fn from_gain(gain: DMatrix<f64>) -> Self {
        Self { gain }
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }
}

impl Policy for LqrPolicy {
    fn act(&mut self, state: &[f32]) -> Vec<f32> {
        let x = nalgebra::DVector::from_iterator(state.len(), state.iter().map(|v| *v as f64));
        (-(&self.gain) * x).iter().map(|u| *u as f32).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec(a: f64, b: f64, q: f64, r: f64) -> LinQuadSpec {
        LinQuadSpec::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            0.0,
            0.5,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn cost_free_scalar_system_has_zero_gain() {
        // a = 0: next state ignores the current one, so control buys nothing.
        let k = lqr_gain(&scalar_spec(0.0, 1.0, 1.0, 1.0), 1.0).unwrap();
        assert!(k[(0, 0)].abs() <= 1e-10, "K = {}", k[(0, 0)]);
    }

    #[test]
    fn residual_is_tiny_at_solution() {
        let spec = LinQuadSpec::default_2d();
        let p = solve_riccati(&spec, 0.99).unwrap();
        assert!(riccati_residual(&spec, 0.99, &p) <= 1e-8);
    }

    #[test]
    fn gain_matches_hand_iterated_scalar_recursion() {
        // Independent scalar oracle: iterate p <- q + a^2 p - (a b p)^2 / (r + b^2 p).
        let (a, b, q, r) = (1.0f64, 1.0, 1.0, 1.0);
        let mut p = q;
        for _ in 0..200 {
            p = q + a * a * p - (a * b * p) * (a * b * p) / (r + b * b * p);
        }
        let k_oracle = a * b * p / (r + b * b * p);
        let k = lqr_gain(&scalar_spec(a, b, q, r), 1.0).unwrap();
        assert!((k[(0, 0)] - k_oracle).abs() < 1e-10, "{} vs {k_oracle}", k[(0, 0)]);
        // The fixed point is the golden ratio; K = 1/phi.
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert!((k[(0, 0)] - 1.0 / phi).abs() < 1e-10);
    }

    #[test]
    fn diagonal_system_decouples_into_scalars() {
        let spec = LinQuadSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 1.1]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]),
            0.0,
            0.5,
            10.0,
        )
        .unwrap();
        let gamma = 0.95;
        let k = lqr_gain(&spec, gamma).unwrap();

        for (i, (a, b, q, r)) in
            [(0.9, 1.0, 1.0, 1.0), (1.1, 2.0, 3.0, 0.5)].into_iter().enumerate()
        {
            let mut p: f64 = q;
            for _ in 0..500 {
                p = q + gamma * a * a * p
                    - gamma * gamma * (a * b * p) * (a * b * p) / (r + gamma * b * b * p);
            }
            let k_scalar = gamma * a * b * p / (r + gamma * b * b * p);
            assert!(
                (k[(i, i)] - k_scalar).abs() < 1e-9,
                "diagonal {i}: {} vs {k_scalar}",
                k[(i, i)]
            );
        }
        assert!(k[(0, 1)].abs() < 1e-9 && k[(1, 0)].abs() < 1e-9, "off-diagonals must vanish");
    }
}
