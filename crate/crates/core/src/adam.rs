//! Adaptive-moment gradient descent.

use alloc::vec::Vec;

use crate::real::Real;
use crate::tensor::Tensor;
use crate::{contract, Result};

#[derive(Debug, Clone)]
pub struct OptimizerState<T: Real> {
    pub step_count: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> OptimizerState<T> {
    /// beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(param_shapes: &[Vec<usize>], learning_rate: f64) -> Self {
        OptimizerState {
            step_count: 0,
            first_moment: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            learning_rate: T::from_f64(learning_rate),
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            epsilon: T::from_f64(1e-8),
        }
    }
}

/// One bias-corrected update. `params` and `grads` must match the state's
/// moment buffers tensor-for-tensor.
pub fn adam_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != state.first_moment.len()
        || params.len() != state.second_moment.len()
    {
        return Err(contract(format_args!(
            "adam: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for i in 0..params.len() {
        if !params[i].same_shape(&grads[i]) || !params[i].same_shape(&state.first_moment[i]) {
            return Err(contract(format_args!(
                "adam: shape mismatch at tensor {i}: param {:?}, grad {:?}, moment {:?}",
                params[i].shape(),
                grads[i].shape(),
                state.first_moment[i].shape()
            )));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = T::ONE - pow(b1, t);
    let bc2 = T::ONE - pow(b2, t);
    for i in 0..params.len() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let p = params[i].data_mut();
        let g = grads[i].data();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (T::ONE - b1) * g[j];
            v[j] = b2 * v[j] + (T::ONE - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

fn pow<T: Real>(base: T, n: i32) -> T {
    let mut acc = T::ONE;
    for _ in 0..n {
        acc *= base;
    }
    acc
}
