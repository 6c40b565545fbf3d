use alloc::vec;
use alloc::vec::Vec;

use super::{Gradients, Model};
use crate::error::{Error, Result};
use crate::math;

/// Bias-corrected ADAM moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub rho1: f64,
    pub rho2: f64,
    pub epsilon_stab: f64,
}

impl AdamState {
    /// Fresh state with decay rates `(0.9, 0.999)` and stability constant `1e-8`.
    pub fn new(n_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            rho1: 0.9,
            rho2: 0.999,
            epsilon_stab: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        Error::check_dim(self.first_moment.len(), params.len())?;
        Error::check_dim(params.len(), grads.len())?;
        self.step_count += 1;
        let c1 = 1.0 - math::powi(self.rho1, self.step_count);
        let c2 = 1.0 - math::powi(self.rho2, self.step_count);
        let (r1, r2, eps) = (self.rho1, self.rho2, self.epsilon_stab);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = r1 * *m + (1.0 - r1) * g;
            *v = r2 * *v + (1.0 - r2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}

pub fn adam_step<M: Model>(model: &mut M, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(model.parameters_mut(), grads.as_slice(), lr)
}

/// Plain gradient descent, `theta <- theta - lr * g`.
pub fn sgd_step<M: Model>(model: &mut M, grads: &Gradients, lr: f64) -> Result<()> {
    let params = model.parameters_mut();
    Error::check_dim(params.len(), grads.len())?;
    for (p, g) in params.iter_mut().zip(grads.as_slice()) {
        *p -= lr * g;
    }
    Ok(())
}
