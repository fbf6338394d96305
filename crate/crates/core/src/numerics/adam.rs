use serde::{Deserialize, Serialize};

use super::{Matrix, NumericsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one matrix per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn for_params<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let first_moment: Vec<Matrix> = params.into_iter().map(Matrix::zeros_like).collect();
        let second_moment = first_moment.clone();
        Self {
            first_moment,
            second_moment,
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    state: &mut OptimizerState,
    config: &AdamConfig,
) -> Result<(), NumericsError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(NumericsError::shape(
            (params.len(), grads.len()),
            (state.first_moment.len(), state.second_moment.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() {
            return Err(NumericsError::shape(p.shape(), g.shape()));
        }
        if p.shape() != m.shape() {
            return Err(NumericsError::shape(p.shape(), m.shape()));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);

    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.first_moment[i].data_mut();
        for (mj, &gj) in m.iter_mut().zip(g) {
            *mj = config.beta1 * *mj + (1.0 - config.beta1) * gj;
        }
        let v = state.second_moment[i].data_mut();
        for (vj, &gj) in v.iter_mut().zip(g) {
            *vj = config.beta2 * *vj + (1.0 - config.beta2) * gj * gj;
        }
        let m = state.first_moment[i].data();
        let v = state.second_moment[i].data();
        for ((pj, &mj), &vj) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mj / bc1;
            let v_hat = vj / bc2;
            *pj -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
