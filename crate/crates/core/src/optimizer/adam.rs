use crate::error::{GraspError, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment accumulators of the adaptive-moment method.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    /// Bias-corrected increment `lr * m_hat / (sqrt(v_hat) + eps)`. The increment points
    /// along the gradient: add it to ascend, subtract it to descend.
    pub fn step(&mut self, grad: &[f64], lr: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; grad.len()];
        self.step_into(grad, lr, &mut out)?;
        Ok(out)
    }

    pub fn step_into(&mut self, grad: &[f64], lr: f64, out: &mut [f64]) -> Result<()> {
        if grad.len() != self.dim() || out.len() != self.dim() {
            return Err(GraspError::DimensionMismatch {
                expected: self.dim(),
                actual: grad.len(),
            });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(GraspError::NonFiniteGradient { index });
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            out[i] = lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
        Ok(())
    }
}

/// One update of `state` with gradient `grad`; returns the increment to add.
pub fn adam_step(state: &mut AdamState, grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    state.step(grad, lr)
}
