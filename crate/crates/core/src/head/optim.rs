use serde::{Deserialize, Serialize};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

/// Per-parameter optimizer memory over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Momentum coefficient of the SGD mode.
    pub momentum: f64,
}

impl OptimizerState {
    pub fn adam(len: usize) -> Self {
        OptimizerState {
            kind: OptimizerKind::Adam,
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            velocity: Vec::new(),
            momentum: 0.0,
        }
    }

    pub fn sgd_momentum(len: usize, momentum: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::SgdMomentum,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            velocity: vec![0.0; len],
            momentum,
        }
    }

    pub fn new(kind: OptimizerKind, len: usize, momentum: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(len),
            OptimizerKind::SgdMomentum => Self::sgd_momentum(len, momentum),
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Adam => adam_step(self, params, grads, lr),
            OptimizerKind::SgdMomentum => sgd_momentum_step(self, params, grads, lr),
        }
    }
}

/// Bias-corrected Adam update; increments `state.step`.
pub fn adam_step(state: &mut OptimizerState, params: &mut [f64], grads: &[f64], lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), state.first_moment.len(), "optimizer state length mismatch");
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
}

/// Heavy-ball SGD: `v = mu * v + g`, `p -= lr * v`.
pub fn sgd_momentum_step(state: &mut OptimizerState, params: &mut [f64], grads: &[f64], lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    state.step += 1;
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        *v = state.momentum * *v + g;
        *p -= lr * *v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_alone() {
        let mut state = OptimizerState::adam(3);
        let mut p = vec![0.5, -1.0, 2.0];
        adam_step(&mut state, &mut p, &[0.0; 3], 0.01);
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_about_lr() {
        let mut state = OptimizerState::adam(4);
        let mut p = vec![0.0; 4];
        let g = [3.0, -0.002, 1e-3, -40.0];
        adam_step(&mut state, &mut p, &g, 0.01);
        for (pi, gi) in p.iter().zip(g) {
            assert!((pi + 0.01 * gi.signum()).abs() < 1e-6, "{pi} vs {gi}");
        }
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        let g = [0.5, -0.1];
        let lr = 0.1;
        let mut state = OptimizerState::adam(2);
        let mut p = vec![1.0, -2.0];
        adam_step(&mut state, &mut p, &g, lr);
        adam_step(&mut state, &mut p, &g, lr);

        // m1 = 0.1 g, v1 = 0.001 g^2; m2 = 0.19 g, v2 = 0.001999 g^2.
        let mut expected = [1.0f64, -2.0];
        for (i, gi) in g.iter().enumerate() {
            let (m1, v1) = (0.1 * gi, 0.001 * gi * gi);
            expected[i] -= lr * (m1 / 0.1) / ((v1 / 0.001).sqrt() + 1e-8);
            let (m2, v2) = (0.19 * gi, 0.001999 * gi * gi);
            expected[i] -= lr * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.998001)).sqrt() + 1e-8);
        }
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(state.step, 2);
    }

    #[test]
    fn sgd_momentum_accumulates_velocity() {
        let mut state = OptimizerState::sgd_momentum(1, 0.9);
        let mut p = vec![0.0];
        sgd_momentum_step(&mut state, &mut p, &[1.0], 0.1);
        sgd_momentum_step(&mut state, &mut p, &[1.0], 0.1);
        // v1 = 1, v2 = 1.9 -> p = -(0.1 + 0.19)
        assert!((p[0] + 0.29).abs() < 1e-15);
    }
}
