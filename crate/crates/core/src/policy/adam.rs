use serde::{Deserialize, Serialize};

/// Adam optimizer state for a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub const DEFAULT_LEARNING_RATE: f64 = 5e-4;

    pub fn new(num_params: usize, learning_rate: f64) -> AdamState {
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn num_params(&self) -> usize {
        self.first.len()
    }

    /// One bias-corrected Adam step.
    pub fn apply(&mut self, params: &mut [f32], grads: &[f32]) {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        assert_eq!(grads.len(), self.first.len(), "gradient count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] as f64;
            let m = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            self.first[i] = m;
            self.second[i] = v;
            let update = self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
            params[i] -= update as f32;
        }
    }
}
