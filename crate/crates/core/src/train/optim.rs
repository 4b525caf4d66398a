use serde::{Deserialize, Serialize};

/// RMSprop without momentum:
/// `v = decay * v + (1 - decay) * g^2`, `x -= lr * g / (sqrt(v) + eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmsProp {
    pub fn update(&self, params: &mut [f64], grads: &[f64], acc: &mut [f64]) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), acc.len());
        for ((x, g), v) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
            *v = self.decay * *v + (1.0 - self.decay) * g * g;
            *x -= self.learning_rate * g / (v.sqrt() + self.epsilon);
        }
    }
}
