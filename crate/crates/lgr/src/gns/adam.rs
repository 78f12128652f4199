//! Adam with bias correction and an exponentially decaying learning rate.

/// Optimizer hyperparameters. The learning rate decays by a factor of 10
/// every `decay_steps` updates, saturating at `lr_final`:
/// `lr(t) = lr_final + (lr_init − lr_final) · 0.1^(t / decay_steps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr_init: f64,
    pub lr_final: f64,
    pub decay_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr_init: 1e-4,
            lr_final: 1e-6,
            decay_steps: 5_000_000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// Constant learning rate, no decay.
    pub fn constant(lr: f64) -> Self {
        AdamConfig { lr_init: lr, lr_final: lr, ..AdamConfig::default() }
    }
}

/// Per-parameter moment accumulators plus the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState { config, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    /// Rebuild from checkpointed parts.
    pub fn from_parts(config: AdamConfig, step: u64, m: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(m.len(), v.len(), "moment buffers must have equal length");
        AdamState { config, step, m, v }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Learning rate of the *next* update.
    pub fn learning_rate(&self) -> f64 {
        let c = &self.config;
        if c.decay_steps == 0 {
            return c.lr_final;
        }
        c.lr_final + (c.lr_init - c.lr_final) * 0.1f64.powf(self.step as f64 / c.decay_steps as f64)
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Panics if `params`/`grads` do not match the state's length; the
    /// optimizer is bound to one model for its lifetime.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer bound to a different parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        let lr = self.learning_rate();
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut adam = AdamState::new(4, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5, 0.0];
        let before = p.clone();
        adam.apply(&mut p, &[0.0; 4]);
        assert_eq!(p, before);
        assert_eq!(adam.step(), 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // With m̂ = g and v̂ = g², the first update is −lr·g/(|g| + ε) ≈ −lr·sign(g).
        let lr = 1e-3;
        let mut adam = AdamState::new(3, AdamConfig::constant(lr));
        let mut p = vec![0.2, -0.7, 1.5];
        adam.apply(&mut p, &[3.0, -0.04, 1e-3]);
        assert_relative_eq!(p[0], 0.2 - lr, max_relative = 1e-5);
        assert_relative_eq!(p[1], -0.7 + lr, max_relative = 1e-4);
        assert_relative_eq!(p[2], 1.5 - lr, max_relative = 1e-4);
    }

    #[test]
    fn matches_reference_recurrence_over_several_steps() {
        // Independent scalar recurrence, computed longhand.
        let c = AdamConfig { lr_init: 0.01, lr_final: 0.01, decay_steps: 100, ..Default::default() };
        let mut adam = AdamState::new(1, c);
        let mut p = vec![0.5];
        let grads = [0.3, -0.1, 0.25, 0.0, 0.9];

        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.5f64);
        for (t, &g) in grads.iter().enumerate() {
            adam.apply(&mut p, &[g]);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= 0.01 * mh / (vh.sqrt() + 1e-8);
            assert_relative_eq!(p[0], x, max_relative = 1e-14);
        }
        assert_eq!(adam.step(), 5);
    }

    #[test]
    fn learning_rate_decays_toward_floor() {
        let c = AdamConfig { lr_init: 1e-4, lr_final: 1e-6, decay_steps: 1000, ..Default::default() };
        let mut adam = AdamState::new(1, c);
        assert_relative_eq!(adam.learning_rate(), 1e-4);
        let mut p = vec![0.0];
        for _ in 0..1000 {
            adam.apply(&mut p, &[0.0]);
        }
        // One decade of decay after decay_steps updates.
        assert_relative_eq!(adam.learning_rate(), 1e-6 + 9.9e-5 * 0.1, max_relative = 1e-12);
        for _ in 0..100_000 {
            adam.apply(&mut p, &[0.0]);
        }
        assert!(adam.learning_rate() < 1.01e-6);
        assert!(adam.learning_rate() >= 1e-6);
    }
}
