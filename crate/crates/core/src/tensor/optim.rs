//! Adam optimizer over flat parameter lists, plus global-norm gradient
//! clipping. Parameters and gradients travel as parallel slices in a fixed
//! order, so updates are deterministic.

use ndarray::ArrayD;

/// Adam hyperparameters.
#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 7e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-5,
            weight_decay: 0.0,
        }
    }
}

/// Adam state: first/second moment estimates per parameter and a step counter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub step_count: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    /// Fresh optimizer with zeroed moments matching `params` in order and shape.
    pub fn new(config: AdamConfig, params: &[ArrayD<f64>]) -> Self {
        let m = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        let v = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        Adam { config, step_count: 0, m, v }
    }

    /// Apply one update in place. `grads` must align with `params` one-to-one.
    pub fn step(&mut self, params: &mut [ArrayD<f64>], grads: &[ArrayD<f64>]) {
        assert_eq!(params.len(), self.m.len(), "adam: parameter count changed");
        assert_eq!(params.len(), grads.len(), "adam: {} params vs {} grads", params.len(), grads.len());
        self.step_count += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step_count as i32);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.shape(), g.shape(), "adam: param/grad shape mismatch");
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g + c.weight_decay * *p;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
            });
        }
    }

    /// Moment arrays in parameter order, for checkpointing.
    pub fn moments(&self) -> (&[ArrayD<f64>], &[ArrayD<f64>]) {
        (&self.m, &self.v)
    }

    /// Restore moments and step counter from a checkpoint.
    pub fn restore(&mut self, step_count: u64, m: Vec<ArrayD<f64>>, v: Vec<ArrayD<f64>>) {
        assert_eq!(m.len(), self.m.len(), "adam restore: moment count mismatch");
        assert_eq!(v.len(), self.v.len(), "adam restore: moment count mismatch");
        self.step_count = step_count;
        self.m = m;
        self.v = v;
    }
}

/// Scale all gradients in place so their joint L2 norm does not exceed
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [ArrayD<f64>], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
    let sq_sum: f64 = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum();
    let norm = sq_sum.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    fn arr(vals: &[f64]) -> ArrayD<f64> {
        ArrayD::from_shape_vec(ndarray::IxDyn(&[vals.len()]), vals.to_vec()).unwrap()
    }

    #[test]
    fn clip_scales_norm_down_to_bound() {
        // Two gradients with joint norm 20 and a bound of 10: exactly halved.
        let mut grads = vec![arr(&[12.0, 0.0]), arr(&[0.0, 16.0])];
        let pre = clip_global_norm(&mut grads, 10.0);
        assert!((pre - 20.0).abs() < 1e-12);
        assert!((grads[0][[0]] - 6.0).abs() < 1e-12);
        assert!((grads[1][[1]] - 8.0).abs() < 1e-12);
        let post: f64 =
            grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        assert!((post - 10.0).abs() < 1e-12);
    }

    #[test]
    fn clip_identity_below_bound() {
        let mut grads = vec![arr(&[3.0, 4.0])];
        let pre = clip_global_norm(&mut grads, 10.0);
        assert!((pre - 5.0).abs() < 1e-12);
        assert_eq!(grads[0], arr(&[3.0, 4.0]));
    }

    #[test]
    fn adam_drives_quadratic_toward_zero() {
        // Minimize w^2 elementwise. Momentum may overshoot locally, so assert
        // convergence of the end state rather than per-step monotonicity.
        let mut params = vec![arr(&[1.0, -2.0, 0.5])];
        let initial: f64 = params[0].iter().map(|w| w * w).sum();
        let mut adam = Adam::new(
            AdamConfig { learning_rate: 0.05, ..AdamConfig::default() },
            &params,
        );
        for _ in 0..100 {
            let grads = vec![params[0].mapv(|w| 2.0 * w)];
            adam.step(&mut params, &grads);
        }
        let final_loss: f64 = params[0].iter().map(|w| w * w).sum();
        assert!(final_loss < 1e-2 * initial, "final loss {final_loss} vs initial {initial}");
    }

    #[test]
    fn adam_step_matches_hand_computation() {
        // Single scalar parameter, one step from zeroed moments:
        // m = 0.1 g, v = 0.001 g^2, mhat = g, vhat = g^2,
        // update = lr * g / (|g| + eps).
        let mut params = vec![arr(&[2.0])];
        let mut adam = Adam::new(
            AdamConfig { learning_rate: 0.01, epsilon: 1e-5, ..AdamConfig::default() },
            &params,
        );
        adam.step(&mut params, &[arr(&[4.0])]);
        let expected = 2.0 - 0.01 * 4.0 / (4.0 + 1e-5);
        assert!((params[0][[0]] - expected).abs() < 1e-14);
    }
}
