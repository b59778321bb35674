//! Running standardization of scalar streams (Welford's algorithm), used
//! for reward normalization and for the value-target normalizer. State is
//! serializable so checkpoints resume with identical statistics.

use serde::{Deserialize, Serialize};

/// Variance floor: keeps constant streams from dividing by zero.
const VAR_FLOOR: f64 = 1e-8;

/// Numerically stable running mean/variance over a scalar stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: f64,
    mean: f64,
    /// Sum of squared deviations from the running mean.
    m2: f64,
}

impl RunningNorm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, x: f64) {
        self.count += 1.0;
        let d1 = x - self.mean;
        self.mean += d1 / self.count;
        let d2 = x - self.mean;
        self.m2 += d1 * d2;
    }

    pub fn update_many(&mut self, xs: &[f64]) {
        for &x in xs {
            self.update(x);
        }
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance of everything seen so far (0 before any data).
    pub fn variance(&self) -> f64 {
        if self.count > 0.0 {
            self.m2 / self.count
        } else {
            0.0
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().max(VAR_FLOOR).sqrt()
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std() + self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_stream_normalizes_to_zero() {
        let mut n = RunningNorm::new();
        for _ in 0..100 {
            n.update(3.7);
        }
        assert!((n.mean() - 3.7).abs() < 1e-12);
        assert!(n.variance() < 1e-12);
        assert_eq!(n.normalize(3.7), 0.0);
    }

    #[test]
    fn alternating_stream_mean_converges_to_zero() {
        let mut n = RunningNorm::new();
        for i in 0..10_000 {
            n.update(if i % 2 == 0 { -1.0 } else { 1.0 });
        }
        assert!(n.mean().abs() < 1e-12);
        assert!((n.variance() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn running_stats_match_batch_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = Normal::new(2.5, 1.7).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let mut n = RunningNorm::new();
        n.update_many(&xs);
        // Independent batch oracle.
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((n.mean() - mean).abs() / mean.abs() < 0.01);
        assert!((n.variance() - var).abs() / var < 0.01);
        // Normalize/denormalize round-trip.
        let z = n.normalize(4.0);
        assert!((n.denormalize(z) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trip() {
        let mut n = RunningNorm::new();
        n.update_many(&[1.0, 2.0, 3.0, -4.0]);
        let json = serde_json::to_string(&n).unwrap();
        let back: RunningNorm = serde_json::from_str(&json).unwrap();
        assert_eq!(n, back);
    }
}
