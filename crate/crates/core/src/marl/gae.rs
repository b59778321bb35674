//! Generalized advantage estimation over one trajectory segment.

/// Compute advantages and returns for an aligned trajectory.
///
/// With `V_{t+1}` taken from `values[t+1]` (or `bootstrap` past the end):
///
/// ```text
/// δ_t = r_t + γ·V_{t+1}·(1 − done_t) − V_t
/// A_t = δ_t + γ·λ·(1 − done_t)·A_{t+1}
/// ```
///
/// and `returns_t = A_t + V_t`. A `done` flag cuts both the bootstrap and
/// the advantage recursion at that step; callers that want time-limit
/// bootstrapping instead pass `done = false` and supply the terminal
/// state's value as `bootstrap` (see the rollout buffer).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_max = rewards.len();
    assert_eq!(values.len(), t_max, "values misaligned with rewards");
    assert_eq!(dones.len(), t_max, "dones misaligned with rewards");
    let mut advantages = vec![0.0; t_max];
    let mut returns = vec![0.0; t_max];
    let mut acc = 0.0;
    for t in (0..t_max).rev() {
        let next_value = if t + 1 < t_max { values[t + 1] } else { bootstrap };
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * mask - values[t];
        acc = delta + gamma * lambda * mask * acc;
        advantages[t] = acc;
        returns[t] = acc + values[t];
    }
    (advantages, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_step_with_zero_values() {
        let (adv, ret) = compute_gae(&[1.0], &[0.0], &[false], 0.0, 0.99, 0.95);
        assert_eq!(adv, vec![1.0]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn lambda_zero_collapses_to_one_step_deltas() {
        let rewards = [1.0, -2.0, 0.5, 3.0];
        let values = [0.3, -0.1, 0.8, 0.2];
        let dones = [false; 4];
        let boot = 0.6;
        let gamma = 0.9;
        let (adv, _) = compute_gae(&rewards, &values, &dones, boot, gamma, 0.0);
        for t in 0..4 {
            let next = if t + 1 < 4 { values[t + 1] } else { boot };
            let delta = rewards[t] + gamma * next - values[t];
            assert!((adv[t] - delta).abs() < 1e-15, "step {t}");
        }
    }

    #[test]
    fn matches_hand_unrolled_three_step_recursion() {
        // r=(1,0,2), V=(0.5,0.5,0.5), bootstrap 0, γ=0.99, λ=0.95.
        // By hand (γλ = 0.9405):
        //   δ2 = 2 + 0        − 0.5 = 1.5            A2 = 1.5
        //   δ1 = 0 + 0.99·0.5 − 0.5 = −0.005         A1 = −0.005 + 0.9405·1.5     = 1.40575
        //   δ0 = 1 + 0.99·0.5 − 0.5 = 0.995          A0 = 0.995  + 0.9405·1.40575 = 2.317107875
        let (adv, ret) =
            compute_gae(&[1.0, 0.0, 2.0], &[0.5; 3], &[false; 3], 0.0, 0.99, 0.95);
        let expected = [2.317107875, 1.40575, 1.5];
        for t in 0..3 {
            assert!((adv[t] - expected[t]).abs() < 1e-12, "step {t}: {}", adv[t]);
            assert!((ret[t] - (expected[t] + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn done_cuts_bootstrap_and_recursion() {
        // done at t=0: A0 ignores V1, the bootstrap, and A1 entirely.
        let (adv, _) =
            compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 7.0, 0.99, 0.95);
        assert_eq!(adv[0], 1.0);
        assert!((adv[1] - (1.0 + 0.99 * 7.0)).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Jointly scaling rewards, values, and bootstrap by k scales the
        /// advantages by exactly k. Powers of two commute with every fp
        /// rounding step, so k=2 must be bitwise exact.
        #[test]
        fn advantages_are_linear_in_the_reward_scale(
            rewards in proptest::collection::vec(-5.0f64..5.0, 1..12),
            values in proptest::collection::vec(-5.0f64..5.0, 12),
            boot in -5.0f64..5.0,
            done_mask in proptest::collection::vec(proptest::bool::ANY, 12),
        ) {
            let t = rewards.len();
            let values = &values[..t];
            let dones = &done_mask[..t];
            let (base, _) = compute_gae(&rewards, values, dones, boot, 0.99, 0.95);

            let scale = |k: f64| {
                let r: Vec<f64> = rewards.iter().map(|x| x * k).collect();
                let v: Vec<f64> = values.iter().map(|x| x * k).collect();
                compute_gae(&r, &v, dones, boot * k, 0.99, 0.95).0
            };
            for (a, b) in scale(2.0).iter().zip(&base) {
                prop_assert_eq!(a.to_bits(), (b * 2.0).to_bits());
            }
            for (a, b) in scale(0.37).iter().zip(&base) {
                prop_assert!((a - b * 0.37).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
