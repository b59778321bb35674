//! Clipped-surrogate policy optimization over a prepared batch.
//!
//! One update runs several epochs over the batch. Each epoch walks the
//! batch in contiguous minibatches (a single minibatch by default), and
//! each minibatch accumulates its gradient over small fixed-size chunks so
//! the computation graph never holds more than a few dozen samples at once
//! — the summed chunk gradients are exactly the full-minibatch gradient,
//! and the chunk boundaries are fixed, so results are deterministic.

use serde::{Deserialize, Serialize};

use super::buffer::TrainBatch;
use super::PolicyModel;
use crate::tensor::optim::{clip_global_norm, Adam};
use crate::tensor::params::BoundParams;
use crate::tensor::{Gradients, Tape, Tensor};

/// Samples per gradient-accumulation chunk.
const CHUNK_SAMPLES: usize = 64;
/// Guard added to the advantage standard deviation before dividing.
const ADV_STD_GUARD: f64 = 1e-5;

/// Optimization hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Advantage-estimation decay.
    pub gae_lambda: f64,
    /// Surrogate clipping radius.
    pub clip_epsilon: f64,
    /// Passes over the batch per update.
    pub ppo_epochs: usize,
    /// Contiguous minibatches per epoch.
    pub num_minibatches: usize,
    /// Weight of the critic loss.
    pub value_coef: f64,
    /// Weight of the entropy bonus.
    pub entropy_coef: f64,
    /// Adam step size.
    pub learning_rate: f64,
    /// Transition point of the critic's robust loss.
    pub huber_delta: f64,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
    /// Standardize rewards with running statistics.
    pub use_reward_norm: bool,
    /// Train the critic against running-normalized returns.
    pub use_value_norm: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            ppo_epochs: 10,
            num_minibatches: 1,
            value_coef: 1.0,
            entropy_coef: 0.01,
            learning_rate: 7e-4,
            huber_delta: 10.0,
            grad_clip: 10.0,
            use_reward_norm: true,
            use_value_norm: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.clip_epsilon <= 0.0 {
            return Err(format!("clip_epsilon must be positive, got {}", self.clip_epsilon));
        }
        if self.ppo_epochs == 0 || self.num_minibatches == 0 {
            return Err("ppo_epochs and num_minibatches must be at least 1".into());
        }
        if self.learning_rate <= 0.0 {
            return Err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.huber_delta <= 0.0 || self.grad_clip <= 0.0 {
            return Err("huber_delta and grad_clip must be positive".into());
        }
        Ok(())
    }
}

/// Diagnostics of one update, averaged over its optimizer steps.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of action rows whose ratio left the clip interval.
    pub clip_fraction: f64,
    /// Mean of `old_logp - new_logp` (a cheap divergence estimate).
    pub approx_kl: f64,
    /// Pre-clip global gradient norm.
    pub grad_norm: f64,
    pub n_samples: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss ({value}) at epoch {epoch}, minibatch {minibatch}")]
    NonFinite { value: f64, epoch: usize, minibatch: usize },
}

/// Pessimistic clipped surrogate per action row (to be maximized):
/// `min(ratio · A, clip(ratio, 1±ε) · A)`. Where the two branches tie —
/// everywhere inside the clip interval — the gradient flows through the
/// unclipped branch.
pub fn pessimistic_surrogate(
    tape: &Tape,
    ratio: &Tensor,
    advantage: &Tensor,
    epsilon: f64,
) -> Tensor {
    let unclipped = tape.mul(ratio, advantage);
    let clipped = tape.mul(&tape.clip(ratio, 1.0 - epsilon, 1.0 + epsilon), advantage);
    tape.min_elem(&unclipped, &clipped)
}

/// Scalar components summed over one chunk, plus row-level diagnostics.
struct ChunkOutcome {
    loss: Tensor,
    clip_count: usize,
    kl_sum: f64,
    policy_sum: f64,
    value_sum: f64,
    entropy_sum: f64,
}

/// Build the loss for one chunk of samples. `scale_samples` is the full
/// minibatch size `B`, so that summing chunk losses yields the exact
/// minibatch mean: `-(1/(B·N))·Σ surr + (c_v/B)·Σ huber − (c_e/(B·N))·Σ H`.
fn chunk_loss<P: PolicyModel + ?Sized>(
    policy: &P,
    tape: &Tape,
    bound: &BoundParams,
    obs: &[P::Obs],
    actions: &[Vec<usize>],
    old_logp: &[f64],
    adv_rows: &[f64],
    targets: &[f64],
    scale_samples: usize,
    cfg: &PpoConfig,
) -> ChunkOutcome {
    let n = policy.n_agents();
    let rows = obs.len() * n;
    assert_eq!(old_logp.len(), rows);
    assert_eq!(adv_rows.len(), rows);
    assert_eq!(targets.len(), obs.len());

    let eval = policy.evaluate_batch(tape, bound, obs, actions);
    let old = Tensor::constant1(ndarray::Array1::from(old_logp.to_vec()));
    let adv = Tensor::constant1(ndarray::Array1::from(adv_rows.to_vec()));
    let ratio = tape.exp(&tape.sub(&eval.chosen_logp, &old));
    let surrogate = pessimistic_surrogate(tape, &ratio, &adv, cfg.clip_epsilon);

    let residual = tape.sub(&eval.values, &Tensor::constant(
        ndarray::Array2::from_shape_vec((targets.len(), 1), targets.to_vec())
            .expect("target column")
            .into_dyn(),
    ));
    let value_terms = tape.huber(&residual, cfg.huber_delta);

    let policy_sum = tape.sum(&surrogate);
    let value_sum = tape.sum(&value_terms);
    let entropy_sum = tape.sum(&eval.entropy);

    let bn = (scale_samples * n) as f64;
    let loss = tape.add(
        &tape.add(
            &tape.scalar_mul(&policy_sum, -1.0 / bn),
            &tape.scalar_mul(&value_sum, cfg.value_coef / scale_samples as f64),
        ),
        &tape.scalar_mul(&entropy_sum, -cfg.entropy_coef / bn),
    );

    // Row diagnostics from the forward values.
    let ratio_data = ratio.data();
    let chosen = eval.chosen_logp.data();
    let mut clip_count = 0;
    let mut kl_sum = 0.0;
    for (r, (&new_lp, &old_lp)) in ratio_data.iter().zip(chosen.iter().zip(old_logp)) {
        if (r - 1.0).abs() > cfg.clip_epsilon {
            clip_count += 1;
        }
        kl_sum += old_lp - new_lp;
    }
    ChunkOutcome {
        clip_count,
        kl_sum,
        policy_sum: policy_sum.scalar(),
        value_sum: value_sum.scalar(),
        entropy_sum: entropy_sum.scalar(),
        loss,
    }
}

/// Mean-zero, unit-scale advantages (population statistics, guarded
/// denominator). Applied once per update over the whole batch.
fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + ADV_STD_GUARD)).collect()
}

/// Run one full optimization update (all epochs) on a prepared batch.
pub fn ppo_update<P: PolicyModel + ?Sized>(
    policy: &mut P,
    adam: &mut Adam,
    batch: &TrainBatch<P::Obs>,
    cfg: &PpoConfig,
) -> Result<UpdateStats, TrainError> {
    let b = batch.obs.len();
    let n = policy.n_agents();
    assert!(b > 0, "empty training batch");
    assert_eq!(batch.old_logp.len(), b * n);
    assert_eq!(batch.advantages.len(), b);
    assert_eq!(batch.value_targets.len(), b);

    let adv_norm = normalize_advantages(&batch.advantages);
    // Every agent row of a sample shares the sample's joint advantage.
    let adv_rows: Vec<f64> =
        adv_norm.iter().flat_map(|&a| std::iter::repeat_n(a, n)).collect();

    let mut stats = UpdateStats { n_samples: b, ..UpdateStats::default() };
    let mut steps = 0usize;
    let mut total_rows = 0usize;

    for epoch in 0..cfg.ppo_epochs {
        // Contiguous minibatch ranges whose sizes differ by at most one.
        let base = b / cfg.num_minibatches;
        let extra = b % cfg.num_minibatches;
        let mut start = 0;
        for mb in 0..cfg.num_minibatches {
            let len = base + usize::from(mb < extra);
            if len == 0 {
                continue;
            }
            let range = start..start + len;
            start += len;

            let mut grads = Gradients::new();
            let mut last_bound: Option<BoundParams> = None;
            let mut mb_out =
                (0.0f64, 0.0f64, 0.0f64, 0usize, 0.0f64); // policy, value, entropy, clips, kl
            for chunk_start in range.clone().step_by(CHUNK_SAMPLES) {
                let chunk_end = (chunk_start + CHUNK_SAMPLES).min(range.end);
                let cs = chunk_start..chunk_end;
                let rows = cs.start * n..cs.end * n;
                let tape = Tape::new();
                // Bind first: leaves occupy the same node indices on every
                // chunk's tape, so one gradient table accumulates across
                // tapes.
                let bound = policy.store().bind(&tape);
                let out = chunk_loss(
                    policy,
                    &tape,
                    &bound,
                    &batch.obs[cs.clone()],
                    &batch.actions[cs.clone()],
                    &batch.old_logp[rows.clone()],
                    &adv_rows[rows],
                    &batch.value_targets[cs],
                    len,
                    cfg,
                );
                let loss_value = out.loss.scalar();
                if !loss_value.is_finite() {
                    return Err(TrainError::NonFinite { value: loss_value, epoch, minibatch: mb });
                }
                tape.backward_into(&out.loss, &mut grads);
                mb_out.0 += out.policy_sum;
                mb_out.1 += out.value_sum;
                mb_out.2 += out.entropy_sum;
                mb_out.3 += out.clip_count;
                mb_out.4 += out.kl_sum;
                last_bound = Some(bound);
            }

            let mut grad_arrays =
                last_bound.expect("at least one chunk ran").gradients(&grads);
            let pre_norm = clip_global_norm(&mut grad_arrays, cfg.grad_clip);
            adam.step(&mut policy.store_mut().values, &grad_arrays);

            let rows = (len * n) as f64;
            stats.policy_loss += -mb_out.0 / rows;
            stats.value_loss += mb_out.1 / len as f64;
            stats.entropy += mb_out.2 / rows;
            stats.approx_kl += mb_out.4 / rows;
            stats.grad_norm += pre_norm;
            stats.clip_fraction += mb_out.3 as f64;
            total_rows += len * n;
            steps += 1;
        }
    }

    let steps_f = steps as f64;
    stats.policy_loss /= steps_f;
    stats.value_loss /= steps_f;
    stats.entropy /= steps_f;
    stats.approx_kl /= steps_f;
    stats.grad_norm /= steps_f;
    stats.clip_fraction /= total_rows as f64;
    Ok(stats)
}
