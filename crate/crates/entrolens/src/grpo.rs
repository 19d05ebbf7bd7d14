//! Group-relative policy optimization.
//!
//! A group of `G` rollouts sampled from the same prompt is scored, the
//! scores are standardized within the group ([`group_advantages`]), and the
//! clipped surrogate objective ([`grpo_objective`]) averages token terms
//! per sequence and then sequences per group (seq-mean-token-mean). There
//! is deliberately no KL penalty term anywhere in this module: the rewards
//! this crate optimizes are intrinsic, and a reference-policy anchor would
//! fight the very drift the pipeline is built to observe.
//!
//! For the tabular softmax policy of the toy lab the policy gradient has a
//! closed form ([`softmax_policy_gradient`]); it is cross-checked against
//! central finite differences of the objective in the tests.

use crate::dist::ProbVector;
use crate::toy_lab::ToyPolicy;
use crate::{Error, Result};

/// One sampled token together with the context slot it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledStep {
    pub context: usize,
    pub token: usize,
}

/// A group of rollouts for one prompt: per-rollout scalar rewards plus
/// per-token log-probabilities under the sampling (old) and current (new)
/// policies. Paths — the sampled `(context, token)` pairs — are optional;
/// they are required only by the analytic gradient.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    rewards: Vec<f64>,
    old_logprobs: Vec<Vec<f64>>,
    new_logprobs: Vec<Vec<f64>>,
    paths: Vec<Vec<SampledStep>>,
}

impl RolloutGroup {
    pub fn new(
        rewards: Vec<f64>,
        old_logprobs: Vec<Vec<f64>>,
        new_logprobs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::with_paths(rewards, old_logprobs, new_logprobs, Vec::new())
    }

    /// Like [`RolloutGroup::new`] but records the sampled paths so the
    /// analytic gradient can recover which logit slots were visited.
    pub fn with_paths(
        rewards: Vec<f64>,
        old_logprobs: Vec<Vec<f64>>,
        new_logprobs: Vec<Vec<f64>>,
        paths: Vec<Vec<SampledStep>>,
    ) -> Result<Self> {
        let g = rewards.len();
        if g < 2 {
            return Err(Error::GroupTooSmall(g));
        }
        if old_logprobs.len() != g || new_logprobs.len() != g {
            return Err(Error::ShapeMismatch(format!(
                "expected {g} log-prob sequences, got {} old / {} new",
                old_logprobs.len(),
                new_logprobs.len()
            )));
        }
        if !paths.is_empty() && paths.len() != g {
            return Err(Error::ShapeMismatch(format!(
                "expected {g} paths, got {}",
                paths.len()
            )));
        }
        for &r in &rewards {
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    what: "reward",
                    value: r,
                });
            }
        }
        for i in 0..g {
            let t = old_logprobs[i].len();
            if t == 0 {
                return Err(Error::ShapeMismatch(format!("sequence {i} has no tokens")));
            }
            if new_logprobs[i].len() != t {
                return Err(Error::ShapeMismatch(format!(
                    "sequence {i}: {t} old log-probs vs {} new",
                    new_logprobs[i].len()
                )));
            }
            if !paths.is_empty() && paths[i].len() != t {
                return Err(Error::ShapeMismatch(format!(
                    "sequence {i}: {t} log-probs vs {} path steps",
                    paths[i].len()
                )));
            }
            for &lp in old_logprobs[i].iter().chain(&new_logprobs[i]) {
                if !lp.is_finite() || lp > 1e-12 {
                    return Err(Error::InvalidLogProb(lp));
                }
            }
        }
        Ok(Self {
            rewards,
            old_logprobs,
            new_logprobs,
            paths,
        })
    }

    pub fn group_size(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn old_logprobs(&self) -> &[Vec<f64>] {
        &self.old_logprobs
    }

    pub fn new_logprobs(&self) -> &[Vec<f64>] {
        &self.new_logprobs
    }

    pub fn paths(&self) -> Option<&[Vec<SampledStep>]> {
        if self.paths.is_empty() {
            None
        } else {
            Some(&self.paths)
        }
    }
}

/// Group-standardized advantages plus the raw group statistics they came
/// from. When the reward standard deviation is exactly zero all advantages
/// are zero, so a degenerate group produces a no-op update rather than NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSet {
    advantages: Vec<f64>,
    mean_reward: f64,
    std_reward: f64,
}

impl AdvantageSet {
    /// Assembles a set from precomputed parts, re-checking the invariants
    /// (at least two entries, everything finite, mean advantage zero
    /// whenever the deviation is non-zero).
    pub fn new(advantages: Vec<f64>, mean_reward: f64, std_reward: f64) -> Result<Self> {
        if advantages.len() < 2 {
            return Err(Error::GroupTooSmall(advantages.len()));
        }
        if !mean_reward.is_finite() {
            return Err(Error::NonFinite {
                what: "mean reward",
                value: mean_reward,
            });
        }
        if !std_reward.is_finite() || std_reward < 0.0 {
            return Err(Error::InvalidParam(format!(
                "reward std must be finite and >= 0, got {std_reward}"
            )));
        }
        let mut scale: f64 = 1.0;
        for &a in &advantages {
            if !a.is_finite() {
                return Err(Error::NonFinite {
                    what: "advantage",
                    value: a,
                });
            }
            scale = scale.max(a.abs());
        }
        let mean: f64 = advantages.iter().sum::<f64>() / advantages.len() as f64;
        if std_reward > 0.0 && mean.abs() > 1e-6 * scale {
            return Err(Error::InvalidParam(format!(
                "advantages must be mean-zero, got mean {mean}"
            )));
        }
        Ok(Self {
            advantages,
            mean_reward,
            std_reward,
        })
    }

    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn mean_reward(&self) -> f64 {
        self.mean_reward
    }

    pub fn std_reward(&self) -> f64 {
        self.std_reward
    }
}

/// Standardizes rewards within a group: `(r_i - mean) / (std + eps_std)`
/// with the population (not sample) standard deviation.
///
/// `eps_std` guards the division; pass `0.0` only when a zero-deviation
/// group is impossible or a zero advantage vector is acceptable.
pub fn group_advantages(rewards: &[f64], eps_std: f64) -> Result<AdvantageSet> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::GroupTooSmall(g));
    }
    if !eps_std.is_finite() || eps_std < 0.0 {
        return Err(Error::InvalidParam(format!(
            "eps_std must be finite and >= 0, got {eps_std}"
        )));
    }
    for &r in rewards {
        if !r.is_finite() {
            return Err(Error::NonFinite {
                what: "reward",
                value: r,
            });
        }
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = var.sqrt();
    let advantages = if std == 0.0 {
        vec![0.0; g]
    } else {
        rewards.iter().map(|r| (r - mean) / (std + eps_std)).collect()
    };
    AdvantageSet::new(advantages, mean, std)
}

/// One token's contribution to the clipped surrogate:
/// `min(ratio * a, clamp(ratio, 1 - eps, 1 + eps) * a)`.
pub fn clipped_term(ratio: f64, advantage: f64, eps_clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip);
    (ratio * advantage).min(clipped * advantage)
}

fn check_eps_clip(eps_clip: f64) -> Result<()> {
    if !eps_clip.is_finite() || eps_clip <= 0.0 || eps_clip >= 1.0 {
        return Err(Error::InvalidParam(format!(
            "eps_clip must lie in (0, 1), got {eps_clip}"
        )));
    }
    Ok(())
}

/// The clipped surrogate objective with seq-mean-token-mean aggregation:
/// token terms are averaged within each sequence, sequence means are
/// averaged across the group. Each sequence uses its own group-relative
/// advantage for every token.
pub fn grpo_objective(group: &RolloutGroup, advantages: &AdvantageSet, eps_clip: f64) -> Result<f64> {
    check_eps_clip(eps_clip)?;
    let g = group.group_size();
    if advantages.advantages().len() != g {
        return Err(Error::ShapeMismatch(format!(
            "{g} rollouts vs {} advantages",
            advantages.advantages().len()
        )));
    }
    let mut total = 0.0;
    for i in 0..g {
        let a = advantages.advantages()[i];
        let old = &group.old_logprobs()[i];
        let new = &group.new_logprobs()[i];
        let seq: f64 = old
            .iter()
            .zip(new)
            .map(|(&o, &n)| clipped_term((n - o).exp(), a, eps_clip))
            .sum::<f64>()
            / old.len() as f64;
        total += seq;
    }
    Ok(total / g as f64)
}

/// Re-evaluates the objective for the group's sampled paths under an
/// arbitrary parameter table: new log-probs are recomputed from `policy`
/// at `temperature` while the stored old log-probs stay fixed. This is the
/// function the finite-difference oracle probes.
// The index loop walks three parallel per-rollout arrays; keep it literal.
#[allow(clippy::needless_range_loop)]
pub fn objective_under_policy(
    group: &RolloutGroup,
    advantages: &AdvantageSet,
    policy: &ToyPolicy,
    temperature: f64,
    eps_clip: f64,
) -> Result<f64> {
    check_eps_clip(eps_clip)?;
    let g = group.group_size();
    if advantages.advantages().len() != g {
        return Err(Error::ShapeMismatch(format!(
            "{g} rollouts vs {} advantages",
            advantages.advantages().len()
        )));
    }
    let paths = group
        .paths()
        .ok_or_else(|| Error::ShapeMismatch("rollout group carries no sampled paths".into()))?;
    let mut dists: Vec<Option<ProbVector>> = vec![None; policy.context_count()];
    let mut total = 0.0;
    for i in 0..g {
        let a = advantages.advantages()[i];
        let old = &group.old_logprobs()[i];
        let mut seq = 0.0;
        for (step, &o) in paths[i].iter().zip(old) {
            let dist = cached_dist(&mut dists, policy, step.context, temperature)?;
            let token_prob = *dist.probs().get(step.token).ok_or_else(|| {
                Error::ShapeMismatch(format!(
                    "token {} out of range for vocab {}",
                    step.token,
                    dist.len()
                ))
            })?;
            let ratio = (token_prob.ln() - o).exp();
            seq += clipped_term(ratio, a, eps_clip);
        }
        total += seq / paths[i].len() as f64;
    }
    Ok(total / g as f64)
}

fn cached_dist<'a>(
    cache: &'a mut [Option<ProbVector>],
    policy: &ToyPolicy,
    context: usize,
    temperature: f64,
) -> Result<&'a ProbVector> {
    if context >= cache.len() {
        return Err(Error::ContextOutOfRange {
            index: context,
            count: cache.len(),
        });
    }
    if cache[context].is_none() {
        cache[context] = Some(policy.dist(context, temperature)?);
    }
    Ok(cache[context].as_ref().unwrap())
}

/// Analytic policy gradient of the on-policy objective for a tabular
/// softmax policy, with the same shape as the policy's logit table.
///
/// Each sampled step `(c, v)` of sequence `i` contributes
/// `a_i / (G * T_i) * (1[u = v] - p(u | c)) / temperature` to the logit
/// slot `(c, u)` — the `1/temperature` factor comes from differentiating
/// the temperature-scaled softmax and is what the finite-difference oracle
/// confirms.
///
/// Valid at the sampling point (old = new log-probs); the clipped objective
/// is smooth there, so this is the exact ascent direction for one update.
// The index loop walks parallel per-rollout arrays; keep it literal.
#[allow(clippy::needless_range_loop)]
pub fn softmax_policy_gradient(
    group: &RolloutGroup,
    advantages: &AdvantageSet,
    policy: &ToyPolicy,
    temperature: f64,
) -> Result<Vec<Vec<f64>>> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidTemperature(temperature));
    }
    let g = group.group_size();
    if advantages.advantages().len() != g {
        return Err(Error::ShapeMismatch(format!(
            "{g} rollouts vs {} advantages",
            advantages.advantages().len()
        )));
    }
    let paths = group
        .paths()
        .ok_or_else(|| Error::ShapeMismatch("rollout group carries no sampled paths".into()))?;
    let vocab = policy.vocab_size();
    let mut dists: Vec<Option<ProbVector>> = vec![None; policy.context_count()];
    let mut grad = policy.zeros_like();
    for i in 0..g {
        let scale = advantages.advantages()[i] / (g as f64 * paths[i].len() as f64);
        for step in &paths[i] {
            if step.token >= vocab {
                return Err(Error::ShapeMismatch(format!(
                    "token {} out of range for vocab {vocab}",
                    step.token
                )));
            }
            let dist = cached_dist(&mut dists, policy, step.context, temperature)?;
            let probs = dist.probs().to_vec();
            let row = &mut grad[step.context];
            for (u, &p) in probs.iter().enumerate() {
                let indicator = if u == step.token { 1.0 } else { 0.0 };
                row[u] += scale * (indicator - p) / temperature;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy_lab::{ContextMode, ToyPolicy};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn advantage_fixture_two_rewards() {
        let adv = group_advantages(&[1.0, 3.0], 1e-6).unwrap();
        // mean 2, population std 1: (1 - 2) / (1 + 1e-6).
        close(adv.advantages()[0], -1.0 / (1.0 + 1e-6), 1e-12);
        close(adv.advantages()[1], 1.0 / (1.0 + 1e-6), 1e-12);
        close(adv.advantages()[0], -0.999999, 1e-6);
        close(adv.mean_reward(), 2.0, 1e-12);
        close(adv.std_reward(), 1.0, 1e-12);
    }

    #[test]
    fn advantage_fixture_three_rewards_population_std() {
        // Population std of [0, 1, 2] is sqrt(2/3); the sample std would
        // be 1.0 and would give ±1 instead.
        let adv = group_advantages(&[0.0, 1.0, 2.0], 0.0).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        close(adv.advantages()[0], -expected, 1e-12);
        close(adv.advantages()[1], 0.0, 1e-12);
        close(adv.advantages()[2], expected, 1e-12);
        close(expected, 1.224745, 1e-6);
    }

    #[test]
    fn constant_rewards_give_zero_advantages() {
        for eps in [0.0, 1e-6] {
            let adv = group_advantages(&[0.7; 5], eps).unwrap();
            assert!(adv.advantages().iter().all(|&a| a == 0.0));
            close(adv.std_reward(), 0.0, 0.0);
        }
    }

    #[test]
    fn advantage_input_validation() {
        assert!(matches!(
            group_advantages(&[1.0], 1e-6),
            Err(Error::GroupTooSmall(1))
        ));
        assert!(matches!(
            group_advantages(&[], 1e-6),
            Err(Error::GroupTooSmall(0))
        ));
        assert!(matches!(
            group_advantages(&[1.0, f64::NAN], 1e-6),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            group_advantages(&[1.0, 2.0], -1.0),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn clipped_term_fixtures() {
        // ratio below the clip window with a negative advantage: the
        // pessimistic branch wins, min(-0.5, -0.8) = -0.8.
        close(clipped_term(0.5, -1.0, 0.2), -0.8, 1e-12);
        // ratio above the window with a positive advantage is capped.
        close(clipped_term(10.0, 1.0, 0.2), 1.2, 1e-12);
        // inside the window the raw term passes through.
        close(clipped_term(1.1, 2.0, 0.2), 2.2, 1e-12);
        close(clipped_term(1.0, -3.0, 0.2), -3.0, 1e-12);
    }

    fn two_seq_group(ratio_second: f64) -> (RolloutGroup, AdvantageSet) {
        let old = vec![vec![0.2f64.ln()], vec![0.2f64.ln()]];
        let new = vec![vec![0.2f64.ln()], vec![(0.2 * ratio_second).ln()]];
        let group = RolloutGroup::new(vec![0.0, 1.0], old, new).unwrap();
        let adv = AdvantageSet::new(vec![-1.0, 1.0], 0.5, 0.5).unwrap();
        (group, adv)
    }

    #[test]
    fn objective_fixture_two_single_token_sequences() {
        // ratios [1, 2], advantages [-1, +1], eps 0.2:
        // ((-1 * 1) + min(2, 1.2) * 1) / 2 = 0.1.
        let (group, adv) = two_seq_group(2.0);
        close(grpo_objective(&group, &adv, 0.2).unwrap(), 0.1, 1e-9);
    }

    #[test]
    fn on_policy_objective_is_mean_advantage() {
        // With new == old every ratio is 1, so the objective collapses to
        // the mean advantage, which is zero by construction.
        let old = vec![vec![-1.0, -2.0], vec![-0.5], vec![-1.5, -0.1, -3.0]];
        let group = RolloutGroup::new(vec![1.0, 2.0, 3.0], old.clone(), old).unwrap();
        let adv = group_advantages(group.rewards(), 1e-6).unwrap();
        close(grpo_objective(&group, &adv, 0.2).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn group_validation_errors() {
        assert!(matches!(
            RolloutGroup::new(vec![1.0], vec![vec![-1.0]], vec![vec![-1.0]]),
            Err(Error::GroupTooSmall(1))
        ));
        assert!(matches!(
            RolloutGroup::new(
                vec![1.0, 2.0],
                vec![vec![-1.0], vec![-1.0, -2.0]],
                vec![vec![-1.0], vec![-1.0]]
            ),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            RolloutGroup::new(vec![1.0, 2.0], vec![vec![0.5], vec![-1.0]], vec![vec![-1.0], vec![-1.0]]),
            Err(Error::InvalidLogProb(_))
        ));
        assert!(matches!(
            RolloutGroup::new(vec![1.0, 2.0], vec![vec![], vec![-1.0]], vec![vec![], vec![-1.0]]),
            Err(Error::ShapeMismatch(_))
        ));
        let (group, _) = two_seq_group(2.0);
        let wrong = AdvantageSet::new(vec![-1.0, 0.0, 1.0], 0.0, 1.0).unwrap();
        assert!(matches!(
            grpo_objective(&group, &wrong, 0.2),
            Err(Error::ShapeMismatch(_))
        ));
        let ok = AdvantageSet::new(vec![-1.0, 1.0], 0.0, 1.0).unwrap();
        assert!(matches!(
            grpo_objective(&group, &ok, 0.0),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            grpo_objective(&group, &ok, 1.0),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn advantage_set_rejects_nonzero_mean() {
        assert!(matches!(
            AdvantageSet::new(vec![1.0, 1.0], 0.0, 1.0),
            Err(Error::InvalidParam(_))
        ));
        // Zero deviation exempts the mean-zero requirement (all-zero set).
        assert!(AdvantageSet::new(vec![0.0, 0.0], 1.0, 0.0).is_ok());
    }

    /// Builds a small structured policy, samples nothing — paths are fixed
    /// by hand — and returns everything the gradient needs.
    fn gradient_instance() -> (ToyPolicy, RolloutGroup, AdvantageSet, f64) {
        let vocab = 4;
        let t_max = 6;
        let temperature = 0.7;
        let mut policy = ToyPolicy::new(vocab, ContextMode::Bigram, t_max).unwrap();
        for c in 0..policy.context_count() {
            for u in 0..vocab {
                let value = 0.3 * c as f64 - 0.2 * u as f64 + 0.1 * ((c * u) % 3) as f64;
                policy.set_logit(c, u, value).unwrap();
            }
        }
        let paths = vec![
            vec![
                SampledStep { context: 0, token: 2 },
                SampledStep { context: 2, token: 1 },
            ],
            vec![
                SampledStep { context: 1, token: 3 },
                SampledStep { context: 3, token: 0 },
                SampledStep { context: 0, token: 0 },
            ],
            vec![SampledStep { context: 2, token: 2 }],
        ];
        let logprobs: Vec<Vec<f64>> = paths
            .iter()
            .map(|path| {
                path.iter()
                    .map(|s| policy.dist(s.context, temperature).unwrap().probs()[s.token].ln())
                    .collect()
            })
            .collect();
        let rewards = vec![0.5, -0.2, 0.9];
        let adv = group_advantages(&rewards, 1e-6).unwrap();
        let group =
            RolloutGroup::with_paths(rewards, logprobs.clone(), logprobs, paths).unwrap();
        (policy, group, adv, temperature)
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // probes every (context, token) slot
    fn analytic_gradient_matches_finite_differences() {
        let (policy, group, adv, temperature) = gradient_instance();
        let grad = softmax_policy_gradient(&group, &adv, &policy, temperature).unwrap();
        let h = 1e-6;
        let eps_clip = 0.2;
        for c in 0..policy.context_count() {
            for u in 0..policy.vocab_size() {
                let mut plus = policy.clone();
                plus.set_logit(c, u, policy.logits()[c][u] + h).unwrap();
                let mut minus = policy.clone();
                minus.set_logit(c, u, policy.logits()[c][u] - h).unwrap();
                let jp = objective_under_policy(&group, &adv, &plus, temperature, eps_clip).unwrap();
                let jm =
                    objective_under_policy(&group, &adv, &minus, temperature, eps_clip).unwrap();
                let fd = (jp - jm) / (2.0 * h);
                assert!(
                    (fd - grad[c][u]).abs() <= 1e-6,
                    "slot ({c}, {u}): fd {fd} vs analytic {}",
                    grad[c][u]
                );
            }
        }
    }

    #[test]
    fn gradient_without_temperature_scaling_fails_the_oracle() {
        // Regression guard for the 1/temperature factor: multiplying the
        // analytic gradient by the temperature (i.e. dropping the factor)
        // must disagree with finite differences at temperature != 1.
        let (policy, group, adv, temperature) = gradient_instance();
        let grad = softmax_policy_gradient(&group, &adv, &policy, temperature).unwrap();
        let h = 1e-6;
        let c = 0;
        let u = 2;
        let mut plus = policy.clone();
        plus.set_logit(c, u, policy.logits()[c][u] + h).unwrap();
        let mut minus = policy.clone();
        minus.set_logit(c, u, policy.logits()[c][u] - h).unwrap();
        let jp = objective_under_policy(&group, &adv, &plus, temperature, 0.2).unwrap();
        let jm = objective_under_policy(&group, &adv, &minus, temperature, 0.2).unwrap();
        let fd = (jp - jm) / (2.0 * h);
        let unscaled = grad[c][u] * temperature;
        assert!((fd - unscaled).abs() > 1e-3 * fd.abs().max(1e-3));
    }

    #[test]
    fn one_ascent_step_improves_the_objective() {
        let (mut policy, group, adv, temperature) = gradient_instance();
        let before =
            objective_under_policy(&group, &adv, &policy, temperature, 0.2).unwrap();
        let grad = softmax_policy_gradient(&group, &adv, &policy, temperature).unwrap();
        let norm: f64 = grad.iter().flatten().map(|g| g * g).sum::<f64>();
        assert!(norm > 0.0, "gradient must be non-zero for this instance");
        policy.apply_gradient(&grad, 1e-2).unwrap();
        let after = objective_under_policy(&group, &adv, &policy, temperature, 0.2).unwrap();
        assert!(after > before, "{after} <= {before}");
    }

    #[test]
    fn gradient_requires_paths() {
        let (policy, group, adv, temperature) = gradient_instance();
        let stripped = RolloutGroup::new(
            group.rewards().to_vec(),
            group.old_logprobs().to_vec(),
            group.new_logprobs().to_vec(),
        )
        .unwrap();
        assert!(matches!(
            softmax_policy_gradient(&stripped, &adv, &policy, temperature),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gradient_rejects_out_of_range_context() {
        let (policy, _, _, temperature) = gradient_instance();
        let paths = vec![
            vec![SampledStep { context: 99, token: 0 }],
            vec![SampledStep { context: 0, token: 0 }],
        ];
        let lp = vec![vec![-1.0], vec![-1.0]];
        let group = RolloutGroup::with_paths(vec![0.0, 1.0], lp.clone(), lp, paths).unwrap();
        let adv2 = AdvantageSet::new(vec![0.0, 0.0], 0.0, 0.0).unwrap();
        assert!(matches!(
            softmax_policy_gradient(&group, &adv2, &policy, temperature),
            Err(Error::ContextOutOfRange { index: 99, .. })
        ));
    }

    proptest! {
        #[test]
        fn advantages_are_shift_invariant(
            rewards in proptest::collection::vec(-5.0..5.0f64, 2..12),
            shift in -10.0..10.0f64,
        ) {
            let base = group_advantages(&rewards, 1e-6).unwrap();
            let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
            let moved = group_advantages(&shifted, 1e-6).unwrap();
            for (a, b) in base.advantages().iter().zip(moved.advantages()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn advantages_are_scale_invariant_without_eps(
            rewards in proptest::collection::vec(-5.0..5.0f64, 2..12),
            scale in 0.1..10.0f64,
        ) {
            let std = {
                let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
                (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
                    / rewards.len() as f64).sqrt()
            };
            prop_assume!(std > 1e-6);
            let base = group_advantages(&rewards, 0.0).unwrap();
            let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
            let moved = group_advantages(&scaled, 0.0).unwrap();
            for (a, b) in base.advantages().iter().zip(moved.advantages()) {
                prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
            }
        }

        #[test]
        fn advantages_are_mean_zero_and_bounded(
            rewards in proptest::collection::vec(-5.0..5.0f64, 2..16),
        ) {
            let adv = group_advantages(&rewards, 1e-6).unwrap();
            let mean: f64 = adv.advantages().iter().sum::<f64>() / adv.advantages().len() as f64;
            prop_assert!(mean.abs() <= 1e-9);
            // |r - mean| <= std * sqrt(G), so standardized values are
            // bounded by sqrt(G).
            let bound = (adv.advantages().len() as f64).sqrt() + 1e-9;
            for &a in adv.advantages() {
                prop_assert!(a.abs() <= bound);
            }
        }

        #[test]
        fn positive_advantage_terms_are_capped(
            ratio in 0.0..5.0f64,
            advantage in 0.01..3.0f64,
        ) {
            let term = clipped_term(ratio, advantage, 0.2);
            prop_assert!(term <= 1.2 * advantage + 1e-12);
            prop_assert!(term <= ratio * advantage + 1e-12);
        }
    }
}
