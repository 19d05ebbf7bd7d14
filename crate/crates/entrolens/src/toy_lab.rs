//! Desk-scale training bed.
//!
//! A tabular autoregressive policy over a small vocabulary is trained with
//! group-relative updates under any of the intrinsic rewards (or against a
//! supervised match reward as a baseline) and logs token-entropy traces at
//! fixed eval checkpoints — the same JSONL contract the ingestion stage
//! reads, so the whole diagnostic chain can be exercised end to end in
//! seconds.
//!
//! The policy conditions on a single context slot per step: the previous
//! token (`bigram`, the default — the prompt's start token stands in at
//! step 0) or the step index (`positional`). The last vocabulary id is the
//! end-of-sequence token; sampling stops when it is drawn or when `t_max`
//! tokens have been emitted.
//!
//! Determinism: training consumes the `"train"` stream of the run seed,
//! and every checkpoint re-seeds the `"eval"` stream identically, so eval
//! rollouts at different checkpoints differ only through the policy.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{from_logits, ProbVector};
use crate::grpo::{
    group_advantages, softmax_policy_gradient, RolloutGroup, SampledStep,
};
use crate::rewards::{reward, RewardKind, StepDistSequence};
use crate::rng::stage_rng;
use crate::trace::{AccuracyPoint, TraceRecord};
use crate::{Error, Result};

/// What the policy conditions on at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    Bigram,
    Positional,
}

impl std::str::FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bigram" => Ok(ContextMode::Bigram),
            "positional" => Ok(ContextMode::Positional),
            other => Err(Error::InvalidConfig(format!(
                "unknown context mode `{other}` (expected `bigram` or `positional`)"
            ))),
        }
    }
}

/// Tabular softmax policy: one logit row per context slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    vocab_size: usize,
    context_mode: ContextMode,
    logits: Vec<Vec<f64>>,
}

impl ToyPolicy {
    /// A fresh policy with all-zero logits (uniform at any temperature).
    /// `t_max` sizes the context table in positional mode and is ignored
    /// for bigram.
    pub fn new(vocab_size: usize, context_mode: ContextMode, t_max: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "vocab must have at least one token besides <eos>, got size {vocab_size}"
            )));
        }
        let contexts = match context_mode {
            ContextMode::Bigram => vocab_size,
            ContextMode::Positional => {
                if t_max == 0 {
                    return Err(Error::InvalidConfig(
                        "positional mode needs t_max >= 1".into(),
                    ));
                }
                t_max
            }
        };
        Ok(Self {
            vocab_size,
            context_mode,
            logits: vec![vec![0.0; vocab_size]; contexts],
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_mode(&self) -> ContextMode {
        self.context_mode
    }

    pub fn context_count(&self) -> usize {
        self.logits.len()
    }

    /// The end-of-sequence token id (always the last vocabulary slot).
    pub fn eos(&self) -> usize {
        self.vocab_size - 1
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn set_logit(&mut self, context: usize, token: usize, value: f64) -> Result<()> {
        if context >= self.logits.len() {
            return Err(Error::ContextOutOfRange {
                index: context,
                count: self.logits.len(),
            });
        }
        if token >= self.vocab_size {
            return Err(Error::ShapeMismatch(format!(
                "token {token} out of range for vocab {}",
                self.vocab_size
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "logit",
                value,
            });
        }
        self.logits[context][token] = value;
        Ok(())
    }

    /// A zero table with the same shape as the logits, for accumulating
    /// gradients.
    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.vocab_size]; self.logits.len()]
    }

    /// Which context slot applies at `step_index` given the previous token
    /// (`None` at step 0) and the prompt's start token.
    pub fn context_at(&self, step_index: usize, prev_token: Option<usize>, start_token: usize) -> usize {
        match self.context_mode {
            ContextMode::Bigram => prev_token.unwrap_or(start_token),
            ContextMode::Positional => step_index.min(self.context_count() - 1),
        }
    }

    /// The next-token distribution for a context slot at a temperature.
    pub fn dist(&self, context: usize, temperature: f64) -> Result<ProbVector> {
        let row = self.logits.get(context).ok_or(Error::ContextOutOfRange {
            index: context,
            count: self.logits.len(),
        })?;
        from_logits(row, temperature)
    }

    /// One gradient-ascent step: `logits += learning_rate * grad`.
    pub fn apply_gradient(&mut self, grad: &[Vec<f64>], learning_rate: f64) -> Result<()> {
        if !learning_rate.is_finite() {
            return Err(Error::NonFinite {
                what: "learning rate",
                value: learning_rate,
            });
        }
        if grad.len() != self.logits.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient has {} rows, policy has {}",
                grad.len(),
                self.logits.len()
            )));
        }
        for (row, grow) in self.logits.iter_mut().zip(grad) {
            if grow.len() != row.len() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient row has {} entries, policy row has {}",
                    grow.len(),
                    row.len()
                )));
            }
            for (l, g) in row.iter_mut().zip(grow) {
                if !g.is_finite() {
                    return Err(Error::NonFinite {
                        what: "gradient entry",
                        value: *g,
                    });
                }
                *l += learning_rate * g;
            }
        }
        Ok(())
    }
}

/// One prompt of the toy task. The optional target is the token sequence
/// (ending in `<eos>`) that counts as an exact match for accuracy logging
/// and for the supervised baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPrompt {
    pub id: u32,
    pub start_token: usize,
    pub target: Option<Vec<usize>>,
}

/// A fixed set of prompts plus the generation cap shared by all rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTask {
    pub prompts: Vec<ToyPrompt>,
    pub t_max: usize,
}

impl ToyTask {
    /// The canonical task: `n_prompts` prompts with deterministic start
    /// tokens and two-token targets (one content token, then `<eos>`).
    /// Targets this short stay reachable by chance from a uniform policy,
    /// which is what lets the supervised baseline bootstrap: a group whose
    /// rollouts all miss gets identical zero rewards and no gradient.
    pub fn default_task(n_prompts: usize, vocab_size: usize, t_max: usize) -> Result<ToyTask> {
        if vocab_size < 4 {
            return Err(Error::InvalidConfig(format!(
                "default task needs vocab size >= 4, got {vocab_size}"
            )));
        }
        if n_prompts == 0 {
            return Err(Error::EmptyInput("prompts"));
        }
        let eos = vocab_size - 1;
        let plain = vocab_size - 1; // number of non-eos tokens
        let prompts = (0..n_prompts)
            .map(|i| {
                let start = (1 + i * 5) % plain;
                let stride = 1 + i % 3;
                ToyPrompt {
                    id: i as u32,
                    start_token: start,
                    target: Some(vec![(start + stride) % plain, eos]),
                }
            })
            .collect();
        let task = ToyTask { prompts, t_max };
        task.validate(vocab_size)?;
        Ok(task)
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.prompts.is_empty() {
            return Err(Error::EmptyInput("prompts"));
        }
        if self.t_max < 2 {
            return Err(Error::InvalidConfig(format!(
                "t_max must be >= 2, got {}",
                self.t_max
            )));
        }
        let mut ids: Vec<u32> = self.prompts.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.prompts.len() {
            return Err(Error::InvalidConfig("prompt ids must be distinct".into()));
        }
        for p in &self.prompts {
            if p.start_token >= vocab_size {
                return Err(Error::InvalidConfig(format!(
                    "prompt {} start token {} out of range for vocab {vocab_size}",
                    p.id, p.start_token
                )));
            }
            if let Some(target) = &p.target {
                if target.is_empty() || target.len() > self.t_max {
                    return Err(Error::InvalidConfig(format!(
                        "prompt {} target length {} must lie in 1..={}",
                        p.id,
                        target.len(),
                        self.t_max
                    )));
                }
                if target.iter().any(|&t| t >= vocab_size) {
                    return Err(Error::InvalidConfig(format!(
                        "prompt {} target contains out-of-vocab tokens",
                        p.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Training hyperparameters. `new` fills in the canonical defaults; every
/// field stays adjustable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub reward: RewardKind,
    pub group_size: usize,
    pub eps_clip: f64,
    pub eps_std: f64,
    pub learning_rate: f64,
    pub temperature: f64,
    pub eval_every: usize,
    pub max_steps: usize,
    pub vocab_size: usize,
    pub context_mode: ContextMode,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(reward: RewardKind, max_steps: usize, seed: u64) -> Self {
        Self {
            reward,
            group_size: 16,
            eps_clip: 0.2,
            eps_std: 1e-6,
            // Calibrated so the qualitative reward mechanisms (entropy
            // collapse, length shrink/inflation) appear within ~200 steps
            // at this tabular scale; group-normalized advantages plus the
            // 1/(G*T) averaging make per-step updates small, so the rate
            // is much larger than neural-net convention suggests.
            learning_rate: 1.0,
            temperature: 0.6,
            eval_every: 5,
            max_steps,
            vocab_size: 32,
            context_mode: ContextMode::Bigram,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "group_size must be >= 2, got {}",
                self.group_size
            )));
        }
        if !(self.eps_clip.is_finite() && self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eps_clip must lie in (0, 1), got {}",
                self.eps_clip
            )));
        }
        if !(self.eps_std.is_finite() && self.eps_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eps_std must be >= 0, got {}",
                self.eps_std
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "vocab_size must be >= 2, got {}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

/// One sampled response with everything downstream consumers need: the
/// tokens, the context slot each was drawn from, the full per-step
/// distributions, and the sampled tokens' log-probabilities.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub tokens: Vec<usize>,
    pub contexts: Vec<usize>,
    pub dists: Vec<ProbVector>,
    pub logprobs: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Per-step uncertainty statistics, ready for reward scoring.
    pub fn stats(&self) -> Result<StepDistSequence> {
        StepDistSequence::from_dists(&self.dists)
    }

    fn steps(&self) -> Vec<SampledStep> {
        self.contexts
            .iter()
            .zip(&self.tokens)
            .map(|(&context, &token)| SampledStep { context, token })
            .collect()
    }
}

/// Samples one response: draw from the context's distribution until `<eos>`
/// or `t_max` tokens. The returned sequence always has at least one step.
pub fn rollout(
    policy: &ToyPolicy,
    start_token: usize,
    t_max: usize,
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    if start_token >= policy.vocab_size() {
        return Err(Error::InvalidConfig(format!(
            "start token {start_token} out of range for vocab {}",
            policy.vocab_size()
        )));
    }
    if t_max == 0 {
        return Err(Error::InvalidConfig("t_max must be >= 1".into()));
    }
    let mut tokens = Vec::new();
    let mut contexts = Vec::new();
    let mut dists = Vec::new();
    let mut logprobs = Vec::new();
    let mut prev = None;
    for step in 0..t_max {
        let context = policy.context_at(step, prev, start_token);
        let dist = policy.dist(context, temperature)?;
        let (token, logprob) = sample_token(&dist, rng);
        tokens.push(token);
        contexts.push(context);
        logprobs.push(logprob);
        let is_eos = token == policy.eos();
        dists.push(dist);
        if is_eos {
            break;
        }
        prev = Some(token);
    }
    Ok(Rollout {
        tokens,
        contexts,
        dists,
        logprobs,
    })
}

/// Inverse-CDF draw from a categorical distribution. Zero-probability
/// outcomes are never selected: the cumulative walk only advances past an
/// index when its mass is positive, and the rounding fallback lands on the
/// last positive-mass index.
fn sample_token(dist: &ProbVector, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return (i, p.ln());
            }
        }
    }
    (last_positive, dist.probs()[last_positive].ln())
}

/// Aggregate statistics of the eval rollouts at one checkpoint. Step 0 is
/// the untrained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub step: u64,
    pub mean_entropy: f64,
    pub mean_length: f64,
    pub mean_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Token-entropy trace records at eval checkpoints (steps `eval_every`,
    /// `2 * eval_every`, ...). The step-0 snapshot appears only in
    /// `checkpoints`, keeping trace steps strictly positive.
    pub trace: Vec<TraceRecord>,
    /// Exact-match accuracy at the same checkpoints (empty when no prompt
    /// has a target).
    pub accuracy: Vec<AccuracyPoint>,
    /// Summaries at step 0 and every eval checkpoint.
    pub checkpoints: Vec<CheckpointSummary>,
    pub policy: ToyPolicy,
}

/// Trains under the configured intrinsic reward.
pub fn train(task: &ToyTask, config: &TrainConfig) -> Result<TrainOutput> {
    run_training(task, config, |_, rollout| {
        reward(config.reward, &rollout.stats()?, task.t_max)
    })
}

/// Trains against the exact-match reward (1 if the rollout reproduces the
/// prompt's target, else 0) with the identical sampling, update, and
/// logging machinery. Every prompt must carry a target.
pub fn supervised_baseline_train(task: &ToyTask, config: &TrainConfig) -> Result<TrainOutput> {
    for p in &task.prompts {
        if p.target.is_none() {
            return Err(Error::MissingTarget(p.id));
        }
    }
    run_training(task, config, |prompt, rollout| {
        let target = prompt.target.as_ref().expect("checked above");
        Ok(if &rollout.tokens == target { 1.0 } else { 0.0 })
    })
}

fn run_training(
    task: &ToyTask,
    config: &TrainConfig,
    score: impl Fn(&ToyPrompt, &Rollout) -> Result<f64>,
) -> Result<TrainOutput> {
    config.validate()?;
    task.validate(config.vocab_size)?;
    let mut policy = ToyPolicy::new(config.vocab_size, config.context_mode, task.t_max)?;
    let mut train_rng = stage_rng(config.seed, "train");
    let mut trace = Vec::new();
    let mut accuracy = Vec::new();
    let mut checkpoints = Vec::new();

    run_checkpoint(
        0, &policy, task, config, &score, None, &mut accuracy, &mut checkpoints,
    )?;

    let prompt_count = task.prompts.len() as f64;
    for step in 1..=config.max_steps {
        let mut grad_sum = policy.zeros_like();
        for prompt in &task.prompts {
            let rollouts: Vec<Rollout> = (0..config.group_size)
                .map(|_| {
                    rollout(
                        &policy,
                        prompt.start_token,
                        task.t_max,
                        config.temperature,
                        &mut train_rng,
                    )
                })
                .collect::<Result<_>>()?;
            let rewards: Vec<f64> = rollouts
                .iter()
                .map(|r| score(prompt, r))
                .collect::<Result<_>>()?;
            let advantages = group_advantages(&rewards, config.eps_std)?;
            let logprobs: Vec<Vec<f64>> =
                rollouts.iter().map(|r| r.logprobs.clone()).collect();
            let paths: Vec<Vec<SampledStep>> = rollouts.iter().map(|r| r.steps()).collect();
            let group =
                RolloutGroup::with_paths(rewards, logprobs.clone(), logprobs, paths)?;
            let grad =
                softmax_policy_gradient(&group, &advantages, &policy, config.temperature)?;
            for (acc_row, grad_row) in grad_sum.iter_mut().zip(&grad) {
                for (a, g) in acc_row.iter_mut().zip(grad_row) {
                    *a += g / prompt_count;
                }
            }
        }
        policy.apply_gradient(&grad_sum, config.learning_rate)?;
        if step % config.eval_every == 0 {
            run_checkpoint(
                step as u64,
                &policy,
                task,
                config,
                &score,
                Some(&mut trace),
                &mut accuracy,
                &mut checkpoints,
            )?;
        }
    }

    Ok(TrainOutput {
        trace,
        accuracy,
        checkpoints,
        policy,
    })
}

fn token_label(token: usize, eos: usize) -> String {
    if token == eos {
        "<eos>".to_string()
    } else {
        format!("t{token}")
    }
}

#[allow(clippy::too_many_arguments)]
fn run_checkpoint(
    step: u64,
    policy: &ToyPolicy,
    task: &ToyTask,
    config: &TrainConfig,
    score: &impl Fn(&ToyPrompt, &Rollout) -> Result<f64>,
    mut trace: Option<&mut Vec<TraceRecord>>,
    accuracy: &mut Vec<AccuracyPoint>,
    checkpoints: &mut Vec<CheckpointSummary>,
) -> Result<()> {
    // Re-seeding per checkpoint makes the eval stream identical across
    // checkpoints and across runs of the same seed.
    let mut eval_rng = stage_rng(config.seed, "eval");
    let mut total_entropy = 0.0;
    let mut total_steps = 0usize;
    let mut total_reward = 0.0;
    let mut matched = 0usize;
    let mut with_target = 0usize;
    for prompt in &task.prompts {
        let r = rollout(
            policy,
            prompt.start_token,
            task.t_max,
            config.temperature,
            &mut eval_rng,
        )?;
        let stats = r.stats()?;
        total_entropy += stats.steps().iter().map(|s| s.shannon()).sum::<f64>();
        total_steps += r.len();
        total_reward += score(prompt, &r)?;
        if let Some(target) = &prompt.target {
            with_target += 1;
            if &r.tokens == target {
                matched += 1;
            }
        }
        if let Some(trace) = trace.as_deref_mut() {
            // A token repeated within one response yields a single record
            // carrying its mean entropy at this checkpoint.
            let mut by_token: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for (tok, stat) in r.tokens.iter().zip(stats.steps()) {
                let entry = by_token.entry(*tok).or_insert((0.0, 0));
                entry.0 += stat.shannon();
                entry.1 += 1;
            }
            for (tok, (sum, count)) in by_token {
                trace.push(TraceRecord {
                    step,
                    prompt_id: format!("p{}", prompt.id),
                    token: token_label(tok, policy.eos()),
                    entropy: sum / count as f64,
                });
            }
        }
    }
    let prompt_count = task.prompts.len() as f64;
    let acc = (with_target > 0).then(|| matched as f64 / with_target as f64);
    checkpoints.push(CheckpointSummary {
        step,
        mean_entropy: total_entropy / total_steps as f64,
        mean_length: total_steps as f64 / prompt_count,
        mean_reward: total_reward / prompt_count,
        accuracy: acc,
    });
    // The accuracy sidecar mirrors the trace: checkpoint steps only, so
    // normalized times downstream stay strictly positive.
    if trace.is_some() {
        if let Some(acc) = acc {
            accuracy.push(AccuracyPoint {
                step,
                accuracy: acc,
            });
        }
    }
    Ok(())
}
