//! Layered settings: compiled-in defaults, then an optional TOML file,
//! then command-line flags; the most specific source wins. The resolved
//! result is embedded into every JSON artifact so a file fully describes
//! how it was produced.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use entrolens::rewards::RewardKind;
use entrolens::toy_lab::{ContextMode, ToyTask, TrainConfig};
use entrolens::trace::{ConvergenceMode, PlateauParams};

use crate::CliError;

/// Default top-level seed; every stage derives its own stream from it.
pub const DEFAULT_SEED: u64 = 7;

/// Parses the CLI's short convergence-mode names.
pub fn parse_mode(s: &str) -> Result<ConvergenceMode, String> {
    match s {
        "peak" => Ok(ConvergenceMode::PeakAccuracy),
        "plateau" => Ok(ConvergenceMode::PlateauOnset),
        "collapse" => Ok(ConvergenceMode::Collapse),
        other => Err(format!(
            "unknown convergence mode `{other}` (expected one of: peak, plateau, collapse)"
        )),
    }
}

/// Parses a reward kind, surfacing the library's message (which lists the
/// valid kinds) as a flag error.
pub fn parse_reward(s: &str) -> Result<RewardKind, String> {
    s.parse::<RewardKind>().map_err(|e| e.to_string())
}

fn parse_context_mode(s: &str) -> Result<ContextMode, String> {
    s.parse::<ContextMode>().map_err(|e| e.to_string())
}

// --- on-disk form ----------------------------------------------------------

/// The `--config` TOML document. Every field is optional; unknown keys are
/// rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub train: TrainFile,
    #[serde(default)]
    pub ingest: IngestFile,
    #[serde(default)]
    pub cluster: ClusterFile,
    #[serde(default)]
    pub project: ProjectFile,
    #[serde(default)]
    pub hull: HullFile,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Input {
            what: format!("config file {}", path.display()),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub reward: Option<RewardKind>,
    pub steps: Option<usize>,
    pub prompts: Option<usize>,
    pub vocab_size: Option<usize>,
    pub t_max: Option<usize>,
    pub group_size: Option<usize>,
    pub eps_clip: Option<f64>,
    pub eps_std: Option<f64>,
    pub learning_rate: Option<f64>,
    pub temperature: Option<f64>,
    pub eval_every: Option<usize>,
    pub context_mode: Option<ContextMode>,
    pub supervised: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestFile {
    /// Short mode name: peak | plateau | collapse.
    pub mode: Option<String>,
    pub convergence_step: Option<u64>,
    pub plateau_window: Option<usize>,
    pub plateau_delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterFile {
    pub k: Option<usize>,
    pub gamma: Option<f64>,
    pub resample_len: Option<usize>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub per_prompt: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HullFile {
    pub v_low: Option<f64>,
    pub v_high: Option<f64>,
}

// --- resolved form ---------------------------------------------------------

/// Fully resolved toy-training settings, the shape echoed into artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub reward: RewardKind,
    pub steps: usize,
    pub seed: u64,
    pub prompts: usize,
    pub vocab_size: usize,
    pub t_max: usize,
    pub group_size: usize,
    pub eps_clip: f64,
    pub eps_std: f64,
    pub learning_rate: f64,
    pub temperature: f64,
    pub eval_every: usize,
    pub context_mode: ContextMode,
    pub supervised: bool,
}

impl TrainSettings {
    pub fn resolve(file: &FileConfig, flags: &TrainFlags) -> Self {
        let defaults = TrainConfig::new(RewardKind::Ent, 200, DEFAULT_SEED);
        let f = &file.train;
        Self {
            reward: flags.reward.or(f.reward).unwrap_or(RewardKind::Ent),
            steps: flags.steps.or(f.steps).unwrap_or(200),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            prompts: flags.prompts.or(f.prompts).unwrap_or(8),
            vocab_size: flags
                .vocab_size
                .or(f.vocab_size)
                .unwrap_or(defaults.vocab_size),
            t_max: flags.t_max.or(f.t_max).unwrap_or(64),
            group_size: flags
                .group_size
                .or(f.group_size)
                .unwrap_or(defaults.group_size),
            eps_clip: f.eps_clip.unwrap_or(defaults.eps_clip),
            eps_std: f.eps_std.unwrap_or(defaults.eps_std),
            learning_rate: flags
                .learning_rate
                .or(f.learning_rate)
                .unwrap_or(defaults.learning_rate),
            temperature: flags
                .temperature
                .or(f.temperature)
                .unwrap_or(defaults.temperature),
            eval_every: flags
                .eval_every
                .or(f.eval_every)
                .unwrap_or(defaults.eval_every),
            context_mode: flags
                .context_mode
                .or(f.context_mode)
                .unwrap_or(defaults.context_mode),
            supervised: flags.supervised || f.supervised.unwrap_or(false),
        }
    }

    pub fn to_task(&self) -> entrolens::Result<ToyTask> {
        ToyTask::default_task(self.prompts, self.vocab_size, self.t_max)
    }

    pub fn to_train_config(&self) -> TrainConfig {
        let mut config = TrainConfig::new(self.reward, self.steps, self.seed);
        config.group_size = self.group_size;
        config.eps_clip = self.eps_clip;
        config.eps_std = self.eps_std;
        config.learning_rate = self.learning_rate;
        config.temperature = self.temperature;
        config.eval_every = self.eval_every;
        config.vocab_size = self.vocab_size;
        config.context_mode = self.context_mode;
        config
    }
}

/// Flag-level overrides shared by `toy-train` and `pipeline`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainFlags {
    /// Intrinsic reward kind (ent, avgent, lp, ch2, cp).
    #[arg(long, value_parser = parse_reward)]
    pub reward: Option<RewardKind>,
    /// Number of training steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Top-level seed; stages derive their own streams from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of toy prompts.
    #[arg(long)]
    pub prompts: Option<usize>,
    /// Vocabulary size of the toy policy.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Maximum response length.
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Rollouts per prompt per step.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Gradient-ascent step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Sampling temperature for rollouts and evaluation.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Checkpoint cadence in steps.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Policy conditioning: bigram or positional.
    #[arg(long, value_parser = parse_context_mode)]
    pub context_mode: Option<ContextMode>,
    /// Train against exact-match targets instead of an intrinsic reward.
    #[arg(long)]
    pub supervised: bool,
}

/// Resolved ingestion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSettings {
    pub mode: ConvergenceMode,
    /// Explicit convergence step; overrides the mode when present.
    pub convergence_step: Option<u64>,
    pub plateau_window: usize,
    pub plateau_delta: f64,
}

impl IngestSettings {
    pub fn resolve(file: &FileConfig, flags: &IngestFlags) -> Result<Self, CliError> {
        let f = &file.ingest;
        let file_mode = f
            .mode
            .as_deref()
            .map(|s| parse_mode(s).map_err(|message| CliError::Setting { message }))
            .transpose()?;
        let plateau = PlateauParams::default();
        Ok(Self {
            mode: flags
                .mode
                .or(file_mode)
                .unwrap_or(ConvergenceMode::PeakAccuracy),
            convergence_step: flags.convergence_step.or(f.convergence_step),
            plateau_window: flags
                .plateau_window
                .or(f.plateau_window)
                .unwrap_or(plateau.window),
            plateau_delta: flags
                .plateau_delta
                .or(f.plateau_delta)
                .unwrap_or(plateau.delta),
        })
    }

    pub fn plateau_params(&self) -> PlateauParams {
        PlateauParams {
            window: self.plateau_window,
            delta: self.plateau_delta,
        }
    }
}

/// Flag-level overrides shared by `ingest` and `pipeline`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct IngestFlags {
    /// Convergence mode: peak, plateau, or collapse.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ConvergenceMode>,
    /// Explicit convergence step, overriding the mode.
    #[arg(long)]
    pub convergence_step: Option<u64>,
    /// Plateau window size in checkpoints.
    #[arg(long)]
    pub plateau_window: Option<usize>,
    /// Plateau accuracy tolerance.
    #[arg(long)]
    pub plateau_delta: Option<f64>,
}

/// Resolved clustering settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSettings {
    pub k: usize,
    pub gamma: f64,
    pub resample_len: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl ClusterSettings {
    pub fn resolve(file: &FileConfig, flags: &ClusterFlags) -> Self {
        let f = &file.cluster;
        Self {
            k: flags.k.or(f.k).unwrap_or(3),
            gamma: flags.gamma.or(f.gamma).unwrap_or(0.1),
            resample_len: flags.resample_len.or(f.resample_len).unwrap_or(32),
            max_iter: flags.max_iter.or(f.max_iter).unwrap_or(50),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        }
    }
}

/// Flag-level overrides shared by `cluster` and `pipeline`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ClusterFlags {
    /// Number of clusters (semantic labeling requires 3).
    #[arg(long)]
    pub k: Option<usize>,
    /// Soft-DTW smoothing; 0 is hard DTW.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Length trajectories are resampled to for centroid updates.
    #[arg(long)]
    pub resample_len: Option<usize>,
    /// Iteration cap for the clustering loop.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Top-level seed; stages derive their own streams from it.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Resolved projection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSettings {
    pub per_prompt: bool,
}

impl ProjectSettings {
    pub fn resolve(file: &FileConfig, flags: &ProjectFlags) -> Self {
        Self {
            per_prompt: flags.per_prompt || file.project.per_prompt.unwrap_or(false),
        }
    }
}

/// Flag-level overrides shared by `project` and `pipeline`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ProjectFlags {
    /// Project per (prompt, checkpoint) instead of pooling prompts.
    #[arg(long)]
    pub per_prompt: bool,
}

/// Resolved hull/diagnosis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullSettings {
    pub v_low: f64,
    pub v_high: f64,
}

impl HullSettings {
    pub fn resolve(file: &FileConfig, flags: &HullFlags) -> Self {
        let f = &file.hull;
        Self {
            v_low: flags.v_low.or(f.v_low).unwrap_or(0.05),
            v_high: flags.v_high.or(f.v_high).unwrap_or(4.0),
        }
    }
}

/// Flag-level overrides shared by `hull` and `pipeline`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct HullFlags {
    /// Volume below this diagnoses exploration stagnation.
    #[arg(long)]
    pub v_low: Option<f64>,
    /// Volume above this diagnoses manifold explosion.
    #[arg(long)]
    pub v_high: Option<f64>,
}
