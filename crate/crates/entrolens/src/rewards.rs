//! The five intrinsic rewards.
//!
//! Each reward scores a whole response from its per-step uncertainty
//! statistics alone — no external labels:
//!
//! * `ent`    — negative total Shannon entropy, `-sum_t H(p_t)`
//! * `avgent` — negative mean Shannon entropy, `-(1/T) sum_t H(p_t)`
//! * `lp`     — negative relative length, `-T / t_max`
//! * `ch2`    — total log collision mass, `sum_t ln(sum_v p_{t,v}^2)`
//!   (the negative total Rényi-2 entropy)
//! * `cp`     — total collision mass, `sum_t sum_v p_{t,v}^2`
//!
//! Sign conventions follow from the definitions: `ent`, `avgent`, `ch2`
//! are `<= 0`, `lp` is in `[-1, 0)`, and `cp` is `> 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{ProbVector, StepStats};
use crate::{Error, Result};

/// Which intrinsic reward to optimize.
///
/// Parses from the exact lowercase names `ent`, `avgent`, `lp`, `ch2`,
/// `cp`; anything else (including other casings) is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Ent,
    AvgEnt,
    Lp,
    Ch2,
    Cp,
}

impl RewardKind {
    pub const ALL: [RewardKind; 5] = [
        RewardKind::Ent,
        RewardKind::AvgEnt,
        RewardKind::Lp,
        RewardKind::Ch2,
        RewardKind::Cp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Ent => "ent",
            RewardKind::AvgEnt => "avgent",
            RewardKind::Lp => "lp",
            RewardKind::Ch2 => "ch2",
            RewardKind::Cp => "cp",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ent" => Ok(RewardKind::Ent),
            "avgent" => Ok(RewardKind::AvgEnt),
            "lp" => Ok(RewardKind::Lp),
            "ch2" => Ok(RewardKind::Ch2),
            "cp" => Ok(RewardKind::Cp),
            other => Err(Error::UnknownRewardKind(other.to_string())),
        }
    }
}

/// The per-step statistics of one sampled response, in generation order.
/// Non-empty by construction (`T >= 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistSequence {
    steps: Vec<StepStats>,
}

impl StepDistSequence {
    pub fn new(steps: Vec<StepStats>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyInput("step sequence"));
        }
        Ok(Self { steps })
    }

    /// Builds the sequence directly from full distributions.
    pub fn from_dists(dists: &[ProbVector]) -> Result<Self> {
        Self::new(dists.iter().map(StepStats::from_dist).collect())
    }

    pub fn steps(&self) -> &[StepStats] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        // Invariant: construction rejects empty sequences.
        false
    }

    /// The same sequence with one more step appended.
    pub fn with_appended(&self, step: StepStats) -> Self {
        let mut steps = self.steps.clone();
        steps.push(step);
        Self { steps }
    }
}

/// Scores one response under the chosen reward.
///
/// `t_max` is the generation cap the response was sampled under; it must be
/// at least the sequence length for every reward kind, not just `lp`, so a
/// misconfigured cap fails loudly instead of silently rescaling nothing.
pub fn reward(kind: RewardKind, seq: &StepDistSequence, t_max: usize) -> Result<f64> {
    let t = seq.len();
    if t_max < t {
        return Err(Error::TMaxTooSmall { t_max, len: t });
    }
    let value = match kind {
        RewardKind::Ent => -seq.steps().iter().map(|s| s.shannon()).sum::<f64>(),
        RewardKind::AvgEnt => {
            -seq.steps().iter().map(|s| s.shannon()).sum::<f64>() / t as f64
        }
        RewardKind::Lp => -(t as f64) / (t_max as f64),
        RewardKind::Ch2 => seq.steps().iter().map(|s| s.collision().ln()).sum(),
        RewardKind::Cp => seq.steps().iter().map(|s| s.collision()).sum(),
    };
    Ok(value)
}
