//! Trace ingestion: from checkpointed token-entropy records to normalized
//! per-token entropy trajectories.
//!
//! A trace is a stream of `(step, prompt_id, token, entropy)` records, one
//! per `(prompt, token)` anchor per eval checkpoint. Ingestion groups the
//! records by anchor, truncates each series at the run's effective
//! convergence point, drops anchors observed fewer than twice, and rescales
//! checkpoint steps to normalized training time `t = step / convergence`
//! in `(0, 1]` so trajectories from runs of different lengths are
//! comparable.
//!
//! The convergence point itself comes from the eval accuracy curve under
//! one of three modes ([`ConvergenceMode`]), or is overridden explicitly.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One line of a trace JSONL file.
///
/// Token strings are compared byte-exactly (case-sensitive); extra fields
/// in the JSON are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub prompt_id: String,
    pub token: String,
    pub entropy: f64,
}

/// One line of an accuracy JSONL sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub step: u64,
    pub accuracy: f64,
}

/// A `(prompt, token)` pair — the unit a trajectory is anchored to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub prompt_id: String,
    pub token: String,
}

/// A parse failure for one line of a JSONL stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

/// Reads trace records from JSONL, skipping blank lines. Malformed lines —
/// bad JSON, missing fields, negative or non-finite entropy, empty token
/// or prompt — are reported per line and skipped; parsing continues.
pub fn read_trace_jsonl(reader: impl BufRead) -> Result<(Vec<TraceRecord>, Vec<LineError>)> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceRecord>(trimmed) {
            Ok(record) => match validate_record(&record) {
                Ok(()) => records.push(record),
                Err(message) => errors.push(LineError {
                    line: idx + 1,
                    message,
                }),
            },
            Err(e) => errors.push(LineError {
                line: idx + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((records, errors))
}

fn validate_record(record: &TraceRecord) -> std::result::Result<(), String> {
    if !record.entropy.is_finite() || record.entropy < 0.0 {
        return Err(format!(
            "entropy must be finite and >= 0, got {}",
            record.entropy
        ));
    }
    if record.token.is_empty() {
        return Err("token must be non-empty".into());
    }
    if record.prompt_id.is_empty() {
        return Err("prompt_id must be non-empty".into());
    }
    Ok(())
}

/// Reads an accuracy sidecar. The file is small and produced mechanically,
/// so parsing is strict: any malformed line is an error.
pub fn read_accuracy_jsonl(reader: impl BufRead) -> Result<Vec<AccuracyPoint>> {
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let point: AccuracyPoint = serde_json::from_str(trimmed).map_err(|e| {
            Error::InvalidConfig(format!("accuracy line {}: {e}", idx + 1))
        })?;
        if !point.accuracy.is_finite() || !(0.0..=1.0).contains(&point.accuracy) {
            return Err(Error::InvalidConfig(format!(
                "accuracy line {}: accuracy must lie in [0, 1], got {}",
                idx + 1,
                point.accuracy
            )));
        }
        points.push(point);
    }
    points.sort_by_key(|p| p.step);
    points.dedup_by_key(|p| p.step);
    Ok(points)
}

/// Raw per-anchor series before truncation and normalization: sorted
/// `(step, mean entropy)` pairs plus the number of input records that fed
/// the anchor (its occurrence frequency, used later for core-sample
/// ranking).
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub points: Vec<(u64, f64)>,
    pub occurrences: usize,
}

/// Groups validated records by anchor. Entries for the same anchor at the
/// same step (a token sampled in several eval rollouts of one checkpoint)
/// are mean-aggregated. Input order never matters: everything lands in
/// sorted maps.
pub fn build_trajectories(
    records: impl IntoIterator<Item = TraceRecord>,
) -> BTreeMap<Anchor, RawSeries> {
    // Per step: (entropy sum, record count); per anchor: total occurrences.
    type StepSums = BTreeMap<u64, (f64, usize)>;
    let mut acc: BTreeMap<Anchor, (StepSums, usize)> = BTreeMap::new();
    for record in records {
        let anchor = Anchor {
            prompt_id: record.prompt_id,
            token: record.token,
        };
        let entry = acc.entry(anchor).or_default();
        let cell = entry.0.entry(record.step).or_insert((0.0, 0));
        cell.0 += record.entropy;
        cell.1 += 1;
        entry.1 += 1;
    }
    acc.into_iter()
        .map(|(anchor, (steps, occurrences))| {
            let points = steps
                .into_iter()
                .map(|(step, (sum, count))| (step, sum / count as f64))
                .collect();
            (anchor, RawSeries { points, occurrences })
        })
        .collect()
}

/// How the effective convergence point is chosen from the accuracy curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMode {
    /// Step of the maximum accuracy; earliest step on ties.
    PeakAccuracy,
    /// First step from which accuracy improves by at most `delta` over the
    /// next `window` checkpoints.
    PlateauOnset,
    /// First step where accuracy hits zero and never recovers.
    Collapse,
}

/// Parameters for [`ConvergenceMode::PlateauOnset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauParams {
    pub window: usize,
    pub delta: f64,
}

impl Default for PlateauParams {
    fn default() -> Self {
        Self {
            window: 3,
            delta: 0.02,
        }
    }
}

/// Resolves the effective convergence step.
///
/// An explicit step, when given, wins over every mode. Otherwise the
/// accuracy curve must be non-empty; it is processed in step order.
pub fn effective_convergence_point(
    mode: ConvergenceMode,
    accuracy: &[AccuracyPoint],
    explicit_step: Option<u64>,
    plateau: PlateauParams,
) -> Result<u64> {
    if let Some(step) = explicit_step {
        if step == 0 {
            return Err(Error::InvalidConvergenceStep);
        }
        return Ok(step);
    }
    if accuracy.is_empty() {
        return Err(Error::EmptyAccuracyCurve);
    }
    let mut curve = accuracy.to_vec();
    curve.sort_by_key(|p| p.step);
    let step = match mode {
        ConvergenceMode::PeakAccuracy => {
            let mut best = &curve[0];
            for p in &curve[1..] {
                if p.accuracy > best.accuracy {
                    best = p;
                }
            }
            best.step
        }
        ConvergenceMode::PlateauOnset => {
            if plateau.window == 0 {
                return Err(Error::InvalidParam("plateau window must be >= 1".into()));
            }
            if !plateau.delta.is_finite() || plateau.delta < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "plateau delta must be >= 0, got {}",
                    plateau.delta
                )));
            }
            let mut onset = None;
            for i in 0..curve.len() {
                // A flat stretch at zero accuracy is the pre-learning
                // warm-up, not "the accuracy plateau"; onset requires the
                // model to have learned something.
                if curve[i].accuracy <= 0.0 {
                    continue;
                }
                let window_end = (i + plateau.window).min(curve.len() - 1);
                // An empty lookahead window (tail of the curve) counts as
                // a plateau: no future improvement is observable.
                let future_max = curve[i + 1..=window_end]
                    .iter()
                    .map(|p| p.accuracy)
                    .fold(f64::NEG_INFINITY, f64::max);
                if i + 1 > window_end || future_max - curve[i].accuracy <= plateau.delta {
                    onset = Some(curve[i].step);
                    break;
                }
            }
            onset.ok_or(Error::NoPlateauOnset)?
        }
        ConvergenceMode::Collapse => {
            // Last index with positive accuracy; collapse starts right
            // after it and must reach the end of the curve.
            let last_positive = curve.iter().rposition(|p| p.accuracy > 0.0);
            let start = match last_positive {
                Some(i) if i + 1 < curve.len() => i + 1,
                Some(_) => return Err(Error::NoCollapsePoint),
                None => 0,
            };
            curve[start].step
        }
    };
    if step == 0 {
        return Err(Error::InvalidConvergenceStep);
    }
    Ok(step)
}

/// One point of a normalized trajectory: normalized training time in
/// `(0, 1]` and the anchor's mean entropy there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub t: f64,
    pub entropy: f64,
}

/// A normalized entropy trajectory for one anchor: at least two points,
/// strictly increasing in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrajectory {
    pub anchor: Anchor,
    pub points: Vec<TrajPoint>,
    /// Number of raw records that fed this anchor.
    pub occurrences: usize,
}

impl EntropyTrajectory {
    pub fn new(anchor: Anchor, points: Vec<TrajPoint>, occurrences: usize) -> Result<Self> {
        let traj = Self {
            anchor,
            points,
            occurrences,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "trajectory for {:?} has {} points, need >= 2",
                self.anchor,
                self.points.len()
            )));
        }
        let mut prev = 0.0;
        for p in &self.points {
            if !(p.t.is_finite() && p.t > 0.0 && p.t <= 1.0) {
                return Err(Error::InvalidParam(format!(
                    "normalized time must lie in (0, 1], got {}",
                    p.t
                )));
            }
            if p.t <= prev {
                return Err(Error::InvalidParam(
                    "normalized times must be strictly increasing".into(),
                ));
            }
            if !p.entropy.is_finite() || p.entropy < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "entropy must be finite and >= 0, got {}",
                    p.entropy
                )));
            }
            prev = p.t;
        }
        Ok(())
    }

    /// The raw entropy values in time order.
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.entropy).collect()
    }
}

/// Truncates each raw series at the convergence step, drops series left
/// with fewer than two points, and normalizes steps to `t = step /
/// convergence_step`. Records at step 0 (pre-training snapshots) are
/// dropped so normalized times stay strictly positive.
///
/// Returns the surviving trajectories in anchor order; the result may be
/// empty, which callers typically treat as "no trajectories of length
/// >= 2" ([`Error::NoTrajectories`]).
pub fn filter_and_normalize(
    raw: &BTreeMap<Anchor, RawSeries>,
    convergence_step: u64,
) -> Result<Vec<EntropyTrajectory>> {
    if convergence_step == 0 {
        return Err(Error::InvalidConvergenceStep);
    }
    let c = convergence_step as f64;
    let mut out = Vec::new();
    for (anchor, series) in raw {
        let points: Vec<TrajPoint> = series
            .points
            .iter()
            .filter(|(step, _)| *step > 0 && *step <= convergence_step)
            .map(|&(step, entropy)| TrajPoint {
                t: step as f64 / c,
                entropy,
            })
            .collect();
        if points.len() < 2 {
            continue;
        }
        out.push(EntropyTrajectory::new(
            anchor.clone(),
            points,
            series.occurrences,
        )?);
    }
    Ok(out)
}
