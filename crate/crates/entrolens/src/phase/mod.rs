//! 3D phase-space projection and hull-volume diagnosis.
//!
//! Once trajectories are clustered into the three semantic groups, every
//! eval checkpoint of a run maps to one point in a 3D phase space: the
//! mean entropy of the records assigned to (`Execution`, `Logic`,
//! `Thinking`) — in that axis order — at that step. The volume of the
//! convex hull of those points measures how much of the phase space the
//! run explored, and two thresholds turn the volume into a stability
//! diagnosis.

pub mod hull;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::SemanticLabel;
use crate::trace::{Anchor, TraceRecord};
use crate::{Error, Result};

pub use hull::{convex_hull_volume, HullGeometry};

/// Volume thresholds separating the three diagnoses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub v_low: f64,
    pub v_high: f64,
}

impl Thresholds {
    pub fn new(v_low: f64, v_high: f64) -> Result<Self> {
        if !(v_low.is_finite() && v_high.is_finite() && v_low >= 0.0 && v_low < v_high) {
            return Err(Error::InvalidParam(format!(
                "thresholds must satisfy 0 <= v_low < v_high, got ({v_low}, {v_high})"
            )));
        }
        Ok(Self { v_low, v_high })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            v_low: 0.05,
            v_high: 4.0,
        }
    }
}

/// Stability diagnosis from the hull volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnosis {
    /// Volume below `v_low`: the run barely moved through phase space.
    ExplorationStagnation,
    /// Volume in `[v_low, v_high]`: bounded, structured exploration.
    StrongConstraints,
    /// Volume above `v_high`: the entropy manifold blew up.
    ManifoldExplosion,
}

impl std::fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Diagnosis::ExplorationStagnation => "exploration_stagnation",
            Diagnosis::StrongConstraints => "strong_constraints",
            Diagnosis::ManifoldExplosion => "manifold_explosion",
        };
        f.write_str(name)
    }
}

/// Classifies a volume against the thresholds. Boundary values count as
/// the middle band: `v_low` and `v_high` both diagnose as
/// `StrongConstraints`.
pub fn diagnose(volume: f64, thresholds: &Thresholds) -> Result<Diagnosis> {
    if !volume.is_finite() || volume < 0.0 {
        return Err(Error::InvalidParam(format!(
            "volume must be finite and >= 0, got {volume}"
        )));
    }
    Ok(if volume < thresholds.v_low {
        Diagnosis::ExplorationStagnation
    } else if volume > thresholds.v_high {
        Diagnosis::ManifoldExplosion
    } else {
        Diagnosis::StrongConstraints
    })
}

/// One checkpoint in phase space. `coords` follows the semantic axis
/// order (`exec`, `logic`, `think`); `imputed[axis]` marks coordinates
/// carried forward from the previous checkpoint because the cluster had
/// no records at this one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub step: u64,
    pub coords: [f64; 3],
    pub imputed: [bool; 3],
}

impl PhasePoint {
    pub fn is_imputed(&self) -> bool {
        self.imputed.iter().any(|&b| b)
    }
}

/// A full phase trajectory plus bookkeeping about what could not be
/// projected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeries {
    pub convergence_step: u64,
    pub points: Vec<PhasePoint>,
    /// Checkpoints dropped entirely because a cluster was empty before any
    /// previous coordinate existed to carry forward.
    pub skipped_steps: Vec<u64>,
}

/// Mean entropy per semantic cluster for one checkpoint's records.
/// Records whose anchor is not in the assignment map (e.g. filtered out
/// during ingestion) are ignored.
fn step_means(
    entries: &[(&Anchor, f64)],
    assignments: &BTreeMap<Anchor, usize>,
) -> [Option<f64>; 3] {
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for (anchor, entropy) in entries {
        if let Some(&cluster) = assignments.get(anchor) {
            if cluster < 3 {
                sums[cluster] += entropy;
                counts[cluster] += 1;
            }
        }
    }
    let mut out = [None; 3];
    for axis in 0..3 {
        if counts[axis] > 0 {
            out[axis] = Some(sums[axis] / counts[axis] as f64);
        }
    }
    out
}

fn missing_labels(means: &[Option<f64>; 3]) -> String {
    SemanticLabel::ORDERED
        .iter()
        .enumerate()
        .filter(|(axis, _)| means[*axis].is_none())
        .map(|(_, label)| label.axis())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Projects one checkpoint strictly: every semantic cluster must have at
/// least one record, otherwise the missing clusters are reported.
pub fn project_step(
    step: u64,
    entries: &[(&Anchor, f64)],
    assignments: &BTreeMap<Anchor, usize>,
) -> Result<[f64; 3]> {
    let means = step_means(entries, assignments);
    if means.iter().any(|m| m.is_none()) {
        return Err(Error::MissingCluster {
            labels: missing_labels(&means),
            step,
        });
    }
    Ok([
        means[0].unwrap(),
        means[1].unwrap(),
        means[2].unwrap(),
    ])
}

fn group_by_step(
    records: &[TraceRecord],
    convergence_step: u64,
) -> BTreeMap<u64, Vec<(Anchor, f64)>> {
    let mut by_step: BTreeMap<u64, Vec<(Anchor, f64)>> = BTreeMap::new();
    for r in records {
        if r.step == 0 || r.step > convergence_step {
            continue;
        }
        by_step.entry(r.step).or_default().push((
            Anchor {
                prompt_id: r.prompt_id.clone(),
                token: r.token.clone(),
            },
            r.entropy,
        ));
    }
    by_step
}

/// Projects a whole trace into phase space, one point per checkpoint up
/// to the convergence step.
///
/// A checkpoint where some cluster has no records keeps the previous
/// point's coordinate on that axis and is marked imputed there; leading
/// checkpoints with no previous point to borrow from are skipped and
/// reported in `skipped_steps`.
pub fn phase_trajectory(
    records: &[TraceRecord],
    assignments: &BTreeMap<Anchor, usize>,
    convergence_step: u64,
) -> Result<PhaseSeries> {
    if convergence_step == 0 {
        return Err(Error::InvalidConvergenceStep);
    }
    let by_step = group_by_step(records, convergence_step);
    if by_step.is_empty() {
        return Err(Error::EmptyInput("phase records"));
    }
    let mut points: Vec<PhasePoint> = Vec::new();
    let mut skipped = Vec::new();
    for (&step, entries) in &by_step {
        let refs: Vec<(&Anchor, f64)> = entries.iter().map(|(a, e)| (a, *e)).collect();
        let means = step_means(&refs, assignments);
        if means.iter().all(|m| m.is_some()) {
            points.push(PhasePoint {
                step,
                coords: [
                    means[0].unwrap(),
                    means[1].unwrap(),
                    means[2].unwrap(),
                ],
                imputed: [false; 3],
            });
        } else if let Some(prev) = points.last() {
            let prev_coords = prev.coords;
            let mut coords = [0.0; 3];
            let mut imputed = [false; 3];
            for axis in 0..3 {
                match means[axis] {
                    Some(v) => coords[axis] = v,
                    None => {
                        coords[axis] = prev_coords[axis];
                        imputed[axis] = true;
                    }
                }
            }
            points.push(PhasePoint {
                step,
                coords,
                imputed,
            });
        } else {
            skipped.push(step);
        }
    }
    if points.is_empty() {
        return Err(Error::MissingCluster {
            labels: "exec, logic, think".into(),
            step: skipped.first().copied().unwrap_or(0),
        });
    }
    Ok(PhaseSeries {
        convergence_step,
        points,
        skipped_steps: skipped,
    })
}

/// One per-prompt phase point (the finer-grained projection variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPhasePoint {
    pub step: u64,
    pub prompt_id: String,
    pub coords: [f64; 3],
}

/// Projects per `(prompt, checkpoint)` instead of pooling prompts. Cells
/// where a prompt is missing a whole cluster at a step are dropped (their
/// count is returned), since carrying forward per prompt would fabricate
/// structure in much sparser data.
pub fn per_prompt_phase_points(
    records: &[TraceRecord],
    assignments: &BTreeMap<Anchor, usize>,
    convergence_step: u64,
) -> Result<(Vec<PromptPhasePoint>, usize)> {
    if convergence_step == 0 {
        return Err(Error::InvalidConvergenceStep);
    }
    let mut cells: BTreeMap<(u64, String), Vec<(Anchor, f64)>> = BTreeMap::new();
    for r in records {
        if r.step == 0 || r.step > convergence_step {
            continue;
        }
        cells
            .entry((r.step, r.prompt_id.clone()))
            .or_default()
            .push((
                Anchor {
                    prompt_id: r.prompt_id.clone(),
                    token: r.token.clone(),
                },
                r.entropy,
            ));
    }
    let mut points = Vec::new();
    let mut dropped = 0usize;
    for ((step, prompt_id), entries) in &cells {
        let refs: Vec<(&Anchor, f64)> = entries.iter().map(|(a, e)| (a, *e)).collect();
        let means = step_means(&refs, assignments);
        if means.iter().all(|m| m.is_some()) {
            points.push(PromptPhasePoint {
                step: *step,
                prompt_id: prompt_id.clone(),
                coords: [
                    means[0].unwrap(),
                    means[1].unwrap(),
                    means[2].unwrap(),
                ],
            });
        } else {
            dropped += 1;
        }
    }
    Ok((points, dropped))
}

/// The hull verdict for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullReport {
    pub volume: f64,
    pub vertex_count: usize,
    pub degenerate: bool,
    pub diagnosis: Diagnosis,
    pub thresholds: Thresholds,
    /// Number of phase points offered to the hull after excluding imputed
    /// ones.
    pub input_points: usize,
    pub vertices: Vec<[f64; 3]>,
}

/// Builds the hull report for a set of phase points. Imputed points are
/// excluded from vertex candidacy — a carried-forward coordinate is not
/// evidence the run visited that corner of phase space.
pub fn hull_report(points: &[PhasePoint], thresholds: &Thresholds) -> Result<HullReport> {
    let candidates: Vec<[f64; 3]> = points
        .iter()
        .filter(|p| !p.is_imputed())
        .map(|p| p.coords)
        .collect();
    let geometry = convex_hull_volume(&candidates)?;
    let diagnosis = diagnose(geometry.volume, thresholds)?;
    Ok(HullReport {
        volume: geometry.volume,
        vertex_count: geometry.vertices.len(),
        degenerate: geometry.degenerate,
        diagnosis,
        thresholds: *thresholds,
        input_points: candidates.len(),
        vertices: geometry.vertices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor(prompt: &str, token: &str) -> Anchor {
        Anchor {
            prompt_id: prompt.into(),
            token: token.into(),
        }
    }

    fn record(step: u64, prompt: &str, token: &str, entropy: f64) -> TraceRecord {
        TraceRecord {
            step,
            prompt_id: prompt.into(),
            token: token.into(),
            entropy,
        }
    }

    fn simple_assignments() -> BTreeMap<Anchor, usize> {
        let mut m = BTreeMap::new();
        m.insert(anchor("p0", "a"), 0);
        m.insert(anchor("p0", "b"), 1);
        m.insert(anchor("p0", "c"), 2);
        m.insert(anchor("p0", "d"), 0);
        m
    }

    #[test]
    fn diagnose_fixtures() {
        let t = Thresholds::default();
        assert_eq!(diagnose(0.006, &t).unwrap(), Diagnosis::ExplorationStagnation);
        assert_eq!(diagnose(8.125, &t).unwrap(), Diagnosis::ManifoldExplosion);
        assert_eq!(diagnose(1.0, &t).unwrap(), Diagnosis::StrongConstraints);
        // Boundaries belong to the middle band.
        assert_eq!(diagnose(0.05, &t).unwrap(), Diagnosis::StrongConstraints);
        assert_eq!(diagnose(4.0, &t).unwrap(), Diagnosis::StrongConstraints);
        assert!(diagnose(-1.0, &t).is_err());
        assert!(diagnose(f64::NAN, &t).is_err());
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::new(0.5, 0.5).is_err());
        assert!(Thresholds::new(2.0, 1.0).is_err());
        assert!(Thresholds::new(-0.1, 1.0).is_err());
        assert!(Thresholds::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn project_step_averages_within_clusters() {
        let assignments = simple_assignments();
        let a0 = anchor("p0", "a");
        let a1 = anchor("p0", "b");
        let a2 = anchor("p0", "c");
        let a3 = anchor("p0", "d");
        let entries = vec![
            (&a0, 0.2),
            (&a3, 0.4),
            (&a1, 1.0),
            (&a2, 2.0),
        ];
        let coords = project_step(5, &entries, &assignments).unwrap();
        assert!((coords[0] - 0.3).abs() <= 1e-12);
        assert!((coords[1] - 1.0).abs() <= 1e-12);
        assert!((coords[2] - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn project_step_reports_missing_clusters() {
        let assignments = simple_assignments();
        let a0 = anchor("p0", "a");
        let entries = vec![(&a0, 0.2)];
        match project_step(5, &entries, &assignments) {
            Err(Error::MissingCluster { labels, step: 5 }) => {
                assert_eq!(labels, "logic, think");
            }
            other => panic!("expected MissingCluster, got {other:?}"),
        }
    }

    #[test]
    fn unknown_anchors_are_ignored() {
        let assignments = simple_assignments();
        let known_a = anchor("p0", "a");
        let known_b = anchor("p0", "b");
        let known_c = anchor("p0", "c");
        let unknown = anchor("p9", "zzz");
        let entries = vec![
            (&known_a, 0.2),
            (&known_b, 1.0),
            (&known_c, 2.0),
            (&unknown, 99.0),
        ];
        let coords = project_step(5, &entries, &assignments).unwrap();
        assert!((coords[0] - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn trajectory_carries_forward_missing_clusters() {
        let assignments = simple_assignments();
        let records = vec![
            record(5, "p0", "a", 0.2),
            record(5, "p0", "b", 1.0),
            record(5, "p0", "c", 2.0),
            // Step 10 has no cluster-2 record.
            record(10, "p0", "a", 0.1),
            record(10, "p0", "b", 0.9),
        ];
        let series = phase_trajectory(&records, &assignments, 10).unwrap();
        assert_eq!(series.points.len(), 2);
        assert_eq!(series.points[1].coords[2], 2.0);
        assert_eq!(series.points[1].imputed, [false, false, true]);
        assert!(series.skipped_steps.is_empty());
    }

    #[test]
    fn leading_incomplete_checkpoints_are_skipped() {
        let assignments = simple_assignments();
        let records = vec![
            record(5, "p0", "a", 0.2),
            record(10, "p0", "a", 0.1),
            record(10, "p0", "b", 0.9),
            record(10, "p0", "c", 1.9),
        ];
        let series = phase_trajectory(&records, &assignments, 10).unwrap();
        assert_eq!(series.skipped_steps, vec![5]);
        assert_eq!(series.points.len(), 1);
        assert_eq!(series.points[0].step, 10);
    }

    #[test]
    fn trajectory_respects_convergence_truncation() {
        let assignments = simple_assignments();
        let mut records = Vec::new();
        for step in [5u64, 10, 15, 20] {
            records.push(record(step, "p0", "a", 0.2));
            records.push(record(step, "p0", "b", 1.0));
            records.push(record(step, "p0", "c", 2.0));
        }
        records.push(record(0, "p0", "a", 9.0));
        let series = phase_trajectory(&records, &assignments, 15).unwrap();
        let steps: Vec<u64> = series.points.iter().map(|p| p.step).collect();
        assert_eq!(steps, vec![5, 10, 15]);
        assert!(matches!(
            phase_trajectory(&records, &assignments, 0),
            Err(Error::InvalidConvergenceStep)
        ));
    }

    #[test]
    fn all_steps_incomplete_is_an_error() {
        let assignments = simple_assignments();
        let records = vec![record(5, "p0", "a", 0.2), record(10, "p0", "a", 0.1)];
        assert!(matches!(
            phase_trajectory(&records, &assignments, 10),
            Err(Error::MissingCluster { .. })
        ));
        assert!(matches!(
            phase_trajectory(&[], &assignments, 10),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn per_prompt_projection_drops_incomplete_cells() {
        let mut assignments = simple_assignments();
        assignments.insert(anchor("p1", "a"), 0);
        assignments.insert(anchor("p1", "b"), 1);
        assignments.insert(anchor("p1", "c"), 2);
        let records = vec![
            record(5, "p0", "a", 0.2),
            record(5, "p0", "b", 1.0),
            record(5, "p0", "c", 2.0),
            // p1 at step 5 misses cluster 2 entirely.
            record(5, "p1", "a", 0.3),
            record(5, "p1", "b", 1.1),
        ];
        let (points, dropped) =
            per_prompt_phase_points(&records, &assignments, 10).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].prompt_id, "p0");
        assert_eq!(dropped, 1);
    }

    #[test]
    fn hull_report_excludes_imputed_points() {
        let mut points = Vec::new();
        // A unit tetrahedron of honest points...
        for (step, coords) in [
            (5u64, [0.0, 0.0, 0.0]),
            (10, [1.0, 0.0, 0.0]),
            (15, [0.0, 1.0, 0.0]),
            (20, [0.0, 0.0, 1.0]),
        ] {
            points.push(PhasePoint {
                step,
                coords,
                imputed: [false; 3],
            });
        }
        // ...plus an imputed far-away point that must not inflate the hull.
        points.push(PhasePoint {
            step: 25,
            coords: [10.0, 10.0, 10.0],
            imputed: [false, false, true],
        });
        let report = hull_report(&points, &Thresholds::default()).unwrap();
        assert_eq!(report.input_points, 4);
        assert!((report.volume - 1.0 / 6.0).abs() <= 1e-12);
        assert_eq!(report.diagnosis, Diagnosis::StrongConstraints);
        assert!(!report.degenerate);
    }
}
