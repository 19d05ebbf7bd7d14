//! Artifact schemas and deterministic writers. Every JSON artifact embeds
//! the resolved settings that produced it plus the tool version, and none
//! of them carry timestamps or filesystem paths, so identical settings
//! and seeds reproduce identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use entrolens::cluster::{ClusterModel, SemanticLabeling};
use entrolens::phase::{HullReport, PhaseSeries, PromptPhasePoint};
use entrolens::toy_lab::CheckpointSummary;
use entrolens::trace::{AccuracyPoint, EntropyTrajectory, TraceRecord};

use crate::config::{ClusterSettings, HullSettings, IngestSettings, ProjectSettings, TrainSettings};
use crate::CliError;

/// Version stamped into every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `run_summary.json`: checkpoint statistics of one toy training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummaryFile {
    pub version: String,
    pub config: TrainSettings,
    pub checkpoints: Vec<CheckpointSummary>,
}

/// `trajectories.json`: normalized token-entropy trajectories plus the
/// convergence step they were truncated at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoriesFile {
    pub version: String,
    pub config: IngestSettings,
    pub convergence_step: u64,
    pub trajectories: Vec<EntropyTrajectory>,
}

/// `model.json`: fitted clustering plus semantic labeling when k = 3.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub config: ClusterSettings,
    /// Carried through from the trajectories artifact.
    pub convergence_step: u64,
    pub model: ClusterModel,
    /// Present only for k = 3; clusters in the model are already reordered
    /// to ascending mean entropy (execution, logic, thinking).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labeling: Option<SemanticLabeling>,
    /// Most frequent anchor tokens per cluster, by whole-stream occurrence
    /// count.
    pub top_tokens: Vec<Vec<String>>,
}

/// `phase.json`: the 3-D phase trajectory, pooled or per prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseFile {
    pub version: String,
    pub config: ProjectSettings,
    pub convergence_step: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<PhaseSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_prompt: Option<PerPromptPhase>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerPromptPhase {
    pub points: Vec<PromptPhasePoint>,
    /// (prompt, checkpoint) cells dropped because a cluster was absent.
    pub dropped_cells: usize,
}

/// `hull_report.json`: volume, diagnosis, and the hull itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HullFile {
    pub version: String,
    pub config: HullSettings,
    pub method: String,
    /// The convergence step the phase trajectory was truncated at.
    pub truncation_step: u64,
    pub report: HullReport,
}

// --- IO helpers ------------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::Encode)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input {
        what: format!("{what} {}", path.display()),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        what: format!("{what} {}", path.display()),
        message: e.to_string(),
    })
}

pub fn write_trace_jsonl(path: &Path, records: &[TraceRecord]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(CliError::Encode)?;
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

pub fn write_accuracy_jsonl(path: &Path, points: &[AccuracyPoint]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for point in points {
        serde_json::to_writer(&mut out, point).map_err(CliError::Encode)?;
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let map = |source| CliError::Output {
        what: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(map)?;
    file.write_all(bytes).map_err(map)?;
    Ok(())
}

/// CSV rows of phase coordinates for external plotting. The pooled form is
/// `step,exec,logic,think`; the per-prompt form inserts a `prompt_id`
/// column after `step`.
pub fn phase_csv(file: &PhaseFile) -> String {
    let mut out = String::new();
    if let Some(series) = &file.series {
        out.push_str("step,exec,logic,think\n");
        for p in &series.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.step, p.coords[0], p.coords[1], p.coords[2]
            ));
        }
    }
    if let Some(per_prompt) = &file.per_prompt {
        out.push_str("step,prompt_id,exec,logic,think\n");
        for p in &per_prompt.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.step, p.prompt_id, p.coords[0], p.coords[1], p.coords[2]
            ));
        }
    }
    out
}

/// CSV of the points actually offered to the hull (imputed coordinates are
/// excluded from candidacy, so pooled rows are the non-imputed points).
pub fn hull_points_csv(file: &PhaseFile) -> String {
    let mut out = String::from("step,exec,logic,think\n");
    if let Some(series) = &file.series {
        for p in series.points.iter().filter(|p| !p.is_imputed()) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.step, p.coords[0], p.coords[1], p.coords[2]
            ));
        }
    }
    if let Some(per_prompt) = &file.per_prompt {
        for p in &per_prompt.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.step, p.coords[0], p.coords[1], p.coords[2]
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use entrolens::phase::PhasePoint;

    #[test]
    fn phase_csv_formats_pooled_points() {
        let file = PhaseFile {
            version: VERSION.to_string(),
            config: ProjectSettings { per_prompt: false },
            convergence_step: 10,
            series: Some(PhaseSeries {
                convergence_step: 10,
                points: vec![PhasePoint {
                    step: 5,
                    coords: [0.25, 0.5, 1.0],
                    imputed: [false, true, false],
                }],
                skipped_steps: vec![],
            }),
            per_prompt: None,
        };
        assert_eq!(phase_csv(&file), "step,exec,logic,think\n5,0.25,0.5,1\n");
        // Row is imputed on one axis, so it is not a hull candidate.
        assert_eq!(hull_points_csv(&file), "step,exec,logic,think\n");
    }

    #[test]
    fn per_prompt_csv_includes_the_prompt_column() {
        let file = PhaseFile {
            version: VERSION.to_string(),
            config: ProjectSettings { per_prompt: true },
            convergence_step: 10,
            series: None,
            per_prompt: Some(PerPromptPhase {
                points: vec![PromptPhasePoint {
                    step: 5,
                    prompt_id: "p0".into(),
                    coords: [1.0, 2.0, 3.0],
                }],
                dropped_cells: 2,
            }),
        };
        assert_eq!(
            phase_csv(&file),
            "step,prompt_id,exec,logic,think\n5,p0,1,2,3\n"
        );
    }
}
