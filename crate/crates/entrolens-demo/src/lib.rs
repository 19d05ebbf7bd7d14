//! Browser demo: train a toy policy on one of the intrinsic rewards,
//! cluster its token-entropy trajectories, and inspect the phase-space
//! hull — entirely in the page.
//!
//! Build for the web with
//! `wasm-pack build crates/entrolens-demo --target web --out-dir www/pkg`
//! (or `cargo build --target wasm32-unknown-unknown` plus `wasm-bindgen`),
//! then serve `crates/entrolens-demo/www/`. The crate also compiles
//! natively so its tests run with the rest of the workspace; the exported
//! API stays JSON-in/JSON-out to keep the JS side framework-free.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use entrolens::cluster::{order_clusters, ts_kmeans, ClusterModel, SemanticLabeling, SoftDtwParams};
use entrolens::phase::hull::convex_hull_volume;
use entrolens::phase::{hull_report, phase_trajectory, PhasePoint, Thresholds};
use entrolens::rewards::RewardKind;
use entrolens::toy_lab::{train, CheckpointSummary, ToyTask, TrainConfig};
use entrolens::trace::{build_trajectories, filter_and_normalize, EntropyTrajectory, TraceRecord};

/// Browser-facing bounds: enough steps to show every failure mode without
/// freezing the tab.
const MAX_STEPS: usize = 2000;
const RESAMPLE_LEN: usize = 16;
const MAX_MEMBER_CURVES: usize = 60;

/// One training run plus the lazily fitted clustering over its trace.
#[wasm_bindgen]
pub struct DemoSession {
    reward: RewardKind,
    seed: u64,
    steps: usize,
    checkpoints: Vec<CheckpointSummary>,
    records: Vec<TraceRecord>,
    convergence: u64,
    fitted: Option<Fitted>,
}

struct Fitted {
    gamma: f64,
    trajectories: Vec<EntropyTrajectory>,
    model: ClusterModel,
    labeling: SemanticLabeling,
}

#[derive(Serialize)]
struct TrainingView<'a> {
    reward: RewardKind,
    seed: u64,
    steps: usize,
    convergence_step: u64,
    checkpoints: &'a [CheckpointSummary],
}

#[derive(Serialize)]
struct MemberCurve {
    cluster: usize,
    t: Vec<f64>,
    entropy: Vec<f64>,
}

#[derive(Serialize)]
struct ClusterView {
    gamma: f64,
    resample_len: usize,
    iterations: usize,
    inertia: f64,
    /// Mean centroid entropy per semantic slot (execution, logic, thinking).
    means: [f64; 3],
    counts: [usize; 3],
    tie_broken: bool,
    centroids: Vec<Vec<f64>>,
    members: Vec<MemberCurve>,
}

#[derive(Serialize)]
struct HullView {
    convergence_step: u64,
    points: Vec<PhasePoint>,
    skipped_steps: Vec<u64>,
    volume: f64,
    diagnosis: entrolens::phase::Diagnosis,
    degenerate: bool,
    v_low: f64,
    v_high: f64,
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

#[wasm_bindgen]
impl DemoSession {
    /// Trains the toy policy on `reward` (ent, avgent, lp, ch2, or cp).
    #[wasm_bindgen(constructor)]
    pub fn new(reward: &str, steps: u32, seed: u32) -> Result<DemoSession, JsError> {
        Self::build(reward, steps as usize, seed as u64).map_err(|e| JsError::new(&e))
    }

    /// Checkpoint curves of the run (entropy, length, reward per step).
    pub fn training_json(&self) -> String {
        self.training_view()
    }

    /// Fits the 3-cluster Soft-DTW k-means at this `gamma` and describes
    /// the centroids and their members.
    pub fn cluster_json(&mut self, gamma: f64) -> Result<String, JsError> {
        self.cluster_view(gamma).map_err(|e| JsError::new(&e))
    }

    /// Projects the run into phase space under the fitted clustering
    /// (fitting with a default gamma first when none exists) and reports
    /// the convex hull and its diagnosis.
    pub fn hull_json(&mut self) -> Result<String, JsError> {
        self.hull_view().map_err(|e| JsError::new(&e))
    }
}

impl DemoSession {
    fn build(reward: &str, steps: usize, seed: u64) -> Result<DemoSession, String> {
        let reward: RewardKind = reward.parse().map_err(|e: entrolens::Error| e.to_string())?;
        let steps = steps.clamp(1, MAX_STEPS);
        let task = ToyTask::default_task(8, 32, 64).map_err(|e| e.to_string())?;
        let config = TrainConfig::new(reward, steps, seed);
        let out = train(&task, &config).map_err(|e| e.to_string())?;
        let convergence = out.trace.iter().map(|r| r.step).max().unwrap_or(0);
        if convergence == 0 {
            return Err("run produced no trace records; train for more steps".into());
        }
        Ok(DemoSession {
            reward,
            seed,
            steps,
            checkpoints: out.checkpoints,
            records: out.trace,
            convergence,
            fitted: None,
        })
    }

    fn training_view(&self) -> String {
        let view = TrainingView {
            reward: self.reward,
            seed: self.seed,
            steps: self.steps,
            convergence_step: self.convergence,
            checkpoints: &self.checkpoints,
        };
        serde_json::to_string(&view).expect("training view serializes")
    }

    fn fit(&mut self, gamma: f64) -> Result<&Fitted, String> {
        let needs_fit = match &self.fitted {
            Some(fitted) => fitted.gamma != gamma,
            None => true,
        };
        if needs_fit {
            let raw = build_trajectories(self.records.clone());
            let trajectories =
                filter_and_normalize(&raw, self.convergence).map_err(|e| e.to_string())?;
            let params = SoftDtwParams::new(gamma).map_err(|e| e.to_string())?;
            let mut model = ts_kmeans(&trajectories, 3, &params, RESAMPLE_LEN, 50, self.seed)
                .map_err(|e| e.to_string())?;
            let labeling = order_clusters(&mut model).map_err(|e| e.to_string())?;
            self.fitted = Some(Fitted {
                gamma,
                trajectories,
                model,
                labeling,
            });
        }
        Ok(self.fitted.as_ref().expect("fit just stored"))
    }

    fn cluster_view(&mut self, gamma: f64) -> Result<String, String> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(format!("gamma must be finite and >= 0, got {gamma}"));
        }
        let fitted = self.fit(gamma)?;
        let mut counts = [0usize; 3];
        for a in &fitted.model.assignments {
            counts[a.cluster] += 1;
        }
        let members = fitted
            .trajectories
            .iter()
            .zip(&fitted.model.assignments)
            .take(MAX_MEMBER_CURVES)
            .map(|(traj, a)| MemberCurve {
                cluster: a.cluster,
                t: traj.points.iter().map(|p| p.t).collect(),
                entropy: traj.points.iter().map(|p| p.entropy).collect(),
            })
            .collect();
        let view = ClusterView {
            gamma,
            resample_len: fitted.model.resample_len,
            iterations: fitted.model.iterations,
            inertia: fitted.model.inertia,
            means: fitted.labeling.means,
            counts,
            tie_broken: fitted.labeling.tie_broken,
            centroids: fitted.model.centroids.clone(),
            members,
        };
        Ok(serde_json::to_string(&view).expect("cluster view serializes"))
    }

    fn hull_view(&mut self) -> Result<String, String> {
        if self.fitted.is_none() {
            self.fit(0.1)?;
        }
        let fitted = self.fitted.as_ref().expect("fit exists");
        let assignments = fitted.model.assignment_map();
        let series = phase_trajectory(&self.records, &assignments, self.convergence)
            .map_err(|e| e.to_string())?;
        let thresholds = Thresholds::default();
        let report = hull_report(&series.points, &thresholds).map_err(|e| e.to_string())?;
        // The report carries the vertices; the wireframe also needs faces,
        // so rebuild the geometry from the same candidate points.
        let candidates: Vec<[f64; 3]> = series
            .points
            .iter()
            .filter(|p| !p.is_imputed())
            .map(|p| p.coords)
            .collect();
        let geometry = convex_hull_volume(&candidates).map_err(|e| e.to_string())?;
        let view = HullView {
            convergence_step: series.convergence_step,
            points: series.points,
            skipped_steps: series.skipped_steps,
            volume: report.volume,
            diagnosis: report.diagnosis,
            degenerate: report.degenerate,
            v_low: thresholds.v_low,
            v_high: thresholds.v_high,
            vertices: geometry.vertices,
            faces: geometry.faces,
        };
        Ok(serde_json::to_string(&view).expect("hull view serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_produces_the_checkpoint_curves() {
        let session = DemoSession::build("ent", 120, 7).unwrap();
        let json: serde_json::Value = serde_json::from_str(&session.training_json()).unwrap();
        assert_eq!(json["reward"], "ent");
        let checkpoints = json["checkpoints"].as_array().unwrap();
        assert!(!checkpoints.is_empty());
        assert_eq!(checkpoints.last().unwrap()["step"], 120);
    }

    #[test]
    fn cluster_then_hull_round_trip() {
        let mut session = DemoSession::build("ent", 200, 7).unwrap();
        let cluster: serde_json::Value =
            serde_json::from_str(&session.cluster_view(0.1).unwrap()).unwrap();
        assert_eq!(cluster["centroids"].as_array().unwrap().len(), 3);
        let counts: Vec<u64> = cluster["counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap())
            .collect();
        assert!(counts.iter().sum::<u64>() > 0);

        let hull: serde_json::Value =
            serde_json::from_str(&session.hull_view().unwrap()).unwrap();
        assert!(hull["volume"].as_f64().unwrap() >= 0.0);
        assert!(hull["diagnosis"].as_str().is_some());
        let vertex_count = hull["vertices"].as_array().unwrap().len();
        for face in hull["faces"].as_array().unwrap() {
            for index in face.as_array().unwrap() {
                assert!((index.as_u64().unwrap() as usize) < vertex_count);
            }
        }
    }

    #[test]
    fn refitting_only_happens_when_gamma_changes() {
        let mut session = DemoSession::build("ent", 80, 7).unwrap();
        let first = session.cluster_view(0.1).unwrap();
        let again = session.cluster_view(0.1).unwrap();
        assert_eq!(first, again);
        let other = session.cluster_view(0.5).unwrap();
        assert_ne!(first, other);
    }

    #[test]
    fn unknown_rewards_are_rejected_with_the_valid_kinds() {
        let err = DemoSession::build("nope", 50, 1)
            .err()
            .expect("bad reward must be rejected");
        assert!(err.contains("unknown reward kind"), "{err}");
        assert!(err.contains("ent"), "{err}");
    }
}
