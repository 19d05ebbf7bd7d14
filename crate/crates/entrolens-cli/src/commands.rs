//! The work behind each subcommand. Build functions produce artifact
//! structs in memory; the thin command wrappers read inputs, build, and
//! write, so `pipeline` can chain the same builders without touching the
//! intermediate files it just wrote.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use entrolens::cluster::{core_samples, order_clusters, ts_kmeans, SoftDtwParams};
use entrolens::phase::{
    hull_report, per_prompt_phase_points, phase_trajectory, PhasePoint, Thresholds,
};
use entrolens::toy_lab::{supervised_baseline_train, train};
use entrolens::trace::{
    build_trajectories, effective_convergence_point, filter_and_normalize, read_accuracy_jsonl,
    read_trace_jsonl, AccuracyPoint, TraceRecord,
};
use entrolens::Error;

use crate::artifacts::{
    self, HullFile, ModelFile, PerPromptPhase, PhaseFile, RunSummaryFile, TrajectoriesFile,
    VERSION,
};
use crate::config::{
    ClusterSettings, HullSettings, IngestSettings, ProjectSettings, TrainSettings,
};
use crate::CliError;

/// How many distinct tokens `model.json` lists per cluster.
const TOP_TOKENS_PER_CLUSTER: usize = 5;

// --- input readers ---------------------------------------------------------

fn read_records(path: &Path) -> Result<Vec<TraceRecord>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Input {
        what: format!("trace records {}", path.display()),
        source: e,
    })?;
    let (records, line_errors) = read_trace_jsonl(BufReader::new(file))?;
    for err in &line_errors {
        eprintln!("warning: {}:{}: {}", path.display(), err.line, err.message);
    }
    Ok(records)
}

fn read_accuracy(path: Option<&Path>) -> Result<Vec<AccuracyPoint>, CliError> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let file = fs::File::open(path).map_err(|e| CliError::Input {
        what: format!("accuracy curve {}", path.display()),
        source: e,
    })?;
    Ok(read_accuracy_jsonl(BufReader::new(file))?)
}

// --- builders --------------------------------------------------------------

pub fn build_run(settings: &TrainSettings) -> Result<(RunSummaryFile, entrolens::toy_lab::TrainOutput), CliError> {
    let task = settings.to_task()?;
    let config = settings.to_train_config();
    let output = if settings.supervised {
        supervised_baseline_train(&task, &config)?
    } else {
        train(&task, &config)?
    };
    let summary = RunSummaryFile {
        version: VERSION.to_string(),
        config: settings.clone(),
        checkpoints: output.checkpoints.clone(),
    };
    Ok((summary, output))
}

pub fn build_trajectories_file(
    records: &[TraceRecord],
    accuracy: &[AccuracyPoint],
    settings: &IngestSettings,
) -> Result<TrajectoriesFile, CliError> {
    let convergence_step = effective_convergence_point(
        settings.mode,
        accuracy,
        settings.convergence_step,
        settings.plateau_params(),
    )?;
    let raw = build_trajectories(records.iter().cloned());
    let trajectories = filter_and_normalize(&raw, convergence_step)?;
    if trajectories.is_empty() {
        return Err(Error::NoTrajectories.into());
    }
    Ok(TrajectoriesFile {
        version: VERSION.to_string(),
        config: settings.clone(),
        convergence_step,
        trajectories,
    })
}

pub fn build_model_file(
    trajectories: &TrajectoriesFile,
    settings: &ClusterSettings,
) -> Result<ModelFile, CliError> {
    let params = SoftDtwParams::new(settings.gamma)?;
    let mut model = ts_kmeans(
        &trajectories.trajectories,
        settings.k,
        &params,
        settings.resample_len,
        settings.max_iter,
        settings.seed,
    )?;
    let labeling = if settings.k == 3 {
        Some(order_clusters(&mut model)?)
    } else {
        None
    };
    // Rank every member by whole-stream occurrence count (fraction 1.0
    // keeps them all), then keep each cluster's first few distinct tokens.
    let ranked = core_samples(&model, &trajectories.trajectories, 1.0)?;
    let top_tokens = ranked
        .iter()
        .map(|members| {
            let mut tokens: Vec<String> = Vec::new();
            for member in members {
                if !tokens.contains(&member.anchor.token) {
                    tokens.push(member.anchor.token.clone());
                }
                if tokens.len() == TOP_TOKENS_PER_CLUSTER {
                    break;
                }
            }
            tokens
        })
        .collect();
    Ok(ModelFile {
        version: VERSION.to_string(),
        config: settings.clone(),
        convergence_step: trajectories.convergence_step,
        model,
        labeling,
        top_tokens,
    })
}

pub fn build_phase_file(
    records: &[TraceRecord],
    model: &ModelFile,
    settings: &ProjectSettings,
) -> Result<PhaseFile, CliError> {
    if model.labeling.is_none() {
        return Err(CliError::Setting {
            message: format!(
                "model has k = {} clusters; phase projection needs the 3-cluster semantic labeling",
                model.config.k
            ),
        });
    }
    let assignments = model.model.assignment_map();
    let convergence_step = model.convergence_step;
    let (series, per_prompt) = if settings.per_prompt {
        let (points, dropped_cells) =
            per_prompt_phase_points(records, &assignments, convergence_step)?;
        (
            None,
            Some(PerPromptPhase {
                points,
                dropped_cells,
            }),
        )
    } else {
        (
            Some(phase_trajectory(records, &assignments, convergence_step)?),
            None,
        )
    };
    Ok(PhaseFile {
        version: VERSION.to_string(),
        config: settings.clone(),
        convergence_step,
        series,
        per_prompt,
    })
}

pub fn build_hull_file(phase: &PhaseFile, settings: &HullSettings) -> Result<HullFile, CliError> {
    let points: Vec<PhasePoint> = match (&phase.series, &phase.per_prompt) {
        (Some(series), _) => series.points.clone(),
        (None, Some(per_prompt)) => per_prompt
            .points
            .iter()
            .map(|p| PhasePoint {
                step: p.step,
                coords: p.coords,
                imputed: [false; 3],
            })
            .collect(),
        (None, None) => {
            return Err(CliError::Setting {
                message: "phase artifact carries neither a pooled series nor per-prompt points"
                    .into(),
            })
        }
    };
    let thresholds = Thresholds::new(settings.v_low, settings.v_high)?;
    let report = hull_report(&points, &thresholds)?;
    Ok(HullFile {
        version: VERSION.to_string(),
        config: settings.clone(),
        method: "quickhull".to_string(),
        truncation_step: phase.convergence_step,
        report,
    })
}

// --- commands --------------------------------------------------------------

pub fn toy_train(settings: &TrainSettings, out_dir: &Path) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let (summary, output) = build_run(settings)?;
    let trace_path = out_dir.join("trace.jsonl");
    artifacts::write_trace_jsonl(&trace_path, &output.trace)?;
    announce(&trace_path);
    if !output.accuracy.is_empty() {
        let accuracy_path = out_dir.join("accuracy.jsonl");
        artifacts::write_accuracy_jsonl(&accuracy_path, &output.accuracy)?;
        announce(&accuracy_path);
    }
    let summary_path = out_dir.join("run_summary.json");
    artifacts::write_json(&summary_path, &summary)?;
    announce(&summary_path);
    if let (Some(first), Some(last)) = (summary.checkpoints.first(), summary.checkpoints.last()) {
        println!(
            "checkpoints {}..{}: mean entropy {:.4} -> {:.4}, mean length {:.2} -> {:.2}",
            first.step, last.step, first.mean_entropy, last.mean_entropy, first.mean_length,
            last.mean_length
        );
    }
    Ok(())
}

pub fn ingest(
    records_path: &Path,
    accuracy_path: Option<&Path>,
    settings: &IngestSettings,
    out: &Path,
) -> Result<(), CliError> {
    let records = read_records(records_path)?;
    let accuracy = read_accuracy(accuracy_path)?;
    let file = build_trajectories_file(&records, &accuracy, settings)?;
    artifacts::write_json(out, &file)?;
    announce(out);
    println!(
        "kept {} trajectories, convergence step {}",
        file.trajectories.len(),
        file.convergence_step
    );
    Ok(())
}

pub fn cluster(
    trajectories_path: &Path,
    settings: &ClusterSettings,
    out: &Path,
) -> Result<(), CliError> {
    let trajectories: TrajectoriesFile =
        artifacts::read_json(trajectories_path, "trajectories artifact")?;
    let file = build_model_file(&trajectories, settings)?;
    artifacts::write_json(out, &file)?;
    announce(out);
    println!(
        "k = {}, inertia {:.6} after {} iterations",
        file.model.k, file.model.inertia, file.model.iterations
    );
    Ok(())
}

pub fn project(
    records_path: &Path,
    model_path: &Path,
    settings: &ProjectSettings,
    out: &Path,
) -> Result<(), CliError> {
    let records = read_records(records_path)?;
    let model: ModelFile = artifacts::read_json(model_path, "model artifact")?;
    let file = build_phase_file(&records, &model, settings)?;
    artifacts::write_json(out, &file)?;
    announce(out);
    let csv_path = out.with_extension("csv");
    artifacts::write_text(&csv_path, &artifacts::phase_csv(&file))?;
    announce(&csv_path);
    Ok(())
}

pub fn hull(phase_path: &Path, settings: &HullSettings, out: &Path) -> Result<(), CliError> {
    let phase: PhaseFile = artifacts::read_json(phase_path, "phase artifact")?;
    let file = build_hull_file(&phase, settings)?;
    artifacts::write_json(out, &file)?;
    announce(out);
    let csv_path = out.with_extension("csv");
    artifacts::write_text(&csv_path, &artifacts::hull_points_csv(&phase))?;
    announce(&csv_path);
    println!(
        "volume {:.6}, diagnosis {}",
        file.report.volume, file.report.diagnosis
    );
    Ok(())
}

/// Everything the pipeline resolved, for the report and the stages.
pub struct PipelineSettings {
    pub train: TrainSettings,
    pub ingest: IngestSettings,
    pub cluster: ClusterSettings,
    pub project: ProjectSettings,
    pub hull: HullSettings,
}

pub fn pipeline(
    records_path: &Path,
    accuracy_path: Option<&Path>,
    settings: &PipelineSettings,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let records = stage("ingest", read_records(records_path))?;
    let accuracy = stage("ingest", read_accuracy(accuracy_path))?;
    let trajectories = stage(
        "ingest",
        build_trajectories_file(&records, &accuracy, &settings.ingest),
    )?;
    let path = out_dir.join("trajectories.json");
    artifacts::write_json(&path, &trajectories)?;
    announce(&path);

    let model = stage("cluster", build_model_file(&trajectories, &settings.cluster))?;
    let path = out_dir.join("model.json");
    artifacts::write_json(&path, &model)?;
    announce(&path);

    let phase = stage(
        "project",
        build_phase_file(&records, &model, &settings.project),
    )?;
    let path = out_dir.join("phase.json");
    artifacts::write_json(&path, &phase)?;
    announce(&path);
    let path = out_dir.join("phase.csv");
    artifacts::write_text(&path, &artifacts::phase_csv(&phase))?;
    announce(&path);

    let hull = stage("hull", build_hull_file(&phase, &settings.hull))?;
    let path = out_dir.join("hull_report.json");
    artifacts::write_json(&path, &hull)?;
    announce(&path);
    let path = out_dir.join("hull_report.csv");
    artifacts::write_text(&path, &artifacts::hull_points_csv(&phase))?;
    announce(&path);

    let report = render_report(settings, &trajectories, &model, &phase, &hull);
    let path = out_dir.join("report.md");
    artifacts::write_text(&path, &report)?;
    announce(&path);
    println!(
        "volume {:.6}, diagnosis {}",
        hull.report.volume, hull.report.diagnosis
    );
    Ok(())
}

fn stage<T>(name: &'static str, result: Result<T, CliError>) -> Result<T, CliError> {
    result.map_err(|source| CliError::Stage {
        stage: name,
        source: Box::new(source),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output {
        what: dir.display().to_string(),
        source: e,
    })
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

// --- report ----------------------------------------------------------------

fn render_report(
    settings: &PipelineSettings,
    trajectories: &TrajectoriesFile,
    model: &ModelFile,
    phase: &PhaseFile,
    hull: &HullFile,
) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "# entrolens pipeline report").unwrap();
    writeln!(w).unwrap();
    writeln!(
        w,
        "Generated by entrolens {VERSION}. Axis order everywhere is \
         (execution, logic, thinking), ascending by cluster mean entropy."
    )
    .unwrap();
    writeln!(w).unwrap();
    writeln!(w, "## Run").unwrap();
    writeln!(w).unwrap();
    if settings.train.supervised {
        writeln!(w, "- reward kind: supervised exact-match baseline").unwrap();
    } else {
        writeln!(w, "- reward kind: {}", settings.train.reward).unwrap();
    }
    writeln!(w, "- convergence step: {}", trajectories.convergence_step).unwrap();
    writeln!(
        w,
        "- trajectories kept: {}",
        trajectories.trajectories.len()
    )
    .unwrap();
    if let Some(series) = &phase.series {
        let imputed = series.points.iter().filter(|p| p.is_imputed()).count();
        writeln!(
            w,
            "- phase points: {} ({} imputed, {} checkpoints skipped)",
            series.points.len(),
            imputed,
            series.skipped_steps.len()
        )
        .unwrap();
    }
    if let Some(per_prompt) = &phase.per_prompt {
        writeln!(
            w,
            "- per-prompt phase points: {} ({} cells dropped)",
            per_prompt.points.len(),
            per_prompt.dropped_cells
        )
        .unwrap();
    }
    writeln!(w).unwrap();
    writeln!(w, "## Clusters").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "| cluster | mean entropy | members | top tokens |").unwrap();
    writeln!(w, "|---|---|---|---|").unwrap();
    let labels = ["execution", "logic", "thinking"];
    let means = model.model.centroid_means();
    for (index, label) in labels.iter().enumerate() {
        let members = model
            .model
            .assignments
            .iter()
            .filter(|a| a.cluster == index)
            .count();
        let tokens = model.top_tokens[index]
            .iter()
            .map(|t| format!("`{t}`"))
            .collect::<Vec<_>>()
            .join(", ");
        writeln!(
            w,
            "| {label} | {:.4} | {members} | {tokens} |",
            means[index]
        )
        .unwrap();
    }
    writeln!(w).unwrap();
    writeln!(w, "## Hull").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "- method: {}", hull.method).unwrap();
    writeln!(w, "- volume: {:.6}", hull.report.volume).unwrap();
    writeln!(
        w,
        "- vertices: {} (from {} candidate points)",
        hull.report.vertex_count, hull.report.input_points
    )
    .unwrap();
    if hull.report.degenerate {
        writeln!(w, "- degenerate: yes (volume reported as 0)").unwrap();
    }
    writeln!(
        w,
        "- diagnosis: {} (stagnation < {}, explosion > {})",
        hull.report.diagnosis, hull.config.v_low, hull.config.v_high
    )
    .unwrap();
    out
}
