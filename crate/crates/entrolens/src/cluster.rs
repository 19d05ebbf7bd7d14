//! Soft-DTW time-series k-means over entropy trajectories.
//!
//! Trajectories keep their native lengths for assignment — the Soft-DTW
//! recursion compares variable-length series directly — while centroid
//! updates average cluster members after resampling them to a common
//! length. With `gamma = 0` the recursion reduces to classic hard DTW;
//! with `gamma > 0` the min is smoothed into a log-sum-exp, which makes
//! the distance differentiable and less brittle to small time shifts.
//!
//! After fitting, [`order_clusters`] sorts the clusters by centroid mean
//! entropy into the semantic order low → mid → high
//! (`Execution` → `Logic` → `Thinking`), and [`core_samples`] extracts the
//! most central members of each cluster ranked by anchor frequency.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stage_rng;
use crate::trace::{Anchor, EntropyTrajectory};
use crate::{Error, Result};

/// Soft-DTW smoothing parameter; `gamma = 0` is hard DTW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftDtwParams {
    pub gamma: f64,
}

impl SoftDtwParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidParam(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }
}

/// Smoothed minimum: `-gamma * ln(sum_i exp(-x_i / gamma))`, computed with
/// the min subtracted for stability; `gamma = 0` is the exact minimum.
fn softmin3(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let m = a.min(b).min(c);
    if gamma == 0.0 || m == f64::INFINITY {
        return m;
    }
    let sum = ((m - a) / gamma).exp() + ((m - b) / gamma).exp() + ((m - c) / gamma).exp();
    m - gamma * sum.ln()
}

/// Soft-DTW alignment cost between two sequences under the squared
/// pointwise difference, via the O(n·m) border-padded recursion
/// `r(i,j) = d(i,j) + softmin(r(i-1,j-1), r(i-1,j), r(i,j-1))`.
pub fn soft_dtw(x: &[f64], y: &[f64], params: &SoftDtwParams) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput("soft-dtw sequence"));
    }
    for &v in x.iter().chain(y) {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "soft-dtw value",
                value: v,
            });
        }
    }
    let n = x.len();
    let m = y.len();
    // Two rolling rows of the (n+1) x (m+1) table with infinite borders.
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr[0] = f64::INFINITY;
        for j in 1..=m {
            let d = (x[i - 1] - y[j - 1]).powi(2);
            curr[j] = d + softmin3(prev[j - 1], prev[j], curr[j - 1], params.gamma);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// Linearly resamples a trajectory's entropy values onto `len` equally
/// spaced positions across its own time span, preserving both endpoints.
pub fn resample(traj: &EntropyTrajectory, len: usize) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(Error::InvalidParam(format!(
            "resample length must be >= 2, got {len}"
        )));
    }
    traj.validate()?;
    let points = &traj.points;
    let t0 = points[0].t;
    let t1 = points[points.len() - 1].t;
    let span = t1 - t0;
    let mut out = Vec::with_capacity(len);
    let mut seg = 0usize;
    for j in 0..len {
        let target = if j + 1 == len {
            t1
        } else {
            t0 + span * j as f64 / (len - 1) as f64
        };
        while seg + 2 < points.len() && points[seg + 1].t < target {
            seg += 1;
        }
        let a = points[seg];
        let b = points[seg + 1];
        let w = if b.t > a.t { (target - a.t) / (b.t - a.t) } else { 0.0 };
        let w = w.clamp(0.0, 1.0);
        out.push(a.entropy + w * (b.entropy - a.entropy));
    }
    Ok(out)
}

/// One trajectory's cluster membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub anchor: Anchor,
    pub cluster: usize,
    /// Soft-DTW distance to the assigned centroid.
    pub distance: f64,
}

/// A fitted time-series k-means model. Assignments are in input-trajectory
/// order; centroids all have length `resample_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub gamma: f64,
    pub resample_len: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<ClusterAssignment>,
    pub inertia: f64,
    /// Inertia after seeding and after each accepted iteration;
    /// non-increasing by construction.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    /// Cluster index per anchor.
    pub fn assignment_map(&self) -> BTreeMap<Anchor, usize> {
        self.assignments
            .iter()
            .map(|a| (a.anchor.clone(), a.cluster))
            .collect()
    }

    /// Arithmetic mean of each centroid.
    pub fn centroid_means(&self) -> Vec<f64> {
        self.centroids
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

fn assign_all(
    values: &[Vec<f64>],
    centroids: &[Vec<f64>],
    params: &SoftDtwParams,
) -> Result<(Vec<usize>, Vec<f64>, f64)> {
    let mut assignment = Vec::with_capacity(values.len());
    let mut distances = Vec::with_capacity(values.len());
    let mut inertia = 0.0;
    for v in values {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = soft_dtw(v, centroid, params)?;
            // Strict < keeps ties on the lower cluster index.
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        assignment.push(best);
        distances.push(best_d);
        inertia += best_d;
    }
    Ok((assignment, distances, inertia))
}

/// k-means++-style seeding over the resampled sequences: the first
/// centroid is uniform, each further one is drawn with probability
/// proportional to the squared distance to the nearest chosen centroid.
fn seed_centroids(
    resampled: &[Vec<f64>],
    k: usize,
    params: &SoftDtwParams,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = resampled.len();
    let mut rng = stage_rng(seed, "kmeans-seed");
    let mut chosen: Vec<usize> = vec![rng.random_range(0..n)];
    while chosen.len() < k {
        let mut weights = Vec::with_capacity(n);
        let mut total = 0.0;
        for series in resampled {
            let mut nearest = f64::INFINITY;
            for &c in &chosen {
                // Soft-DTW self-distances can be slightly negative for
                // gamma > 0; clamp so weights stay valid.
                nearest = nearest.min(soft_dtw(series, &resampled[c], params)?.max(0.0));
            }
            let w = nearest * nearest;
            weights.push(w);
            total += w;
        }
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = i;
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            pick
        } else {
            // All duplicates of the chosen set: fall back to the lowest
            // index not chosen yet, keeping seeding total and deterministic.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
    }
    Ok(chosen.into_iter().map(|i| resampled[i].clone()).collect())
}

fn update_centroids(
    resampled: &[Vec<f64>],
    assignment: &[usize],
    distances: &[f64],
    k: usize,
    resample_len: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; resample_len]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(&resampled[i]) {
            *s += v;
        }
    }
    let mut consumed: Vec<usize> = Vec::new();
    let mut centroids = Vec::with_capacity(k);
    for c in 0..k {
        if counts[c] > 0 {
            centroids.push(sums[c].iter().map(|s| s / counts[c] as f64).collect());
        } else {
            // Empty-cluster repair: reseed from the member farthest from
            // its own centroid (ties on the lower index), never reusing a
            // trajectory within one repair round.
            let far = (0..resampled.len())
                .filter(|i| !consumed.contains(i))
                .max_by(|&a, &b| {
                    distances[a]
                        .partial_cmp(&distances[b])
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                });
            match far {
                Some(i) => {
                    consumed.push(i);
                    centroids.push(resampled[i].clone());
                }
                None => centroids.push(vec![0.0; resample_len]),
            }
        }
    }
    centroids
}

/// Fits k clusters by Lloyd iteration: Soft-DTW assignment against the
/// raw variable-length trajectories, centroid update as the arithmetic
/// mean of the members' resampled sequences.
///
/// An update that would increase the total inertia is rejected and the
/// loop stops with the previous state, so the recorded `inertia_history`
/// is non-increasing even though the mean update is not a strict
/// Soft-DTW barycenter.
pub fn ts_kmeans(
    trajs: &[EntropyTrajectory],
    k: usize,
    params: &SoftDtwParams,
    resample_len: usize,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if trajs.len() < k {
        return Err(Error::TooFewTrajectories {
            n: trajs.len(),
            k,
        });
    }
    if max_iter == 0 {
        return Err(Error::InvalidParam("max_iter must be >= 1".into()));
    }
    for traj in trajs {
        traj.validate()?;
    }
    let resampled: Vec<Vec<f64>> = trajs
        .iter()
        .map(|t| resample(t, resample_len))
        .collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = trajs.iter().map(|t| t.values()).collect();

    let mut centroids = seed_centroids(&resampled, k, params, seed)?;
    let (mut assignment, mut distances, mut inertia) = assign_all(&values, &centroids, params)?;
    let mut inertia_history = vec![inertia];
    let mut iterations = 0usize;

    for _ in 0..max_iter {
        let proposed = update_centroids(&resampled, &assignment, &distances, k, resample_len);
        let (new_assignment, new_distances, new_inertia) =
            assign_all(&values, &proposed, params)?;
        if new_inertia > inertia + 1e-12 * inertia.abs().max(1.0) {
            break;
        }
        let unchanged = new_assignment == assignment;
        centroids = proposed;
        assignment = new_assignment;
        distances = new_distances;
        inertia = new_inertia;
        iterations += 1;
        inertia_history.push(inertia);
        if unchanged {
            break;
        }
    }

    let assignments = trajs
        .iter()
        .zip(assignment.iter().zip(&distances))
        .map(|(traj, (&cluster, &distance))| ClusterAssignment {
            anchor: traj.anchor.clone(),
            cluster,
            distance,
        })
        .collect();
    Ok(ClusterModel {
        k,
        gamma: params.gamma,
        resample_len,
        centroids,
        assignments,
        inertia,
        inertia_history,
        iterations,
    })
}

/// The semantic identity of an ordered cluster, by centroid mean entropy:
/// `Execution` lowest, `Logic` middle, `Thinking` highest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticLabel {
    Execution,
    Logic,
    Thinking,
}

impl SemanticLabel {
    pub const ORDERED: [SemanticLabel; 3] = [
        SemanticLabel::Execution,
        SemanticLabel::Logic,
        SemanticLabel::Thinking,
    ];

    /// Short axis name used in CSV headers and phase outputs.
    pub fn axis(self) -> &'static str {
        match self {
            SemanticLabel::Execution => "exec",
            SemanticLabel::Logic => "logic",
            SemanticLabel::Thinking => "think",
        }
    }
}

impl std::fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SemanticLabel::Execution => "Execution",
            SemanticLabel::Logic => "Logic",
            SemanticLabel::Thinking => "Thinking",
        };
        f.write_str(name)
    }
}

/// Result of ordering a model's clusters semantically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticLabeling {
    /// Mean centroid entropy per ordered cluster (ascending).
    pub means: [f64; 3],
    /// For each ordered slot, the original cluster index it came from.
    pub source_index: [usize; 3],
    /// True when two centroid means were exactly equal and the original
    /// cluster index broke the tie.
    pub tie_broken: bool,
}

/// Reorders a 3-cluster model in place so cluster 0 is `Execution`
/// (lowest mean centroid entropy), 1 is `Logic`, 2 is `Thinking`.
/// Assignments are remapped accordingly.
pub fn order_clusters(model: &mut ClusterModel) -> Result<SemanticLabeling> {
    if model.k != 3 || model.centroids.len() != 3 {
        return Err(Error::WrongClusterCount(model.centroids.len().max(model.k)));
    }
    let means = model.centroid_means();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        means[a]
            .partial_cmp(&means[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let tie_broken = means[order[0]] == means[order[1]] || means[order[1]] == means[order[2]];
    let mut inverse = [0usize; 3];
    for (new_idx, &old_idx) in order.iter().enumerate() {
        inverse[old_idx] = new_idx;
    }
    model.centroids = order.iter().map(|&i| model.centroids[i].clone()).collect();
    for a in &mut model.assignments {
        a.cluster = inverse[a.cluster];
    }
    let sorted_means = model.centroid_means();
    Ok(SemanticLabeling {
        means: [sorted_means[0], sorted_means[1], sorted_means[2]],
        source_index: order,
        tie_broken,
    })
}

/// One core sample: a central cluster member with its anchor frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSample {
    pub anchor: Anchor,
    pub occurrences: usize,
    pub distance: f64,
}

/// For each cluster, the `ceil(fraction * members)` members closest to the
/// centroid, ranked by anchor occurrence frequency (descending; anchor
/// order breaks ties). `trajs` must be the same slice the model was fitted
/// on.
pub fn core_samples(
    model: &ClusterModel,
    trajs: &[EntropyTrajectory],
    fraction: f64,
) -> Result<Vec<Vec<CoreSample>>> {
    if !(fraction.is_finite() && fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "core-sample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if trajs.len() != model.assignments.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} trajectories vs {} assignments",
            trajs.len(),
            model.assignments.len()
        )));
    }
    for (traj, a) in trajs.iter().zip(&model.assignments) {
        if traj.anchor != a.anchor {
            return Err(Error::ShapeMismatch(format!(
                "trajectory order does not match the model (anchor {:?} vs {:?})",
                traj.anchor, a.anchor
            )));
        }
    }
    let mut out = Vec::with_capacity(model.k);
    for c in 0..model.k {
        let mut members: Vec<usize> = (0..trajs.len())
            .filter(|&i| model.assignments[i].cluster == c)
            .collect();
        members.sort_by(|&a, &b| {
            model.assignments[a]
                .distance
                .partial_cmp(&model.assignments[b].distance)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let keep = ((fraction * members.len() as f64).ceil() as usize).min(members.len());
        let mut selected: Vec<CoreSample> = members[..keep]
            .iter()
            .map(|&i| CoreSample {
                anchor: trajs[i].anchor.clone(),
                occurrences: trajs[i].occurrences,
                distance: model.assignments[i].distance,
            })
            .collect();
        selected.sort_by(|a, b| {
            b.occurrences
                .cmp(&a.occurrences)
                .then_with(|| a.anchor.cmp(&b.anchor))
        });
        out.push(selected);
    }
    Ok(out)
}
