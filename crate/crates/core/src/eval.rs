//! Clustering quality (ARI, silhouette) and the weight sweep.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{distance_matrix, AggregateError, Aggregator, DistanceMatrix, EngineOptions};
use crate::cluster::{kmedoids, ClusterError, Dissimilarity};
use crate::embed::SheetEmbedding;
use crate::metric::{MetricConfig, Weights};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("partitions cover different elements ({0} vs {1})")]
    MismatchedElements(usize, usize),
    #[error("partition is empty")]
    Empty,
    #[error("silhouette undefined for a single cluster")]
    SingleCluster,
    #[error("silhouette needs at least two points")]
    TooFewPoints,
    #[error("sweep step {0} does not divide 1")]
    BadStep(f64),
    #[error("sheet {0} has no cluster or label")]
    MissingLabel(String),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

fn pairs(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

fn dense_labels<L: Hash + Eq>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<&L, usize> = HashMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect();
    (dense, ids.len())
}

/// Adjusted Rand index of two labelings of the same elements (aligned by
/// position). Returns exactly 1.0 for partitions that agree up to
/// relabeling, including the degenerate cases where the chance-corrected
/// denominator vanishes.
pub fn adjusted_rand_index<A, B>(pred: &[A], truth: &[B]) -> Result<f64, EvalError>
where
    A: Hash + Eq,
    B: Hash + Eq,
{
    if pred.len() != truth.len() {
        return Err(EvalError::MismatchedElements(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let (p, kp) = dense_labels(pred);
    let (t, kt) = dense_labels(truth);

    let mut table = vec![0u64; kp * kt];
    let mut a = vec![0u64; kp];
    let mut b = vec![0u64; kt];
    for (&i, &j) in p.iter().zip(&t) {
        table[i * kt + j] += 1;
        a[i] += 1;
        b[j] += 1;
    }
    if kp == kt && table.iter().filter(|&&c| c > 0).count() == kp {
        return Ok(1.0);
    }

    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let sum_a: f64 = a.iter().map(|&c| pairs(c)).sum();
    let sum_b: f64 = b.iter().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(pred.len() as u64);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        // Only reachable when both partitions are identical, handled above.
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Mean silhouette over all points. Points alone in their cluster score 0.
pub fn silhouette<D: Dissimilarity, L: Hash + Eq>(d: &D, labels: &[L]) -> Result<f64, EvalError> {
    let n = d.len();
    if labels.len() != n {
        return Err(EvalError::MismatchedElements(labels.len(), n));
    }
    if n < 2 {
        return Err(EvalError::TooFewPoints);
    }
    let (labels, k) = dense_labels(labels);
    if k < 2 {
        return Err(EvalError::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }

    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            sums[labels[j]] += d.get(i, j);
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub weights: Weights,
    pub aggregator: Aggregator,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ari: f64,
    pub silhouette: f64,
    pub per_cluster_sizes: Vec<usize>,
    pub params: EvalParams,
}

/// Scores cluster labels against ground truth, both aligned with the rows
/// of `d`.
pub fn evaluate<L: Hash + Eq>(
    d: &DistanceMatrix,
    clusters: &[usize],
    truth: &[L],
    params: EvalParams,
) -> Result<EvalReport, EvalError> {
    let ari = adjusted_rand_index(clusters, truth)?;
    let silhouette = silhouette(d, clusters)?;
    let mut per_cluster_sizes = vec![0; clusters.iter().max().map_or(0, |m| m + 1)];
    for &c in clusters {
        per_cluster_sizes[c] += 1;
    }
    Ok(EvalReport {
        ari,
        silhouette,
        per_cluster_sizes,
        params,
    })
}

/// One feasible weight combination and its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Grid coordinates: `w_type = type_index * step`,
    /// `w_semantic = semantic_index * step`.
    pub type_index: usize,
    pub semantic_index: usize,
    pub weights: Weights,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub step: f64,
    pub steps: usize,
    pub points: Vec<SweepPoint>,
}

/// Number of grid intervals for `step`, if it divides 1 within 1e-9.
pub fn grid_steps(step: f64) -> Result<usize, EvalError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EvalError::BadStep(step));
    }
    let steps = (1.0 / step).round();
    if (steps * step - 1.0).abs() > 1e-9 {
        return Err(EvalError::BadStep(step));
    }
    Ok(steps as usize)
}

/// Feasible `(type_index, semantic_index)` pairs, type-major.
pub fn feasible_points(steps: usize) -> Vec<(usize, usize)> {
    (0..=steps)
        .flat_map(|t| (0..=steps - t).map(move |s| (t, s)))
        .collect()
}

fn weights_at(steps: usize, t: usize, s: usize) -> Weights {
    let n = steps as f64;
    Weights::new((steps - t - s) as f64 / n, t as f64 / n, s as f64 / n)
        .expect("grid points lie on the simplex")
}

/// Inputs shared by every sweep point.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub aggregator: Aggregator,
    pub k: usize,
    pub seed: u64,
    pub step: f64,
    /// Spatial normalization and type granularity; the weights are
    /// replaced at every point.
    pub metric: MetricConfig,
    pub workers: usize,
}

/// Re-runs matrix → k-medoids → scoring at every feasible weight point.
/// `truth` is aligned with `corpus`.
pub fn sweep_weights<L: Hash + Eq + Sync>(
    corpus: &[SheetEmbedding],
    truth: &[L],
    cfg: &SweepConfig,
) -> Result<SweepGrid, EvalError> {
    if truth.len() != corpus.len() {
        return Err(EvalError::MismatchedElements(truth.len(), corpus.len()));
    }
    let steps = grid_steps(cfg.step)?;
    let run = || {
        feasible_points(steps)
            .into_par_iter()
            .map(|(t, s)| {
                let weights = weights_at(steps, t, s);
                let metric = MetricConfig {
                    weights,
                    ..cfg.metric
                };
                let d = distance_matrix(corpus, cfg.aggregator, &metric, EngineOptions::default())?;
                let clustering = kmedoids(&d, cfg.k, cfg.seed)?;
                let labels = clustering
                    .labels_for(d.sheet_ids())
                    .expect("clustering covers every sheet");
                let params = EvalParams {
                    weights,
                    aggregator: cfg.aggregator,
                    k: cfg.k,
                    seed: cfg.seed,
                };
                let report = evaluate(&d, &labels, truth, params)?;
                Ok(SweepPoint {
                    type_index: t,
                    semantic_index: s,
                    weights,
                    report,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()
    };
    let points = if cfg.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| AggregateError::Pool(e.to_string()))?
            .install(run)?
    };
    Ok(SweepGrid {
        step: cfg.step,
        steps,
        points,
    })
}

impl SweepGrid {
    /// Heat-map table: one row per `w_type`, one column per `w_semantic`,
    /// empty fields where `w_type + w_semantic > 1`.
    pub fn to_csv(&self, metric: impl Fn(&EvalReport) -> f64) -> String {
        let n = self.steps as f64;
        let mut cells = vec![vec![String::new(); self.steps + 1]; self.steps + 1];
        for p in &self.points {
            cells[p.type_index][p.semantic_index] = metric(&p.report).to_string();
        }
        let mut out = String::from("w_type\\w_semantic");
        for s in 0..=self.steps {
            out.push_str(&format!(",{}", s as f64 / n));
        }
        out.push('\n');
        for (t, row) in cells.iter().enumerate() {
            out.push_str(&(t as f64 / n).to_string());
            for c in row {
                out.push(',');
                out.push_str(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn ari_csv(&self) -> String {
        self.to_csv(|r| r.ari)
    }

    pub fn silhouette_csv(&self) -> String {
        self.to_csv(|r| r.silhouette)
    }

    pub fn point(&self, w_type: f64, w_semantic: f64) -> Option<&SweepPoint> {
        let idx = |w: f64| (w * self.steps as f64).round() as usize;
        self.points
            .iter()
            .find(|p| p.type_index == idx(w_type) && p.semantic_index == idx(w_semantic))
    }
}
