//! k-medoids (PAM) over a precomputed distance matrix.
//!
//! BUILD picks the medoid that minimizes total cost first, then greedily
//! adds whichever point lowers the cost the most. SWAP then evaluates every
//! (medoid, non-medoid) exchange and applies the best one while it strictly
//! lowers the cost. Ties go to the lowest index, so a run is fully
//! determined by the matrix.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::DistanceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("distance matrix has {0} values, which is not a square")]
    NotSquare(usize),
}

/// Read-only square dissimilarity matrix.
pub trait Dissimilarity {
    fn len(&self) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Dissimilarity for DistanceMatrix {
    fn len(&self) -> usize {
        DistanceMatrix::len(self)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        DistanceMatrix::get(self, i, j)
    }
}

/// Row-major square matrix borrowed from a slice.
#[derive(Debug, Clone, Copy)]
pub struct SquareView<'a> {
    values: &'a [f64],
    n: usize,
}

impl<'a> SquareView<'a> {
    pub fn new(values: &'a [f64]) -> Result<Self, ClusterError> {
        let n = (values.len() as f64).sqrt().round() as usize;
        if n * n != values.len() {
            return Err(ClusterError::NotSquare(values.len()));
        }
        Ok(SquareView { values, n })
    }
}

impl Dissimilarity for SquareView<'_> {
    fn len(&self) -> usize {
        self.n
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PamOptions {
    /// Extra runs from random initial medoids; the cheapest result wins.
    pub restarts: usize,
    pub seed: u64,
    pub max_swaps: usize,
}

impl Default for PamOptions {
    fn default() -> Self {
        PamOptions {
            restarts: 0,
            seed: 0,
            max_swaps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PamResult {
    /// Medoid point indices, ascending. Cluster `c` is `medoids[c]`.
    pub medoids: Vec<usize>,
    /// Cluster index of every point.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    /// Number of swaps applied.
    pub iterations: usize,
    /// Cost after BUILD followed by the cost after each swap.
    pub cost_trace: Vec<f64>,
}

/// Relative margin a cost must beat to count as an improvement. Exact ties
/// (such as either point of a two-point cluster serving as its medoid) then
/// resolve by index alone, independent of rounding and of the matrix scale.
const REL_TOL: f64 = 1e-12;

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - REL_TOL * incumbent.abs()
}

fn total_cost<D: Dissimilarity>(d: &D, medoids: &[usize]) -> f64 {
    (0..d.len())
        .map(|j| medoids.iter().map(|&m| d.get(j, m)).fold(f64::INFINITY, f64::min))
        .sum()
}

fn build<D: Dissimilarity>(d: &D, k: usize) -> Vec<usize> {
    let n = d.len();
    let mut medoids = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let cost: f64 = (0..n).map(|j| nearest[j].min(d.get(j, c))).sum();
            if best.is_none_or(|(_, b)| improves(cost, b)) {
                best = Some((c, cost));
            }
        }
        let (c, _) = best.expect("k <= n leaves a candidate");
        medoids.push(c);
        for (j, near) in nearest.iter_mut().enumerate() {
            *near = near.min(d.get(j, c));
        }
    }
    medoids
}

/// Nearest and second-nearest medoid distances per point, plus the
/// position (in `medoids`) of the nearest.
fn nearest_two<D: Dissimilarity>(d: &D, medoids: &[usize]) -> Vec<(usize, f64, f64)> {
    (0..d.len())
        .map(|j| {
            let mut near = (usize::MAX, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (pos, &m) in medoids.iter().enumerate() {
                let dj = d.get(j, m);
                if dj < near.1 {
                    second = near.1;
                    near = (pos, dj);
                } else if dj < second {
                    second = dj;
                }
            }
            (near.0, near.1, second)
        })
        .collect()
}

fn swap_phase<D: Dissimilarity>(d: &D, medoids: &mut [usize], max_swaps: usize) -> (f64, Vec<f64>) {
    let n = d.len();
    let mut cost = total_cost(d, medoids);
    let mut trace = vec![cost];
    while trace.len() <= max_swaps {
        let cache = nearest_two(d, medoids);
        let mut best: Option<(usize, usize, f64)> = None;
        for pos in 0..medoids.len() {
            for c in (0..n).filter(|c| !medoids.contains(c)) {
                // Cost of the set with medoids[pos] replaced by c, summed in
                // point order exactly like `total_cost`.
                let candidate: f64 = cache
                    .iter()
                    .enumerate()
                    .map(|(j, &(near_pos, near, second))| {
                        let keep = if near_pos == pos { second } else { near };
                        keep.min(d.get(j, c))
                    })
                    .sum();
                if best.is_none_or(|(_, _, b)| improves(candidate, b)) {
                    best = Some((pos, c, candidate));
                }
            }
        }
        match best {
            Some((pos, c, candidate)) if improves(candidate, cost) => {
                medoids[pos] = c;
                cost = candidate;
                trace.push(cost);
            }
            _ => break,
        }
    }
    (cost, trace)
}

fn assign<D: Dissimilarity>(d: &D, medoids: &[usize]) -> Vec<usize> {
    (0..d.len())
        .map(|j| {
            if let Some(pos) = medoids.iter().position(|&m| m == j) {
                return pos;
            }
            let mut best = 0;
            for pos in 1..medoids.len() {
                if d.get(j, medoids[pos]) < d.get(j, medoids[best]) {
                    best = pos;
                }
            }
            best
        })
        .collect()
}

/// Runs PAM on any square dissimilarity.
pub fn pam<D: Dissimilarity>(d: &D, k: usize, opts: PamOptions) -> Result<PamResult, ClusterError> {
    let n = d.len();
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }

    let mut medoids = build(d, k);
    let (mut cost, mut trace) = swap_phase(d, &mut medoids, opts.max_swaps);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let mut start: Vec<usize> = sample(&mut rng, n, k).into_vec();
        let (c, t) = swap_phase(d, &mut start, opts.max_swaps);
        if improves(c, cost) {
            medoids = start;
            cost = c;
            trace = t;
        }
    }

    medoids.sort_unstable();
    let assignment = assign(d, &medoids);
    Ok(PamResult {
        iterations: trace.len() - 1,
        medoids,
        assignment,
        total_cost: cost,
        cost_trace: trace,
    })
}

/// Result of clustering a corpus, keyed by sheet id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: BTreeMap<String, usize>,
    pub medoids: Vec<String>,
    pub total_cost: f64,
    pub seed: u64,
    pub iterations: usize,
    pub k: usize,
}

impl Clustering {
    /// Cluster indices aligned with `ids`.
    pub fn labels_for(&self, ids: &[String]) -> Option<Vec<usize>> {
        ids.iter().map(|id| self.assignments.get(id).copied()).collect()
    }
}

/// Deterministic PAM over a distance matrix. `seed` only matters when
/// `restarts > 0`.
pub fn kmedoids(d: &DistanceMatrix, k: usize, seed: u64) -> Result<Clustering, ClusterError> {
    kmedoids_with(d, k, PamOptions { seed, ..Default::default() })
}

pub fn kmedoids_with(d: &DistanceMatrix, k: usize, opts: PamOptions) -> Result<Clustering, ClusterError> {
    let r = pam(d, k, opts)?;
    let ids = d.sheet_ids();
    Ok(Clustering {
        assignments: ids.iter().cloned().zip(r.assignment).collect(),
        medoids: r.medoids.iter().map(|&m| ids[m].clone()).collect(),
        total_cost: r.total_cost,
        seed: opts.seed,
        iterations: r.iterations,
        k,
    })
}
