//! Independent reference implementations used as test oracles. Nothing
//! here calls into the engine paths it is compared against.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sheetdist::embed::{CellEmbedding, SheetEmbedding};
use sheetdist::metric::Weights;
use sheetdist::typing::CellType;

pub fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Arc<[f64]> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn random_type(rng: &mut ChaCha8Rng) -> CellType {
    CellType::ALL[rng.random_range(0..CellType::ALL.len())]
}

/// A sheet with `cells` distinct random positions inside `rows × cols`.
/// Semantic vectors are drawn from `pool` so that exact matches occur.
pub fn random_sheet(
    id: &str,
    rows: usize,
    cols: usize,
    cells: usize,
    pool: &[Arc<[f64]>],
    rng: &mut ChaCha8Rng,
) -> SheetEmbedding {
    let cells = cells.min(rows * cols).max(1);
    let positions = rand::seq::index::sample(rng, rows * cols, cells);
    let cells: Vec<CellEmbedding> = positions
        .into_iter()
        .map(|p| CellEmbedding {
            row: p / cols,
            col: p % cols,
            cell_type: random_type(rng),
            semantic: pool[rng.random_range(0..pool.len())].clone(),
        })
        .collect();
    SheetEmbedding {
        sheet_id: id.to_string(),
        n_rows: cells.iter().map(|c| c.row + 1).max().unwrap(),
        n_cols: cells.iter().map(|c| c.col + 1).max().unwrap(),
        cells,
    }
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> Weights {
    let a: f64 = rng.random();
    let b: f64 = rng.random();
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    Weights::new(lo, hi - lo, 1.0 - hi).unwrap()
}

/// Cell distance written straight from its definition: cosine with
/// explicit norms, type-code comparison, positional distance over the
/// given extent.
pub fn naive_d_cell(u: &CellEmbedding, v: &CellEmbedding, max_rows: usize, max_cols: usize, w: &Weights) -> f64 {
    let di = u.row as f64 - v.row as f64;
    let dj = u.col as f64 - v.col as f64;
    let spatial = (di.powi(2) + dj.powi(2)).sqrt()
        / ((max_rows as f64).powi(2) + (max_cols as f64).powi(2)).sqrt();
    let type_ = if u.cell_type.code() == v.cell_type.code() { 0.0 } else { 1.0 };
    let dot: f64 = u.semantic.iter().zip(v.semantic.iter()).map(|(a, b)| a * b).sum();
    let nu: f64 = u.semantic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.semantic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let semantic = 0.5 * (1.0 - dot / (nu * nv));
    w.spatial() * spatial + w.type_() * type_ + w.semantic() * semantic
}

/// Full `m × n` cell distance matrix for a pair, pair-context normalized.
pub fn naive_cell_matrix(a: &SheetEmbedding, b: &SheetEmbedding, w: &Weights) -> Vec<Vec<f64>> {
    let rows = a.n_rows.max(b.n_rows);
    let cols = a.n_cols.max(b.n_cols);
    a.cells
        .iter()
        .map(|x| b.cells.iter().map(|y| naive_d_cell(x, y, rows, cols, w)).collect())
        .collect()
}

pub fn naive_chamfer(a: &SheetEmbedding, b: &SheetEmbedding, w: &Weights) -> f64 {
    let m = naive_cell_matrix(a, b, w);
    let mut forward = 0.0;
    for row in &m {
        forward += row.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    let mut backward = 0.0;
    for j in 0..b.cells.len() {
        backward += m.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min);
    }
    0.5 * (forward / a.cells.len() as f64 + backward / b.cells.len() as f64)
}

pub fn naive_hausdorff(a: &SheetEmbedding, b: &SheetEmbedding, w: &Weights) -> f64 {
    let m = naive_cell_matrix(a, b, w);
    let mut worst: f64 = 0.0;
    for row in &m {
        worst = worst.max(row.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    for j in 0..b.cells.len() {
        worst = worst.max(m.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min));
    }
    worst
}

/// ARI by explicit enumeration of element pairs.
pub fn pair_counting_ari(p: &[usize], t: &[usize]) -> f64 {
    let n = p.len();
    let (mut both, mut only_p, mut only_t, mut neither) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (p[i] == p[j], t[i] == t[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_p += 1.0,
                (false, true) => only_t += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total = both + only_p + only_t + neither;
    let same_p = both + only_p;
    let same_t = both + only_t;
    let expected = same_p * same_t / total;
    let max = 0.5 * (same_p + same_t);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Silhouette recomputed point by point from its definition.
pub fn naive_silhouette(d: &[f64], labels: &[usize]) -> f64 {
    let n = labels.len();
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut total = 0.0;
    for i in 0..n {
        let members: Vec<usize> = (0..n).filter(|&j| labels[j] == labels[i]).collect();
        if members.len() == 1 {
            continue;
        }
        let a = members.iter().filter(|&&j| j != i).map(|&j| d[i * n + j]).sum::<f64>()
            / (members.len() - 1) as f64;
        let mut b = f64::INFINITY;
        for &c in clusters.iter().filter(|&&c| c != labels[i]) {
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            let mean = other.iter().map(|&j| d[i * n + j]).sum::<f64>() / other.len() as f64;
            b = b.min(mean);
        }
        let s = if a.max(b) == 0.0 { 0.0 } else { (b - a) / a.max(b) };
        total += s;
    }
    total / n as f64
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let x: f64 = rng.random();
            v[i * n + j] = x;
            v[j * n + i] = x;
        }
    }
    v
}

/// Minimum k-medoids cost over every medoid subset.
pub fn exhaustive_kmedoids_cost(d: &[f64], n: usize, k: usize) -> f64 {
    fn rec(d: &[f64], n: usize, k: usize, start: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            let cost: f64 = (0..n)
                .map(|j| chosen.iter().map(|&m| d[j * n + m]).fold(f64::INFINITY, f64::min))
                .sum();
            *best = best.min(cost);
            return;
        }
        for c in start..n {
            chosen.push(c);
            rec(d, n, k, c + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(d, n, k, 0, &mut Vec::new(), &mut best);
    best
}
