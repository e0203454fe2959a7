//! The hybrid cell distance.
//!
//! For two cells `u`, `v` the distance is a convex combination of three
//! components, each in `[0, 1]`:
//!
//! * spatial: Euclidean distance of `(row, col)` divided by
//!   `sqrt(M² + N²)`, where `M`, `N` are the largest row and column counts
//!   of the two sheets being compared;
//! * type: 0 if the type codes agree, 1 otherwise;
//! * semantic: `(1 - cos(s_u, s_v)) / 2`.
//!
//! Semantic vectors are unit-norm, so `(1 - cos) / 2 = |s_u - s_v|² / 4`.
//! The squared-difference form is what gets evaluated: it is exactly zero
//! for identical vectors and exactly symmetric in its arguments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{CellEmbedding, SheetEmbedding};
use crate::typing::TypeGranularity;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("weights must each lie in [0, 1] and sum to 1, got ({0}, {1}, {2})")]
    Weights(f64, f64, f64),
    #[error("cell ({row}, {col}) lies outside a {max_rows}x{max_cols} pair context")]
    OutOfContext {
        row: usize,
        col: usize,
        max_rows: usize,
        max_cols: usize,
    },
    #[error("invalid option: {0}")]
    Parse(String),
}

const SIMPLEX_TOL: f64 = 1e-9;

/// Component weights on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct Weights {
    spatial: f64,
    type_: f64,
    semantic: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    w_spatial: f64,
    w_type: f64,
    w_semantic: f64,
}

impl TryFrom<RawWeights> for Weights {
    type Error = MetricError;

    fn try_from(r: RawWeights) -> Result<Self, Self::Error> {
        Weights::new(r.w_spatial, r.w_type, r.w_semantic)
    }
}

impl From<Weights> for RawWeights {
    fn from(w: Weights) -> Self {
        RawWeights {
            w_spatial: w.spatial,
            w_type: w.type_,
            w_semantic: w.semantic,
        }
    }
}

impl Weights {
    /// `(spatial, type, semantic) = (0.2, 0.5, 0.3)`.
    pub const DEFAULT: Weights = Weights {
        spatial: 0.2,
        type_: 0.5,
        semantic: 0.3,
    };

    pub fn new(spatial: f64, type_: f64, semantic: f64) -> Result<Self, MetricError> {
        let ok = [spatial, type_, semantic]
            .iter()
            .all(|w| (0.0..=1.0).contains(w))
            && ((spatial + type_ + semantic) - 1.0).abs() <= SIMPLEX_TOL;
        if ok {
            Ok(Weights {
                spatial,
                type_,
                semantic,
            })
        } else {
            Err(MetricError::Weights(spatial, type_, semantic))
        }
    }

    pub fn spatial(&self) -> f64 {
        self.spatial
    }

    pub fn type_(&self) -> f64 {
        self.type_
    }

    pub fn semantic(&self) -> f64 {
        self.semantic
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::DEFAULT
    }
}

impl fmt::Display for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.spatial, self.type_, self.semantic)
    }
}

impl FromStr for Weights {
    type Err = MetricError;

    /// Parses `spatial,type,semantic`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MetricError::Parse(format!("weights `{s}`: {e}")))?;
        match parts[..] {
            [a, b, c] => Weights::new(a, b, c),
            _ => Err(MetricError::Parse(format!(
                "weights `{s}`: expected three comma-separated values"
            ))),
        }
    }
}

/// How the spatial normalizer is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialNorm {
    /// Largest dimensions of the two sheets being compared.
    #[default]
    Pair,
    /// Largest dimensions over the whole corpus.
    Corpus,
}

impl FromStr for SpatialNorm {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pair" => Ok(SpatialNorm::Pair),
            "corpus" => Ok(SpatialNorm::Corpus),
            _ => Err(MetricError::Parse(format!(
                "spatial norm must be `pair` or `corpus`, got `{s}`"
            ))),
        }
    }
}

/// Normalization constants for the spatial component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairContext {
    pub max_rows: usize,
    pub max_cols: usize,
}

impl PairContext {
    pub fn new(max_rows: usize, max_cols: usize) -> Self {
        PairContext { max_rows, max_cols }
    }

    pub fn for_pair(a: &SheetEmbedding, b: &SheetEmbedding) -> Self {
        PairContext {
            max_rows: a.n_rows.max(b.n_rows),
            max_cols: a.n_cols.max(b.n_cols),
        }
    }

    pub fn for_corpus<'a>(sheets: impl IntoIterator<Item = &'a SheetEmbedding>) -> Self {
        sheets
            .into_iter()
            .fold(PairContext::new(0, 0), |acc, s| PairContext {
                max_rows: acc.max_rows.max(s.n_rows),
                max_cols: acc.max_cols.max(s.n_cols),
            })
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.max_rows && col < self.max_cols
    }

    /// `sqrt(M² + N²)`.
    pub fn diagonal(&self) -> f64 {
        let (m, n) = (self.max_rows as f64, self.max_cols as f64);
        (m * m + n * n).sqrt()
    }
}

/// Everything that parameterizes the cell distance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub weights: Weights,
    #[serde(default)]
    pub spatial_norm: SpatialNorm,
    #[serde(default)]
    pub type_granularity: TypeGranularity,
}

impl MetricConfig {
    pub fn with_weights(weights: Weights) -> Self {
        MetricConfig {
            weights,
            ..Default::default()
        }
    }
}

#[inline]
pub(crate) fn spatial_raw(r1: usize, c1: usize, r2: usize, c2: usize, diagonal: f64) -> f64 {
    let dr = r1 as f64 - r2 as f64;
    let dc = c1 as f64 - c2 as f64;
    (dr * dr + dc * dc).sqrt() / diagonal
}

/// Squared Euclidean distance with a fixed four-lane accumulation order.
/// The result does not depend on argument order.
#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        let d = x - y;
        acc[l] += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[inline]
pub(crate) fn semantic_raw(a: &[f64], b: &[f64]) -> f64 {
    (squared_distance(a, b) * 0.25).min(1.0)
}

#[inline]
pub(crate) fn combine(w: &Weights, spatial: f64, type_: f64, semantic: f64) -> f64 {
    (w.spatial * spatial + w.type_ * type_ + w.semantic * semantic).clamp(0.0, 1.0)
}

/// Normalized positional distance. Both cells must lie inside `ctx`.
pub fn d_spatial(u: &CellEmbedding, v: &CellEmbedding, ctx: PairContext) -> f64 {
    debug_assert!(ctx.contains(u.row, u.col) && ctx.contains(v.row, v.col));
    spatial_raw(u.row, u.col, v.row, v.col, ctx.diagonal())
}

/// [`d_spatial`] with the context precondition checked.
pub fn try_d_spatial(
    u: &CellEmbedding,
    v: &CellEmbedding,
    ctx: PairContext,
) -> Result<f64, MetricError> {
    for c in [u, v] {
        if !ctx.contains(c.row, c.col) {
            return Err(MetricError::OutOfContext {
                row: c.row,
                col: c.col,
                max_rows: ctx.max_rows,
                max_cols: ctx.max_cols,
            });
        }
    }
    Ok(d_spatial(u, v, ctx))
}

pub fn d_type(u: &CellEmbedding, v: &CellEmbedding, granularity: TypeGranularity) -> f64 {
    if granularity.mismatch(u.cell_type, v.cell_type) {
        1.0
    } else {
        0.0
    }
}

pub fn d_semantic(u: &CellEmbedding, v: &CellEmbedding) -> f64 {
    semantic_raw(&u.semantic, &v.semantic)
}

pub fn d_cell(u: &CellEmbedding, v: &CellEmbedding, ctx: PairContext, cfg: &MetricConfig) -> f64 {
    combine(
        &cfg.weights,
        d_spatial(u, v, ctx),
        d_type(u, v, cfg.type_granularity),
        d_semantic(u, v),
    )
}
