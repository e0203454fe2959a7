//! Sheet-level distances and the corpus distance matrix.
//!
//! Both aggregators are functions of the directed nearest-neighbour
//! distances between the two cell sets:
//!
//! * Chamfer: `½ · (mean_i min_j d(x_i, y_j) + mean_j min_i d(x_i, y_j))`
//! * Hausdorff: `max(max_i min_j d(x_i, y_j), max_j min_i d(x_i, y_j))`
//!
//! The pair engine computes both directed minima in a single tiled pass
//! over the `m × n` cell pairs without materializing the cell distance
//! matrix.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::SheetEmbedding;
use crate::metric::{combine, spatial_raw, squared_distance, MetricConfig, PairContext, SpatialNorm};
use crate::typing::CellType;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("empty sheet {0} has no {1} distance")]
    EmptySheet(String, Aggregator),
    #[error("sheets have different embedding dimensions ({0} vs {1})")]
    MixedDimensions(usize, usize),
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error("distance matrix csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Chamfer,
    Hausdorff,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Chamfer => "chamfer",
            Aggregator::Hausdorff => "hausdorff",
        }
    }

    pub fn apply(self, minima: &DirectedMinima) -> f64 {
        match self {
            Aggregator::Chamfer => minima.chamfer(),
            Aggregator::Hausdorff => minima.hausdorff(),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chamfer" => Ok(Aggregator::Chamfer),
            "hausdorff" => Ok(Aggregator::Hausdorff),
            _ => Err(format!("aggregator must be `chamfer` or `hausdorff`, got `{s}`")),
        }
    }
}

/// Nearest-neighbour distances in both directions for one sheet pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedMinima {
    /// For each cell of the first sheet, the distance to its nearest cell
    /// in the second.
    pub forward: Vec<f64>,
    /// For each cell of the second sheet, the distance to its nearest cell
    /// in the first.
    pub backward: Vec<f64>,
}

impl DirectedMinima {
    pub fn chamfer(&self) -> f64 {
        0.5 * (mean(&self.forward) + mean(&self.backward))
    }

    pub fn hausdorff(&self) -> f64 {
        max(&self.forward).max(max(&self.backward))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Cell data of one sheet laid out for the pair kernel: positions and
/// types in parallel arrays, semantic vectors stacked row-major.
#[derive(Debug, Clone)]
pub struct PackedSheet {
    sheet_id: String,
    rows: Vec<usize>,
    cols: Vec<usize>,
    types: Vec<CellType>,
    vectors: Vec<f64>,
    dim: usize,
    n_rows: usize,
    n_cols: usize,
}

impl PackedSheet {
    pub fn new(sheet: &SheetEmbedding) -> Self {
        let dim = sheet.dimension().unwrap_or(0);
        let mut vectors = Vec::with_capacity(dim * sheet.cells.len());
        for c in &sheet.cells {
            vectors.extend_from_slice(&c.semantic);
        }
        PackedSheet {
            sheet_id: sheet.sheet_id.clone(),
            rows: sheet.cells.iter().map(|c| c.row).collect(),
            cols: sheet.cells.iter().map(|c| c.col).collect(),
            types: sheet.cells.iter().map(|c| c.cell_type).collect(),
            vectors,
            dim,
            n_rows: sheet.n_rows,
            n_cols: sheet.n_cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// Byte budget for the tile of second-sheet vectors scanned per pass.
const TILE_BYTES: usize = 64 * 1024;

/// Directed minima of one pair under `ctx`.
#[allow(clippy::needless_range_loop)]
pub fn pair_minima(
    a: &PackedSheet,
    b: &PackedSheet,
    ctx: PairContext,
    cfg: &MetricConfig,
    agg: Aggregator,
) -> Result<DirectedMinima, AggregateError> {
    for s in [a, b] {
        if s.is_empty() {
            return Err(AggregateError::EmptySheet(s.sheet_id.clone(), agg));
        }
    }
    if a.dim != b.dim {
        return Err(AggregateError::MixedDimensions(a.dim, b.dim));
    }
    let w = cfg.weights;
    let diagonal = ctx.diagonal();
    let use_semantic = w.semantic() != 0.0;
    let mut forward = vec![f64::INFINITY; a.len()];
    let mut backward = vec![f64::INFINITY; b.len()];

    let tile = (TILE_BYTES / (8 * a.dim.max(1))).max(1);
    for start in (0..b.len()).step_by(tile) {
        let end = (start + tile).min(b.len());
        for i in 0..a.len() {
            let (ri, ci, ti) = (a.rows[i], a.cols[i], a.types[i]);
            let vi = a.vector(i);
            let mut row_min = forward[i];
            for j in start..end {
                let spatial = spatial_raw(ri, ci, b.rows[j], b.cols[j], diagonal);
                let type_ = if cfg.type_granularity.mismatch(ti, b.types[j]) {
                    1.0
                } else {
                    0.0
                };
                let semantic = if use_semantic {
                    (squared_distance(vi, b.vector(j)) * 0.25).min(1.0)
                } else {
                    0.0
                };
                let d = combine(&w, spatial, type_, semantic);
                row_min = row_min.min(d);
                if d < backward[j] {
                    backward[j] = d;
                }
            }
            forward[i] = row_min;
        }
    }
    Ok(DirectedMinima { forward, backward })
}

fn pair_context(a: &PackedSheet, b: &PackedSheet) -> PairContext {
    PairContext::new(a.n_rows.max(b.n_rows), a.n_cols.max(b.n_cols))
}

fn sheet_distance(
    a: &SheetEmbedding,
    b: &SheetEmbedding,
    cfg: &MetricConfig,
    agg: Aggregator,
) -> Result<f64, AggregateError> {
    let (pa, pb) = (PackedSheet::new(a), PackedSheet::new(b));
    let minima = pair_minima(&pa, &pb, pair_context(&pa, &pb), cfg, agg)?;
    Ok(agg.apply(&minima))
}

/// Normalized Chamfer distance of two non-empty sheets, using the pair
/// context of the two sheets.
pub fn chamfer(a: &SheetEmbedding, b: &SheetEmbedding, cfg: &MetricConfig) -> Result<f64, AggregateError> {
    sheet_distance(a, b, cfg, Aggregator::Chamfer)
}

/// Hausdorff distance of two non-empty sheets, using the pair context of
/// the two sheets.
pub fn hausdorff(a: &SheetEmbedding, b: &SheetEmbedding, cfg: &MetricConfig) -> Result<f64, AggregateError> {
    sheet_distance(a, b, cfg, Aggregator::Hausdorff)
}

/// Provenance of a distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub aggregator: Aggregator,
    pub weights: crate::metric::Weights,
    pub provider: String,
    pub spatial_norm: SpatialNorm,
    pub type_granularity: crate::typing::TypeGranularity,
    /// How the Chamfer sum is scaled; always `"half"` (the two directed
    /// means are averaged).
    pub chamfer_scaling: String,
}

impl MatrixMeta {
    pub fn new(aggregator: Aggregator, cfg: &MetricConfig, provider: impl Into<String>) -> Self {
        MatrixMeta {
            aggregator,
            weights: cfg.weights,
            provider: provider.into(),
            spatial_norm: cfg.spatial_norm,
            type_granularity: cfg.type_granularity,
            chamfer_scaling: "half".to_string(),
        }
    }
}

/// Symmetric sheet-level distance matrix with zero diagonal and entries in
/// `[0, 1]`; the constructor enforces all three.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    sheet_ids: Vec<String>,
    values: Vec<f64>,
    pub meta: Option<MatrixMeta>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major `values` of length `n²`.
    pub fn new(sheet_ids: Vec<String>, values: Vec<f64>) -> Result<Self, AggregateError> {
        let n = sheet_ids.len();
        if values.len() != n * n {
            return Err(AggregateError::InvalidMatrix(format!(
                "{} values for {n} sheets",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(AggregateError::InvalidMatrix(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(AggregateError::InvalidMatrix(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if v != values[j * n + i] {
                    return Err(AggregateError::InvalidMatrix(format!(
                        "asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(DistanceMatrix {
            sheet_ids,
            values,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: MatrixMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn len(&self) -> usize {
        self.sheet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sheet_ids.is_empty()
    }

    pub fn sheet_ids(&self) -> &[String] {
        &self.sheet_ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Header of sheet ids followed by `n` rows of `n` values. Values are
    /// printed in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AggregateError> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wtr.write_record(&self.sheet_ids)?;
        for i in 0..self.len() {
            wtr.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(bytes: &[u8]) -> Result<Self, AggregateError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let ids: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut values = Vec::with_capacity(ids.len() * ids.len());
        for record in rdr.records() {
            for field in record?.iter() {
                let v = field.parse::<f64>().map_err(|e| {
                    AggregateError::InvalidMatrix(format!("bad value `{field}`: {e}"))
                })?;
                values.push(v);
            }
        }
        DistanceMatrix::new(ids, values)
    }

    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<(), AggregateError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(csv_path, buf)?;
        let meta = serde_json::to_vec_pretty(&self.meta).map_err(std::io::Error::other)?;
        std::fs::write(meta_path, meta)?;
        Ok(())
    }
}

/// Options for [`distance_matrix`].
#[derive(Clone, Copy, Default)]
pub struct EngineOptions<'a> {
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
    /// Called with `(pairs_done, pairs_total)` as pairs complete.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

impl fmt::Debug for EngineOptions<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EngineOptions")
            .field("workers", &self.workers)
            .field("progress", &self.progress.is_some())
            .finish()
    }
}

/// Computes all `N(N-1)/2` sheet distances. Every pair is evaluated by the
/// same sequential kernel and written to its own slot, so the result does
/// not depend on the worker count.
pub fn distance_matrix(
    corpus: &[SheetEmbedding],
    agg: Aggregator,
    cfg: &MetricConfig,
    opts: EngineOptions<'_>,
) -> Result<DistanceMatrix, AggregateError> {
    let packed: Vec<PackedSheet> = corpus.iter().map(PackedSheet::new).collect();
    for s in &packed {
        if s.is_empty() {
            return Err(AggregateError::EmptySheet(s.sheet_id.clone(), agg));
        }
        if s.dim != packed[0].dim {
            return Err(AggregateError::MixedDimensions(packed[0].dim, s.dim));
        }
    }
    let corpus_ctx = PairContext::for_corpus(corpus);
    let n = packed.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let total = pairs.len();
    let done = AtomicUsize::new(0);

    let compute = || -> Result<Vec<f64>, AggregateError> {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (&packed[i], &packed[j]);
                let ctx = match cfg.spatial_norm {
                    SpatialNorm::Pair => pair_context(a, b),
                    SpatialNorm::Corpus => corpus_ctx,
                };
                let d = agg.apply(&pair_minima(a, b, ctx, cfg, agg)?);
                if let Some(progress) = opts.progress {
                    progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
                }
                Ok(d)
            })
            .collect()
    };
    let upper = if opts.workers == 0 {
        compute()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| AggregateError::Pool(e.to_string()))?
            .install(compute)?
    };

    let mut values = vec![0.0; n * n];
    for (&(i, j), d) in pairs.iter().zip(upper) {
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    DistanceMatrix::new(corpus.iter().map(|s| s.sheet_id.clone()).collect(), values)
}
