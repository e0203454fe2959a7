//! Cell embeddings: position, type and a unit semantic vector per
//! non-empty cell.

mod cache;
mod hash;
mod http;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Grid;
use crate::typing::{detect_type, CellType};

pub use cache::{CacheKey, EmbeddingCache};
pub use hash::{hash_embed, HashEmbedder};
pub use http::HttpProvider;

pub const DEFAULT_DIMENSION: usize = 384;

/// Cell texts longer than this many characters are cut before embedding.
pub const MAX_TEXT_CHARS: usize = 256;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{missing} cell texts are not cached and the provider failed: {source}")]
    Incomplete {
        missing: usize,
        #[source]
        source: Box<EmbedError>,
    },
    #[error("embedding cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not an embedding cache file")]
    CacheFormat(PathBuf),
}

/// Source of semantic vectors. Implementations must be deterministic and
/// return L2-normalized vectors of length [`dimension`](Self::dimension).
pub trait EmbeddingProvider: Send + Sync {
    /// Provenance string; also part of the cache key.
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEmbedding {
    pub row: usize,
    pub col: usize,
    pub cell_type: CellType,
    pub semantic: Arc<[f64]>,
}

impl CellEmbedding {
    pub fn type_code(&self) -> u8 {
        self.cell_type.code()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SheetEmbedding {
    pub sheet_id: String,
    pub cells: Vec<CellEmbedding>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl SheetEmbedding {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Semantic dimension, or `None` for an empty sheet.
    pub fn dimension(&self) -> Option<usize> {
        self.cells.first().map(|c| c.semantic.len())
    }
}

/// Batching limits for provider requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub max_batch: usize,
    pub max_in_flight: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            max_batch: 64,
            max_in_flight: 4,
        }
    }
}

/// The text actually sent to the provider for a cell.
pub fn embedding_text(raw: &str) -> &str {
    match raw.char_indices().nth(MAX_TEXT_CHARS) {
        Some((idx, _)) => &raw[..idx],
        None => raw,
    }
}

pub(crate) fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Builds the cell embedding of one grid. Texts missing from the cache are
/// requested from the provider in batches and added to the cache.
pub fn embed_sheet(
    grid: &Grid,
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    opts: BatchOptions,
) -> Result<SheetEmbedding, EmbedError> {
    let name = provider.name();
    let mut seen = HashSet::new();
    let misses: Vec<&str> = grid
        .cells()
        .iter()
        .map(|c| embedding_text(&c.text))
        .filter(|t| seen.insert(*t) && cache.get(name, t).is_none())
        .collect();
    if !misses.is_empty() {
        let vectors = fetch(provider, &misses, opts).map_err(|e| EmbedError::Incomplete {
            missing: misses.len(),
            source: Box::new(e),
        })?;
        cache.insert_many(name, misses.iter().copied().zip(vectors))?;
    }

    let dim = provider.dimension();
    let cells = grid
        .cells()
        .iter()
        .map(|c| {
            let semantic = cache
                .get(name, embedding_text(&c.text))
                .expect("every text was cached above");
            if semantic.len() != dim {
                return Err(EmbedError::Dimension(format!(
                    "cached vector for provider {name} has {} values, expected {dim}",
                    semantic.len()
                )));
            }
            Ok(CellEmbedding {
                row: c.row,
                col: c.col,
                cell_type: detect_type(&c.text),
                semantic,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(SheetEmbedding {
        sheet_id: grid.sheet_id.clone(),
        cells,
        n_rows: grid.n_rows(),
        n_cols: grid.n_cols(),
    })
}

/// Requests `texts` in batches of `max_batch`, running at most
/// `max_in_flight` requests at a time. Output is aligned with `texts`.
fn fetch(
    provider: &dyn EmbeddingProvider,
    texts: &[&str],
    opts: BatchOptions,
) -> Result<Vec<Arc<[f64]>>, EmbedError> {
    let batches: Vec<&[&str]> = texts.chunks(opts.max_batch.max(1)).collect();
    let mut out = Vec::with_capacity(texts.len());
    for wave in batches.chunks(opts.max_in_flight.max(1)) {
        let results: Vec<Result<Vec<Vec<f64>>, EmbedError>> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| s.spawn(move || provider.embed_batch(batch)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("provider request panicked"))
                .collect()
        });
        for (batch, result) in wave.iter().zip(results) {
            let vectors = result?;
            if vectors.len() != batch.len() {
                return Err(EmbedError::Provider(format!(
                    "{} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                )));
            }
            for v in vectors {
                if v.len() != provider.dimension() {
                    return Err(EmbedError::Dimension(format!(
                        "provider {} returned {} values, expected {}",
                        provider.name(),
                        v.len(),
                        provider.dimension()
                    )));
                }
                out.push(Arc::from(v));
            }
        }
    }
    Ok(out)
}

/// Embeds every grid in order.
pub fn embed_corpus(
    grids: &[Grid],
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    opts: BatchOptions,
) -> Result<Vec<SheetEmbedding>, EmbedError> {
    grids
        .iter()
        .map(|g| embed_sheet(g, provider, cache, opts))
        .collect()
}

/// Splits off empty sheets, which have no aggregate distance. Returns the
/// kept sheets and the ids of the excluded ones.
pub fn exclude_empty(sheets: Vec<SheetEmbedding>) -> (Vec<SheetEmbedding>, Vec<String>) {
    let (kept, empty): (Vec<_>, Vec<_>) = sheets.into_iter().partition(|s| !s.is_empty());
    (kept, empty.into_iter().map(|s| s.sheet_id).collect())
}
