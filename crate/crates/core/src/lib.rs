//! Structural similarity between spreadsheets.
//!
//! Every non-empty cell becomes a `(row, col, type, semantic vector)` tuple.
//! Cells are compared with a weighted mix of positional, type and semantic
//! distances, and whole sheets with Chamfer or Hausdorff aggregation of
//! those cell distances. The resulting distance matrix feeds k-medoids
//! clustering, scored with the adjusted Rand index and silhouette.
//!
//! ```
//! use sheetdist::prelude::*;
//!
//! let a = parse_csv(b"Region,Population\nNorth,1200\nSouth,900", "a.csv").0;
//! let b = parse_csv(b"Region,Population\nEast,3100", "b.csv").0;
//! let c = parse_csv(b"Athlete,Swim\nJ. Brown,00:25", "c.csv").0;
//!
//! let provider = HashEmbedder::default();
//! let cache = EmbeddingCache::in_memory();
//! let sheets = embed_corpus(&[a, b, c], &provider, &cache, BatchOptions::default())?;
//!
//! let cfg = MetricConfig::default();
//! let d = distance_matrix(&sheets, Aggregator::Chamfer, &cfg, EngineOptions::default())?;
//! assert!(d.get(0, 1) < d.get(0, 2));
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! The `book/` directory of the repository walks through each stage; its
//! code listings are compiled and run as doctests of this crate.

pub mod aggregate;
pub mod cluster;
pub mod embed;
pub mod eval;
pub mod ingest;
pub mod metric;
pub mod synthgen;
pub mod typing;

pub mod prelude {
    pub use crate::aggregate::{
        chamfer, distance_matrix, hausdorff, Aggregator, DistanceMatrix, EngineOptions,
    };
    pub use crate::cluster::{kmedoids, Clustering};
    pub use crate::embed::{
        embed_corpus, embed_sheet, BatchOptions, CellEmbedding, EmbeddingCache,
        EmbeddingProvider, HashEmbedder, SheetEmbedding,
    };
    pub use crate::eval::{adjusted_rand_index, silhouette, EvalReport};
    pub use crate::ingest::{load_corpus, parse_csv, Grid, LabeledCorpus};
    pub use crate::metric::{d_cell, MetricConfig, PairContext, SpatialNorm, Weights};
    pub use crate::synthgen::{builtin_specs, generate_corpus, Preset};
    pub use crate::typing::{detect_type, CellType, TypeGranularity};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cell-embedding.md")]
    mod cell_embedding {}
    #[doc = include_str!("../../../book/src/cell-distance.md")]
    mod cell_distance {}
    #[doc = include_str!("../../../book/src/aggregation.md")]
    mod aggregation {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
