use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use fnv::FnvHasher;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sheetdist::aggregate::{distance_matrix, DistanceMatrix, EngineOptions, MatrixMeta};
use sheetdist::cluster::{kmedoids, Clustering};
use sheetdist::embed::{
    embed_corpus, exclude_empty, BatchOptions, EmbeddingCache, EmbeddingProvider, HashEmbedder, HttpProvider,
    SheetEmbedding,
};
use sheetdist::eval::{evaluate, sweep_weights, EvalParams, EvalReport, SweepConfig, SweepGrid};
use sheetdist::ingest::{load_corpus, IngestError, LabeledCorpus, LoadReport};
use sheetdist::synthgen::{builtin_specs, generate_corpus, load_specs, Preset, MARKER_FILE};

use crate::config::{Provider, RunConfig};
use crate::CliError;

pub const LOAD_REPORT: &str = "load_report.json";
pub const EMBEDDINGS: &str = "embeddings.json";
pub const EMBED_CACHE: &str = "embed_cache.bin";
pub const DISTANCES_CSV: &str = "distances.csv";
pub const DISTANCES_JSON: &str = "distances.json";
pub const LABELS_CSV: &str = "labels.csv";
pub const CLUSTERING: &str = "clustering.json";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const EVAL: &str = "eval.json";
pub const SWEEP_ARI: &str = "sweep_ari.csv";
pub const SWEEP_SILHOUETTE: &str = "sweep_silhouette.csv";
pub const SWEEP: &str = "sweep.json";

fn pipeline(context: impl std::fmt::Display) -> impl FnOnce(String) -> CliError {
    move |e| CliError::Pipeline(format!("{context}: {e}"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| pipeline(parent.display())(e.to_string()))?;
    }
    fs::write(path, bytes).map_err(|e| pipeline(path.display())(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Reads an artifact written by an earlier stage, naming that stage if the
/// file is absent.
fn read_artifact(cfg: &RunConfig, name: &str, stage: &str) -> Result<Vec<u8>, CliError> {
    let path = cfg.output(name);
    match fs::read(&path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::Pipeline(format!(
            "{} not found; run `sheetdist {stage}` first",
            path.display()
        ))),
        Err(e) => Err(pipeline(path.display())(e.to_string())),
    }
}

fn read_json<T: DeserializeOwned>(cfg: &RunConfig, name: &str, stage: &str) -> Result<T, CliError> {
    let bytes = read_artifact(cfg, name, stage)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Pipeline(format!(
            "{} is malformed ({e}); re-run `sheetdist {stage}`",
            cfg.output(name).display()
        ))
    })
}

fn digest(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

// ---------------------------------------------------------------- generate

pub struct GenerateArgs {
    pub preset: Preset,
    pub per_family: usize,
    pub spec: Option<PathBuf>,
}

/// Writes a synthetic corpus to `corpus_dir`. An existing directory is only
/// replaced if it is empty or was itself generated.
pub fn generate(cfg: &RunConfig, args: &GenerateArgs) -> Result<(), CliError> {
    let specs = match &args.spec {
        Some(path) => load_specs(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => builtin_specs(args.preset),
    };
    let corpus = generate_corpus(&specs, args.per_family, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;

    let root = &cfg.corpus_dir;
    if root.exists() {
        let generated = root.join(MARKER_FILE).is_file();
        let empty = fs::read_dir(root)
            .map_err(|e| pipeline(root.display())(e.to_string()))?
            .next()
            .is_none();
        if !generated && !empty {
            return Err(CliError::Pipeline(format!(
                "{} exists and was not generated by sheetdist; choose another --corpus-dir",
                root.display()
            )));
        }
        fs::remove_dir_all(root).map_err(|e| pipeline(root.display())(e.to_string()))?;
    }
    let labeled = corpus
        .write_to(root)
        .map_err(|e| pipeline(root.display())(e.to_string()))?;
    println!(
        "wrote {} sheets in {} families to {}",
        labeled.grids.len(),
        labeled.families().len(),
        root.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- embed

fn provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    Ok(match &cfg.provider {
        Provider::Hash => Box::new(HashEmbedder::new(cfg.dimension).map_err(|e| CliError::Usage(e.to_string()))?),
        Provider::Http(url) => Box::new(HttpProvider::with_dimension(url, cfg.dimension)),
    })
}

#[derive(Serialize)]
struct LoadReportArtifact<'a> {
    config: &'a RunConfig,
    sheets: usize,
    families: Vec<&'a str>,
    warnings: &'a LoadReport,
}

#[derive(Serialize)]
struct SheetSummary<'a> {
    sheet_id: &'a str,
    family: Option<&'a str>,
    n_rows: usize,
    n_cols: usize,
    cells: usize,
}

#[derive(Serialize)]
struct EmbeddingsArtifact<'a> {
    config: &'a RunConfig,
    provider: &'a str,
    dimension: usize,
    cache: &'a str,
    sheets: Vec<SheetSummary<'a>>,
    excluded_empty: &'a [String],
}

/// A loaded and embedded corpus, ready for the distance engine.
struct Prepared {
    corpus: LabeledCorpus,
    sheets: Vec<SheetEmbedding>,
    excluded: Vec<String>,
    provider_name: String,
}

fn load(cfg: &RunConfig) -> Result<(LabeledCorpus, LoadReport), CliError> {
    let (corpus, report) = load_corpus(&cfg.corpus_dir).map_err(|e| match e {
        IngestError::NoSpreadsheets(_) | IngestError::Root { .. } => CliError::Pipeline(format!(
            "{e}; run `sheetdist generate` first or point --corpus-dir at a corpus"
        )),
        e => CliError::Pipeline(e.to_string()),
    })?;
    for line in report.lines() {
        eprintln!("{line}");
    }
    write_json(
        &cfg.output(LOAD_REPORT),
        &LoadReportArtifact {
            config: cfg,
            sheets: corpus.grids.len(),
            families: corpus.families(),
            warnings: &report,
        },
    )?;
    Ok((corpus, report))
}

/// Loads the corpus and embeds every sheet through the on-disk cache, so
/// repeated stages only pay for texts not seen before.
fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let (corpus, _) = load(cfg)?;
    let provider = provider(cfg)?;
    let cache_path = cfg.output(EMBED_CACHE);
    fs::create_dir_all(&cfg.output_dir).map_err(|e| pipeline(cfg.output_dir.display())(e.to_string()))?;
    let cache = EmbeddingCache::open(&cache_path).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let embedded = embed_corpus(&corpus.grids, provider.as_ref(), &cache, BatchOptions::default())
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    let (sheets, excluded) = exclude_empty(embedded);
    for id in &excluded {
        eprintln!("warning: {id}: empty sheet excluded from distances");
    }
    let provider_name = provider.name().to_string();

    let summaries = sheets
        .iter()
        .map(|s| SheetSummary {
            sheet_id: &s.sheet_id,
            family: corpus.label_of(&s.sheet_id),
            n_rows: s.n_rows,
            n_cols: s.n_cols,
            cells: s.cells.len(),
        })
        .collect();
    write_json(
        &cfg.output(EMBEDDINGS),
        &EmbeddingsArtifact {
            config: cfg,
            provider: &provider_name,
            dimension: provider.dimension(),
            cache: EMBED_CACHE,
            sheets: summaries,
            excluded_empty: &excluded,
        },
    )?;
    if sheets.is_empty() {
        return Err(CliError::Pipeline(format!(
            "every sheet under {} is empty",
            cfg.corpus_dir.display()
        )));
    }
    Ok(Prepared {
        corpus,
        sheets,
        excluded,
        provider_name,
    })
}

pub fn embed(cfg: &RunConfig) -> Result<(), CliError> {
    let p = prepare(cfg)?;
    let cells: usize = p.sheets.iter().map(|s| s.cells.len()).sum();
    println!(
        "embedded {cells} cells of {} sheets with {} (cache {})",
        p.sheets.len(),
        p.provider_name,
        cfg.output(EMBED_CACHE).display()
    );
    Ok(())
}

// ----------------------------------------------------------------- distmat

#[derive(Serialize, Deserialize)]
pub struct DistancesArtifact {
    pub config: RunConfig,
    pub meta: MatrixMeta,
    pub sheet_ids: Vec<String>,
    /// Ground-truth family of each sheet that has one.
    pub labels: BTreeMap<String, String>,
    pub excluded_empty: Vec<String>,
}

pub fn distmat(cfg: &RunConfig) -> Result<(), CliError> {
    let p = prepare(cfg)?;
    let metric = cfg.metric();
    let shown = AtomicUsize::new(0);
    let show = |done: usize, total: usize| {
        let pct = done * 100 / total.max(1);
        if pct >= shown.load(Ordering::Relaxed) + 10 || done == total {
            shown.store(pct, Ordering::Relaxed);
            eprint!("\rdistances: {done}/{total} pairs");
            if done == total {
                eprintln!();
            }
        }
    };
    let opts = EngineOptions {
        workers: cfg.workers,
        progress: std::io::stderr().is_terminal().then_some(&show as _),
    };
    let d = distance_matrix(&p.sheets, cfg.aggregator, &metric, opts).map_err(|e| CliError::Pipeline(e.to_string()))?;

    let mut csv = Vec::new();
    d.write_csv(&mut csv).map_err(|e| CliError::Pipeline(e.to_string()))?;
    write_file(&cfg.output(DISTANCES_CSV), &csv)?;

    let labels: BTreeMap<String, String> = d
        .sheet_ids()
        .iter()
        .filter_map(|id| p.corpus.label_of(id).map(|f| (id.clone(), f.to_string())))
        .collect();
    let mut labels_csv = String::from("sheet_id,family\n");
    for id in d.sheet_ids() {
        labels_csv.push_str(&csv_row(&[id, labels.get(id).map_or("", String::as_str)]));
    }
    write_file(&cfg.output(LABELS_CSV), labels_csv.as_bytes())?;
    write_json(
        &cfg.output(DISTANCES_JSON),
        &DistancesArtifact {
            config: cfg.clone(),
            meta: MatrixMeta::new(cfg.aggregator, &metric, p.provider_name),
            sheet_ids: d.sheet_ids().to_vec(),
            labels,
            excluded_empty: p.excluded,
        },
    )?;
    println!(
        "{} distance matrix over {} sheets written to {}",
        cfg.aggregator,
        d.len(),
        cfg.output(DISTANCES_CSV).display()
    );
    Ok(())
}

fn csv_row(fields: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

struct LoadedMatrix {
    matrix: DistanceMatrix,
    info: DistancesArtifact,
    digest: String,
}

fn load_matrix(cfg: &RunConfig) -> Result<LoadedMatrix, CliError> {
    let bytes = read_artifact(cfg, DISTANCES_CSV, "distmat")?;
    let info: DistancesArtifact = read_json(cfg, DISTANCES_JSON, "distmat")?;
    let matrix = DistanceMatrix::read_csv(&bytes).map_err(|e| {
        CliError::Pipeline(format!(
            "{}: {e}; re-run `sheetdist distmat`",
            cfg.output(DISTANCES_CSV).display()
        ))
    })?;
    if matrix.sheet_ids() != info.sheet_ids.as_slice() {
        return Err(CliError::Pipeline(format!(
            "{} and {} disagree; re-run `sheetdist distmat`",
            DISTANCES_CSV, DISTANCES_JSON
        )));
    }
    Ok(LoadedMatrix {
        matrix: matrix.with_meta(info.meta.clone()),
        digest: digest(&bytes),
        info,
    })
}

// ----------------------------------------------------------------- cluster

#[derive(Serialize, Deserialize)]
struct ClusteringArtifact {
    config: RunConfig,
    /// Digest of the `distances.csv` that was clustered.
    distances_digest: String,
    meta: MatrixMeta,
    clustering: Clustering,
}

fn family_count(labels: &BTreeMap<String, String>) -> usize {
    labels.values().collect::<std::collections::BTreeSet<_>>().len()
}

fn resolve_k(cfg: &RunConfig, labels: &BTreeMap<String, String>) -> Result<usize, CliError> {
    match cfg.k {
        Some(k) => Ok(k),
        None if !labels.is_empty() => Ok(family_count(labels)),
        None => Err(CliError::Usage(
            "the corpus has no family labels; pass --k".into(),
        )),
    }
}

fn run_cluster(cfg: &RunConfig, m: &LoadedMatrix) -> Result<ClusteringArtifact, CliError> {
    let k = resolve_k(cfg, &m.info.labels)?;
    let clustering = kmedoids(&m.matrix, k, cfg.seed).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let artifact = ClusteringArtifact {
        config: cfg.clone(),
        distances_digest: m.digest.clone(),
        meta: m.info.meta.clone(),
        clustering,
    };
    write_json(&cfg.output(CLUSTERING), &artifact)?;
    let mut csv = String::from("sheet_id,cluster,medoid\n");
    for id in m.matrix.sheet_ids() {
        let c = artifact.clustering.assignments[id];
        csv.push_str(&csv_row(&[id, &c.to_string(), &artifact.clustering.medoids[c]]));
    }
    write_file(&cfg.output(CLUSTERS_CSV), csv.as_bytes())?;
    Ok(artifact)
}

pub fn cluster(cfg: &RunConfig) -> Result<(), CliError> {
    let m = load_matrix(cfg)?;
    let a = run_cluster(cfg, &m)?;
    println!(
        "k-medoids with k = {} over {} sheets: total cost {:.6}, {} swaps",
        a.clustering.k,
        m.matrix.len(),
        a.clustering.total_cost,
        a.clustering.iterations
    );
    Ok(())
}

// -------------------------------------------------------------------- eval

#[derive(Serialize)]
struct EvalArtifact<'a> {
    config: &'a RunConfig,
    meta: &'a MatrixMeta,
    report: &'a EvalReport,
}

fn truth_for(ids: &[String], labels: &BTreeMap<String, String>) -> Result<Vec<String>, CliError> {
    ids.iter()
        .map(|id| {
            labels.get(id).cloned().ok_or_else(|| {
                CliError::Pipeline(format!(
                    "{id} has no family label; evaluation needs every sheet inside a family directory"
                ))
            })
        })
        .collect()
}

/// Scores the clustering of the current matrix. A clustering that is
/// missing, or was computed from a different matrix or with a different k
/// or seed, is recomputed first.
pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let m = load_matrix(cfg)?;
    let truth = truth_for(m.matrix.sheet_ids(), &m.info.labels)?;
    let k = resolve_k(cfg, &m.info.labels)?;
    let existing: Option<ClusteringArtifact> = read_json(cfg, CLUSTERING, "cluster").ok();
    let artifact = match existing {
        Some(a) if a.distances_digest == m.digest && a.clustering.k == k && a.clustering.seed == cfg.seed => a,
        _ => {
            eprintln!("note: clustering out of date for {DISTANCES_CSV}; re-running k-medoids");
            run_cluster(cfg, &m)?
        }
    };
    let clusters = artifact
        .clustering
        .labels_for(m.matrix.sheet_ids())
        .ok_or_else(|| CliError::Pipeline("clustering does not cover every sheet; re-run `sheetdist cluster`".into()))?;
    let params = EvalParams {
        weights: m.info.meta.weights,
        aggregator: m.info.meta.aggregator,
        k,
        seed: cfg.seed,
    };
    let report = evaluate(&m.matrix, &clusters, &truth, params).map_err(|e| CliError::Pipeline(e.to_string()))?;
    write_json(
        &cfg.output(EVAL),
        &EvalArtifact {
            config: cfg,
            meta: &m.info.meta,
            report: &report,
        },
    )?;
    print_report(&report, m.matrix.len(), family_count(&m.info.labels));
    Ok(())
}

fn print_report(r: &EvalReport, sheets: usize, families: usize) {
    let w = r.params.weights;
    println!("{:<14}{}", "aggregator", r.params.aggregator);
    println!("{:<14}{} / {} / {}", "weights s/t/m", w.spatial(), w.type_(), w.semantic());
    println!("{:<14}{sheets} in {families} families", "sheets");
    println!("{:<14}{}", "k", r.params.k);
    println!("{:<14}{:.2}", "ARI", r.ari);
    println!("{:<14}{:.2}", "silhouette", r.silhouette);
    let sizes: Vec<String> = r.per_cluster_sizes.iter().map(usize::to_string).collect();
    println!("{:<14}{}", "cluster sizes", sizes.join(" "));
}

// ------------------------------------------------------------------- sweep

#[derive(Serialize)]
struct SweepArtifact<'a> {
    config: &'a RunConfig,
    provider: &'a str,
    grid: &'a SweepGrid,
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let p = prepare(cfg)?;
    let ids: Vec<String> = p.sheets.iter().map(|s| s.sheet_id.clone()).collect();
    let labels: BTreeMap<String, String> = p.corpus.labels.clone();
    let truth = truth_for(&ids, &labels)?;
    let k = resolve_k(cfg, &labels)?;
    let sweep_cfg = SweepConfig {
        aggregator: cfg.aggregator,
        k,
        seed: cfg.seed,
        step: cfg.sweep_step,
        metric: cfg.metric(),
        workers: cfg.workers,
    };
    let grid = sweep_weights(&p.sheets, &truth, &sweep_cfg).map_err(|e| CliError::Pipeline(e.to_string()))?;
    write_file(&cfg.output(SWEEP_ARI), grid.ari_csv().as_bytes())?;
    write_file(&cfg.output(SWEEP_SILHOUETTE), grid.silhouette_csv().as_bytes())?;
    write_json(
        &cfg.output(SWEEP),
        &SweepArtifact {
            config: cfg,
            provider: &p.provider_name,
            grid: &grid,
        },
    )?;
    let best = grid
        .points
        .iter()
        .fold(None::<&sheetdist::eval::SweepPoint>, |best, p| match best {
            Some(b) if b.report.ari >= p.report.ari => Some(b),
            _ => Some(p),
        })
        .expect("grid has points");
    println!(
        "{} weight points swept; best ARI {:.2} at type {} / semantic {} (grids in {})",
        grid.points.len(),
        best.report.ari,
        best.weights.type_(),
        best.weights.semantic(),
        cfg.output_dir.display()
    );
    Ok(())
}
