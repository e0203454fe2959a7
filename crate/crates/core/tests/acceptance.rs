//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

mod common;

use std::hash::Hasher;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sheetdist::aggregate::{chamfer, distance_matrix, hausdorff, Aggregator, DistanceMatrix, EngineOptions};
use sheetdist::cluster::{kmedoids, pam, PamOptions, SquareView};
use sheetdist::embed::{embed_corpus, BatchOptions, CellEmbedding, EmbeddingCache, HashEmbedder, SheetEmbedding};
use sheetdist::eval::{adjusted_rand_index, silhouette, sweep_weights, SweepConfig};
use sheetdist::ingest::LabeledCorpus;
use sheetdist::metric::{d_cell, d_semantic, d_spatial, d_type, MetricConfig, PairContext};
use sheetdist::synthgen::{builtin_specs, generate_corpus, Preset};
use sheetdist::typing::{CellType, TypeGranularity};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Every distance matrix produced by the suite, for the boundedness check.
static MATRICES: Mutex<Vec<DistanceMatrix>> = Mutex::new(Vec::new());

fn record(m: &DistanceMatrix) {
    MATRICES.lock().unwrap().push(m.clone());
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cell(row: usize, col: usize, t: CellType, s: Arc<[f64]>) -> CellEmbedding {
    CellEmbedding {
        row,
        col,
        cell_type: t,
        semantic: s,
    }
}

fn metric_axioms() -> Outcome {
    const TRIPLES: usize = 1_000_000;
    const DIM: usize = 384;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let pool: Vec<Arc<[f64]>> = (0..2048).map(|_| random_unit(DIM, &mut rng)).collect();
    let ctx = PairContext::new(40, 25);
    let draw = |rng: &mut ChaCha8Rng| {
        cell(
            rng.random_range(0..ctx.max_rows),
            rng.random_range(0..ctx.max_cols),
            random_type(rng),
            pool[rng.random_range(0..pool.len())].clone(),
        )
    };
    let same = |a: &CellEmbedding, b: &CellEmbedding| {
        a.row == b.row && a.col == b.col && a.type_code() == b.type_code() && a.semantic == b.semantic
    };
    let mut worst_slack = f64::INFINITY;
    for t in 0..TRIPLES {
        let cfg = MetricConfig::with_weights(random_weights(&mut rng));
        let (u, v, w) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let uv = d_cell(&u, &v, ctx, &cfg);
        let vu = d_cell(&v, &u, ctx, &cfg);
        let vw = d_cell(&v, &w, ctx, &cfg);
        let uw = d_cell(&u, &w, ctx, &cfg);
        ensure(uv.to_bits() == vu.to_bits(), || format!("asymmetric at triple {t}: {uv} vs {vu}"))?;
        for d in [uv, vw, uw] {
            ensure((0.0..=1.0).contains(&d), || format!("out of range at triple {t}: {d}"))?;
        }
        ensure(d_cell(&u, &u, ctx, &cfg) == 0.0, || format!("d(u,u) != 0 at triple {t}"))?;
        let all_positive = [cfg.weights.spatial(), cfg.weights.type_(), cfg.weights.semantic()]
            .iter()
            .all(|&x| x > 0.0);
        if all_positive {
            ensure((uv == 0.0) == same(&u, &v), || format!("identity violated at triple {t}"))?;
        }
        let slack = uv + vw - uw;
        worst_slack = worst_slack.min(slack);
        ensure(slack >= -1e-9, || format!("triangle violated at triple {t} by {}", -slack))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{TRIPLES} triples, D={DIM}, min triangle slack {worst_slack:.3e}, {elapsed:.1?}"
    ))
}

fn component_correctness() -> Outcome {
    let e: Arc<[f64]> = Arc::from(vec![1.0, 0.0]);
    let ctx = PairContext::new(3, 4);
    let origin = cell(0, 0, CellType::Integer, e.clone());
    let far = cell(2, 3, CellType::String, Arc::from(vec![0.0, 1.0]));
    let checks = [
        ("spatial identity", d_spatial(&origin, &origin, ctx), 0.0),
        ("spatial (0,0)-(2,3) in 3x4", d_spatial(&origin, &far, ctx), 13f64.sqrt() / 5.0),
        ("type codes (0,0)", d_type(&origin, &origin, TypeGranularity::Code), 0.0),
        ("type codes (0,4)", d_type(&origin, &far, TypeGranularity::Code), 1.0),
        (
            "type Integer vs Currency",
            d_type(&origin, &cell(1, 1, CellType::Currency, e.clone()), TypeGranularity::Code),
            0.0,
        ),
        ("semantic identical", d_semantic(&origin, &origin), 0.0),
        (
            "semantic antipodal",
            d_semantic(&origin, &cell(0, 0, CellType::Integer, Arc::from(vec![-1.0, 0.0]))),
            1.0,
        ),
        ("semantic orthogonal", d_semantic(&origin, &far), 0.5),
        (
            "cell at weights (0.2,0.5,0.3)",
            d_cell(&origin, &far, ctx, &MetricConfig::default()),
            0.2 * (13f64.sqrt() / 5.0) + 0.5 + 0.3 * 0.5,
        ),
    ];
    for (name, got, want) in checks {
        ensure((got - want).abs() <= 1e-12, || format!("{name}: {got} != {want}"))?;
    }
    Ok(format!("{} worked examples within 1e-12", checks.len()))
}

fn aggregation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA3);
    let pool: Vec<Arc<[f64]>> = (0..64).map(|_| random_unit(48, &mut rng)).collect();
    let mut worst: f64 = 0.0;
    const PAIRS: usize = 120;
    for p in 0..PAIRS {
        let w = random_weights(&mut rng);
        let cfg = MetricConfig::with_weights(w);
        let sheet = |id: &str, rng: &mut ChaCha8Rng| {
            let rows = rng.random_range(1..=30);
            let cols = rng.random_range(1..=12);
            let cells = rng.random_range(1..=200);
            random_sheet(id, rows, cols, cells, &pool, rng)
        };
        let a = sheet("a", &mut rng);
        let b = sheet("b", &mut rng);
        let (c, h) = (chamfer(&a, &b, &cfg).unwrap(), hausdorff(&a, &b, &cfg).unwrap());
        let (nc, nh) = (naive_chamfer(&a, &b, &w), naive_hausdorff(&a, &b, &w));
        worst = worst.max((c - nc).abs()).max((h - nh).abs());
        ensure((c - nc).abs() <= 1e-12, || format!("pair {p}: chamfer {c} vs naive {nc}"))?;
        ensure((h - nh).abs() <= 1e-12, || format!("pair {p}: hausdorff {h} vs naive {nh}"))?;
        ensure(h >= c, || format!("pair {p}: hausdorff {h} < chamfer {c}"))?;
        ensure(
            chamfer(&b, &a, &cfg).unwrap() == c && hausdorff(&b, &a, &cfg).unwrap() == h,
            || format!("pair {p}: asymmetric"),
        )?;
    }
    Ok(format!("{PAIRS} pairs, max deviation {worst:.2e}"))
}

fn ari_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
    let mut worst: f64 = 0.0;
    const INSTANCES: usize = 250;
    for i in 0..INSTANCES {
        let n = rng.random_range(2..=30);
        let kp = rng.random_range(1..=n);
        let kt = rng.random_range(1..=n);
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        let got = adjusted_rand_index(&p, &t).unwrap();
        let want = pair_counting_ari(&p, &t);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, || format!("instance {i}: {got} vs {want}"))?;
        let relabeled: Vec<usize> = p.iter().map(|&x| 1000 - x).collect();
        ensure(adjusted_rand_index(&p, &relabeled).unwrap() == 1.0, || {
            format!("instance {i}: identical partitions not exactly 1")
        })?;
        ensure(adjusted_rand_index(&t, &p).unwrap() == got, || format!("instance {i}: asymmetric"))?;
    }
    Ok(format!("{INSTANCES} partition pairs, max deviation {worst:.2e}"))
}

fn silhouette_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
    let mut worst: f64 = 0.0;
    const INSTANCES: usize = 120;
    for i in 0..INSTANCES {
        let n = rng.random_range(3..=25);
        let k = rng.random_range(2..=n.min(6));
        // First k points seed each cluster so none is empty.
        let labels: Vec<usize> = (0..n)
            .map(|j| if j < k { j } else { rng.random_range(0..k) })
            .collect();
        let d = random_symmetric(n, &mut rng);
        let got = silhouette(&SquareView::new(&d).unwrap(), &labels).unwrap();
        let want = naive_silhouette(&d, &labels);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, || format!("instance {i}: {got} vs {want}"))?;
        ensure((-1.0..=1.0).contains(&got), || format!("instance {i}: {got} out of range"))?;
    }
    Ok(format!("{INSTANCES} instances, max deviation {worst:.2e}"))
}

fn pam_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA7);
    const INSTANCES: usize = 200;
    let restarts = PamOptions { restarts: 10, seed: 1, ..PamOptions::default() };
    let (mut optimal, mut optimal_restarts) = (0, 0);
    for i in 0..INSTANCES {
        let n = rng.random_range(4..=12);
        let k = rng.random_range(1..=3);
        let d = random_symmetric(n, &mut rng);
        let best = exhaustive_kmedoids_cost(&d, n, k);
        let view = SquareView::new(&d).unwrap();
        let r = pam(&view, k, PamOptions::default()).unwrap();
        ensure(r.cost_trace.windows(2).all(|w| w[1] < w[0]), || {
            format!("instance {i}: cost trace not decreasing {:?}", r.cost_trace)
        })?;
        if (r.total_cost - best).abs() <= 1e-12 {
            optimal += 1;
        }
        if (pam(&view, k, restarts).unwrap().total_cost - best).abs() <= 1e-12 {
            optimal_restarts += 1;
        }
    }
    let rate = optimal as f64 / INSTANCES as f64;
    let detail = format!(
        "default PAM {optimal}/{INSTANCES} optimal ({:.1}%, need 95%); 10 restarts {optimal_restarts}/{INSTANCES}; monotone in all runs",
        rate * 100.0
    );
    ensure(rate >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn embed_labeled(corpus: &LabeledCorpus) -> (Vec<SheetEmbedding>, Vec<String>) {
    let sheets = embed_corpus(
        &corpus.grids,
        &HashEmbedder::default(),
        &EmbeddingCache::in_memory(),
        BatchOptions::default(),
    )
    .unwrap();
    let labels = sheets
        .iter()
        .map(|s| corpus.label_of(&s.sheet_id).unwrap().to_string())
        .collect();
    (sheets, labels)
}

fn cluster_ari(sheets: &[SheetEmbedding], labels: &[String], agg: Aggregator, k: usize) -> f64 {
    let cfg = MetricConfig::default();
    let d = distance_matrix(sheets, agg, &cfg, EngineOptions { workers: 1, progress: None }).unwrap();
    record(&d);
    let c = kmedoids(&d, k, 0).unwrap();
    adjusted_rand_index(&c.labels_for(d.sheet_ids()).unwrap(), labels).unwrap()
}

fn desk_scale_table() -> Outcome {
    let start = Instant::now();
    let corpus = generate_corpus(&builtin_specs(Preset::Separable), 19, 7)
        .unwrap()
        .to_labeled()
        .unwrap();
    ensure(corpus.grids.len() == 133, || format!("{} sheets", corpus.grids.len()))?;
    let (sheets, labels) = embed_labeled(&corpus);
    let chamfer_ari = cluster_ari(&sheets, &labels, Aggregator::Chamfer, 7);
    ensure(chamfer_ari == 1.0, || format!("separable chamfer ARI = {chamfer_ari}"))?;

    let jittered = generate_corpus(&builtin_specs(Preset::Jittered), 19, 7)
        .unwrap()
        .to_labeled()
        .unwrap();
    let (sheets, labels) = embed_labeled(&jittered);
    let j_chamfer = cluster_ari(&sheets, &labels, Aggregator::Chamfer, 7);
    let j_hausdorff = cluster_ari(&sheets, &labels, Aggregator::Hausdorff, 7);
    ensure(j_hausdorff <= j_chamfer, || {
        format!("jittered: hausdorff ARI {j_hausdorff} > chamfer ARI {j_chamfer}")
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "separable chamfer ARI {chamfer_ari:.2}; jittered chamfer {j_chamfer:.3} >= hausdorff {j_hausdorff:.3}; {elapsed:.1?} single-threaded"
    ))
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn sweep_mechanics() -> Outcome {
    let specs: Vec<_> = builtin_specs(Preset::Jittered).into_iter().take(3).collect();
    let corpus = generate_corpus(&specs, 3, 11).unwrap().to_labeled().unwrap();
    let (sheets, labels) = embed_labeled(&corpus);
    let cfg = SweepConfig {
        aggregator: Aggregator::Chamfer,
        k: 3,
        seed: 0,
        step: 0.1,
        metric: MetricConfig::default(),
        workers: 0,
    };
    let run = || {
        let grid = sweep_weights(&sheets, &labels, &cfg).unwrap();
        let mut bytes = grid.ari_csv().into_bytes();
        bytes.extend(grid.silhouette_csv().into_bytes());
        bytes.extend(serde_json::to_vec(&grid).unwrap());
        (grid, digest(&bytes))
    };
    let (grid, first) = run();
    let (_, second) = run();
    ensure(grid.points.len() == 66, || format!("{} feasible points", grid.points.len()))?;
    ensure(
        grid.points
            .iter()
            .all(|p| p.weights.type_() + p.weights.semantic() <= 1.0 + 1e-12),
        || "infeasible point present".into(),
    )?;
    ensure(grid.point(0.5, 0.3).is_some(), || "default weights missing".into())?;
    let csv = grid.ari_csv();
    let rows: Vec<&str> = csv.lines().collect();
    ensure(rows.len() == 12, || format!("{} csv lines", rows.len()))?;
    for (t, line) in rows[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').skip(1).collect();
        for (s, f) in fields.iter().enumerate() {
            ensure(f.is_empty() == (t + s > 10), || format!("cell ({t}, {s}) = {f:?}"))?;
        }
    }
    ensure(first == second, || format!("digests differ: {first:x} vs {second:x}"))?;
    Ok(format!("66 points, infeasible cells empty, digest {first:016x} on both runs"))
}

fn parallel_determinism() -> Outcome {
    let corpus = generate_corpus(&builtin_specs(Preset::Jittered), 6, 3)
        .unwrap()
        .to_labeled()
        .unwrap();
    let (sheets, _) = embed_labeled(&corpus);
    let cfg = MetricConfig::default();
    let mut out = String::new();
    for agg in [Aggregator::Chamfer, Aggregator::Hausdorff] {
        let one = distance_matrix(&sheets, agg, &cfg, EngineOptions { workers: 1, progress: None }).unwrap();
        let eight = distance_matrix(&sheets, agg, &cfg, EngineOptions { workers: 8, progress: None }).unwrap();
        record(&one);
        record(&eight);
        let bits = |m: &DistanceMatrix| m.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&one) == bits(&eight), || format!("{agg}: 1 vs 8 workers differ"))?;
        out = format!("{} sheets, both aggregators bitwise identical", one.len());
    }
    Ok(out)
}

fn boundedness() -> Outcome {
    // Extra matrices over random corpora with random weights.
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
    let pool: Vec<Arc<[f64]>> = (0..32).map(|_| random_unit(16, &mut rng)).collect();
    for _ in 0..20 {
        let sheets: Vec<_> = (0..8)
            .map(|i| {
                let rows = rng.random_range(1..=20);
                let cols = rng.random_range(1..=10);
                let cells = rng.random_range(1..=60);
                random_sheet(&format!("s{i}"), rows, cols, cells, &pool, &mut rng)
            })
            .collect();
        let cfg = MetricConfig::with_weights(random_weights(&mut rng));
        for agg in [Aggregator::Chamfer, Aggregator::Hausdorff] {
            record(&distance_matrix(&sheets, agg, &cfg, EngineOptions::default()).unwrap());
        }
    }
    let matrices = MATRICES.lock().unwrap();
    let mut entries = 0usize;
    for m in matrices.iter() {
        for &v in m.values() {
            ensure((0.0..=1.0).contains(&v), || format!("entry {v} outside [0, 1]"))?;
            entries += 1;
        }
    }
    Ok(format!("{} matrices, {entries} entries in [0, 1]", matrices.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric axioms", metric_axioms),
        ("component correctness", component_correctness),
        ("aggregation oracle", aggregation_oracle),
        ("ARI oracle", ari_oracle),
        ("silhouette oracle", silhouette_oracle),
        ("PAM quality", pam_quality),
        ("desk-scale clustering table", desk_scale_table),
        ("sweep mechanics", sweep_mechanics),
        ("parallel determinism", parallel_determinism),
        // Last: checks every matrix recorded by the criteria above.
        ("boundedness", boundedness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>())));
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
