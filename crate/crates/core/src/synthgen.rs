//! Synthetic labelled corpora of spreadsheet template families.
//!
//! Each [`TemplateSpec`] fixes a header row and a per-column type
//! signature. Instances of a family share those and differ in row count and
//! cell values; optional jitter drops data cells and pushes the table down
//! by a blank row. The seven built-in families are invented schemas, named
//! after common public-data template families.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{parse_csv, LabeledCorpus};
use crate::typing::CellType;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid template spec {family}: {reason}")]
    InvalidSpec { family: String, reason: String },
    #[error("need at least {0}")]
    TooSmall(&'static str),
    #[error("spec file: {0}")]
    SpecFile(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Probability that a data cell is left blank.
    pub drop_cell_prob: f64,
    /// Probability that the table starts one row lower.
    pub extra_header_offset_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub family_name: String,
    pub header_row: Vec<String>,
    pub column_types: Vec<CellType>,
    /// Inclusive range of data rows per instance.
    pub n_rows_range: (usize, usize),
    /// Token pool per column. An empty pool means values are synthesized
    /// from the column type.
    pub vocab: Vec<Vec<String>>,
    #[serde(default)]
    pub jitter: Jitter,
}

impl TemplateSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: String| {
            Err(SynthError::InvalidSpec {
                family: self.family_name.clone(),
                reason,
            })
        };
        let cols = self.header_row.len();
        if cols == 0 {
            return fail("empty header row".into());
        }
        if self.column_types.len() != cols || self.vocab.len() != cols {
            return fail(format!(
                "{cols} headers, {} column types, {} vocab pools",
                self.column_types.len(),
                self.vocab.len()
            ));
        }
        let (lo, hi) = self.n_rows_range;
        if lo == 0 || lo > hi {
            return fail(format!("bad row range ({lo}, {hi})"));
        }
        for p in [self.jitter.drop_cell_prob, self.jitter.extra_header_offset_prob] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("probability {p} outside [0, 1]"));
            }
        }
        if self.family_name.is_empty()
            || self.family_name.contains(['/', '\\'])
            || self.family_name.starts_with('.')
        {
            return fail("family name must be a plain directory name".into());
        }
        Ok(())
    }
}

/// Jitter presets for the built-in families.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// No jitter: families differ only in their templates.
    #[default]
    Separable,
    /// 15% dropped data cells, 30% of instances shifted down a row.
    Jittered,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "separable" => Ok(Preset::Separable),
            "jittered" => Ok(Preset::Jittered),
            _ => Err(format!("preset must be `separable` or `jittered`, got `{s}`")),
        }
    }
}

impl Preset {
    pub fn jitter(self) -> Jitter {
        match self {
            Preset::Separable => Jitter::default(),
            Preset::Jittered => Jitter {
                drop_cell_prob: 0.15,
                extra_header_offset_prob: 0.3,
            },
        }
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn spec(
    family: &str,
    columns: &[(&str, CellType, &[&str])],
    rows: (usize, usize),
    jitter: Jitter,
) -> TemplateSpec {
    TemplateSpec {
        family_name: family.to_string(),
        header_row: columns.iter().map(|c| c.0.to_string()).collect(),
        column_types: columns.iter().map(|c| c.1).collect(),
        n_rows_range: rows,
        vocab: columns.iter().map(|c| strings(c.2)).collect(),
        jitter,
    }
}

/// The seven built-in families.
pub fn builtin_specs(preset: Preset) -> Vec<TemplateSpec> {
    use CellType::*;
    let j = preset.jitter();
    vec![
        spec(
            "catalog_products",
            &[
                ("SKU", String, &["CP-A100", "CP-A215", "CP-B310", "CP-B442", "CP-C518", "CP-C733", "CP-D901"]),
                ("Product Name", String, &["Desk Lamp", "Office Chair", "Standing Desk", "Monitor Arm", "Bookshelf", "Filing Cabinet", "Whiteboard"]),
                ("Category", String, &["Lighting", "Seating", "Desks", "Accessories", "Storage"]),
                ("Unit Price", Currency, &[]),
                ("Units In Stock", Integer, &[]),
                ("Rating", Float, &[]),
            ],
            (8, 14),
            j,
        ),
        spec(
            "census",
            &[
                ("Region", String, &["Northshire", "Eastvale", "Westmoor", "Southbridge", "Highland", "Lowfield", "Riverside"]),
                ("Census Year", Integer, &["2001", "2006", "2011", "2016", "2021"]),
                ("Population", Integer, &[]),
                ("Households", Integer, &[]),
                ("Median Age", Float, &[]),
                ("Growth Rate", Percentage, &[]),
            ],
            (10, 16),
            j,
        ),
        spec(
            "countries_metadata",
            &[
                ("Country", String, &["Norway", "Chile", "Kenya", "Vietnam", "Portugal", "Canada", "Egypt", "Peru"]),
                ("Capital City", String, &["Oslo", "Santiago", "Nairobi", "Hanoi", "Lisbon", "Ottawa", "Cairo", "Lima"]),
                ("Continent", String, &["Europe", "South America", "Africa", "Asia", "North America"]),
                ("ISO Code", String, &["NOR", "CHL", "KEN", "VNM", "PRT", "CAN", "EGY", "PER"]),
                ("Area (km2)", Integer, &[]),
                ("Density", ScientificNotation, &[]),
                ("Statistics Office", Email, &[]),
            ],
            (8, 14),
            j,
        ),
        spec(
            "product_manycols",
            &[
                ("Item", String, &["widget", "gadget", "gizmo", "sprocket", "doohickey", "thingamajig"]),
                ("Jan", Integer, &[]),
                ("Feb", Integer, &[]),
                ("Mar", Integer, &[]),
                ("Apr", Integer, &[]),
                ("May", Integer, &[]),
                ("Jun", Integer, &[]),
                ("Jul", Integer, &[]),
                ("Aug", Integer, &[]),
                ("H1 Revenue", Currency, &[]),
            ],
            (5, 9),
            j,
        ),
        spec(
            "sport_season",
            &[
                ("Match Date", Date, &[]),
                ("Home Team", String, &["Rovers", "United", "Athletic", "Wanderers", "City", "Albion", "Harriers"]),
                ("Away Team", String, &["Rovers", "United", "Athletic", "Wanderers", "City", "Albion", "Harriers"]),
                ("Score", Other, &["0-0", "1-0", "2-1", "3-2", "1-1", "0-2", "4-1"]),
                ("Kick-off", Time, &[]),
                ("Attendance", Integer, &[]),
            ],
            (10, 18),
            j,
        ),
        spec(
            "strategic_focus",
            &[
                ("Objective", String, &["Expand retail footprint", "Reduce churn", "Launch loyalty scheme", "Modernise billing", "Improve onboarding", "Cut logistics cost"]),
                ("Owner", String, &["A. Moreau", "K. Osei", "L. Tanaka", "R. Silva", "M. Novak"]),
                ("Owner Email", Email, &[]),
                ("Priority", String, &["High", "Medium", "Low"]),
                ("Progress", Percentage, &[]),
                ("Due Date", Date, &[]),
            ],
            (5, 10),
            j,
        ),
        spec(
            "triathlon",
            &[
                ("Athlete", String, &["J. Brown", "S. Keller", "P. Dubois", "H. Larsen", "T. Okafor", "M. Rossi", "E. Varga", "N. Sato"]),
                ("Nationality", String, &["GBR", "GER", "FRA", "NOR", "NGR", "ITA", "HUN", "JPN"]),
                ("Swim", Time, &[]),
                ("Bike", Time, &[]),
                ("Run", Time, &[]),
                ("Finish Time", Time, &[]),
                ("Place", Integer, &[]),
            ],
            (10, 16),
            j,
        ),
    ]
}

/// Reads a JSON array of [`TemplateSpec`]s.
pub fn load_specs(path: &Path) -> Result<Vec<TemplateSpec>, SynthError> {
    let specs: Vec<TemplateSpec> = serde_json::from_slice(&fs::read(path)?)?;
    specs.iter().try_for_each(TemplateSpec::validate)?;
    Ok(specs)
}

fn synthesize(t: CellType, rng: &mut ChaCha8Rng) -> String {
    match t {
        CellType::Integer => rng.random_range(0u32..100_000).to_string(),
        CellType::Float => format!("{:.2}", rng.random_range(0.0..1000.0)),
        CellType::Percentage => format!("{:.1}%", rng.random_range(-10.0..100.0)),
        CellType::ScientificNotation => format!("{:.2e}", rng.random_range(1.0..1e6)),
        CellType::Currency => format!("${:.2}", rng.random_range(1.0..5000.0)),
        CellType::Date => format!(
            "{}-{:02}-{:02}",
            rng.random_range(2015..=2024),
            rng.random_range(1..=12),
            rng.random_range(1..=28)
        ),
        CellType::Time => format!("{:02}:{:02}", rng.random_range(0..24), rng.random_range(0..60)),
        CellType::Email => format!("contact{}@example.org", rng.random_range(1..1000)),
        CellType::Other => ["-", "--", "#", "*", "/"].choose(rng).unwrap().to_string(),
        CellType::String => format!("item {}", rng.random_range(1..1000)),
    }
}

/// One generated spreadsheet.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSheet {
    pub family: String,
    /// Path relative to the corpus root, `family/family_NNN.csv`.
    pub sheet_id: String,
    pub rows: Vec<Vec<String>>,
}

impl SyntheticSheet {
    pub fn to_csv(&self) -> Result<Vec<u8>, SynthError> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        wtr.into_inner().map_err(|e| SynthError::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sheets: Vec<SyntheticSheet>,
}

/// Marker written at the root of generated corpora.
pub const MARKER_FILE: &str = ".sheetdist-synthetic";

impl SyntheticCorpus {
    /// The corpus as ingestion would see it after a round trip through disk.
    pub fn to_labeled(&self) -> Result<LabeledCorpus, SynthError> {
        let mut grids = Vec::with_capacity(self.sheets.len());
        let mut labels = BTreeMap::new();
        for s in &self.sheets {
            let (grid, _) = parse_csv(&s.to_csv()?, &s.sheet_id);
            labels.insert(s.sheet_id.clone(), s.family.clone());
            grids.push(grid);
        }
        grids.sort_by(|a, b| a.sheet_id.cmp(&b.sheet_id));
        Ok(LabeledCorpus { grids, labels })
    }

    /// Writes the directory tree that [`crate::ingest::load_corpus`] reads.
    pub fn write_to(&self, root: &Path) -> Result<LabeledCorpus, SynthError> {
        fs::create_dir_all(root)?;
        fs::write(root.join(MARKER_FILE), b"")?;
        for s in &self.sheets {
            let path = root.join(&s.sheet_id);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, s.to_csv()?)?;
        }
        self.to_labeled()
    }
}

/// Generates `per_family` instances of every spec from a single seeded
/// stream. The output depends only on the arguments.
pub fn generate_corpus(
    specs: &[TemplateSpec],
    per_family: usize,
    seed: u64,
) -> Result<SyntheticCorpus, SynthError> {
    if specs.len() < 2 {
        return Err(SynthError::TooSmall("two template specs"));
    }
    if per_family < 2 {
        return Err(SynthError::TooSmall("two instances per family"));
    }
    specs.iter().try_for_each(TemplateSpec::validate)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sheets = Vec::with_capacity(specs.len() * per_family);
    for spec in specs {
        for i in 0..per_family {
            let mut rows = Vec::new();
            let width = spec.header_row.len();
            if rng.random_bool(spec.jitter.extra_header_offset_prob) {
                rows.push(vec![String::new(); width]);
            }
            rows.push(spec.header_row.clone());
            let (lo, hi) = spec.n_rows_range;
            let n = rng.random_range(lo..=hi);
            for _ in 0..n {
                let row = (0..width)
                    .map(|c| {
                        let value = match spec.vocab[c].choose(&mut rng) {
                            Some(token) => token.clone(),
                            None => synthesize(spec.column_types[c], &mut rng),
                        };
                        if rng.random_bool(spec.jitter.drop_cell_prob) {
                            String::new()
                        } else {
                            value
                        }
                    })
                    .collect();
                rows.push(row);
            }
            sheets.push(SyntheticSheet {
                family: spec.family_name.clone(),
                sheet_id: format!("{0}/{0}_{1:03}.csv", spec.family_name, i),
                rows,
            });
        }
    }
    Ok(SyntheticCorpus { sheets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typing::detect_type;

    #[test]
    fn paper_scale_corpus() {
        let c = generate_corpus(&builtin_specs(Preset::Separable), 19, 7).unwrap();
        assert_eq!(c.sheets.len(), 133);
        let labeled = c.to_labeled().unwrap();
        assert_eq!(labeled.families().len(), 7);
        assert!(labeled.grids.iter().all(|g| !g.is_empty()));
    }

    #[test]
    fn same_seed_same_bytes() {
        let specs = builtin_specs(Preset::Jittered);
        let a = generate_corpus(&specs, 3, 99).unwrap();
        let b = generate_corpus(&specs, 3, 99).unwrap();
        let c = generate_corpus(&specs, 3, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);

        let dir = tempfile::tempdir().unwrap();
        a.write_to(&dir.path().join("one")).unwrap();
        b.write_to(&dir.path().join("two")).unwrap();
        for s in &a.sheets {
            let x = fs::read(dir.path().join("one").join(&s.sheet_id)).unwrap();
            let y = fs::read(dir.path().join("two").join(&s.sheet_id)).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn unjittered_instances_differ_only_in_data_rows() {
        let specs = builtin_specs(Preset::Separable);
        let c = generate_corpus(&specs, 2, 1).unwrap();
        for pair in c.sheets.chunks(2) {
            assert_eq!(pair[0].family, pair[1].family);
            assert_eq!(pair[0].rows[0], pair[1].rows[0]);
            assert_ne!(pair[0].rows[1..], pair[1].rows[1..]);
        }
    }

    #[test]
    fn values_match_declared_types() {
        let specs = builtin_specs(Preset::Separable);
        let c = generate_corpus(&specs, 4, 3).unwrap();
        for (spec, sheets) in specs.iter().zip(c.sheets.chunks(4)) {
            for s in sheets {
                for row in &s.rows[1..] {
                    for (value, &t) in row.iter().zip(&spec.column_types) {
                        assert_eq!(detect_type(value), t, "{} {value:?}", spec.family_name);
                    }
                }
            }
        }
    }

    #[test]
    fn jitter_applies() {
        let mut specs = builtin_specs(Preset::Separable);
        for s in &mut specs {
            s.jitter = Jitter {
                drop_cell_prob: 1.0,
                extra_header_offset_prob: 1.0,
            };
        }
        let c = generate_corpus(&specs, 2, 0).unwrap();
        for s in &c.sheets {
            assert!(s.rows[0].iter().all(String::is_empty));
            assert!(s.rows[2..].iter().flatten().all(String::is_empty));
            let grid = &c.to_labeled().unwrap();
            let g = grid.grids.iter().find(|g| g.sheet_id == s.sheet_id).unwrap();
            assert!(g.cells().iter().all(|cell| cell.row == 1));
        }
    }

    #[test]
    fn validation() {
        let specs = builtin_specs(Preset::Separable);
        assert!(generate_corpus(&specs[..1], 2, 0).is_err());
        assert!(generate_corpus(&specs, 1, 0).is_err());
        let mut bad = specs.clone();
        bad[0].column_types.pop();
        assert!(matches!(generate_corpus(&bad, 2, 0), Err(SynthError::InvalidSpec { .. })));
        let mut bad = specs.clone();
        bad[1].jitter.drop_cell_prob = 1.5;
        assert!(generate_corpus(&bad, 2, 0).is_err());
        let mut bad = specs;
        bad[1].family_name = "../escape".into();
        assert!(generate_corpus(&bad, 2, 0).is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("specs.json");
        let specs = builtin_specs(Preset::Jittered);
        fs::write(&path, serde_json::to_vec(&specs).unwrap()).unwrap();
        assert_eq!(load_specs(&path).unwrap(), specs);
    }
}
