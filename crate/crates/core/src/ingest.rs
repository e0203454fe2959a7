//! Corpus ingestion: CSV files on disk become sparse [`Grid`]s.
//!
//! A corpus is a directory whose immediate subdirectories name template
//! families. Every `.csv` file below a family directory becomes one grid
//! labelled with that family.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no spreadsheets found under {0}")]
    NoSpreadsheets(PathBuf),
    #[error("corpus root {path} is not readable: {source}")]
    Root {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write csv: {0}")]
    Write(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One non-empty cell as read from the source file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RawCell {
    pub row: usize,
    pub col: usize,
    pub text: String,
}

/// A parsed spreadsheet: the set of its non-empty cells.
///
/// Cells are kept sorted by `(row, col)` and positions are unique.
/// `n_rows`/`n_cols` are one past the largest occupied index, so a grid
/// with no cells has both set to zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub sheet_id: String,
    cells: Vec<RawCell>,
    n_rows: usize,
    n_cols: usize,
}

impl Grid {
    /// Builds a grid from arbitrary cells. Whitespace-only cells are
    /// dropped; for repeated positions the last one wins.
    pub fn from_cells(sheet_id: impl Into<String>, cells: impl IntoIterator<Item = RawCell>) -> Self {
        let mut by_pos: BTreeMap<(usize, usize), String> = BTreeMap::new();
        for c in cells {
            if c.text.trim().is_empty() {
                continue;
            }
            by_pos.insert((c.row, c.col), c.text);
        }
        let mut n_rows = 0;
        let mut n_cols = 0;
        let cells: Vec<RawCell> = by_pos
            .into_iter()
            .map(|((row, col), text)| {
                n_rows = n_rows.max(row + 1);
                n_cols = n_cols.max(col + 1);
                RawCell { row, col, text }
            })
            .collect();
        Grid {
            sheet_id: sheet_id.into(),
            cells,
            n_rows,
            n_cols,
        }
    }

    pub fn cells(&self) -> &[RawCell] {
        &self.cells
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Serializes the grid as a dense CSV of `n_rows` records with
    /// `n_cols` fields each. Re-parsing the output yields the same cells.
    pub fn to_csv(&self) -> Result<Vec<u8>, IngestError> {
        let mut wtr = csv::WriterBuilder::new()
            .flexible(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut iter = self.cells.iter().peekable();
        let mut record = vec![""; self.n_cols];
        for row in 0..self.n_rows {
            record.iter_mut().for_each(|f| *f = "");
            while let Some(cell) = iter.next_if(|c| c.row == row) {
                record[cell.col] = &cell.text;
            }
            wtr.write_record(&record)?;
        }
        wtr.into_inner().map_err(|e| IngestError::Io(e.into_error()))
    }
}

/// A non-fatal problem found while loading, tied to the file it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadWarning {
    pub file: String,
    pub warning: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub warnings: Vec<LoadWarning>,
}

impl LoadReport {
    pub fn push(&mut self, file: impl Into<String>, warning: impl Into<String>) {
        self.warnings.push(LoadWarning {
            file: file.into(),
            warning: warning.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.warnings.is_empty()
    }

    /// Human-readable form, one line per warning.
    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.warnings
            .iter()
            .map(|w| format!("warning: {}: {}", w.file, w.warning))
    }
}

/// Grids plus their ground-truth family labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub grids: Vec<Grid>,
    pub labels: BTreeMap<String, String>,
}

impl LabeledCorpus {
    pub fn label_of(&self, sheet_id: &str) -> Option<&str> {
        self.labels.get(sheet_id).map(String::as_str)
    }

    /// Distinct family names, sorted.
    pub fn families(&self) -> Vec<&str> {
        let mut f: Vec<&str> = self.labels.values().map(String::as_str).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Parses CSV bytes into a grid following RFC 4180.
///
/// Records end at `\n`, `\r\n` or a lone `\r` outside quotes; a trailing
/// terminator does not open an extra record. Quoted fields may contain
/// delimiters, doubled quotes and line breaks. A record whose quoting is
/// malformed is re-read from its first physical line with a plain comma
/// split, and a warning is returned for it.
pub fn parse_csv(bytes: &[u8], sheet_id: &str) -> (Grid, Vec<LoadWarning>) {
    let text = String::from_utf8_lossy(bytes);
    let mut warnings = Vec::new();
    if matches!(text, std::borrow::Cow::Owned(_)) {
        warnings.push(LoadWarning {
            file: sheet_id.to_string(),
            warning: "invalid UTF-8 replaced with U+FFFD".to_string(),
        });
    }

    let mut cells = Vec::new();
    let mut pos = 0;
    let mut row = 0;
    while pos < text.len() {
        let fields = match parse_record(&text, pos) {
            Ok((fields, next)) => {
                pos = next;
                fields
            }
            Err(()) => {
                let (line, next) = physical_line(&text, pos);
                warnings.push(LoadWarning {
                    file: sheet_id.to_string(),
                    warning: format!(
                        "record {}: malformed quoting, fell back to comma split",
                        row + 1
                    ),
                });
                pos = next;
                line.split(',').map(str::to_string).collect()
            }
        };
        for (col, field) in fields.into_iter().enumerate() {
            cells.push(RawCell { row, col, text: field });
        }
        row += 1;
    }
    (Grid::from_cells(sheet_id, cells), warnings)
}

/// Parses one record starting at byte `start`. Returns the fields and the
/// offset just past the record terminator.
fn parse_record(text: &str, start: usize) -> Result<(Vec<String>, usize), ()> {
    let bytes = text.as_bytes();
    let mut fields = Vec::new();
    let mut i = start;
    loop {
        let mut field = String::new();
        if bytes.get(i) == Some(&b'"') {
            i += 1;
            let mut seg = i;
            loop {
                match bytes.get(i) {
                    None => return Err(()),
                    Some(b'"') if bytes.get(i + 1) == Some(&b'"') => {
                        field.push_str(&text[seg..=i]);
                        i += 2;
                        seg = i;
                    }
                    Some(b'"') => {
                        field.push_str(&text[seg..i]);
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            match bytes.get(i) {
                None | Some(b',' | b'\n' | b'\r') => {}
                Some(_) => return Err(()),
            }
        } else {
            let seg = i;
            while let Some(&b) = bytes.get(i) {
                match b {
                    b',' | b'\n' | b'\r' => break,
                    b'"' => return Err(()),
                    _ => i += 1,
                }
            }
            field.push_str(&text[seg..i]);
        }
        fields.push(field);
        match bytes.get(i) {
            Some(b',') => i += 1,
            Some(b'\r') if bytes.get(i + 1) == Some(&b'\n') => return Ok((fields, i + 2)),
            Some(b'\n' | b'\r') => return Ok((fields, i + 1)),
            None => return Ok((fields, i)),
            Some(_) => unreachable!("field scan stops only at delimiters"),
        }
    }
}

fn physical_line(text: &str, start: usize) -> (&str, usize) {
    let rest = &text[start..];
    match rest.find(['\n', '\r']) {
        Some(off) => {
            let end = start + off;
            let next = if rest[off..].starts_with("\r\n") { end + 2 } else { end + 1 };
            (&text[start..end], next)
        }
        None => (rest, text.len()),
    }
}

/// Loads every CSV under `root`, labelling each by its top-level
/// subdirectory. Unreadable files and odd layouts are reported, not fatal.
pub fn load_corpus(root: &Path) -> Result<(LabeledCorpus, LoadReport), IngestError> {
    let entries = fs::read_dir(root).map_err(|source| IngestError::Root {
        path: root.to_path_buf(),
        source,
    })?;
    let mut report = LoadReport::default();
    let mut families = Vec::new();
    for entry in entries {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            families.push(path);
        } else if is_csv(&path) {
            report.push(
                relative_id(root, &path),
                "csv outside a family directory ignored",
            );
        }
    }
    families.sort();

    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for family_dir in &families {
        let family = family_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let before = files.len();
        for entry in WalkDir::new(family_dir).sort_by_file_name() {
            match entry {
                Ok(e) if e.file_type().is_file() && is_csv(e.path()) => {
                    files.push((family.clone(), e.into_path()));
                }
                Ok(_) => {}
                Err(err) => report.push(relative_id(root, family_dir), err.to_string()),
            }
        }
        if files.len() == before {
            report.push(family.clone(), "family directory has no csv files");
        }
    }

    let parsed: Vec<_> = files
        .par_iter()
        .map(|(family, path)| {
            let id = relative_id(root, path);
            match fs::read(path) {
                Ok(bytes) => {
                    let (grid, warnings) = parse_csv(&bytes, &id);
                    Ok((family.clone(), grid, warnings))
                }
                Err(err) => Err(LoadWarning {
                    file: id,
                    warning: format!("unreadable: {err}"),
                }),
            }
        })
        .collect();

    let mut grids = Vec::new();
    let mut labels = BTreeMap::new();
    for item in parsed {
        match item {
            Ok((family, grid, warnings)) => {
                report.warnings.extend(warnings);
                if grid.is_empty() {
                    report.push(grid.sheet_id.clone(), "no non-empty cells");
                }
                labels.insert(grid.sheet_id.clone(), family);
                grids.push(grid);
            }
            Err(w) => report.warnings.push(w),
        }
    }
    if grids.is_empty() {
        return Err(IngestError::NoSpreadsheets(root.to_path_buf()));
    }
    grids.sort_by(|a, b| a.sheet_id.cmp(&b.sheet_id));
    Ok((LabeledCorpus { grids, labels }, report))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
