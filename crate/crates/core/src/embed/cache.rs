//! Persistent embedding cache.
//!
//! On disk the cache is an append-only file:
//!
//! ```text
//! header  : b"SDEMBC01"
//! record  : key_hash u64 LE | text_len u32 LE | dim u32 LE | dim x f64 LE
//! ```
//!
//! `key_hash` is FNV-1a 64 over `provider name ++ 0xFF ++ text bytes` and
//! `text_len` is the byte length of the text. A truncated trailing record
//! (for example after a crash mid-append) is ignored on load and overwritten
//! by the next append.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::hash::Hasher;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use fnv::FnvHasher;

use super::EmbedError;

const MAGIC: &[u8; 8] = b"SDEMBC01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    hash: u64,
    text_len: u32,
}

impl CacheKey {
    pub fn new(provider: &str, text: &str) -> Self {
        let mut h = FnvHasher::default();
        h.write(provider.as_bytes());
        h.write(&[0xFF]);
        h.write(text.as_bytes());
        CacheKey {
            hash: h.finish(),
            text_len: text.len() as u32,
        }
    }
}

/// Thread-safe map from `(provider, text)` to a unit vector, optionally
/// backed by a file. Reads take a shared lock; appends are serialized.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Arc<[f64]>>>,
    file: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a cache file and loads every complete record.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let io = |source| EmbedError::Cache {
            path: path.to_path_buf(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;

        let mut entries = HashMap::new();
        let valid_len = if bytes.is_empty() {
            file.write_all(MAGIC).map_err(io)?;
            MAGIC.len()
        } else {
            if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
                return Err(EmbedError::CacheFormat(path.to_path_buf()));
            }
            parse_records(&bytes, &mut entries)
        };
        file.set_len(valid_len as u64).map_err(io)?;
        file.seek(SeekFrom::Start(valid_len as u64)).map_err(io)?;

        Ok(EmbeddingCache {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, provider: &str, text: &str) -> Option<Arc<[f64]>> {
        let key = CacheKey::new(provider, text);
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&key)
            .cloned()
    }

    /// Inserts vectors in order and appends the new ones to the backing
    /// file. Keys already present are left untouched.
    pub fn insert_many<'a>(
        &self,
        provider: &str,
        items: impl IntoIterator<Item = (&'a str, Arc<[f64]>)>,
    ) -> Result<(), EmbedError> {
        let mut entries = self.entries.write().expect("cache lock poisoned");
        let mut file = self
            .file
            .as_ref()
            .map(|f| f.lock().expect("cache file lock poisoned"));
        for (text, vector) in items {
            let key = CacheKey::new(provider, text);
            if entries.contains_key(&key) {
                continue;
            }
            if let Some(w) = file.as_mut() {
                write_record(&mut **w, key, &vector).map_err(|source| EmbedError::Cache {
                    path: self.path.clone().unwrap_or_default(),
                    source,
                })?;
            }
            entries.insert(key, vector);
        }
        if let Some(w) = file.as_mut() {
            w.flush().map_err(|source| EmbedError::Cache {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        Ok(())
    }
}

fn write_record(w: &mut impl Write, key: CacheKey, vector: &[f64]) -> std::io::Result<()> {
    w.write_all(&key.hash.to_le_bytes())?;
    w.write_all(&key.text_len.to_le_bytes())?;
    w.write_all(&(vector.len() as u32).to_le_bytes())?;
    for x in vector {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Returns the length of the valid prefix.
fn parse_records(bytes: &[u8], entries: &mut HashMap<CacheKey, Arc<[f64]>>) -> usize {
    let mut pos = MAGIC.len();
    loop {
        let Some(head) = bytes.get(pos..pos + 16) else {
            return pos;
        };
        let hash = u64::from_le_bytes(head[0..8].try_into().unwrap());
        let text_len = u32::from_le_bytes(head[8..12].try_into().unwrap());
        let dim = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        let Some(body) = bytes.get(pos + 16..pos + 16 + dim * 8) else {
            return pos;
        };
        let vector: Arc<[f64]> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.entry(CacheKey { hash, text_len }).or_insert(vector);
        pos += 16 + dim * 8;
    }
}
