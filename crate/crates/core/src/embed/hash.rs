use std::hash::Hasher;

use fnv::FnvHasher;

use super::{normalize, EmbedError, EmbeddingProvider};

/// Deterministic offline embedder: signed feature hashing of character
/// trigrams.
///
/// The text is framed with start/end markers before the trigrams are taken,
/// so even one-character texts produce a feature. Each trigram's FNV-1a hash
/// picks a bucket (low bits) and a sign (bit 63).
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    name: String,
}

impl HashEmbedder {
    pub const MIN_DIMENSION: usize = 8;

    pub fn new(dimension: usize) -> Result<Self, EmbedError> {
        if dimension < Self::MIN_DIMENSION {
            return Err(EmbedError::Dimension(format!(
                "hash embedder needs at least {} dimensions, got {dimension}",
                Self::MIN_DIMENSION
            )));
        }
        Ok(HashEmbedder {
            dimension,
            name: format!("hash-trigram-{dimension}"),
        })
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(super::DEFAULT_DIMENSION).expect("default dimension is valid")
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| hash_embed(t, self.dimension)).collect())
    }
}

/// Embeds `text` into a unit vector of length `dimension` (at least 8).
pub fn hash_embed(text: &str, dimension: usize) -> Vec<f64> {
    assert!(dimension >= HashEmbedder::MIN_DIMENSION, "dimension below 8");
    let framed: Vec<char> = std::iter::once('\u{2}')
        .chain(text.chars())
        .chain(std::iter::once('\u{3}'))
        .collect();
    let mut v = vec![0.0f64; dimension];
    let mut buf = [0u8; 12];
    for gram in framed.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let mut h = FnvHasher::default();
        h.write(&buf[..len]);
        let h = h.finish();
        let bucket = (h % dimension as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    if v.iter().all(|&x| x == 0.0) {
        // Every trigram cancelled out; fall back to a whole-text bucket.
        let mut h = FnvHasher::default();
        h.write(text.as_bytes());
        v[(h.finish() % dimension as u64) as usize] = 1.0;
    }
    normalize(&mut v);
    v
}
