use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{normalize, EmbedError, EmbeddingProvider, DEFAULT_DIMENSION};

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    model: String,
    dimension: usize,
    embeddings: Vec<Vec<f64>>,
}

/// Client for an embedding service speaking the `/embed` JSON protocol:
///
/// ```text
/// POST {base}/embed   {"texts": ["...", ...]}
/// 200                 {"model": "...", "dimension": D, "embeddings": [[...], ...]}
/// ```
///
/// Rows are returned in request order. Any non-200 status, a dimension
/// other than the declared one, or a row count mismatch is an error.
/// Vectors are renormalized on receipt so the unit-norm contract holds to
/// full precision.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    endpoint: String,
    dimension: usize,
    name: String,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(base_url: &str) -> Self {
        Self::with_dimension(base_url, DEFAULT_DIMENSION)
    }

    pub fn with_dimension(base_url: &str, dimension: usize) -> Self {
        let base = base_url.trim_end_matches('/');
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpProvider {
            endpoint: format!("{base}/embed"),
            dimension,
            name: format!("http:{base}"),
            agent,
        }
    }
}

impl EmbeddingProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let provider_err = |msg: String| EmbedError::Provider(format!("{}: {msg}", self.endpoint));
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| provider_err(e.to_string()))?;
        let status = resp.status();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(provider_err(format!("status {status}: {}", body.trim())));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| provider_err(format!("bad response body: {e}")))?;
        if body.dimension != self.dimension {
            return Err(EmbedError::Dimension(format!(
                "model {} reports dimension {}, expected {}",
                body.model, body.dimension, self.dimension
            )));
        }
        if body.embeddings.len() != texts.len() {
            return Err(provider_err(format!(
                "{} embeddings for {} texts",
                body.embeddings.len(),
                texts.len()
            )));
        }
        body.embeddings
            .into_iter()
            .map(|mut v| {
                if v.len() != self.dimension {
                    return Err(EmbedError::Dimension(format!(
                        "embedding row has {} values, expected {}",
                        v.len(),
                        self.dimension
                    )));
                }
                if !v.iter().all(|x| x.is_finite()) || v.iter().all(|&x| x == 0.0) {
                    return Err(provider_err("zero or non-finite embedding".into()));
                }
                normalize(&mut v);
                Ok(v)
            })
            .collect()
    }
}
