//! Run configuration: built-in defaults, then `sheetdist.json`, then the
//! provider environment variable, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sheetdist::aggregate::Aggregator;
use sheetdist::metric::{MetricConfig, SpatialNorm, Weights};
use sheetdist::typing::TypeGranularity;

use crate::CliError;

pub const CONFIG_FILE: &str = "sheetdist.json";
pub const PROVIDER_ENV: &str = "SHEETDIST_PROVIDER_URL";

/// Where semantic vectors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provider {
    Hash,
    Http(String),
}

impl FromStr for Provider {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let url = match s {
            "hash" => return Ok(Provider::Hash),
            _ if s.starts_with("http://") || s.starts_with("https://") => s,
            _ => s.strip_prefix("http:").unwrap_or(""),
        };
        if url.starts_with("http://") || url.starts_with("https://") {
            Ok(Provider::Http(url.to_string()))
        } else {
            Err(format!("provider must be `hash` or `http:<url>`, got `{s}`"))
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provider::Hash => f.write_str("hash"),
            Provider::Http(url) => write!(f, "http:{url}"),
        }
    }
}

impl Serialize for Provider {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Provider {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Fully resolved configuration, echoed into every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
    pub weights: Weights,
    pub aggregator: Aggregator,
    /// `None` means one cluster per ground-truth family.
    pub k: Option<usize>,
    pub provider: Provider,
    /// Vector length requested from the provider.
    pub dimension: usize,
    pub spatial_norm: SpatialNorm,
    pub type_granularity: TypeGranularity,
    /// Worker threads for the parallel stages; 0 means one per core.
    pub workers: usize,
    pub seed: u64,
    pub sweep_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_dir: PathBuf::from("corpus"),
            output_dir: PathBuf::from("out"),
            weights: Weights::DEFAULT,
            aggregator: Aggregator::Chamfer,
            k: None,
            provider: Provider::Hash,
            dimension: sheetdist::embed::DEFAULT_DIMENSION,
            spatial_norm: SpatialNorm::Pair,
            type_granularity: TypeGranularity::Code,
            workers: 0,
            seed: 0,
            sweep_step: 0.1,
        }
    }
}

/// Any subset of [`RunConfig`], as found in a config file or on the
/// command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub corpus_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub weights: Option<Weights>,
    pub aggregator: Option<Aggregator>,
    pub k: Option<usize>,
    pub provider: Option<Provider>,
    pub dimension: Option<usize>,
    pub spatial_norm: Option<SpatialNorm>,
    pub type_granularity: Option<TypeGranularity>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub sweep_step: Option<f64>,
}

impl RunConfig {
    fn apply(&mut self, p: PartialConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = p.$field { self.$field = v; })*
            };
        }
        take!(corpus_dir, output_dir, weights, aggregator, provider, dimension, spatial_norm,
              type_granularity, workers, seed, sweep_step);
        if p.k.is_some() {
            self.k = p.k;
        }
    }

    /// Resolves the configuration. `file` is the explicit `--config` path;
    /// without one, `sheetdist.json` in the working directory is used if it
    /// exists.
    pub fn resolve(
        file: Option<&Path>,
        env_provider: Option<String>,
        flags: PartialConfig,
    ) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        let path = match file {
            Some(p) => Some(p.to_path_buf()),
            None => Some(PathBuf::from(CONFIG_FILE)).filter(|p| p.is_file()),
        };
        if let Some(path) = path {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let partial: PartialConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            cfg.apply(partial);
        }
        if let Some(url) = env_provider.filter(|u| !u.is_empty()) {
            cfg.provider = Provider::Http(url);
        }
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.k == Some(0) {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        if self.dimension == 0 {
            return Err(CliError::Usage("dimension must be at least 1".into()));
        }
        sheetdist::eval::grid_steps(self.sweep_step).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn metric(&self) -> MetricConfig {
        MetricConfig {
            weights: self.weights,
            spatial_norm: self.spatial_norm,
            type_granularity: self.type_granularity,
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
