//! Run configuration: a TOML document, then command-line overrides, then
//! environment overrides for endpoints and credentials.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twin_core::dkps::DkpsMode;
use twin_core::prompts::PromptMode;
use twin_core::providers::ProviderConfig;
use twin_core::stats::{DEFAULT_FOLDS, DEFAULT_K_GRID};

use crate::CliError;

/// Environment prefixes for the two providers (`<PREFIX>_ENDPOINT`,
/// `<PREFIX>_API_KEY`).
pub const GENERATION_ENV: &str = "TWIN_GENERATION";
pub const EMBEDDING_ENV: &str = "TWIN_EMBEDDING";

/// Persona vocabulary size used by mock generators.
pub const MOCK_VOCAB_SIZE: usize = 30;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    pub tweets: Option<PathBuf>,
    pub roster: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuringParams {
    pub m: usize,
    pub prefix_len: usize,
    pub mode: PromptMode,
    pub cutoff: String,
    pub temperature: f64,
}

impl Default for TuringParams {
    fn default() -> Self {
        TuringParams {
            m: 100,
            prefix_len: 20,
            mode: PromptMode::PersonaRag,
            cutoff: "2023-01-01T00:00:00Z".into(),
            temperature: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DkpsParams {
    pub replicates: usize,
    pub mode: DkpsMode,
    pub d: Option<usize>,
    pub normalize_rows: bool,
    pub temperature: f64,
    pub k_grid: Vec<usize>,
    pub folds: usize,
}

impl Default for DkpsParams {
    fn default() -> Self {
        DkpsParams {
            replicates: 20,
            mode: DkpsMode::Generated,
            d: None,
            normalize_rows: true,
            temperature: 0.7,
            k_grid: DEFAULT_K_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicParams {
    pub n_seed: usize,
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for TopicParams {
    fn default() -> Self {
        TopicParams {
            n_seed: 100_000,
            lambda: 1e-4,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipParams {
    pub epsilon: f64,
}

impl Default for FlipParams {
    fn default() -> Self {
        FlipParams {
            epsilon: twin_core::flipscore::DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker cap; 0 means one per available core.
    pub jobs: usize,
    pub out: PathBuf,
    /// Mock mode (`echo`, `planted`, `disjoint`, `noisy[:f]`, `refuse[:p]`)
    /// in place of remote providers.
    pub mock: Option<String>,
    pub exclude_retweets: bool,
    /// Refusal pattern file, one pattern per line.
    pub refusal_patterns: Option<PathBuf>,
    /// Directory for cached generation responses.
    pub cache_dir: Option<PathBuf>,
    pub corpus: CorpusPaths,
    pub generation: ProviderConfig,
    pub embedding: ProviderConfig,
    pub turing: TuringParams,
    pub dkps: DkpsParams,
    pub topics: TopicParams,
    pub flipscore: FlipParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 0,
            out: PathBuf::from("out"),
            mock: None,
            exclude_retweets: false,
            refusal_patterns: None,
            cache_dir: None,
            corpus: CorpusPaths::default(),
            generation: ProviderConfig::default(),
            embedding: ProviderConfig::default(),
            turing: TuringParams::default(),
            dkps: DkpsParams::default(),
            topics: TopicParams::default(),
            flipscore: FlipParams::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config file. Relative paths inside it resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.out);
        for p in [
            &mut config.corpus.tweets,
            &mut config.corpus.roster,
            &mut config.refusal_patterns,
            &mut config.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        Ok(config)
    }

    /// Endpoint and credential overrides from the environment.
    pub fn apply_env(&mut self) {
        self.generation.apply_env(GENERATION_ENV);
        self.embedding.apply_env(EMBEDDING_ENV);
    }

    pub fn resolved_jobs(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
