//! Statistical Turing test: can an FLD classifier in an MDS embedding tell a
//! member's real tweets from completions generated for them?

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStore, Timestamp, Tweet};
use crate::numerics::{classical_mds, fld_fit_named, fld_risk, pairwise_euclidean, FldModel};
use crate::prompts::{balanced_filter, completion_prompt, tweet_prefix, PromptConfig, PromptMode, RefusalPolicy};
use crate::providers::{embed_batch, generate_all, EmbeddingProvider, GenerationRequest, Providers};
use crate::retrieval::{index_tweets, SearchFilter};
use crate::synthetic::default_cutoff;
use crate::util::{derive_seed, quantile, rng_from};
use crate::{Error, ErrorKind, Result};

pub const REAL_LABEL: &str = "real";
pub const GENERATED_LABEL: &str = "generated";
pub const CONTROL_LABEL: &str = "real-b";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuringConfig {
    pub cutoff: Timestamp,
    /// Tweets per class.
    pub m: usize,
    pub prefix_len: usize,
    pub mode: PromptMode,
    pub seed: u64,
    pub temperature: f64,
}

impl Default for TuringConfig {
    fn default() -> Self {
        TuringConfig {
            cutoff: default_cutoff(),
            m: 100,
            prefix_len: 20,
            mode: PromptMode::PersonaRag,
            seed: 0,
            temperature: 0.7,
        }
    }
}

impl TuringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidInput(format!("m must be at least 2, got {}", self.m)));
        }
        if self.prefix_len == 0 {
            return Err(Error::InvalidInput("prefix_len must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::InvalidInput(format!("temperature must be non-negative, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// What the second class is: completions under a prompt regime, or a
/// second real sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    GenericNoRag,
    PersonaNoRag,
    PersonaRag,
    Control,
}

impl From<PromptMode> for RunKind {
    fn from(m: PromptMode) -> Self {
        match m {
            PromptMode::GenericNoRag => RunKind::GenericNoRag,
            PromptMode::PersonaNoRag => RunKind::PersonaNoRag,
            PromptMode::PersonaRag => RunKind::PersonaRag,
        }
    }
}

impl std::fmt::Display for RunKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunKind::GenericNoRag => "generic-no-rag",
            RunKind::PersonaNoRag => "persona-no-rag",
            RunKind::PersonaRag => "persona-rag",
            RunKind::Control => "control",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuringReport {
    pub handle: String,
    pub mode: RunKind,
    /// In-sample FLD risk.
    pub tau_hat: f64,
    /// `max(0, 1 - 2·tau_hat)`.
    pub delta_hat: f64,
    pub d_selected: usize,
    pub n_removed: usize,
    pub n_per_class: usize,
    pub m: usize,
    pub seed: u64,
}

/// A report plus everything needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct TuringRun {
    pub report: TuringReport,
    /// Ids of the real sample and the prompt bases (or second real sample),
    /// before refusal filtering.
    pub real_ids: Vec<String>,
    pub base_ids: Vec<String>,
    /// RAG retrieval per base, `None` outside RAG mode.
    pub retrieved_ids: Vec<Option<String>>,
    pub generated: Vec<String>,
    /// MDS coordinates, real rows first; `labels[i]` is true for class 1.
    pub coords: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub model: FldModel,
}

fn delta(tau: f64) -> f64 {
    (1.0 - 2.0 * tau).max(0.0)
}

/// Seeded draw of `2m` post-cutoff tweets, split into two disjoint halves.
/// The draw depends only on the seed, handle and cutoff so every prompt
/// regime and the control see the same tweets.
fn draw_samples<'a>(store: &'a CorpusStore, handle: &str, config: &TuringConfig) -> Result<(Vec<&'a Tweet>, Vec<&'a Tweet>)> {
    let (_, post) = store.split_at(handle, config.cutoff)?;
    let need = 2 * config.m;
    if post.len() < need {
        return Err(Error::InsufficientData(format!(
            "{handle} has {} tweets after the cutoff, {need} needed",
            post.len()
        )));
    }
    let mut rng = rng_from(derive_seed(config.seed, &["turing", "sample", handle]));
    let picked = sample(&mut rng, post.len(), need).into_vec();
    let real = picked[..config.m].iter().map(|&i| post[i]).collect();
    let bases = picked[config.m..].iter().map(|&i| post[i]).collect();
    Ok((real, bases))
}

/// Embeds both classes, runs MDS with automatic dimension and fits FLD.
fn discriminate(
    embedding: &dyn EmbeddingProvider,
    class0: &[String],
    class1: &[String],
    class1_label: &str,
) -> Result<(Vec<Vec<f64>>, Vec<bool>, FldModel, f64, usize)> {
    let texts: Vec<String> = class0.iter().chain(class1).cloned().collect();
    let vectors = embed_batch(embedding, &texts)?;
    let labels: Vec<bool> = (0..texts.len()).map(|i| i >= class0.len()).collect();
    let dist = pairwise_euclidean(&vectors)?;
    let mds = classical_mds(&dist, None)?;
    let model = fld_fit_named(&mds.coords, &labels, REAL_LABEL, class1_label)?;
    let tau = fld_risk(&model, &mds.coords, &labels)?;
    Ok((mds.coords, labels, model, tau, mds.d))
}

pub fn run_turing_detailed(
    store: &CorpusStore,
    handle: &str,
    providers: Providers<'_>,
    config: &TuringConfig,
    policy: &RefusalPolicy,
) -> Result<TuringRun> {
    config.validate()?;
    let member = store.member(handle).ok_or_else(|| Error::InvalidInput(format!("unknown handle {handle}")))?;
    let (real, bases) = draw_samples(store, handle, config)?;

    let retrieved: Vec<Option<&Tweet>> = if config.mode == PromptMode::PersonaRag {
        let pool = store.tweets_before(handle, config.cutoff)?;
        if pool.is_empty() {
            return Err(Error::InsufficientData(format!("{handle} has no tweets before the cutoff to retrieve from")));
        }
        let index = index_tweets(&pool, providers.embedding)?;
        let targets: Vec<String> = bases.iter().map(|t| t.text.clone()).collect();
        let queries = embed_batch(providers.embedding, &targets)?;
        let filter = SearchFilter {
            handle: Some(handle.to_string()),
            before: Some(config.cutoff),
        };
        queries
            .iter()
            .map(|q| {
                let hit = index.nearest(q, &filter)?.ok_or_else(|| Error::InsufficientData("empty retrieval pool".into()))?;
                Ok(Some(store.tweet(&hit.id).expect("indexed tweet is in the store")))
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; bases.len()]
    };

    let prompt_config = PromptConfig {
        mode: config.mode,
        persona_name: Some(member.name.clone()),
    };
    let requests = bases
        .iter()
        .zip(&retrieved)
        .map(|(base, hit)| {
            let prompt = completion_prompt(
                &prompt_config,
                &tweet_prefix(&base.text, config.prefix_len),
                hit.map(|t| t.text.as_str()),
            )?;
            Ok(GenerationRequest {
                system: prompt.system,
                user: prompt.user,
                temperature: config.temperature,
                seed: Some(derive_seed(config.seed, &["turing", "generate", handle, &base.tweet_id])),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let generated = generate_all(providers.generation, &requests, providers.jobs)?;

    let real_texts: Vec<String> = real.iter().map(|t| t.text.clone()).collect();
    let filtered = balanced_filter(
        &real_texts,
        &generated,
        policy,
        derive_seed(config.seed, &["turing", "refusal", handle]),
    )?;
    let (coords, labels, model, tau, d) =
        discriminate(providers.embedding, &filtered.real, &filtered.generated, GENERATED_LABEL)?;
    Ok(TuringRun {
        report: TuringReport {
            handle: handle.to_string(),
            mode: config.mode.into(),
            tau_hat: tau,
            delta_hat: delta(tau),
            d_selected: d,
            n_removed: filtered.n_removed,
            n_per_class: filtered.real.len(),
            m: config.m,
            seed: config.seed,
        },
        real_ids: real.iter().map(|t| t.tweet_id.clone()).collect(),
        base_ids: bases.iter().map(|t| t.tweet_id.clone()).collect(),
        retrieved_ids: retrieved.iter().map(|t| t.map(|t| t.tweet_id.clone())).collect(),
        generated,
        coords,
        labels,
        model,
    })
}

pub fn run_turing_test(
    store: &CorpusStore,
    handle: &str,
    providers: Providers<'_>,
    config: &TuringConfig,
    policy: &RefusalPolicy,
) -> Result<TuringReport> {
    Ok(run_turing_detailed(store, handle, providers, config, policy)?.report)
}

/// Real against real: the second class is the sample that would otherwise
/// serve as prompt bases.
pub fn run_control_detailed(
    store: &CorpusStore,
    handle: &str,
    embedding: &dyn EmbeddingProvider,
    config: &TuringConfig,
) -> Result<TuringRun> {
    config.validate()?;
    if store.member(handle).is_none() {
        return Err(Error::InvalidInput(format!("unknown handle {handle}")));
    }
    let (a, b) = draw_samples(store, handle, config)?;
    let texts = |ts: &[&Tweet]| ts.iter().map(|t| t.text.clone()).collect::<Vec<_>>();
    let (coords, labels, model, tau, d) = discriminate(embedding, &texts(&a), &texts(&b), CONTROL_LABEL)?;
    Ok(TuringRun {
        report: TuringReport {
            handle: handle.to_string(),
            mode: RunKind::Control,
            tau_hat: tau,
            delta_hat: delta(tau),
            d_selected: d,
            n_removed: 0,
            n_per_class: config.m,
            m: config.m,
            seed: config.seed,
        },
        real_ids: a.iter().map(|t| t.tweet_id.clone()).collect(),
        base_ids: b.iter().map(|t| t.tweet_id.clone()).collect(),
        retrieved_ids: vec![None; b.len()],
        generated: Vec::new(),
        coords,
        labels,
        model,
    })
}

pub fn run_control(
    store: &CorpusStore,
    handle: &str,
    embedding: &dyn EmbeddingProvider,
    config: &TuringConfig,
) -> Result<TuringReport> {
    Ok(run_control_detailed(store, handle, embedding, config)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub handle: String,
    pub mode: RunKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Distribution> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Distribution {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Per-handle comparison of a prompt regime against the control. Both
/// orderings are counted; neither is treated as the expected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlComparison {
    /// How the counts below read.
    pub convention: String,
    pub n_paired: usize,
    pub n_tau_at_most_control: usize,
    pub n_tau_at_least_control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub tau_hat: BTreeMap<RunKind, Distribution>,
    pub delta_hat: BTreeMap<RunKind, Distribution>,
    pub versus_control: Option<ControlComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub reports: Vec<TuringReport>,
    pub controls: Vec<TuringReport>,
    pub skips: Vec<SkipRecord>,
    pub summary: CohortSummary,
}

impl CohortReport {
    /// Plot-ready rows of (mode, handle, tau_hat).
    pub fn table(&self) -> Vec<(RunKind, String, f64)> {
        self.reports
            .iter()
            .chain(&self.controls)
            .map(|r| (r.mode, r.handle.clone(), r.tau_hat))
            .collect()
    }
}

fn summarize(reports: &[TuringReport], controls: &[TuringReport]) -> CohortSummary {
    let mut tau: BTreeMap<RunKind, Vec<f64>> = BTreeMap::new();
    let mut dlt: BTreeMap<RunKind, Vec<f64>> = BTreeMap::new();
    for r in reports.iter().chain(controls) {
        tau.entry(r.mode).or_default().push(r.tau_hat);
        dlt.entry(r.mode).or_default().push(r.delta_hat);
    }
    let dist = |m: BTreeMap<RunKind, Vec<f64>>| {
        m.into_iter()
            .filter_map(|(k, v)| Distribution::of(&v).map(|d| (k, d)))
            .collect()
    };
    let versus_control = (!controls.is_empty()).then(|| {
        let by_handle: BTreeMap<&str, f64> = controls.iter().map(|c| (c.handle.as_str(), c.tau_hat)).collect();
        let pairs: Vec<(f64, f64)> = reports
            .iter()
            .filter_map(|r| by_handle.get(r.handle.as_str()).map(|&c| (r.tau_hat, c)))
            .collect();
        ControlComparison {
            convention: "counts compare tau_hat (FLD risk; higher is harder to detect) of the prompt regime against the same handle's control".into(),
            n_paired: pairs.len(),
            n_tau_at_most_control: pairs.iter().filter(|(t, c)| t <= c).count(),
            n_tau_at_least_control: pairs.iter().filter(|(t, c)| t >= c).count(),
        }
    });
    CohortSummary {
        tau_hat: dist(tau),
        delta_hat: dist(dlt),
        versus_control,
    }
}

fn collect<T>(result: Result<T>, handle: &str, mode: RunKind, skips: &mut Vec<SkipRecord>) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.kind() == ErrorKind::Data => {
            skips.push(SkipRecord {
                handle: handle.to_string(),
                mode,
                reason: e.to_string(),
            });
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// One run per handle (and optionally its control). Ineligible handles are
/// recorded as skips; provider failures abort the cohort.
pub fn run_cohort(
    store: &CorpusStore,
    handles: &[String],
    providers: Providers<'_>,
    config: &TuringConfig,
    policy: &RefusalPolicy,
    with_control: bool,
) -> Result<CohortReport> {
    config.validate()?;
    let mut reports = Vec::new();
    let mut controls = Vec::new();
    let mut skips = Vec::new();
    for handle in handles {
        let run = run_turing_test(store, handle, providers, config, policy);
        if let Some(r) = collect(run, handle, config.mode.into(), &mut skips)? {
            reports.push(r);
        }
        if with_control {
            let run = run_control(store, handle, providers.embedding, config);
            if let Some(r) = collect(run, handle, RunKind::Control, &mut skips)? {
                controls.push(r);
            }
        }
    }
    if reports.is_empty() {
        return Err(Error::InsufficientData(format!(
            "none of the {} handles could be evaluated",
            handles.len()
        )));
    }
    let summary = summarize(&reports, &controls);
    Ok(CohortReport {
        reports,
        controls,
        skips,
        summary,
    })
}

/// Seeded choice of `n` handles from the roster (all of them when fewer).
pub fn sample_handles(store: &CorpusStore, n: usize, seed: u64) -> Vec<String> {
    let all: Vec<String> = store.handles().map(str::to_string).collect();
    if n >= all.len() {
        return all;
    }
    let mut picked = sample(&mut rng_from(derive_seed(seed, &["turing", "cohort"])), all.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{MockEmbedder, MockGenerator, MockMode};
    use crate::synthetic::{synthetic_corpus, SyntheticSpec};

    fn corpus(personas: usize) -> CorpusStore {
        synthetic_corpus(&SyntheticSpec {
            personas,
            seed: 3,
            ..SyntheticSpec::default()
        })
        .store
    }

    fn run(store: &CorpusStore, mode: MockMode, config: &TuringConfig) -> TuringRun {
        let gen = MockGenerator::from_store(store, mode, config.prefix_len, 30);
        let emb = MockEmbedder::new(256);
        let providers = Providers {
            generation: &gen,
            embedding: &emb,
            jobs: 2,
        };
        run_turing_detailed(store, "synth_001", providers, config, &RefusalPolicy::default()).unwrap()
    }

    fn small() -> TuringConfig {
        TuringConfig {
            m: 40,
            seed: 11,
            ..TuringConfig::default()
        }
    }

    #[test]
    fn samples_are_disjoint_and_post_cutoff() {
        let store = corpus(3);
        let cfg = small();
        let r = run(&store, MockMode::EchoReal, &cfg);
        let real: std::collections::HashSet<_> = r.real_ids.iter().collect();
        assert!(r.base_ids.iter().all(|id| !real.contains(id)));
        for id in r.real_ids.iter().chain(&r.base_ids) {
            assert!(store.tweet(id).unwrap().created_at >= cfg.cutoff);
        }
    }

    #[test]
    fn rag_never_leaks_post_cutoff_tweets() {
        let store = corpus(3);
        let cfg = small();
        let r = run(&store, MockMode::EchoReal, &cfg);
        for id in &r.retrieved_ids {
            let t = store.tweet(id.as_ref().unwrap()).unwrap();
            assert!(t.created_at < cfg.cutoff);
            assert_eq!(t.handle, "synth_001");
        }
    }

    #[test]
    fn sample_is_shared_across_modes() {
        let store = corpus(3);
        let a = run(&store, MockMode::EchoReal, &small());
        let b = run(
            &store,
            MockMode::DisjointVocabulary,
            &TuringConfig {
                mode: PromptMode::GenericNoRag,
                ..small()
            },
        );
        assert_eq!(a.real_ids, b.real_ids);
        assert_eq!(a.base_ids, b.base_ids);
        assert!(b.retrieved_ids.iter().all(Option::is_none));
    }

    #[test]
    fn risk_and_flipped_risk_sum_to_one() {
        let store = corpus(3);
        let r = run(&store, MockMode::EchoReal, &small());
        let flipped: Vec<bool> = r.labels.iter().map(|l| !l).collect();
        let other = fld_risk(&r.model, &r.coords, &flipped).unwrap();
        assert_eq!(r.report.tau_hat + other, 1.0);
        assert_eq!(r.report.delta_hat, (1.0 - 2.0 * r.report.tau_hat).max(0.0));
    }

    #[test]
    fn disjoint_vocabulary_is_detected() {
        let store = corpus(3);
        let r = run(&store, MockMode::DisjointVocabulary, &small());
        assert!(r.report.tau_hat <= 0.05, "{}", r.report.tau_hat);
        assert!(r.report.delta_hat >= 0.9);
    }

    #[test]
    fn refusals_are_balanced() {
        let store = corpus(3);
        let r = run(&store, MockMode::Refuse { probability: 0.5 }, &small());
        assert!(r.report.n_removed > 0);
        assert_eq!(r.report.n_per_class, 40 - r.report.n_removed);
        assert_eq!(r.labels.iter().filter(|l| **l).count(), r.report.n_per_class);
        assert_eq!(r.labels.iter().filter(|l| !**l).count(), r.report.n_per_class);
    }

    #[test]
    fn insufficient_tweets_error() {
        let store = corpus(2);
        let cfg = TuringConfig {
            m: 150,
            ..TuringConfig::default()
        };
        let emb = MockEmbedder::new(64);
        let err = run_control(&store, "synth_000", &emb, &cfg).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)), "{err}");
    }

    #[test]
    fn control_tiny_m_is_quantized() {
        let store = corpus(2);
        let emb = MockEmbedder::new(64);
        for seed in 0..10 {
            let cfg = TuringConfig {
                m: 2,
                seed,
                ..TuringConfig::default()
            };
            let r = run_control(&store, "synth_000", &emb, &cfg).unwrap();
            assert!([0.0, 0.25, 0.5, 0.75, 1.0].contains(&r.tau_hat), "{}", r.tau_hat);
            assert_eq!(r, run_control(&store, "synth_000", &emb, &cfg).unwrap());
        }
    }

    #[test]
    fn cohort_skips_ineligible_handles() {
        let mut spec = SyntheticSpec {
            personas: 4,
            seed: 5,
            ..SyntheticSpec::default()
        };
        spec.tweets_after = 220;
        let base = synthetic_corpus(&spec).store;
        // Drop most post-cutoff tweets of one member.
        let cutoff = default_cutoff();
        let mut kept = 0;
        let tweets: Vec<Tweet> = base
            .tweets()
            .iter()
            .filter(|t| {
                if t.handle != "synth_002" || t.created_at < cutoff {
                    return true;
                }
                kept += 1;
                kept <= 150
            })
            .cloned()
            .collect();
        let store = CorpusStore::from_parts(tweets, base.roster().to_vec()).unwrap();
        let gen = MockGenerator::from_store(&store, MockMode::EchoReal, 20, 30);
        let emb = MockEmbedder::new(128);
        let providers = Providers {
            generation: &gen,
            embedding: &emb,
            jobs: 2,
        };
        let handles: Vec<String> = store.handles().map(str::to_string).collect();
        let cfg = TuringConfig::default();
        let c = run_cohort(&store, &handles, providers, &cfg, &RefusalPolicy::default(), false).unwrap();
        assert_eq!(c.reports.len(), 3);
        assert_eq!(c.skips.len(), 1);
        assert_eq!(c.skips[0].handle, "synth_002");
        assert_eq!(c.summary.tau_hat[&RunKind::PersonaRag].n, 3);
        let again = run_cohort(&store, &handles, providers, &cfg, &RefusalPolicy::default(), false).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn config_validation() {
        assert!(TuringConfig { m: 1, ..TuringConfig::default() }.validate().is_err());
        assert!(TuringConfig { prefix_len: 0, ..TuringConfig::default() }.validate().is_err());
        assert!(TuringConfig::default().validate().is_ok());
    }

    #[test]
    fn distribution_quartiles() {
        let d = Distribution::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((d.min, d.q1, d.median, d.q3, d.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(d.mean, 3.0);
        assert!(Distribution::of(&[]).is_none());
    }
}
