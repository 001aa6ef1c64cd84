//! Subcommand implementations. Each returns the files it wrote.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twin_core::corpus::{
    load_corpus, load_question_set, load_roll_call, load_roster, parse_timestamp, Chamber, Congressperson,
    CorpusStore, RollCall, Timestamp, Tweet,
};
use twin_core::dkps::{build_bill_dkps, predict_votes, DkpsConfig, DkpsModel, VotePredictionReport};
use twin_core::flipscore::{score_bill, validate, BillScores};
use twin_core::prompts::RefusalPolicy;
use twin_core::providers::{
    embed_batch, CachedGenerator, EmbeddingProvider, GenerationProvider, HttpEmbedder, HttpGenerator, MockEmbedder,
    MockGenerator, MockMode, Providers,
};
use twin_core::stats::{wilcoxon_signed_rank, TestResult};
use twin_core::synthetic::{bicameral_fixture, synthetic_corpus, vote_fixture, SyntheticSpec};
use twin_core::topics::{classify, corpus_stats, label_seed, train_linear, TopicLabel, TopicModel, TrainConfig};
use twin_core::turing::{
    run_cohort, run_control_detailed, run_turing_detailed, sample_handles, RunKind, TuringConfig, TuringRun,
    CONTROL_LABEL, GENERATED_LABEL, REAL_LABEL,
};
use twin_core::util::quantile;

use crate::config::{RunConfig, MOCK_VOCAB_SIZE};
use crate::report::{num, read_payload, Inputs, Sink};
use crate::{
    Cli, CliError, Command, CompareCommand, CorpusArgs, DkpsArgs, DkpsCommand, FlipCommand, SynthCommand,
    TopicsCommand, TuringArgs, TuringCommand,
};

type Written = Vec<PathBuf>;

/// Resolves configuration and dispatches.
pub fn execute(cli: Cli) -> Result<Written, CliError> {
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(mock) = &g.mock {
        config.mock = Some(mock.clone());
    }
    if let Some(jobs) = g.jobs {
        config.jobs = jobs;
    }
    if let Some(out) = &g.out {
        config.out = out.clone();
    }
    config.exclude_retweets |= g.exclude_retweets;
    config.apply_env();
    let command = cli.command.path().join(" ");
    let mut ctx = Ctx { config, command };
    match cli.command {
        Command::Validate {
            corpus,
            rollcall,
            questions,
        } => ctx.validate(corpus, &rollcall, &questions),
        Command::Stats { corpus, labels } => ctx.stats(corpus, labels.as_deref()),
        Command::Topics(TopicsCommand::Label { corpus, n_seed }) => ctx.topics_label(corpus, n_seed),
        Command::Topics(TopicsCommand::Train {
            corpus,
            labels,
            lambda,
            max_iters,
        }) => ctx.topics_train(corpus, &labels, lambda, max_iters),
        Command::Topics(TopicsCommand::Classify { corpus, model }) => ctx.topics_classify(corpus, &model),
        Command::Turing(TuringCommand::Run { corpus, handle, turing }) => ctx.turing_one(corpus, &handle, turing, false),
        Command::Turing(TuringCommand::Control { corpus, handle, turing }) => ctx.turing_one(corpus, &handle, turing, true),
        Command::Turing(TuringCommand::Cohort {
            corpus,
            handles,
            n,
            control,
            turing,
        }) => ctx.turing_cohort(corpus, handles, n, control, turing),
        Command::Dkps(DkpsCommand::Build {
            corpus,
            questions,
            rollcall,
            vote_time,
            dkps,
        }) => ctx.dkps_build(corpus, &questions, rollcall.as_deref(), vote_time.as_deref(), dkps),
        Command::Dkps(DkpsCommand::Predict {
            corpus,
            dkps,
            rollcall,
            folds,
            k_grid,
        }) => ctx.dkps_predict(corpus, &dkps, &rollcall, folds, k_grid),
        Command::Flipscore(FlipCommand::Compute { corpus, bills, dkps }) => ctx.flip_compute(corpus, &bills, dkps),
        Command::Flipscore(FlipCommand::Validate { corpus, scores, bills }) => ctx.flip_validate(corpus, &scores, &bills),
        Command::Compare(CompareCommand::Wilcoxon { a, b, csv }) => ctx.wilcoxon(&a, &b, csv.as_deref()),
        Command::Synth(s) => ctx.synth(s),
    }
}

struct Ctx {
    config: RunConfig,
    command: String,
}

fn timestamp(s: &str, what: &str) -> Result<Timestamp, CliError> {
    parse_timestamp(s).map_err(|e| CliError::Usage(format!("invalid {what}: {e}")))
}

impl Ctx {
    fn merge_corpus(&mut self, args: CorpusArgs) {
        if args.tweets.is_some() {
            self.config.corpus.tweets = args.tweets;
        }
        if args.roster.is_some() {
            self.config.corpus.roster = args.roster;
        }
    }

    fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        path.as_deref()
            .ok_or_else(|| CliError::Usage(format!("missing corpus path: pass --{flag} or set corpus.{flag} in the config")))
    }

    fn load_store(&mut self, args: CorpusArgs, inputs: &mut Inputs) -> Result<CorpusStore, CliError> {
        self.merge_corpus(args);
        let tweets = Self::require(&self.config.corpus.tweets, "tweets")?;
        let roster = Self::require(&self.config.corpus.roster, "roster")?;
        let store = load_corpus(tweets, roster)?;
        inputs.add("tweets", tweets)?;
        inputs.add("roster", roster)?;
        Ok(if self.config.exclude_retweets {
            store.without_retweets()
        } else {
            store
        })
    }

    fn load_roster(&mut self, args: CorpusArgs, inputs: &mut Inputs) -> Result<Vec<Congressperson>, CliError> {
        self.merge_corpus(args);
        let roster = Self::require(&self.config.corpus.roster, "roster")?;
        let members = load_roster(roster)?;
        inputs.add("roster", roster)?;
        Ok(members)
    }

    fn mock_mode(&self) -> Result<Option<MockMode>, CliError> {
        self.config
            .mock
            .as_deref()
            .map(|m| m.parse::<MockMode>().map_err(CliError::Usage))
            .transpose()
    }

    fn generator(&self, store: &CorpusStore) -> Result<Box<dyn GenerationProvider>, CliError> {
        if let Some(mode) = self.mock_mode()? {
            return Ok(Box::new(MockGenerator::from_store(
                store,
                mode,
                self.config.turing.prefix_len,
                MOCK_VOCAB_SIZE,
            )));
        }
        if self.config.generation.endpoint.is_empty() {
            return Err(CliError::Usage(format!(
                "no generation endpoint: set generation.endpoint, {}_ENDPOINT or pass --mock",
                crate::config::GENERATION_ENV
            )));
        }
        let http = HttpGenerator::new(self.config.generation.clone())?;
        Ok(match &self.config.cache_dir {
            Some(dir) => Box::new(CachedGenerator::new(http, dir)?),
            None => Box::new(http),
        })
    }

    fn embedder(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        if self.mock_mode()?.is_some() {
            return Ok(Box::new(MockEmbedder::new(self.config.embedding.dimension)));
        }
        if self.config.embedding.endpoint.is_empty() {
            return Err(CliError::Usage(format!(
                "no embedding endpoint: set embedding.endpoint, {}_ENDPOINT or pass --mock",
                crate::config::EMBEDDING_ENV
            )));
        }
        Ok(Box::new(HttpEmbedder::new(self.config.embedding.clone())?))
    }

    fn policy(&self, inputs: &mut Inputs) -> Result<RefusalPolicy, CliError> {
        match &self.config.refusal_patterns {
            Some(path) => {
                inputs.add("refusal_patterns", path)?;
                RefusalPolicy::from_file(path).map_err(|e| CliError::Data(e.to_string()))
            }
            None => Ok(RefusalPolicy::default()),
        }
    }

    fn sink(&self, generation: Option<&dyn GenerationProvider>, embedding: Option<&dyn EmbeddingProvider>) -> Result<Sink<'_>, CliError> {
        let sink = Sink {
            dir: self.config.out.clone(),
            command: self.command.clone(),
            config: &self.config,
            generation_provider: generation.map(|g| format!("{}/{}", g.provider_id(), g.model())),
            embedding_provider: embedding.map(|e| format!("{}/{}", e.provider_id(), e.dimension())),
        };
        sink.create()?;
        Ok(sink)
    }

    fn dkps_config(&mut self, args: DkpsArgs) -> DkpsConfig {
        let p = &mut self.config.dkps;
        if let Some(mode) = args.mode {
            p.mode = mode;
        }
        if let Some(r) = args.replicates {
            p.replicates = r;
        }
        if args.d.is_some() {
            p.d = args.d;
        }
        DkpsConfig {
            replicates: p.replicates,
            mode: p.mode,
            d_override: p.d,
            seed: self.config.seed,
            normalize_rows: p.normalize_rows,
            temperature: p.temperature,
        }
    }

    fn turing_config(&mut self, args: TuringArgs) -> Result<TuringConfig, CliError> {
        let p = &mut self.config.turing;
        if let Some(mode) = args.mode {
            p.mode = mode;
        }
        if let Some(m) = args.m {
            p.m = m;
        }
        if let Some(c) = args.cutoff {
            p.cutoff = c;
        }
        Ok(TuringConfig {
            cutoff: timestamp(&p.cutoff, "cutoff")?,
            m: p.m,
            prefix_len: p.prefix_len,
            mode: p.mode,
            seed: self.config.seed,
            temperature: p.temperature,
        })
    }

    // -----------------------------------------------------------------------

    fn validate(&mut self, corpus: CorpusArgs, rollcalls: &[PathBuf], questions: &[PathBuf]) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        let mut chambers: BTreeMap<String, usize> = BTreeMap::new();
        let mut parties: BTreeMap<String, usize> = BTreeMap::new();
        for m in store.roster() {
            *chambers.entry(m.chamber.to_string()).or_default() += 1;
            *parties.entry(m.party.to_string()).or_default() += 1;
        }
        let mut rc_summaries = Vec::new();
        for (i, path) in rollcalls.iter().enumerate() {
            let rc = load_roll_call(path)?;
            inputs.add(&format!("rollcall_{i}"), path)?;
            let unknown: Vec<&String> = rc.votes.keys().filter(|h| store.member(h).is_none()).collect();
            let wrong_chamber: Vec<&String> = rc
                .votes
                .keys()
                .filter(|h| store.member(h).is_some_and(|m| m.chamber != rc.chamber))
                .collect();
            rc_summaries.push(serde_json::json!({
                "bill_id": rc.bill_id,
                "chamber": rc.chamber,
                "vote_time": rc.vote_time,
                "n_votes": rc.votes.len(),
                "n_yea_or_nay": rc.votes.values().filter(|v| v.is_yea_or_nay()).count(),
                "unknown_handles": unknown,
                "other_chamber_handles": wrong_chamber,
            }));
        }
        let mut q_summaries = Vec::new();
        for (i, path) in questions.iter().enumerate() {
            let qs = load_question_set(path)?;
            inputs.add(&format!("questions_{i}"), path)?;
            q_summaries.push(serde_json::json!({"bill_id": qs.bill_id, "n_questions": qs.questions.len()}));
        }
        let tweets = store.tweets();
        let payload = serde_json::json!({
            "content_hash": store.content_hash(),
            "n_tweets": tweets.len(),
            "n_retweets": tweets.iter().filter(|t| t.is_retweet).count(),
            "n_members": store.roster().len(),
            "n_members_without_tweets": store.roster().iter().filter(|m| store.author_tweets(&m.handle).map_or(true, |t| t.is_empty())).count(),
            "members_by_chamber": chambers,
            "members_by_party": parties,
            "first_tweet": tweets.iter().map(|t| t.created_at).min(),
            "last_tweet": tweets.iter().map(|t| t.created_at).max(),
            "rollcalls": rc_summaries,
            "question_sets": q_summaries,
        });
        let sink = self.sink(None, None)?;
        Ok(vec![sink.report("validate.json", &payload, inputs)?])
    }

    fn stats(&mut self, corpus: CorpusArgs, labels: Option<&Path>) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        let label_map: HashMap<String, TopicLabel> = match labels {
            Some(path) => {
                inputs.add("labels", path)?;
                read_labels(path)?.into_iter().map(|r| (r.tweet_id, r.topic)).collect()
            }
            None => HashMap::new(),
        };
        let stats = corpus_stats(&store, &label_map);
        let sink = self.sink(None, None)?;
        let monthly: Vec<Vec<String>> = stats
            .monthly_counts
            .iter()
            .map(|(m, c)| vec![m.clone(), c.to_string()])
            .collect();
        let shares: Vec<Vec<String>> = stats
            .yearly_topic_shares
            .iter()
            .flat_map(|(y, s)| s.iter().map(move |(t, v)| vec![y.to_string(), t.display_name().to_string(), num(*v)]))
            .collect();
        let authors: Vec<Vec<String>> = stats
            .per_author
            .iter()
            .map(|(h, c)| vec![h.clone(), c.to_string()])
            .collect();
        Ok(vec![
            sink.report("stats.json", &stats, inputs)?,
            sink.table("monthly_counts.csv", &["month", "tweets"], &monthly)?,
            sink.table("topic_shares.csv", &["year", "topic", "share"], &shares)?,
            sink.table("author_counts.csv", &["handle", "tweets"], &authors)?,
        ])
    }

    fn topics_label(&mut self, corpus: CorpusArgs, n_seed: Option<usize>) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        if let Some(n) = n_seed {
            self.config.topics.n_seed = n;
        }
        let gen = self.generator(&store)?;
        let tweets: Vec<&Tweet> = store.tweets().iter().collect();
        let n = self.config.topics.n_seed.min(tweets.len());
        let seed = label_seed(gen.as_ref(), &tweets, n, self.config.seed, self.config.resolved_jobs())?;
        let records: Vec<LabelRecord> = seed
            .labels
            .iter()
            .map(|(id, t)| LabelRecord {
                tweet_id: id.clone(),
                topic: *t,
            })
            .collect();
        let payload = serde_json::json!({
            "n_labelled": records.len(),
            "unmatched": seed.unmatched,
            "prompt_hash": seed.prompt_hash,
            "counts": label_counts(records.iter().map(|r| r.topic)),
            "labels": records,
        });
        let sink = self.sink(Some(gen.as_ref()), None)?;
        Ok(vec![
            sink.report("topics_label.json", &payload, inputs)?,
            sink.jsonl("seed_labels.jsonl", &records)?,
        ])
    }

    fn topics_train(&mut self, corpus: CorpusArgs, labels: &Path, lambda: Option<f64>, max_iters: Option<usize>) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        inputs.add("labels", labels)?;
        if let Some(l) = lambda {
            self.config.topics.lambda = l;
        }
        if let Some(m) = max_iters {
            self.config.topics.max_iters = m;
        }
        let records = read_labels(labels)?;
        let mut texts = Vec::with_capacity(records.len());
        for r in &records {
            let t = store
                .tweet(&r.tweet_id)
                .ok_or_else(|| CliError::Data(format!("labelled tweet {} is not in the corpus", r.tweet_id)))?;
            texts.push(t.text.clone());
        }
        let emb = self.embedder()?;
        let x = embed_batch(emb.as_ref(), &texts)?;
        let y: Vec<TopicLabel> = records.iter().map(|r| r.topic).collect();
        let t = &self.config.topics;
        let model = train_linear(
            &x,
            &y,
            &TrainConfig {
                lambda: t.lambda,
                max_iters: t.max_iters,
                tol: t.tol,
            },
        )?;
        let mut correct = 0;
        for (xi, yi) in x.iter().zip(&y) {
            if classify(&model, xi)? == *yi {
                correct += 1;
            }
        }
        let artifact = TopicArtifact {
            embedding_provider: format!("{}/{}", emb.provider_id(), emb.dimension()),
            n_train: y.len(),
            training_accuracy: correct as f64 / y.len() as f64,
            class_counts: label_counts(y.iter().copied()),
            model,
        };
        let sink = self.sink(None, Some(emb.as_ref()))?;
        Ok(vec![sink.report("topics_model.json", &artifact, inputs)?])
    }

    fn topics_classify(&mut self, corpus: CorpusArgs, model_path: &Path) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        inputs.add("model", model_path)?;
        let artifact: TopicArtifact = read_payload(model_path)?;
        let emb = self.embedder()?;
        let texts: Vec<String> = store.tweets().iter().map(|t| t.text.clone()).collect();
        let x = embed_batch(emb.as_ref(), &texts)?;
        let mut records = Vec::with_capacity(texts.len());
        for (t, xi) in store.tweets().iter().zip(&x) {
            records.push(LabelRecord {
                tweet_id: t.tweet_id.clone(),
                topic: classify(&artifact.model, xi)?,
            });
        }
        let payload = serde_json::json!({
            "n_classified": records.len(),
            "counts": label_counts(records.iter().map(|r| r.topic)),
        });
        let sink = self.sink(None, Some(emb.as_ref()))?;
        Ok(vec![
            sink.report("topics_classify.json", &payload, inputs)?,
            sink.jsonl("topic_labels.jsonl", &records)?,
        ])
    }

    fn turing_one(&mut self, corpus: CorpusArgs, handle: &str, args: TuringArgs, control: bool) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        let config = self.turing_config(args)?;
        let emb = self.embedder()?;
        let (run, gen) = if control {
            (run_control_detailed(&store, handle, emb.as_ref(), &config)?, None)
        } else {
            let policy = self.policy(&mut inputs)?;
            let gen = self.generator(&store)?;
            let providers = Providers {
                generation: gen.as_ref(),
                embedding: emb.as_ref(),
                jobs: self.config.resolved_jobs(),
            };
            (run_turing_detailed(&store, handle, providers, &config, &policy)?, Some(gen))
        };
        let sink = self.sink(gen.as_deref(), Some(emb.as_ref()))?;
        let name = if control { "turing_control" } else { "turing_run" };
        let coords = coord_rows(&run);
        let header = coord_header("label", run.report.d_selected);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        Ok(vec![
            sink.report(&format!("{name}.json"), &TuringPayload::from(&run), inputs)?,
            sink.table(&format!("{name}_coords.csv"), &header, &coords)?,
        ])
    }

    fn turing_cohort(
        &mut self,
        corpus: CorpusArgs,
        handles: Vec<String>,
        n: Option<usize>,
        control: bool,
        args: TuringArgs,
    ) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        let config = self.turing_config(args)?;
        let policy = self.policy(&mut inputs)?;
        let handles = if !handles.is_empty() {
            handles
        } else {
            sample_handles(&store, n.unwrap_or(usize::MAX), self.config.seed)
        };
        let gen = self.generator(&store)?;
        let emb = self.embedder()?;
        let providers = Providers {
            generation: gen.as_ref(),
            embedding: emb.as_ref(),
            jobs: self.config.resolved_jobs(),
        };
        let cohort = run_cohort(&store, &handles, providers, &config, &policy, control)?;
        let rows: Vec<Vec<String>> = cohort
            .table()
            .into_iter()
            .map(|(mode, h, tau)| vec![mode.to_string(), h, num(tau)])
            .collect();
        let sink = self.sink(Some(gen.as_ref()), Some(emb.as_ref()))?;
        Ok(vec![
            sink.report("turing_cohort.json", &cohort, inputs)?,
            sink.table("tau_table.csv", &["mode", "handle", "tau_hat"], &rows)?,
        ])
    }

    fn dkps_build(
        &mut self,
        corpus: CorpusArgs,
        questions: &Path,
        rollcall: Option<&Path>,
        vote_time: Option<&str>,
        args: DkpsArgs,
    ) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let store = self.load_store(corpus, &mut inputs)?;
        let qs = load_question_set(questions)?;
        inputs.add("questions", questions)?;
        let vote_time = match (rollcall, vote_time) {
            (_, Some(t)) => timestamp(t, "vote time")?,
            (Some(path), None) => {
                inputs.add("rollcall", path)?;
                load_roll_call(path)?.vote_time
            }
            (None, None) => return Err(CliError::Usage("pass --rollcall or --vote-time".into())),
        };
        let config = self.dkps_config(args);
        let policy = self.policy(&mut inputs)?;
        let gen = self.generator(&store)?;
        let emb = self.embedder()?;
        let providers = Providers {
            generation: gen.as_ref(),
            embedding: emb.as_ref(),
            jobs: self.config.resolved_jobs(),
        };
        let bill = build_bill_dkps(&store, &qs, vote_time, providers, &config, &policy)?;
        let artifact = DkpsArtifact {
            bill_id: qs.bill_id.clone(),
            vote_time,
            n_questions: qs.questions.len(),
            excluded: bill.excluded,
            model: bill.model,
        };
        let rows = model_rows(&artifact.model);
        let sink = self.sink(Some(gen.as_ref()), Some(emb.as_ref()))?;
        let header = coord_header("handle", artifact.model.d);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        Ok(vec![
            sink.report("dkps.json", &artifact, inputs)?,
            sink.table("dkps_coords.csv", &header, &rows)?,
        ])
    }

    fn dkps_predict(
        &mut self,
        corpus: CorpusArgs,
        dkps: &Path,
        rollcall: &Path,
        folds: Option<usize>,
        k_grid: Vec<usize>,
    ) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let roster = self.load_roster(corpus, &mut inputs)?;
        inputs.add("dkps", dkps)?;
        inputs.add("rollcall", rollcall)?;
        if let Some(f) = folds {
            self.config.dkps.folds = f;
        }
        if !k_grid.is_empty() {
            self.config.dkps.k_grid = k_grid;
        }
        let artifact: DkpsArtifact = read_payload(dkps)?;
        let rc = load_roll_call(rollcall)?;
        let report = predict_votes(
            &artifact.model,
            &rc,
            &roster,
            &self.config.dkps.k_grid,
            self.config.dkps.folds,
            self.config.seed,
        )?;
        let sink = self.sink(None, None)?;
        let d = artifact.model.d;
        let mut header = vec!["handle".to_string(), "party".into(), "vote".into()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let points: Vec<Vec<String>> = report
            .points
            .iter()
            .map(|p| {
                let mut row = vec![p.handle.clone(), p.party.to_string(), p.vote.to_string()];
                row.extend(p.coords.iter().map(|&x| num(x)));
                row
            })
            .collect();
        let curve: Vec<Vec<String>> = report
            .knn
            .iter()
            .flat_map(|cv| cv.per_k.iter().map(|(k, s)| vec![k.to_string(), num(s.mean_accuracy), num(s.standard_error)]))
            .collect();
        Ok(vec![
            sink.report("dkps_predict.json", &report, inputs)?,
            sink.table("vote_points.csv", &header, &points)?,
            sink.table("k_curve.csv", &["k", "mean_accuracy", "standard_error"], &curve)?,
        ])
    }

    fn flip_compute(&mut self, corpus: CorpusArgs, bills: &Path, args: DkpsArgs) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        inputs.add("bills", bills)?;
        let links = read_links(bills)?;
        let needs_corpus = links.iter().any(|l| l.dkps.is_none());
        let config = self.dkps_config(args);
        let (roster, store) = if needs_corpus {
            let store = self.load_store(corpus, &mut inputs)?;
            (store.roster().to_vec(), Some(store))
        } else {
            (self.load_roster(corpus, &mut inputs)?, None)
        };
        let policy = self.policy(&mut inputs)?;
        let gen = store.as_ref().map(|s| self.generator(s)).transpose()?;
        let emb = store.as_ref().map(|_| self.embedder()).transpose()?;
        let mut scored = Vec::with_capacity(links.len());
        let mut unpositioned = BTreeMap::new();
        for (i, link) in links.iter().enumerate() {
            let house = load_roll_call(&link.house_rollcall)?;
            inputs.add(&format!("bill_{i}_house"), &link.house_rollcall)?;
            let model = match &link.dkps {
                Some(path) => {
                    inputs.add(&format!("bill_{i}_dkps"), path)?;
                    read_payload::<DkpsArtifact>(path)?.model
                }
                None => {
                    let qpath = link.questions.as_ref().ok_or_else(|| {
                        CliError::Data(format!("bill link {} has neither dkps nor questions", i + 1))
                    })?;
                    inputs.add(&format!("bill_{i}_questions"), qpath)?;
                    let qs = load_question_set(qpath)?;
                    let providers = Providers {
                        generation: gen.as_deref().expect("corpus loaded"),
                        embedding: emb.as_deref().expect("corpus loaded"),
                        jobs: self.config.resolved_jobs(),
                    };
                    let store = store.as_ref().expect("corpus loaded");
                    build_bill_dkps(store, &qs, house.vote_time, providers, &config, &policy)?.model
                }
            };
            let (senators, missing): (Vec<String>, Vec<String>) = roster
                .iter()
                .filter(|m| m.chamber == Chamber::Senate)
                .map(|m| m.handle.clone())
                .partition(|h| model.coord(h).is_some());
            unpositioned.insert(house.bill_id.clone(), missing);
            scored.push(score_bill(&model, &house, &senators, &roster, self.config.flipscore.epsilon)?);
        }
        let rows: Vec<Vec<String>> = scored
            .iter()
            .flat_map(|b| {
                b.entries.iter().map(move |e| {
                    vec![
                        b.bill_id.clone(),
                        e.senator.clone(),
                        e.party.to_string(),
                        num(e.score),
                        e.distance.map(num).unwrap_or_default(),
                        e.nearest_flipper.clone().unwrap_or_default(),
                        e.bin.to_string(),
                        num(e.quantized),
                    ]
                })
            })
            .collect();
        let payload = FlipScoreSet {
            bills: scored,
            senators_without_position: unpositioned,
        };
        let sink = self.sink(gen.as_deref(), emb.as_deref())?;
        Ok(vec![
            sink.report("flipscores.json", &payload, inputs)?,
            sink.table(
                "flipscores.csv",
                &["bill_id", "senator", "party", "score", "distance", "nearest_flipper", "bin", "quantized"],
                &rows,
            )?,
        ])
    }

    fn flip_validate(&mut self, corpus: CorpusArgs, scores: &Path, bills: &Path) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let roster = self.load_roster(corpus, &mut inputs)?;
        inputs.add("scores", scores)?;
        inputs.add("bills", bills)?;
        let set: FlipScoreSet = read_payload(scores)?;
        let links = read_links(bills)?;
        let mut senate: Vec<RollCall> = Vec::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            inputs.add(&format!("bill_{i}_senate"), &link.senate_rollcall)?;
            senate.push(load_roll_call(&link.senate_rollcall)?);
        }
        // Senate roll calls pair with score sets in link order.
        if senate.len() != set.bills.len() {
            return Err(CliError::Data(format!(
                "{} bill links for {} scored bills",
                senate.len(),
                set.bills.len()
            )));
        }
        let report = validate(&set.bills, &senate, &roster)?;
        let bins: Vec<Vec<String>> = report
            .bins
            .iter()
            .map(|b| {
                vec![
                    b.bin.to_string(),
                    num(b.quantized),
                    b.n.to_string(),
                    b.flips.to_string(),
                    b.proportion.map(num).unwrap_or_default(),
                    b.standard_error.map(num).unwrap_or_default(),
                ]
            })
            .collect();
        let outcomes: Vec<Vec<String>> = report
            .outcomes
            .iter()
            .map(|o| vec![o.bill_id.clone(), o.senator.clone(), num(o.quantized), o.flipped.to_string()])
            .collect();
        let sink = self.sink(None, None)?;
        Ok(vec![
            sink.report("flip_validation.json", &report, inputs)?,
            sink.table(
                "flip_bins.csv",
                &["bin", "quantized", "n", "flips", "proportion", "standard_error"],
                &bins,
            )?,
            sink.table("flip_outcomes.csv", &["bill_id", "senator", "quantized", "flipped"], &outcomes)?,
        ])
    }

    fn wilcoxon(&mut self, a: &[PathBuf], b: &[PathBuf], csv: Option<&Path>) -> Result<Written, CliError> {
        let mut inputs = Inputs::default();
        let (pairs, dropped) = match csv {
            Some(path) => {
                inputs.add("csv", path)?;
                (read_pair_csv(path)?, Vec::new())
            }
            None => {
                if a.is_empty() || b.is_empty() {
                    return Err(CliError::Usage("pass --a and --b prediction reports, or --csv".into()));
                }
                let mut acc = |paths: &[PathBuf], side: &str| -> Result<BTreeMap<String, Option<f64>>, CliError> {
                    let mut out = BTreeMap::new();
                    for (i, p) in paths.iter().enumerate() {
                        inputs.add(&format!("{side}_{i}"), p)?;
                        let r: VotePredictionReport = read_payload(p)?;
                        if out.insert(r.bill_id.clone(), r.knn.map(|k| k.best_accuracy)).is_some() {
                            return Err(CliError::Data(format!("bill {} appears twice in --{side}", r.bill_id)));
                        }
                    }
                    Ok(out)
                };
                let ra = acc(a, "a")?;
                let rb = acc(b, "b")?;
                let mut pairs = Vec::new();
                let mut dropped = Vec::new();
                for (bill, va) in &ra {
                    match (va, rb.get(bill)) {
                        (Some(x), Some(Some(y))) => pairs.push(Pair {
                            bill_id: bill.clone(),
                            a: *x,
                            b: *y,
                        }),
                        _ => dropped.push(bill.clone()),
                    }
                }
                dropped.extend(rb.keys().filter(|k| !ra.contains_key(*k)).cloned());
                (pairs, dropped)
            }
        };
        let xa: Vec<f64> = pairs.iter().map(|p| p.a).collect();
        let xb: Vec<f64> = pairs.iter().map(|p| p.b).collect();
        let test = wilcoxon_signed_rank(&xa, &xb).map_err(|e| CliError::Data(e.to_string()))?;
        let rel: Vec<f64> = pairs.iter().filter(|p| p.b != 0.0).map(|p| (p.a - p.b) / p.b).collect();
        let median = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            quantile(&s, 0.5)
        };
        let payload = WilcoxonPayload {
            n_pairs: pairs.len(),
            median_a: median(&xa),
            median_b: median(&xb),
            mean_relative_improvement: (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64),
            test,
            pairs,
            dropped,
        };
        let sink = self.sink(None, None)?;
        Ok(vec![sink.report("wilcoxon.json", &payload, inputs)?])
    }

    fn synth(&mut self, cmd: SynthCommand) -> Result<Written, CliError> {
        let seed = self.config.seed;
        let sink = self.sink(None, None)?;
        let mut written = Vec::new();
        let payload = match cmd {
            SynthCommand::Corpus {
                personas,
                tweets_before,
                tweets_after,
            } => {
                let c = synthetic_corpus(&SyntheticSpec {
                    personas,
                    tweets_before,
                    tweets_after,
                    seed,
                    ..SyntheticSpec::default()
                });
                written.push(sink.jsonl("tweets.jsonl", c.store.tweets())?);
                written.push(sink.jsonl("roster.jsonl", c.store.roster())?);
                let topics: Vec<LabelRecord> = c
                    .topics
                    .iter()
                    .map(|(id, t)| LabelRecord {
                        tweet_id: id.clone(),
                        topic: *t,
                    })
                    .collect();
                written.push(sink.jsonl("true_topics.jsonl", &topics)?);
                serde_json::json!({"fixture": "corpus", "n_tweets": c.store.tweets().len(), "n_members": c.store.roster().len()})
            }
            SynthCommand::Votes {
                members,
                questions,
                flip_fraction,
            } => {
                let f = vote_fixture(members, questions, flip_fraction, seed);
                written.push(sink.jsonl("tweets.jsonl", f.corpus.store.tweets())?);
                written.push(sink.jsonl("roster.jsonl", f.corpus.store.roster())?);
                written.push(write_doc(&sink, "questions.json", &f.questions)?);
                written.push(write_doc(&sink, "rollcall.json", &f.rollcall)?);
                serde_json::json!({"fixture": "votes", "bill_id": f.rollcall.bill_id, "flipped": f.flipped})
            }
            SynthCommand::Bicameral { null } => {
                let f = bicameral_fixture(seed, null);
                written.push(sink.jsonl("roster.jsonl", &f.roster)?);
                let mut links = Vec::new();
                for (i, bill) in f.bills.iter().enumerate() {
                    let house = write_doc(&sink, &format!("house_{i}.json"), &bill.house)?;
                    let senate = write_doc(&sink, &format!("senate_{i}.json"), &bill.senate)?;
                    let artifact = DkpsArtifact {
                        bill_id: bill.house.bill_id.clone(),
                        vote_time: bill.house.vote_time,
                        n_questions: 0,
                        excluded: Vec::new(),
                        model: bill.model.clone(),
                    };
                    let dkps = write_doc(&sink, &format!("dkps_{i}.json"), &artifact)?;
                    links.push(BillLink {
                        house_rollcall: PathBuf::from(house.file_name().expect("file name")),
                        senate_rollcall: PathBuf::from(senate.file_name().expect("file name")),
                        dkps: Some(PathBuf::from(dkps.file_name().expect("file name"))),
                        questions: None,
                    });
                    written.extend([house, senate, dkps]);
                }
                written.push(sink.jsonl("bills.jsonl", &links)?);
                serde_json::json!({"fixture": "bicameral", "null_flips": null, "n_bills": links.len(), "moderateness": f.moderateness})
            }
        };
        written.push(sink.report("synth.json", &payload, Inputs::default())?);
        Ok(written)
    }
}

// ---------------------------------------------------------------------------
// File formats

/// One topic label per line of a labels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub tweet_id: String,
    pub topic: TopicLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicArtifact {
    pub embedding_provider: String,
    pub n_train: usize,
    pub training_accuracy: f64,
    pub class_counts: BTreeMap<String, usize>,
    pub model: TopicModel,
}

/// A bill's perspective space as written by `dkps build`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkpsArtifact {
    pub bill_id: String,
    pub vote_time: Timestamp,
    pub n_questions: usize,
    /// Roster members without a tweet before the vote.
    pub excluded: Vec<String>,
    pub model: DkpsModel,
}

/// One line of a bill links file. Relative paths resolve against the links
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillLink {
    pub house_rollcall: PathBuf,
    pub senate_rollcall: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dkps: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipScoreSet {
    pub bills: Vec<BillScores>,
    /// Senators on the roster with no position in a bill's space.
    pub senators_without_position: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuringPayload {
    pub report: twin_core::turing::TuringReport,
    pub real_ids: Vec<String>,
    pub base_ids: Vec<String>,
    pub retrieved_ids: Vec<Option<String>>,
    pub generated: Vec<String>,
    pub fld_threshold: f64,
}

impl From<&TuringRun> for TuringPayload {
    fn from(run: &TuringRun) -> Self {
        TuringPayload {
            report: run.report.clone(),
            real_ids: run.real_ids.clone(),
            base_ids: run.base_ids.clone(),
            retrieved_ids: run.retrieved_ids.clone(),
            generated: run.generated.clone(),
            fld_threshold: run.model.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    #[serde(default)]
    pub bill_id: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonPayload {
    pub n_pairs: usize,
    pub median_a: f64,
    pub median_b: f64,
    /// Mean of (a − b) / b over pairs with b ≠ 0.
    pub mean_relative_improvement: Option<f64>,
    pub test: TestResult,
    pub pairs: Vec<Pair>,
    /// Bills present on one side only or without a k-NN accuracy.
    pub dropped: Vec<String>,
}

fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, CliError> {
    read_jsonl_file(path)
}

fn read_links(path: &Path) -> Result<Vec<BillLink>, CliError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut links: Vec<BillLink> = read_jsonl_file(path)?;
    if links.is_empty() {
        return Err(CliError::Data(format!("{} lists no bills", path.display())));
    }
    for l in &mut links {
        for p in [Some(&mut l.house_rollcall), Some(&mut l.senate_rollcall), l.dkps.as_mut(), l.questions.as_mut()]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(links)
}

fn read_jsonl_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn read_pair_csv(path: &Path) -> Result<Vec<Pair>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Data(format!("{}: {e}", path.display()))))
        .collect()
}

fn write_doc<T: Serialize>(sink: &Sink<'_>, name: &str, doc: &T) -> Result<PathBuf, CliError> {
    let path = sink.path(name);
    twin_core::corpus::write_document(&path, doc)?;
    Ok(path)
}

fn label_counts(labels: impl Iterator<Item = TopicLabel>) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = TopicLabel::ALL.iter().map(|t| (t.display_name().to_string(), 0)).collect();
    for l in labels {
        *counts.entry(l.display_name().to_string()).or_default() += 1;
    }
    counts
}

fn coord_header(first: &str, d: usize) -> Vec<String> {
    let mut h = vec![first.to_string()];
    h.extend((1..=d).map(|i| format!("x{i}")));
    h
}

fn model_rows(model: &DkpsModel) -> Vec<Vec<String>> {
    model
        .handles
        .iter()
        .zip(&model.coords)
        .map(|(h, c)| {
            let mut row = vec![h.clone()];
            row.extend(c.iter().map(|&x| num(x)));
            row
        })
        .collect()
}

fn coord_rows(run: &TuringRun) -> Vec<Vec<String>> {
    let second = if run.report.mode == RunKind::Control {
        CONTROL_LABEL
    } else {
        GENERATED_LABEL
    };
    run.labels
        .iter()
        .zip(&run.coords)
        .map(|(&l, c)| {
            let mut row = vec![if l { second } else { REAL_LABEL }.to_string()];
            row.extend(c.iter().map(|&x| num(x)));
            row
        })
        .collect()
}
