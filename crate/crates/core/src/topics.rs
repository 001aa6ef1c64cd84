//! Topic labelling: seed labels from a generation provider, a multinomial
//! logistic classifier over embeddings, and corpus-level topic statistics.

use std::collections::{BTreeMap, HashMap};

use chrono::Datelike;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStore;
use crate::corpus::Tweet;
use crate::providers::{generate_all, GenerationProvider, GenerationRequest};
use crate::util::{derive_seed, quantile, rng_from, sha256_hex};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TopicLabel {
    GovernmentAndPublicAdministration,
    ForeignPolicy,
    EconomicAffairs,
    ScienceAndTechnology,
    Education,
    Miscellaneous,
}

impl TopicLabel {
    pub const ALL: [TopicLabel; 6] = [
        TopicLabel::GovernmentAndPublicAdministration,
        TopicLabel::ForeignPolicy,
        TopicLabel::EconomicAffairs,
        TopicLabel::ScienceAndTechnology,
        TopicLabel::Education,
        TopicLabel::Miscellaneous,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TopicLabel::GovernmentAndPublicAdministration => "Government and Public Administration",
            TopicLabel::ForeignPolicy => "Foreign Policy",
            TopicLabel::EconomicAffairs => "Economic Affairs",
            TopicLabel::ScienceAndTechnology => "Science and Technology",
            TopicLabel::Education => "Education",
            TopicLabel::Miscellaneous => "Miscellaneous",
        }
    }
}

impl std::fmt::Display for TopicLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Lowercase, `&` spelled out, punctuation dropped, whitespace collapsed.
fn normalize_name(s: &str) -> String {
    let spelled = s.to_lowercase().replace('&', " and ");
    let kept: String = spelled
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Maps a free-text response to a topic: exact (normalized) name first,
/// then the single topic name contained in the response. `None` when
/// neither applies.
pub fn match_topic(response: &str) -> Option<TopicLabel> {
    let norm = normalize_name(response);
    if let Some(t) = TopicLabel::ALL.iter().find(|t| normalize_name(t.display_name()) == norm) {
        return Some(*t);
    }
    let padded = format!(" {norm} ");
    let contained: Vec<TopicLabel> = TopicLabel::ALL
        .iter()
        .copied()
        .filter(|t| padded.contains(&format!(" {} ", normalize_name(t.display_name()))))
        .collect();
    match contained.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

impl std::str::FromStr for TopicLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = normalize_name(s);
        TopicLabel::ALL
            .iter()
            .copied()
            .find(|t| normalize_name(t.display_name()) == norm || normalize_name(&format!("{t:?}")) == norm)
            .ok_or_else(|| format!("unknown topic \"{s}\""))
    }
}

pub const TOPIC_SYSTEM_PROMPT: &str = "You are a careful annotator of political social media posts.";

/// Classification request for one tweet.
pub fn topic_prompt(text: &str) -> String {
    let names: Vec<&str> = TopicLabel::ALL.iter().map(|t| t.display_name()).collect();
    format!(
        "Classify the following Tweet into exactly one of these topics: {}. Answer with the topic name only.\nTweet: \"{text}\"",
        names.join(", ")
    )
}

/// Hash of the labelling template, for report provenance.
pub fn topic_prompt_hash() -> String {
    sha256_hex(format!("{TOPIC_SYSTEM_PROMPT}\n{}", topic_prompt("{tweet}")).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedLabels {
    pub labels: Vec<(String, TopicLabel)>,
    /// Responses that matched no topic (labelled Miscellaneous).
    pub unmatched: usize,
    pub prompt_hash: String,
}

/// Labels a seeded uniform sample of `n_seed` tweets with the provider.
pub fn label_seed(
    provider: &dyn GenerationProvider,
    tweets: &[&Tweet],
    n_seed: usize,
    seed: u64,
    jobs: usize,
) -> Result<SeedLabels> {
    if n_seed > tweets.len() {
        return Err(Error::InsufficientData(format!(
            "asked for {n_seed} seed labels from {} tweets",
            tweets.len()
        )));
    }
    let mut rng = rng_from(derive_seed(seed, &["topics", "seed-sample"]));
    let mut picked = sample(&mut rng, tweets.len(), n_seed).into_vec();
    picked.sort_unstable();
    let requests: Vec<GenerationRequest> = picked
        .iter()
        .map(|&i| GenerationRequest {
            system: TOPIC_SYSTEM_PROMPT.to_string(),
            user: topic_prompt(&tweets[i].text),
            temperature: 0.0,
            seed: Some(derive_seed(seed, &["topics", &tweets[i].tweet_id])),
        })
        .collect();
    let responses = generate_all(provider, &requests, jobs)?;
    let mut unmatched = 0;
    let labels = picked
        .iter()
        .zip(&responses)
        .map(|(&i, r)| {
            let label = match_topic(r).unwrap_or_else(|| {
                unmatched += 1;
                TopicLabel::Miscellaneous
            });
            (tweets[i].tweet_id.clone(), label)
        })
        .collect();
    Ok(SeedLabels {
        labels,
        unmatched,
        prompt_hash: topic_prompt_hash(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-4,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    /// One row of D weights per topic, in [`TopicLabel::ALL`] order.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_gradient_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step (the first entry is at zero).
    pub objective_trace: Vec<f64>,
}

impl TopicModel {
    pub fn dimension(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }
}

/// Flat parameter layout: K rows of D weights, then K biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub k: usize,
    pub d: usize,
    pub theta: Vec<f64>,
}

impl Params {
    pub fn zeros(k: usize, d: usize) -> Self {
        Params {
            k,
            d,
            theta: vec![0.0; k * d + k],
        }
    }

    fn w(&self, c: usize) -> &[f64] {
        &self.theta[c * self.d..(c + 1) * self.d]
    }

    fn b(&self, c: usize) -> f64 {
        self.theta[self.k * self.d + c]
    }
}

/// Mean cross-entropy plus `λ/2·‖W‖²` (biases unpenalized) and its gradient.
pub fn objective_and_gradient(p: &Params, x: &[Vec<f64>], y: &[usize], lambda: f64) -> (f64, Vec<f64>) {
    let n = x.len() as f64;
    let (k, d) = (p.k, p.d);
    let mut grad = vec![0.0; p.theta.len()];
    let mut loss = 0.0;
    let mut logits = vec![0.0; k];
    for (row, &label) in x.iter().zip(y) {
        for (c, l) in logits.iter_mut().enumerate() {
            *l = p.w(c).iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + p.b(c);
        }
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let log_z = max + z.ln();
        loss += log_z - logits[label];
        for c in 0..k {
            let prob = (logits[c] - log_z).exp();
            let coef = (prob - if c == label { 1.0 } else { 0.0 }) / n;
            let g = &mut grad[c * d..(c + 1) * d];
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += coef * xj;
            }
            grad[k * d + c] += coef;
        }
    }
    let mut reg = 0.0;
    for j in 0..k * d {
        reg += p.theta[j] * p.theta[j];
        grad[j] += lambda * p.theta[j];
    }
    (loss / n + 0.5 * lambda * reg, grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// L2-regularized multinomial logistic regression by full-batch gradient
/// descent with Armijo backtracking, starting from zero.
pub fn train_linear(x: &[Vec<f64>], labels: &[TopicLabel], config: &TrainConfig) -> Result<TopicModel> {
    if x.len() != labels.len() {
        return Err(Error::InvalidInput(format!("{} rows, {} labels", x.len(), labels.len())));
    }
    let d = x.first().map(Vec::len).ok_or_else(|| Error::InsufficientData("no training rows".into()))?;
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("rows differ in dimension".into()));
    }
    let distinct: std::collections::BTreeSet<_> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(Error::InsufficientData("training needs at least two distinct topics".into()));
    }
    let k = TopicLabel::ALL.len();
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let mut p = Params::zeros(k, d);
    let (mut f, mut g) = objective_and_gradient(&p, x, &y, config.lambda);
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < config.max_iters && norm(&g) > config.tol {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        for _ in 0..60 {
            let trial = Params {
                theta: p.theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect(),
                ..p.clone()
            };
            let (ft, gt) = objective_and_gradient(&trial, x, &y, config.lambda);
            if ft <= f - 1e-4 * step * g2 {
                p = trial;
                f = ft;
                g = gt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(f);
        iterations += 1;
        step *= 2.0;
    }
    let gn = norm(&g);
    Ok(TopicModel {
        weights: (0..k).map(|c| p.w(c).to_vec()).collect(),
        biases: (0..k).map(|c| p.b(c)).collect(),
        lambda: config.lambda,
        iterations,
        final_objective: f,
        final_gradient_norm: gn,
        converged: gn <= config.tol,
        objective_trace: trace,
    })
}

/// Highest-scoring topic; ties go to the earliest topic.
pub fn classify(model: &TopicModel, embedding: &[f64]) -> Result<TopicLabel> {
    if embedding.len() != model.dimension() {
        return Err(Error::InvalidInput(format!(
            "embedding has dimension {}, model expects {}",
            embedding.len(),
            model.dimension()
        )));
    }
    let scores = model.scores(embedding);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(TopicLabel::ALL[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorSummary {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicStats {
    /// Tweets per calendar month, keyed `YYYY-MM`.
    pub monthly_counts: BTreeMap<String, usize>,
    /// Topic shares of labelled tweets per calendar year.
    pub yearly_topic_shares: BTreeMap<i32, BTreeMap<TopicLabel, f64>>,
    pub unlabeled: usize,
    pub per_author: BTreeMap<String, usize>,
    pub author_summary: AuthorSummary,
}

pub fn corpus_stats(store: &CorpusStore, labels: &HashMap<String, TopicLabel>) -> TopicStats {
    let mut monthly_counts = BTreeMap::new();
    let mut yearly: BTreeMap<i32, BTreeMap<TopicLabel, usize>> = BTreeMap::new();
    let mut per_author: BTreeMap<String, usize> = store.handles().map(|h| (h.to_string(), 0)).collect();
    let mut unlabeled = 0;
    for t in store.tweets() {
        let key = format!("{:04}-{:02}", t.created_at.year(), t.created_at.month());
        *monthly_counts.entry(key).or_insert(0) += 1;
        *per_author.entry(t.handle.clone()).or_insert(0) += 1;
        match labels.get(&t.tweet_id) {
            Some(&l) => *yearly.entry(t.created_at.year()).or_default().entry(l).or_insert(0) += 1,
            None => unlabeled += 1,
        }
    }
    let yearly_topic_shares = yearly
        .into_iter()
        .map(|(year, counts)| {
            let total: usize = counts.values().sum();
            let shares = TopicLabel::ALL
                .iter()
                .map(|&l| (l, counts.get(&l).copied().unwrap_or(0) as f64 / total as f64))
                .collect();
            (year, shares)
        })
        .collect();
    let mut sorted: Vec<f64> = per_author.values().map(|&c| c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    TopicStats {
        monthly_counts,
        yearly_topic_shares,
        unlabeled,
        per_author,
        author_summary: AuthorSummary {
            p50: quantile(&sorted, 0.5),
            p90: quantile(&sorted, 0.9),
            p99: quantile(&sorted, 0.99),
            max: sorted.last().copied().unwrap_or(f64::NAN),
        },
    }
}
