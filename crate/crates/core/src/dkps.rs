//! Data kernel perspective spaces: per-member question-response matrices,
//! their Frobenius geometry embedded by classical MDS, and roll-call vote
//! prediction on the embedded coordinates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Congressperson, CorpusStore, Party, QuestionSet, RollCall, Timestamp, Vote};
use crate::numerics::{classical_mds, euclidean, frobenius_distance, DistanceMatrix};
use crate::prompts::{question_prompt, RefusalPolicy};
use crate::providers::{embed_batch, generate_all, GenerationRequest, Providers};
use crate::retrieval::{Hit, SearchFilter, VectorIndex};
use crate::stats::{
    baseline_majority, baseline_party_line, cv_knn, stratified_folds, CvReport, KStats, StatsError,
};
use crate::util::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DkpsMode {
    Generated,
    Retrieved,
}

impl std::str::FromStr for DkpsMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "generated" => Ok(DkpsMode::Generated),
            "retrieved" => Ok(DkpsMode::Retrieved),
            _ => Err(format!("unknown DKPS mode \"{s}\"; expected generated or retrieved")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkpsConfig {
    /// Generations per question (ignored in retrieved mode).
    pub replicates: usize,
    pub mode: DkpsMode,
    pub d_override: Option<usize>,
    pub seed: u64,
    /// Re-normalize replicate means to unit length.
    pub normalize_rows: bool,
    pub temperature: f64,
}

impl Default for DkpsConfig {
    fn default() -> Self {
        DkpsConfig {
            replicates: 20,
            mode: DkpsMode::Generated,
            d_override: None,
            seed: 0,
            normalize_rows: true,
            temperature: 0.7,
        }
    }
}

impl DkpsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be >= 1".into()));
        }
        if self.d_override == Some(0) {
            return Err(Error::InvalidInput("d must be >= 1".into()));
        }
        Ok(())
    }
}

/// One generation made while building a representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub question: usize,
    pub replicate: usize,
    pub seed: u64,
    pub text: String,
    pub refused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub handle: String,
    /// Q rows of dimension D.
    pub matrix: Vec<Vec<f64>>,
    /// Questions whose replicates were all refused; these rows hold the
    /// retrieved tweet's embedding instead.
    pub fallback_rows: Vec<usize>,
    pub retrieved_ids: Vec<String>,
    pub replicates: Vec<ReplicateRecord>,
}

/// Handles (roster order) with at least one tweet strictly before `vote_time`.
pub fn eligible_members(store: &CorpusStore, vote_time: Timestamp) -> Vec<String> {
    store
        .roster()
        .iter()
        .filter(|m| {
            store
                .tweets_before(&m.handle, vote_time)
                .map(|t| !t.is_empty())
                .unwrap_or(false)
        })
        .map(|m| m.handle.clone())
        .collect()
}

/// For each question, the member's pre-vote tweet with the highest cosine
/// similarity. The same tweet may answer several questions.
pub fn retrieve_for_questions(
    index: &VectorIndex,
    handle: &str,
    question_embeddings: &[Vec<f64>],
    vote_time: Timestamp,
) -> Result<Vec<Hit>> {
    let filter = SearchFilter {
        handle: Some(handle.to_string()),
        before: Some(vote_time),
    };
    question_embeddings
        .iter()
        .map(|q| {
            index.nearest(q, &filter)?.ok_or_else(|| {
                Error::InsufficientData(format!("{handle} has no indexed tweet before the vote"))
            })
        })
        .collect()
}

fn mean_row(rows: &[&Vec<f64>], normalize: bool) -> Vec<f64> {
    let dim = rows[0].len();
    let mut acc = vec![0.0; dim];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r.iter()) {
            *a += x;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    if normalize {
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|a| *a /= norm);
        }
    }
    acc
}

/// Seed for replicate `rep` of question `q` of member `handle`.
pub fn replicate_seed(base: u64, bill_id: &str, handle: &str, q: usize, rep: usize) -> u64 {
    derive_seed(base, &["dkps", bill_id, handle, &q.to_string(), &rep.to_string()])
}

/// A member to represent with its per-question retrievals.
pub struct MemberQuery<'a> {
    pub member: &'a Congressperson,
    pub retrieved: Vec<Hit>,
}

/// Builds every member's representation. Generation requests of all members
/// are issued as one batch under the provider worker cap, and all surviving
/// responses are embedded together.
pub fn build_representations(
    members: &[MemberQuery<'_>],
    questions: &QuestionSet,
    index: &VectorIndex,
    store: &CorpusStore,
    providers: Providers<'_>,
    config: &DkpsConfig,
    policy: &RefusalPolicy,
) -> Result<Vec<Representation>> {
    config.validate()?;
    questions.validate()?;
    let q_count = questions.questions.len();
    for m in members {
        if m.retrieved.len() != q_count {
            return Err(Error::InvalidInput(format!(
                "{}: {} retrievals for {q_count} questions",
                m.member.handle,
                m.retrieved.len()
            )));
        }
    }
    let retrieved_rows = |m: &MemberQuery<'_>| -> Vec<Vec<f64>> {
        m.retrieved.iter().map(|h| index.vector(h.position).to_vec()).collect()
    };
    let ids = |m: &MemberQuery<'_>| -> Vec<String> { m.retrieved.iter().map(|h| h.id.clone()).collect() };

    if config.mode == DkpsMode::Retrieved {
        return Ok(members
            .iter()
            .map(|m| Representation {
                handle: m.member.handle.clone(),
                matrix: retrieved_rows(m),
                fallback_rows: Vec::new(),
                retrieved_ids: ids(m),
                replicates: Vec::new(),
            })
            .collect());
    }

    let mut requests = Vec::with_capacity(members.len() * q_count * config.replicates);
    let mut slots = Vec::with_capacity(requests.capacity());
    for (mi, m) in members.iter().enumerate() {
        for (q, (question, hit)) in questions.questions.iter().zip(&m.retrieved).enumerate() {
            let text = &store
                .tweet(&hit.id)
                .ok_or_else(|| Error::InvalidInput(format!("retrieved tweet {} not in corpus", hit.id)))?
                .text;
            let prompt = question_prompt(&m.member.name, question, text)?;
            for rep in 0..config.replicates {
                let seed = replicate_seed(config.seed, &questions.bill_id, &m.member.handle, q, rep);
                requests.push(GenerationRequest {
                    system: prompt.system.clone(),
                    user: prompt.user.clone(),
                    temperature: config.temperature,
                    seed: Some(seed),
                });
                slots.push((mi, q, rep, seed));
            }
        }
    }
    let texts = generate_all(providers.generation, &requests, providers.jobs)?;
    let refused: Vec<bool> = texts.iter().map(|t| policy.is_refusal(t)).collect();
    let kept: Vec<String> = texts
        .iter()
        .zip(&refused)
        .filter(|(_, r)| !**r)
        .map(|(t, _)| t.clone())
        .collect();
    let embedded = if kept.is_empty() {
        Vec::new()
    } else {
        embed_batch(providers.embedding, &kept)?
    };
    if let Some(v) = embedded.first() {
        if v.len() != index.dimension() {
            return Err(Error::InvalidInput(format!(
                "generation embeddings have dimension {}, index has {}",
                v.len(),
                index.dimension()
            )));
        }
    }

    // per member, per question: embeddings of surviving replicates
    let mut per_cell: Vec<Vec<Vec<&Vec<f64>>>> = vec![vec![Vec::new(); q_count]; members.len()];
    let mut logs: Vec<Vec<ReplicateRecord>> = vec![Vec::new(); members.len()];
    let mut next = 0;
    for (i, &(mi, q, rep, seed)) in slots.iter().enumerate() {
        if !refused[i] {
            per_cell[mi][q].push(&embedded[next]);
            next += 1;
        }
        logs[mi].push(ReplicateRecord {
            question: q,
            replicate: rep,
            seed,
            text: texts[i].clone(),
            refused: refused[i],
        });
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let fallback = retrieved_rows(m);
            let mut fallback_rows = Vec::new();
            let matrix = (0..q_count)
                .map(|q| {
                    let cell = &per_cell[mi][q];
                    if cell.is_empty() {
                        fallback_rows.push(q);
                        fallback[q].clone()
                    } else {
                        mean_row(cell, config.normalize_rows)
                    }
                })
                .collect();
            Representation {
                handle: m.member.handle.clone(),
                matrix,
                fallback_rows,
                retrieved_ids: ids(m),
                replicates: std::mem::take(&mut logs[mi]),
            }
        })
        .collect())
}

/// Single-member convenience wrapper over [`build_representations`].
pub fn build_representation(
    member: &Congressperson,
    questions: &QuestionSet,
    retrieved: Vec<Hit>,
    index: &VectorIndex,
    store: &CorpusStore,
    providers: Providers<'_>,
    config: &DkpsConfig,
    policy: &RefusalPolicy,
) -> Result<Representation> {
    let query = MemberQuery { member, retrieved };
    let mut reps = build_representations(&[query], questions, index, store, providers, config, policy)?;
    Ok(reps.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkpsModel {
    pub handles: Vec<String>,
    /// Row i is the embedded position of `handles[i]`.
    pub coords: Vec<Vec<f64>>,
    pub d: usize,
    pub mode: DkpsMode,
    pub eigenvalues: Vec<f64>,
    pub distance_matrix: DistanceMatrix,
    /// Fallback question rows per member (only members with any).
    pub fallback_rows: BTreeMap<String, Vec<usize>>,
}

impl DkpsModel {
    /// A model over given coordinates (distances are recomputed from them).
    pub fn from_coords(handles: Vec<String>, coords: Vec<Vec<f64>>, mode: DkpsMode) -> Result<Self> {
        if handles.len() != coords.len() {
            return Err(Error::InvalidInput(format!(
                "{} handles for {} coordinate rows",
                handles.len(),
                coords.len()
            )));
        }
        let distance_matrix = crate::numerics::pairwise_euclidean(&coords)?;
        Ok(DkpsModel {
            d: coords.first().map_or(0, Vec::len),
            handles,
            coords,
            mode,
            eigenvalues: Vec::new(),
            distance_matrix,
            fallback_rows: BTreeMap::new(),
        })
    }

    pub fn position(&self, handle: &str) -> Option<usize> {
        self.handles.iter().position(|h| h == handle)
    }

    pub fn coord(&self, handle: &str) -> Option<&[f64]> {
        self.position(handle).map(|i| self.coords[i].as_slice())
    }

    /// Embedded distance between two members.
    pub fn distance(&self, a: &str, b: &str) -> Option<f64> {
        Some(euclidean(self.coord(a)?, self.coord(b)?))
    }

    /// Same model with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> DkpsModel {
        let mut out = self.clone();
        out.coords.iter_mut().flatten().for_each(|x| *x *= s);
        out.distance_matrix = self.distance_matrix.scaled(s);
        out
    }
}

/// Pairwise Frobenius distances between representations, embedded by
/// classical MDS.
pub fn build_dkps(reps: &[Representation], config: &DkpsConfig) -> Result<DkpsModel> {
    if reps.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "DKPS needs at least 2 members, got {}",
            reps.len()
        )));
    }
    let (q, dim) = (reps[0].matrix.len(), reps[0].matrix.first().map_or(0, Vec::len));
    for r in reps {
        if r.matrix.len() != q || r.matrix.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "{} has a representation of a different shape (expected {q}x{dim})",
                r.handle
            )));
        }
    }
    let mut failure = None;
    let distances = DistanceMatrix::from_fn(reps.len(), |i, j| {
        frobenius_distance(&reps[i].matrix, &reps[j].matrix).unwrap_or_else(|e| {
            failure = Some(e);
            0.0
        })
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let dim_request = config.d_override.map(|d| d.min(reps.len()));
    let mds = classical_mds(&distances, dim_request)?;
    Ok(DkpsModel {
        handles: reps.iter().map(|r| r.handle.clone()).collect(),
        coords: mds.coords,
        d: mds.d,
        mode: config.mode,
        eigenvalues: mds.eigenvalues,
        distance_matrix: distances,
        fallback_rows: reps
            .iter()
            .filter(|r| !r.fallback_rows.is_empty())
            .map(|r| (r.handle.clone(), r.fallback_rows.clone()))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotePoint {
    pub handle: String,
    pub party: Party,
    pub coords: Vec<f64>,
    pub vote: Vote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotePredictionReport {
    pub bill_id: String,
    pub mode: DkpsMode,
    pub n_voters: usize,
    /// Members of the model without a Yea/Nay vote on this roll call.
    pub n_excluded: usize,
    /// `None` when the roll call has a single outcome.
    pub knn: Option<CvReport>,
    pub knn_undefined_reason: Option<String>,
    pub majority: KStats,
    pub party_line: KStats,
    pub points: Vec<VotePoint>,
}

/// Cross-validated k-NN on DKPS coordinates with Majority and Party-line
/// baselines evaluated on the same folds. Only Yea/Nay voters take part.
pub fn predict_votes(
    model: &DkpsModel,
    rollcall: &RollCall,
    roster: &[Congressperson],
    k_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<VotePredictionReport> {
    let party_of: BTreeMap<&str, Party> = roster.iter().map(|m| (m.handle.as_str(), m.party)).collect();
    let mut points = Vec::new();
    for (h, c) in model.handles.iter().zip(&model.coords) {
        match (rollcall.vote(h), party_of.get(h.as_str())) {
            (Some(v), Some(&party)) if v.is_yea_or_nay() => points.push(VotePoint {
                handle: h.clone(),
                party,
                coords: c.clone(),
                vote: v,
            }),
            _ => {}
        }
    }
    let n = points.len();
    if n < folds.max(2) {
        return Err(StatsError::TooFewSamples {
            needed: folds.max(2),
            got: n,
        }
        .into());
    }
    let x: Vec<Vec<f64>> = points.iter().map(|p| p.coords.clone()).collect();
    let y: Vec<Vote> = points.iter().map(|p| p.vote).collect();
    let fold_of = stratified_folds(&y, folds, seed);

    let mut majority = Vec::with_capacity(folds);
    let mut party_line = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<&VotePoint> = points.iter().zip(&fold_of).filter(|(_, &g)| g != f).map(|(p, _)| p).collect();
        let test: Vec<&VotePoint> = points.iter().zip(&fold_of).filter(|(_, &g)| g == f).map(|(p, _)| p).collect();
        let train_votes: Vec<Vote> = train.iter().map(|p| p.vote).collect();
        let train_pairs: Vec<(Party, Vote)> = train.iter().map(|p| (p.party, p.vote)).collect();
        let modal = baseline_majority(&train_votes);
        let share = |hits: usize| hits as f64 / test.len() as f64;
        majority.push(share(test.iter().filter(|p| p.vote == modal).count()));
        party_line.push(share(
            test.iter()
                .filter(|p| baseline_party_line(&train_pairs, p.party) == p.vote)
                .count(),
        ));
    }

    let (knn, knn_undefined_reason) = match cv_knn(&x, &y, k_grid, folds, seed) {
        Ok(r) => (Some(r), None),
        Err(StatsError::SingleClass) => (None, Some("single-outcome roll call".to_string())),
        Err(e) => return Err(e.into()),
    };
    Ok(VotePredictionReport {
        bill_id: rollcall.bill_id.clone(),
        mode: model.mode,
        n_voters: n,
        n_excluded: model.handles.len() - n,
        knn,
        knn_undefined_reason,
        majority: KStats::from_folds(majority),
        party_line: KStats::from_folds(party_line),
        points,
    })
}

/// Output of [`build_bill_dkps`].
#[derive(Debug, Clone)]
pub struct BillDkps {
    pub model: DkpsModel,
    pub representations: Vec<Representation>,
    /// Roster members without a tweet before the vote.
    pub excluded: Vec<String>,
}

/// The whole bill pipeline: eligible members, one index over their pre-vote
/// tweets, per-question retrieval, representations and the joint MDS.
pub fn build_bill_dkps(
    store: &CorpusStore,
    questions: &QuestionSet,
    vote_time: Timestamp,
    providers: Providers<'_>,
    config: &DkpsConfig,
    policy: &RefusalPolicy,
) -> Result<BillDkps> {
    questions.validate()?;
    let eligible = eligible_members(store, vote_time);
    if eligible.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} members tweeted before the vote, at least 2 needed",
            eligible.len()
        )));
    }
    let excluded = store
        .roster()
        .iter()
        .filter(|m| !eligible.contains(&m.handle))
        .map(|m| m.handle.clone())
        .collect();
    let mut pool = Vec::new();
    for h in &eligible {
        pool.extend(store.tweets_before(h, vote_time)?);
    }
    let index = crate::retrieval::index_tweets(&pool, providers.embedding)?;
    let q_embs = embed_batch(providers.embedding, &questions.questions)?;
    let members = eligible
        .iter()
        .map(|h| {
            Ok(MemberQuery {
                member: store.member(h).expect("eligible members are on the roster"),
                retrieved: retrieve_for_questions(&index, h, &q_embs, vote_time)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let representations = build_representations(&members, questions, &index, store, providers, config, policy)?;
    let model = build_dkps(&representations, config)?;
    Ok(BillDkps {
        model,
        representations,
        excluded,
    })
}
