//! Seeded synthetic corpora.
//!
//! Tweets are bags of pseudo-words. Each persona writes mostly about two
//! favourite topics, mixing topic words, common filler and a handful of
//! signature words. No synthetic text contains a party token or a token
//! with the disjoint-vocabulary prefix, so party signal only ever enters
//! through a generator.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{
    parse_timestamp, Chamber, Congressperson, CorpusStore, Party, QuestionSet, RollCall, Timestamp, Tweet, Vote,
};
use crate::dkps::{DkpsMode, DkpsModel};
use crate::providers::{party_tokens, ALIEN_PREFIX};
use crate::topics::TopicLabel;
use crate::util::{derive_seed, rng_from};

const SYLLABLES: &[&str] = &[
    "ba", "ke", "lo", "mi", "nu", "ra", "se", "ti", "vo", "du", "fe", "go", "hi", "ju", "pa", "ri", "so", "te",
    "wa", "ly", "mo", "ne", "ka", "ve",
];
const STATES: &[&str] = &[
    "AL", "AK", "AZ", "CA", "CO", "FL", "GA", "IL", "IN", "KY", "MA", "MI", "MN", "NC", "NY", "OH", "OR", "PA",
    "TX", "VA", "WA", "WI",
];

const TOPIC_WORDS: usize = 40;
const COMMON_WORDS: usize = 80;
const SIGNATURE_WORDS: usize = 10;

pub fn default_cutoff() -> Timestamp {
    parse_timestamp("2023-01-01T00:00:00Z").expect("valid literal")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub personas: usize,
    pub tweets_before: usize,
    pub tweets_after: usize,
    pub cutoff: Timestamp,
    /// Every `senate_every`-th member sits in the Senate; 0 means nobody.
    pub senate_every: usize,
    pub retweet_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            personas: 100,
            tweets_before: 40,
            tweets_after: 220,
            cutoff: default_cutoff(),
            senate_every: 5,
            retweet_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub store: CorpusStore,
    /// Topic each tweet was written about.
    pub topics: BTreeMap<String, TopicLabel>,
    pub topic_vocabulary: Vec<Vec<String>>,
}

struct Vocabulary {
    topics: Vec<Vec<String>>,
    common: Vec<String>,
}

fn forbidden(word: &str) -> bool {
    word.starts_with(ALIEN_PREFIX)
        || [Party::Democrat, Party::Republican, Party::Independent]
            .iter()
            .any(|&p| party_tokens(p).contains(&word))
}

/// `count` distinct pseudo-words not in `taken`.
fn fresh_words(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = rng.gen_range(2..=4);
        let w: String = (0..len).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        if !forbidden(&w) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn vocabulary(seed: u64, taken: &mut BTreeSet<String>) -> Vocabulary {
    let mut rng = rng_from(derive_seed(seed, &["synthetic", "vocabulary"]));
    let topics = (0..TopicLabel::ALL.len())
        .map(|_| fresh_words(&mut rng, TOPIC_WORDS, taken))
        .collect();
    let common = fresh_words(&mut rng, COMMON_WORDS, taken);
    Vocabulary { topics, common }
}

fn sentence(words: Vec<&str>) -> String {
    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        let upper = first.to_uppercase();
        text.replace_range(..1, &upper);
    }
    text.push('.');
    text
}

/// Handle of synthetic member `i`.
pub fn handle_for(i: usize) -> String {
    format!("synth_{i:03}")
}

pub fn synthetic_corpus(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut taken = BTreeSet::new();
    let vocab = vocabulary(spec.seed, &mut taken);
    let mut roster = Vec::with_capacity(spec.personas);
    let mut tweets = Vec::new();
    let mut topics = BTreeMap::new();
    let span_before = Duration::days(730).num_seconds();
    let span_after = Duration::days(540).num_seconds();
    for i in 0..spec.personas {
        let handle = handle_for(i);
        let mut rng = rng_from(derive_seed(spec.seed, &["synthetic", "persona", &handle]));
        let party = if i % 2 == 0 { Party::Democrat } else { Party::Republican };
        let chamber = if spec.senate_every > 0 && i % spec.senate_every == spec.senate_every - 1 {
            Chamber::Senate
        } else {
            Chamber::House
        };
        roster.push(Congressperson {
            handle: handle.clone(),
            name: format!("Member {i:03}"),
            party,
            chamber,
            state: STATES[i % STATES.len()].to_string(),
        });
        let signature = fresh_words(&mut rng, SIGNATURE_WORDS, &mut taken);
        let mut favourites: Vec<usize> = (0..TopicLabel::ALL.len()).collect();
        favourites.shuffle(&mut rng);
        let total = spec.tweets_before + spec.tweets_after;
        for k in 0..total {
            let topic = if rng.gen_bool(0.7) {
                favourites[rng.gen_range(0..2)]
            } else {
                favourites[rng.gen_range(2..favourites.len())]
            };
            let n_tokens = rng.gen_range(12..=20);
            let words: Vec<&str> = (0..n_tokens)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < 0.5 {
                        vocab.topics[topic].choose(&mut rng).expect("non-empty").as_str()
                    } else if u < 0.8 {
                        vocab.common.choose(&mut rng).expect("non-empty").as_str()
                    } else {
                        signature.choose(&mut rng).expect("non-empty").as_str()
                    }
                })
                .collect();
            let offset = if k < spec.tweets_before {
                -rng.gen_range(1..=span_before)
            } else {
                rng.gen_range(0..span_after)
            };
            let id = format!("{i:03}{k:05}");
            topics.insert(id.clone(), TopicLabel::ALL[topic]);
            tweets.push(Tweet {
                tweet_id: id,
                handle: handle.clone(),
                text: sentence(words),
                created_at: spec.cutoff + Duration::seconds(offset),
                is_retweet: rng.gen_bool(spec.retweet_rate),
            });
        }
    }
    SyntheticCorpus {
        store: CorpusStore::from_parts(tweets, roster).expect("synthetic corpus is valid"),
        topics,
        topic_vocabulary: vocab.topics,
    }
}

/// Members, questions and a party-line roll call with an exact share of
/// seeded flips.
#[derive(Debug, Clone)]
pub struct VoteFixture {
    pub corpus: SyntheticCorpus,
    pub questions: QuestionSet,
    pub rollcall: RollCall,
    pub flipped: Vec<String>,
}

/// Democrats vote Yea and Republicans Nay, except `round(flip_fraction·n)`
/// members chosen uniformly (seeded) who vote the other way.
pub fn party_rollcall(
    roster: &[Congressperson],
    bill_id: &str,
    chamber: Chamber,
    vote_time: Timestamp,
    flip_fraction: f64,
    seed: u64,
) -> (RollCall, Vec<String>) {
    let members: Vec<&Congressperson> = roster.iter().filter(|m| m.chamber == chamber).collect();
    let n_flip = (flip_fraction * members.len() as f64).round() as usize;
    let mut rng = rng_from(derive_seed(seed, &["synthetic", "flips", bill_id]));
    let flip: BTreeSet<usize> = sample(&mut rng, members.len(), n_flip.min(members.len())).into_iter().collect();
    let mut votes = BTreeMap::new();
    let mut flipped = Vec::new();
    for (i, m) in members.iter().enumerate() {
        let line = if m.party == Party::Democrat { Vote::Yea } else { Vote::Nay };
        let v = if flip.contains(&i) {
            flipped.push(m.handle.clone());
            opposite(line)
        } else {
            line
        };
        votes.insert(m.handle.clone(), v);
    }
    (
        RollCall {
            bill_id: bill_id.to_string(),
            chamber,
            vote_time,
            votes,
        },
        flipped,
    )
}

fn opposite(v: Vote) -> Vote {
    if v == Vote::Yea {
        Vote::Nay
    } else {
        Vote::Yea
    }
}

pub fn vote_fixture(members: usize, n_questions: usize, flip_fraction: f64, seed: u64) -> VoteFixture {
    let spec = SyntheticSpec {
        personas: members,
        tweets_before: 30,
        tweets_after: 0,
        senate_every: 0,
        seed,
        ..SyntheticSpec::default()
    };
    let corpus = synthetic_corpus(&spec);
    let mut rng = rng_from(derive_seed(seed, &["synthetic", "questions"]));
    let questions = (0..n_questions)
        .map(|q| {
            let words = &corpus.topic_vocabulary[q % corpus.topic_vocabulary.len()];
            let pick: Vec<&str> = words.choose_multiple(&mut rng, 3).map(String::as_str).collect();
            format!("How would the {} provision change {} for {}?", pick[0], pick[1], pick[2])
        })
        .collect();
    let bill_id = "117-HR-9001".to_string();
    let (rollcall, flipped) = party_rollcall(
        corpus.store.roster(),
        &bill_id,
        Chamber::House,
        spec.cutoff,
        flip_fraction,
        seed,
    );
    VoteFixture {
        questions: QuestionSet {
            bill_id,
            summary: "A synthetic appropriations bill.".into(),
            questions,
        },
        corpus,
        rollcall,
        flipped,
    }
}

/// One House roll call, its associated Senate roll call, and the joint DKPS.
#[derive(Debug, Clone)]
pub struct BicameralBill {
    pub house: RollCall,
    pub senate: RollCall,
    pub model: DkpsModel,
}

#[derive(Debug, Clone)]
pub struct BicameralFixture {
    pub roster: Vec<Congressperson>,
    pub bills: Vec<BicameralBill>,
    /// Moderateness in [0, 1] per member; higher sits closer to the centre.
    pub moderateness: BTreeMap<String, f64>,
}

pub const BICAMERAL_HOUSE_PER_PARTY: usize = 60;
pub const BICAMERAL_SENATE_PER_PARTY: usize = 50;
const FLIPPERS_PER_PARTY: usize = 3;

/// Four bills over a two-party roster placed on a left-right axis. Per bill,
/// a few moderate House members of one or both parties cross the party line.
/// A senator crosses with probability decaying in their distance to the
/// nearest same-party House flipper; with `null_flips` every senator crosses
/// with a flat probability instead.
pub fn bicameral_fixture(seed: u64, null_flips: bool) -> BicameralFixture {
    let mut rng = rng_from(derive_seed(seed, &["synthetic", "bicameral"]));
    let mut roster = Vec::new();
    let mut moderateness = BTreeMap::new();
    let mut base = Vec::new();
    let jitter_y = Normal::new(0.0, 0.05).expect("valid sd");
    for (chamber, per_party, tag) in [
        (Chamber::House, BICAMERAL_HOUSE_PER_PARTY, "h"),
        (Chamber::Senate, BICAMERAL_SENATE_PER_PARTY, "s"),
    ] {
        for party in [Party::Democrat, Party::Republican] {
            for i in 0..per_party {
                let handle = format!("{tag}{}_{i:02}", if party == Party::Democrat { "d" } else { "r" });
                let m: f64 = rng.gen();
                let side = if party == Party::Democrat { -1.0 } else { 1.0 };
                base.push((handle.clone(), vec![side * (1.2 - m), jitter_y.sample(&mut rng)]));
                moderateness.insert(handle.clone(), m);
                roster.push(Congressperson {
                    name: handle.to_uppercase(),
                    handle,
                    party,
                    chamber,
                    state: STATES[i % STATES.len()].to_string(),
                });
            }
        }
    }
    let vote_time = default_cutoff();
    let per_bill_noise = Normal::new(0.0, 0.02).expect("valid sd");
    let flipper_parties: [&[Party]; 4] = [
        &[Party::Democrat, Party::Republican],
        &[Party::Democrat],
        &[Party::Republican],
        &[Party::Democrat, Party::Republican],
    ];
    let mut bills = Vec::new();
    for (b, parties) in flipper_parties.iter().enumerate() {
        let bill = format!("117-HR-{}", 100 + b);
        let line = |p: Party| if p == Party::Democrat { Vote::Yea } else { Vote::Nay };

        let handles: Vec<String> = base.iter().map(|(h, _)| h.clone()).collect();
        let coords: Vec<Vec<f64>> = base
            .iter()
            .map(|(_, c)| c.iter().map(|x| x + per_bill_noise.sample(&mut rng)).collect())
            .collect();
        let position: BTreeMap<&str, &[f64]> =
            handles.iter().map(String::as_str).zip(coords.iter().map(Vec::as_slice)).collect();
        let mut flippers_by_party: BTreeMap<Party, Vec<&str>> = BTreeMap::new();
        let mut house_votes = BTreeMap::new();
        for &party in [Party::Democrat, Party::Republican].iter() {
            let members: Vec<&Congressperson> = roster
                .iter()
                .filter(|m| m.chamber == Chamber::House && m.party == party)
                .collect();
            let moderates: Vec<&&Congressperson> = members.iter().filter(|m| moderateness[&m.handle] > 0.7).collect();
            let flippers: BTreeSet<&str> = if parties.contains(&party) {
                moderates
                    .choose_multiple(&mut rng, FLIPPERS_PER_PARTY)
                    .map(|m| m.handle.as_str())
                    .collect()
            } else {
                BTreeSet::new()
            };
            flippers_by_party.insert(party, flippers.iter().copied().collect());
            for m in members {
                let v = if flippers.contains(m.handle.as_str()) { opposite(line(party)) } else { line(party) };
                house_votes.insert(m.handle.clone(), v);
            }
        }

        let mut senate_votes = BTreeMap::new();
        for m in roster.iter().filter(|m| m.chamber == Chamber::Senate) {
            let p = if null_flips {
                0.2
            } else {
                let xs = position[m.handle.as_str()];
                flippers_by_party[&m.party]
                    .iter()
                    .map(|f| crate::numerics::euclidean(xs, position[f]))
                    .min_by(f64::total_cmp)
                    .map_or(0.0, |d| 0.7 * (-d / 0.2).exp())
            };
            let v = if rng.gen_bool(p) { opposite(line(m.party)) } else { line(m.party) };
            senate_votes.insert(m.handle.clone(), v);
        }

        bills.push(BicameralBill {
            house: RollCall {
                bill_id: bill.clone(),
                chamber: Chamber::House,
                vote_time,
                votes: house_votes,
            },
            senate: RollCall {
                bill_id: format!("{bill}-S"),
                chamber: Chamber::Senate,
                vote_time,
                votes: senate_votes,
            },
            model: DkpsModel::from_coords(handles, coords, DkpsMode::Generated).expect("matching shapes"),
        });
    }
    BicameralFixture {
        roster,
        bills,
        moderateness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::tokenize;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            personas: 6,
            tweets_before: 5,
            tweets_after: 7,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn corpus_shape_and_split() {
        let c = synthetic_corpus(&small());
        assert_eq!(c.store.roster().len(), 6);
        assert_eq!(c.store.tweets().len(), 72);
        for h in c.store.handles() {
            let (pre, post) = c.store.split_at(h, default_cutoff()).unwrap();
            assert_eq!((pre.len(), post.len()), (5, 7));
        }
        assert_eq!(c.topics.len(), 72);
        assert_eq!(c.store.roster()[4].chamber, Chamber::Senate);
    }

    #[test]
    fn corpus_is_seeded() {
        let a = synthetic_corpus(&small());
        let b = synthetic_corpus(&small());
        assert_eq!(a.store.tweets(), b.store.tweets());
        let c = synthetic_corpus(&SyntheticSpec { seed: 1, ..small() });
        assert_ne!(a.store.tweets(), c.store.tweets());
    }

    #[test]
    fn no_party_or_alien_tokens() {
        let c = synthetic_corpus(&small());
        for t in c.store.tweets() {
            for tok in tokenize(&t.text) {
                assert!(!forbidden(&tok), "{tok}");
            }
        }
    }

    #[test]
    fn rollcall_flips_exact_share() {
        let f = vote_fixture(60, 5, 0.1, 3);
        assert_eq!(f.flipped.len(), 6);
        assert_eq!(f.rollcall.votes.len(), 60);
        assert_eq!(f.questions.questions.len(), 5);
        let wrong = f
            .corpus
            .store
            .roster()
            .iter()
            .filter(|m| {
                let line = if m.party == Party::Democrat { Vote::Yea } else { Vote::Nay };
                f.rollcall.vote(&m.handle) != Some(line)
            })
            .count();
        assert_eq!(wrong, 6);
    }

    #[test]
    fn bicameral_fixture_shape() {
        let f = bicameral_fixture(1, false);
        assert_eq!(f.bills.len(), 4);
        assert_eq!(f.roster.len(), 2 * (BICAMERAL_HOUSE_PER_PARTY + BICAMERAL_SENATE_PER_PARTY));
        for b in &f.bills {
            assert_eq!(b.house.votes.len(), 2 * BICAMERAL_HOUSE_PER_PARTY);
            assert_eq!(b.senate.votes.len(), 2 * BICAMERAL_SENATE_PER_PARTY);
            assert_eq!(b.model.handles.len(), f.roster.len());
        }
    }
}
