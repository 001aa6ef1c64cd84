//! Tweet corpus, congressperson roster, roll-call votes and bill question sets.
//!
//! All on-disk formats are JSON: tweets and roster are line-delimited
//! (one record per line), roll-calls and question sets are single documents.
//! Timestamps must carry an explicit zone and are normalized to UTC.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub file: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{} malformed record(s); first: {}", .0.len(), .0[0])]
    Malformed(Vec<LineIssue>),
    #[error("unknown handle \"{0}\"")]
    UnknownHandle(String),
    #[error("duplicate vote for handle \"{0}\"")]
    DuplicateVote(String),
    #[error("unknown vote token \"{0}\"; accepted tokens: Yea, Nay, Present, NotVoting, NA")]
    UnknownVoteToken(String),
    #[error("invalid timestamp \"{0}\": expected ISO-8601 with an explicit zone")]
    Timestamp(String),
    #[error("invalid document {}: {message}", path.display())]
    Document { path: PathBuf, message: String },
    #[error("tweet {0} has empty text")]
    EmptyText(String),
    #[error("invalid question set: {0}")]
    QuestionSet(String),
}

/// Parses an ISO-8601 timestamp. Naive timestamps (no zone) are rejected.
pub fn parse_timestamp(s: &str) -> Result<Timestamp, CorpusError> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| CorpusError::Timestamp(s.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum Party {
    Democrat,
    Republican,
    Independent,
    Other,
}

impl Party {
    pub fn as_str(self) -> &'static str {
        match self {
            Party::Democrat => "Democrat",
            Party::Republican => "Republican",
            Party::Independent => "Independent",
            Party::Other => "Other",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Party {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "democrat" | "democratic" | "dem" | "d" => Ok(Party::Democrat),
            "republican" | "rep" | "gop" | "r" => Ok(Party::Republican),
            "independent" | "ind" | "i" => Ok(Party::Independent),
            "other" => Ok(Party::Other),
            _ => Err(format!(
                "unknown party \"{s}\"; accepted: Democrat, Republican, Independent, Other"
            )),
        }
    }
}

impl TryFrom<String> for Party {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum Chamber {
    House,
    Senate,
}

impl fmt::Display for Chamber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chamber::House => "House",
            Chamber::Senate => "Senate",
        })
    }
}

impl FromStr for Chamber {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "house" => Ok(Chamber::House),
            "senate" => Ok(Chamber::Senate),
            _ => Err(format!("unknown chamber \"{s}\"; accepted: House, Senate")),
        }
    }
}

impl TryFrom<String> for Chamber {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum Vote {
    Yea,
    Nay,
    Present,
    NotVoting,
    #[serde(rename = "NA")]
    NA,
}

impl Vote {
    pub fn is_yea_or_nay(self) -> bool {
        matches!(self, Vote::Yea | Vote::Nay)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Vote::Yea => "Yea",
            Vote::Nay => "Nay",
            Vote::Present => "Present",
            Vote::NotVoting => "NotVoting",
            Vote::NA => "NA",
        }
    }
}

impl TryFrom<String> for Vote {
    type Error = CorpusError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for Vote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Vote {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yea" => Ok(Vote::Yea),
            "nay" => Ok(Vote::Nay),
            "present" => Ok(Vote::Present),
            "notvoting" => Ok(Vote::NotVoting),
            "na" | "n/a" => Ok(Vote::NA),
            _ => Err(CorpusError::UnknownVoteToken(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTweet")]
pub struct Tweet {
    pub tweet_id: String,
    pub handle: String,
    pub text: String,
    pub created_at: Timestamp,
    pub is_retweet: bool,
}

#[derive(Deserialize)]
struct RawTweet {
    tweet_id: String,
    handle: String,
    text: String,
    created_at: String,
    #[serde(default)]
    is_retweet: bool,
}

impl TryFrom<RawTweet> for Tweet {
    type Error = CorpusError;

    fn try_from(raw: RawTweet) -> Result<Self, Self::Error> {
        if raw.text.is_empty() {
            return Err(CorpusError::EmptyText(raw.tweet_id));
        }
        Ok(Tweet {
            created_at: parse_timestamp(&raw.created_at)?,
            tweet_id: raw.tweet_id,
            handle: raw.handle,
            text: raw.text,
            is_retweet: raw.is_retweet,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Congressperson {
    pub handle: String,
    pub name: String,
    pub party: Party,
    pub chamber: Chamber,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRollCall", into = "RawRollCall")]
pub struct RollCall {
    pub bill_id: String,
    pub chamber: Chamber,
    pub vote_time: Timestamp,
    pub votes: BTreeMap<String, Vote>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawVote {
    handle: String,
    vote: String,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawRollCall {
    bill_id: String,
    chamber: Chamber,
    vote_time: String,
    votes: Vec<RawVote>,
}

impl TryFrom<RawRollCall> for RollCall {
    type Error = CorpusError;

    fn try_from(raw: RawRollCall) -> Result<Self, Self::Error> {
        let mut votes = BTreeMap::new();
        for v in raw.votes {
            let vote: Vote = v.vote.parse()?;
            if votes.insert(v.handle.clone(), vote).is_some() {
                return Err(CorpusError::DuplicateVote(v.handle));
            }
        }
        Ok(RollCall {
            bill_id: raw.bill_id,
            chamber: raw.chamber,
            vote_time: parse_timestamp(&raw.vote_time)?,
            votes,
        })
    }
}

impl From<RollCall> for RawRollCall {
    fn from(rc: RollCall) -> Self {
        RawRollCall {
            bill_id: rc.bill_id,
            chamber: rc.chamber,
            vote_time: rc.vote_time.to_rfc3339(),
            votes: rc
                .votes
                .into_iter()
                .map(|(handle, vote)| RawVote {
                    handle,
                    vote: vote.as_str().to_string(),
                })
                .collect(),
        }
    }
}

impl RollCall {
    pub fn vote(&self, handle: &str) -> Option<Vote> {
        self.votes.get(handle).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub bill_id: String,
    pub summary: String,
    pub questions: Vec<String>,
}

impl QuestionSet {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.questions.is_empty() {
            return Err(CorpusError::QuestionSet(format!(
                "{} has no questions",
                self.bill_id
            )));
        }
        if let Some(i) = self.questions.iter().position(|q| q.trim().is_empty()) {
            return Err(CorpusError::QuestionSet(format!(
                "{} question {i} is empty",
                self.bill_id
            )));
        }
        Ok(())
    }
}

/// Validated, immutable tweet store with per-author time indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStore {
    tweets: Vec<Tweet>,
    roster: Vec<Congressperson>,
    roster_index: BTreeMap<String, usize>,
    /// Tweet positions per author, ascending by `created_at` (stable on ties).
    by_author: BTreeMap<String, Vec<usize>>,
    by_id: HashMap<String, usize>,
}

impl CorpusStore {
    /// Validates and indexes in-memory records.
    pub fn from_parts(tweets: Vec<Tweet>, roster: Vec<Congressperson>) -> Result<Self, CorpusError> {
        Self::build(tweets, roster, "tweets", "roster")
    }

    fn build(
        tweets: Vec<Tweet>,
        roster: Vec<Congressperson>,
        tweets_label: &str,
        roster_label: &str,
    ) -> Result<Self, CorpusError> {
        let mut issues = Vec::new();
        let mut roster_index = BTreeMap::new();
        for (i, member) in roster.iter().enumerate() {
            if roster_index.insert(member.handle.clone(), i).is_some() {
                issues.push(LineIssue {
                    file: roster_label.to_string(),
                    line: i + 1,
                    message: format!("duplicate roster handle \"{}\"", member.handle),
                });
            }
        }
        let mut by_id = HashMap::with_capacity(tweets.len());
        let mut by_author: BTreeMap<String, Vec<usize>> = roster_index
            .keys()
            .map(|h| (h.clone(), Vec::new()))
            .collect();
        for (i, t) in tweets.iter().enumerate() {
            if by_id.insert(t.tweet_id.clone(), i).is_some() {
                issues.push(LineIssue {
                    file: tweets_label.to_string(),
                    line: i + 1,
                    message: format!("duplicate tweet_id \"{}\"", t.tweet_id),
                });
            }
            if t.text.is_empty() {
                issues.push(LineIssue {
                    file: tweets_label.to_string(),
                    line: i + 1,
                    message: format!("tweet {} has empty text", t.tweet_id),
                });
            }
            match by_author.get_mut(&t.handle) {
                Some(list) => list.push(i),
                None => issues.push(LineIssue {
                    file: tweets_label.to_string(),
                    line: i + 1,
                    message: format!("tweet handle \"{}\" not found in roster", t.handle),
                }),
            }
        }
        if !issues.is_empty() {
            return Err(CorpusError::Malformed(issues));
        }
        for list in by_author.values_mut() {
            list.sort_by_key(|&i| tweets[i].created_at);
        }
        Ok(CorpusStore {
            tweets,
            roster,
            roster_index,
            by_author,
            by_id,
        })
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn roster(&self) -> &[Congressperson] {
        &self.roster
    }

    pub fn member(&self, handle: &str) -> Option<&Congressperson> {
        self.roster_index.get(handle).map(|&i| &self.roster[i])
    }

    pub fn tweet(&self, tweet_id: &str) -> Option<&Tweet> {
        self.by_id.get(tweet_id).map(|&i| &self.tweets[i])
    }

    /// Handles in lexicographic order.
    pub fn handles(&self) -> impl Iterator<Item = &str> {
        self.roster_index.keys().map(String::as_str)
    }

    fn author_index(&self, handle: &str) -> Result<&[usize], CorpusError> {
        self.by_author
            .get(handle)
            .map(Vec::as_slice)
            .ok_or_else(|| CorpusError::UnknownHandle(handle.to_string()))
    }

    /// All tweets by `handle`, ascending by time.
    pub fn author_tweets(&self, handle: &str) -> Result<Vec<&Tweet>, CorpusError> {
        Ok(self
            .author_index(handle)?
            .iter()
            .map(|&i| &self.tweets[i])
            .collect())
    }

    /// Tweets by `handle` with `created_at < cutoff`, ascending.
    pub fn tweets_before(&self, handle: &str, cutoff: Timestamp) -> Result<Vec<&Tweet>, CorpusError> {
        let (pre, _) = self.split_at(handle, cutoff)?;
        Ok(pre)
    }

    /// Partitions an author's tweets into `created_at < cutoff` and
    /// `created_at >= cutoff`.
    pub fn split_at(
        &self,
        handle: &str,
        cutoff: Timestamp,
    ) -> Result<(Vec<&Tweet>, Vec<&Tweet>), CorpusError> {
        let idx = self.author_index(handle)?;
        let split = idx.partition_point(|&i| self.tweets[i].created_at < cutoff);
        let pre = idx[..split].iter().map(|&i| &self.tweets[i]).collect();
        let post = idx[split..].iter().map(|&i| &self.tweets[i]).collect();
        Ok((pre, post))
    }

    /// A copy of the store without retweets.
    pub fn without_retweets(&self) -> CorpusStore {
        let tweets = self.tweets.iter().filter(|t| !t.is_retweet).cloned().collect();
        CorpusStore::from_parts(tweets, self.roster.clone())
            .expect("subset of a valid store is valid")
    }

    /// SHA-256 over the canonical serialization of roster and tweets.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        for m in &self.roster {
            serde_json::to_writer(&mut buf, m).expect("roster serializes");
            buf.push(b'\n');
        }
        for t in &self.tweets {
            serde_json::to_writer(&mut buf, t).expect("tweet serializes");
            buf.push(b'\n');
        }
        sha256_hex(&buf)
    }
}

fn open(path: &Path) -> Result<std::fs::File, CorpusError> {
    std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
    issues: &mut Vec<LineIssue>,
) -> Result<Vec<T>, CorpusError> {
    let label = path.display().to_string();
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(v) => out.push(v),
            Err(e) => issues.push(LineIssue {
                file: label.clone(),
                line: n + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Loads and validates a tweets file and a roster file. Every malformed
/// record is reported, not just the first.
pub fn load_corpus(tweets_path: &Path, roster_path: &Path) -> Result<CorpusStore, CorpusError> {
    let mut issues = Vec::new();
    let roster: Vec<Congressperson> = read_jsonl(roster_path, &mut issues)?;
    let tweets: Vec<Tweet> = read_jsonl(tweets_path, &mut issues)?;
    if !issues.is_empty() {
        return Err(CorpusError::Malformed(issues));
    }
    CorpusStore::build(
        tweets,
        roster,
        &tweets_path.display().to_string(),
        &roster_path.display().to_string(),
    )
}

/// Loads a roster file on its own. Handles must be unique.
pub fn load_roster(path: &Path) -> Result<Vec<Congressperson>, CorpusError> {
    let mut issues = Vec::new();
    let roster: Vec<Congressperson> = read_jsonl(path, &mut issues)?;
    if !issues.is_empty() {
        return Err(CorpusError::Malformed(issues));
    }
    CorpusStore::from_parts(Vec::new(), roster.clone())?;
    Ok(roster)
}

fn read_document<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Document {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_roll_call(path: &Path) -> Result<RollCall, CorpusError> {
    let raw: RawRollCall = read_document(path)?;
    RollCall::try_from(raw)
}

pub fn load_question_set(path: &Path) -> Result<QuestionSet, CorpusError> {
    let qs: QuestionSet = read_document(path)?;
    qs.validate()?;
    Ok(qs)
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(write_err(path))?);
    for r in records {
        serde_json::to_writer(&mut file, r).map_err(|e| CorpusError::Document {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        file.write_all(b"\n").map_err(write_err(path))?;
    }
    file.flush().map_err(write_err(path))
}

pub fn write_document<T: Serialize>(path: &Path, doc: &T) -> Result<(), CorpusError> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| CorpusError::Document {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(write_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(secs: i64) -> Timestamp {
        Utc.timestamp_opt(secs, 0).unwrap()
    }

    fn member(handle: &str) -> Congressperson {
        Congressperson {
            handle: handle.into(),
            name: format!("Rep {handle}"),
            party: Party::Democrat,
            chamber: Chamber::House,
            state: "VA".into(),
        }
    }

    fn tweet(id: &str, handle: &str, t: i64) -> Tweet {
        Tweet {
            tweet_id: id.into(),
            handle: handle.into(),
            text: format!("text {id}"),
            created_at: ts(t),
            is_retweet: false,
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_corpus_loads() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(
            dir.path(),
            "t.jsonl",
            r#"{"tweet_id":"1","handle":"a","text":"hi","created_at":"2023-01-02T00:00:00Z","is_retweet":false}"#,
        );
        let r = write(
            dir.path(),
            "r.jsonl",
            r#"{"handle":"a","name":"A","party":"Democrat","chamber":"House","state":"VA"}"#,
        );
        let store = load_corpus(&t, &r).unwrap();
        assert_eq!(store.tweets().len(), 1);
        assert_eq!(store.member("a").unwrap().name, "A");
    }

    #[test]
    fn unknown_handle_is_named() {
        let err = CorpusStore::from_parts(vec![tweet("1", "ghost", 0)], vec![member("a")]).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn duplicate_tweet_id_rejected() {
        let err = CorpusStore::from_parts(
            vec![tweet("1", "a", 0), tweet("1", "a", 1)],
            vec![member("a")],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate tweet_id"));
    }

    #[test]
    fn naive_timestamp_rejected() {
        assert!(parse_timestamp("2023-01-01T00:00:00").is_err());
        assert!(parse_timestamp("2023-01-01T00:00:00+02:00").is_ok());
        assert_eq!(
            parse_timestamp("2023-01-01T02:00:00+02:00").unwrap(),
            parse_timestamp("2023-01-01T00:00:00Z").unwrap()
        );
    }

    #[test]
    fn malformed_lines_all_reported() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(
            dir.path(),
            "t.jsonl",
            concat!(
                r#"{"tweet_id":"1","handle":"a","text":"hi","created_at":"2023-01-02T00:00:00"}"#,
                "\n",
                "not json\n",
                r#"{"tweet_id":"3","handle":"a","text":"ok","created_at":"2023-01-02T00:00:00Z"}"#,
                "\n"
            ),
        );
        let r = write(
            dir.path(),
            "r.jsonl",
            r#"{"handle":"a","name":"A","party":"D","chamber":"house","state":"VA"}"#,
        );
        match load_corpus(&t, &r) {
            Err(CorpusError::Malformed(issues)) => {
                assert_eq!(issues.len(), 2);
                assert_eq!(issues[0].line, 1);
                assert_eq!(issues[1].line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_error() {
        let err = load_corpus(Path::new("/nonexistent/t"), Path::new("/nonexistent/r")).unwrap_err();
        assert!(matches!(err, CorpusError::MissingFile(_)));
    }

    #[test]
    fn out_of_order_tweets_sorted_per_author() {
        let store = CorpusStore::from_parts(
            vec![tweet("3", "a", 30), tweet("1", "a", 10), tweet("2", "a", 20)],
            vec![member("a")],
        )
        .unwrap();
        let ids: Vec<_> = store.author_tweets("a").unwrap().iter().map(|t| t.tweet_id.clone()).collect();
        assert_eq!(ids, ["1", "2", "3"]);
    }

    #[test]
    fn tweets_before_is_strict() {
        let store = CorpusStore::from_parts(
            vec![tweet("1", "a", 1), tweet("2", "a", 2), tweet("3", "a", 3)],
            vec![member("a")],
        )
        .unwrap();
        let before: Vec<_> = store.tweets_before("a", ts(3)).unwrap().iter().map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(before, ["1", "2"]);
        assert!(store.tweets_before("a", ts(0)).unwrap().is_empty());
        assert!(matches!(
            store.tweets_before("zz", ts(0)),
            Err(CorpusError::UnknownHandle(_))
        ));
    }

    #[test]
    fn split_boundary_goes_to_post() {
        let store = CorpusStore::from_parts(
            vec![tweet("1", "a", 1), tweet("5", "a", 5)],
            vec![member("a")],
        )
        .unwrap();
        let (pre, post) = store.split_at("a", ts(5)).unwrap();
        assert_eq!(pre.len(), 1);
        assert_eq!(pre[0].tweet_id, "1");
        assert_eq!(post[0].tweet_id, "5");
        let (pre, post) = store.split_at("a", ts(0)).unwrap();
        assert!(pre.is_empty());
        assert_eq!(post.len(), 2);
    }

    #[test]
    fn roll_call_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "rc.json",
            r#"{"bill_id":"117-HR-1319","chamber":"House","vote_time":"2021-03-10T12:00:00Z",
                "votes":[{"handle":"A","vote":"Yea"},{"handle":"B","vote":"Nay"}]}"#,
        );
        let rc = load_roll_call(&ok).unwrap();
        assert_eq!(rc.votes.len(), 2);
        assert_eq!(rc.vote("B"), Some(Vote::Nay));

        let dup = write(
            dir.path(),
            "dup.json",
            r#"{"bill_id":"x","chamber":"House","vote_time":"2021-03-10T12:00:00Z",
                "votes":[{"handle":"A","vote":"Yea"},{"handle":"A","vote":"Nay"}]}"#,
        );
        assert!(matches!(load_roll_call(&dup), Err(CorpusError::DuplicateVote(h)) if h == "A"));

        let aye = write(
            dir.path(),
            "aye.json",
            r#"{"bill_id":"x","chamber":"House","vote_time":"2021-03-10T12:00:00Z",
                "votes":[{"handle":"A","vote":"Aye"}]}"#,
        );
        let err = load_roll_call(&aye).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Aye") && msg.contains("Yea, Nay, Present, NotVoting, NA"), "{msg}");
    }

    #[test]
    fn roll_call_serde_round_trip() {
        let rc = RollCall {
            bill_id: "b".into(),
            chamber: Chamber::Senate,
            vote_time: ts(100),
            votes: [("x".to_string(), Vote::NA), ("y".to_string(), Vote::Yea)].into_iter().collect(),
        };
        let s = serde_json::to_string(&rc).unwrap();
        assert_eq!(serde_json::from_str::<RollCall>(&s).unwrap(), rc);
    }

    #[test]
    fn question_set_needs_questions() {
        let qs = QuestionSet {
            bill_id: "b".into(),
            summary: "s".into(),
            questions: vec![],
        };
        assert!(qs.validate().is_err());
    }

    #[test]
    fn loading_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::from_parts(
            vec![tweet("2", "a", 5), tweet("1", "a", 1)],
            vec![member("a")],
        )
        .unwrap();
        let t = dir.path().join("t.jsonl");
        let r = dir.path().join("r.jsonl");
        write_jsonl(&t, store.tweets()).unwrap();
        write_jsonl(&r, store.roster()).unwrap();
        let a = load_corpus(&t, &r).unwrap();
        let b = load_corpus(&t, &r).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, store);
    }
}
