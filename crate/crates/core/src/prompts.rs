//! Prompt templates for tweet completion and bill questions, plus refusal
//! detection and class balancing after refusals are removed.

use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_from;

pub const GENERIC_SYSTEM_PROMPT: &str = "You are a helpful assistant.";
pub const PERSONA_PREFIX: &str = "You are U.S. congressperson ";
pub const COMPLETION_LEAD: &str = "Complete the following Tweet: ";
pub const QUESTION_LEAD: &str = "Write a Tweet that addresses the following question: ";
pub const EXAMPLE_LEAD: &str =
    "Here is an example Tweet potentially related to the to-be-completed Tweet: \"";
pub const RESPOND_TAIL: &str = ". Respond with the full Tweet.";

pub const DEFAULT_PREFIX_LEN: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("persona name required for {0:?}")]
    MissingPersona(PromptMode),
    #[error("retrieval-augmented prompt requires a retrieved tweet")]
    MissingRetrieved,
    #[error("retrieved tweet supplied to a prompt mode without retrieval")]
    UnexpectedRetrieved,
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("all {0} generated texts were refusals")]
    AllRefused(usize),
    #[error("real and generated lists differ in length ({real} vs {generated})")]
    LengthMismatch { real: usize, generated: usize },
    #[error("refusal policy has no patterns")]
    EmptyPolicy,
    #[error("cannot read pattern file: {0}")]
    PatternFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    /// Generic system prompt, no retrieval.
    GenericNoRag,
    /// Persona system prompt, no retrieval.
    PersonaNoRag,
    /// Persona system prompt with a retrieved example tweet.
    PersonaRag,
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic" | "generic-no-rag" => Ok(PromptMode::GenericNoRag),
            "persona" | "persona-no-rag" => Ok(PromptMode::PersonaNoRag),
            "rag" | "persona-rag" => Ok(PromptMode::PersonaRag),
            _ => Err(format!("unknown prompt mode \"{s}\"; expected generic, persona or rag")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub mode: PromptMode,
    pub persona_name: Option<String>,
}

impl PromptConfig {
    pub fn generic() -> Self {
        PromptConfig {
            mode: PromptMode::GenericNoRag,
            persona_name: None,
        }
    }

    pub fn persona(name: &str) -> Self {
        PromptConfig {
            mode: PromptMode::PersonaNoRag,
            persona_name: Some(name.to_string()),
        }
    }

    pub fn persona_rag(name: &str) -> Self {
        PromptConfig {
            mode: PromptMode::PersonaRag,
            persona_name: Some(name.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

fn persona_system(name: &str) -> String {
    format!("{PERSONA_PREFIX}{name}.")
}

fn example_clause(retrieved: &str) -> String {
    format!(" {EXAMPLE_LEAD}{retrieved}\"")
}

/// Builds the system and user prompt for completing a tweet from its prefix.
pub fn completion_prompt(
    config: &PromptConfig,
    prefix: &str,
    retrieved: Option<&str>,
) -> Result<Prompt, PromptError> {
    if prefix.is_empty() {
        return Err(PromptError::Empty("prefix"));
    }
    let system = match config.mode {
        PromptMode::GenericNoRag => GENERIC_SYSTEM_PROMPT.to_string(),
        mode => match config.persona_name.as_deref() {
            Some(name) if !name.is_empty() => persona_system(name),
            _ => return Err(PromptError::MissingPersona(mode)),
        },
    };
    let example = match (config.mode, retrieved) {
        (PromptMode::PersonaRag, Some(r)) => example_clause(r),
        (PromptMode::PersonaRag, None) => return Err(PromptError::MissingRetrieved),
        (_, Some(_)) => return Err(PromptError::UnexpectedRetrieved),
        (_, None) => String::new(),
    };
    let user = if example.is_empty() {
        format!("{COMPLETION_LEAD}{prefix}{RESPOND_TAIL}")
    } else {
        format!("{COMPLETION_LEAD}{prefix}.{example}{RESPOND_TAIL}")
    };
    Ok(Prompt { system, user })
}

/// The retrieval-augmented persona prompt with the completion sentence
/// replaced by a question to address.
pub fn question_prompt(persona_name: &str, question: &str, retrieved: &str) -> Result<Prompt, PromptError> {
    if persona_name.is_empty() {
        return Err(PromptError::Empty("persona name"));
    }
    let question = question.trim();
    if question.is_empty() {
        return Err(PromptError::Empty("question"));
    }
    if retrieved.is_empty() {
        return Err(PromptError::Empty("retrieved tweet"));
    }
    // Questions usually end in '?'; only add a full stop when no terminal
    // punctuation is present.
    let terminator = if question.ends_with(['?', '.', '!']) { "" } else { "." };
    Ok(Prompt {
        system: persona_system(persona_name),
        user: format!(
            "{QUESTION_LEAD}{question}{terminator}{}{RESPOND_TAIL}",
            example_clause(retrieved)
        ),
    })
}

/// First `n` Unicode scalar values of `text`.
pub fn tweet_prefix(text: &str, n: usize) -> String {
    text.chars().take(n).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalPolicy {
    patterns: Vec<String>,
}

impl Default for RefusalPolicy {
    fn default() -> Self {
        RefusalPolicy {
            patterns: ["I cannot", "I can't", "I'm sorry", "I am sorry", "As an AI"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl RefusalPolicy {
    pub fn new(patterns: Vec<String>) -> Result<Self, PromptError> {
        let patterns: Vec<String> = patterns
            .into_iter()
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect();
        if patterns.is_empty() {
            return Err(PromptError::EmptyPolicy);
        }
        Ok(RefusalPolicy { patterns })
    }

    /// Pattern file: one pattern per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::PatternFile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    /// True iff some pattern is a case-insensitive prefix of the trimmed text.
    /// Curly apostrophes are folded to ASCII before comparing.
    pub fn is_refusal(&self, text: &str) -> bool {
        let norm = |s: &str| s.trim().replace('\u{2019}', "'").to_lowercase();
        let t = norm(text);
        self.patterns.iter().any(|p| t.starts_with(&norm(p)))
    }
}

pub fn is_refusal(text: &str, policy: &RefusalPolicy) -> bool {
    policy.is_refusal(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedSample {
    pub real: Vec<String>,
    pub generated: Vec<String>,
    pub n_removed: usize,
    /// Positions (in the input `real` list) of the removed real texts.
    pub removed_real: Vec<usize>,
    /// Positions (in the input `generated` list) of refusals.
    pub removed_generated: Vec<usize>,
}

/// Drops refusals from `generated` and the same number of uniformly sampled
/// (seeded) items from `real`, keeping the classes balanced.
pub fn balanced_filter(
    real: &[String],
    generated: &[String],
    policy: &RefusalPolicy,
    seed: u64,
) -> Result<BalancedSample, PromptError> {
    if real.len() != generated.len() {
        return Err(PromptError::LengthMismatch {
            real: real.len(),
            generated: generated.len(),
        });
    }
    let removed_generated: Vec<usize> = generated
        .iter()
        .enumerate()
        .filter(|(_, g)| policy.is_refusal(g))
        .map(|(i, _)| i)
        .collect();
    let n_removed = removed_generated.len();
    if n_removed == generated.len() {
        return Err(PromptError::AllRefused(n_removed));
    }
    let mut removed_real: Vec<usize> = if n_removed == 0 {
        Vec::new()
    } else {
        sample(&mut rng_from(seed), real.len(), n_removed).into_vec()
    };
    removed_real.sort_unstable();
    let keep = |list: &[String], drop: &[usize]| -> Vec<String> {
        list.iter()
            .enumerate()
            .filter(|(i, _)| drop.binary_search(i).is_err())
            .map(|(_, s)| s.clone())
            .collect()
    };
    Ok(BalancedSample {
        real: keep(real, &removed_real),
        generated: keep(generated, &removed_generated),
        n_removed,
        removed_real,
        removed_generated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_completion_prompt_matches_template() {
        let p = completion_prompt(&PromptConfig::generic(), "Today I voted to", None).unwrap();
        assert_eq!(p.system, "You are a helpful assistant.");
        assert_eq!(
            p.user,
            "Complete the following Tweet: Today I voted to. Respond with the full Tweet."
        );
    }

    #[test]
    fn persona_prompt_system() {
        let p = completion_prompt(&PromptConfig::persona("Morgan Griffith"), "abc", None).unwrap();
        assert_eq!(p.system, "You are U.S. congressperson Morgan Griffith.");
        assert_eq!(p.user, "Complete the following Tweet: abc. Respond with the full Tweet.");
    }

    #[test]
    fn rag_prompt_includes_example() {
        let p = completion_prompt(&PromptConfig::persona_rag("Morgan Griffith"), "abc", Some("R")).unwrap();
        assert_eq!(
            p.user,
            "Complete the following Tweet: abc. Here is an example Tweet potentially related to the \
             to-be-completed Tweet: \"R\". Respond with the full Tweet."
        );
        assert!(p.user.contains("example Tweet potentially related"));
    }

    #[test]
    fn prompt_errors() {
        let no_name = PromptConfig {
            mode: PromptMode::PersonaNoRag,
            persona_name: None,
        };
        assert_eq!(
            completion_prompt(&no_name, "x", None),
            Err(PromptError::MissingPersona(PromptMode::PersonaNoRag))
        );
        assert_eq!(
            completion_prompt(&PromptConfig::persona_rag("A"), "x", None),
            Err(PromptError::MissingRetrieved)
        );
        assert_eq!(
            completion_prompt(&PromptConfig::generic(), "x", Some("r")),
            Err(PromptError::UnexpectedRetrieved)
        );
        assert_eq!(
            completion_prompt(&PromptConfig::generic(), "", None),
            Err(PromptError::Empty("prefix"))
        );
    }

    #[test]
    fn question_prompt_template() {
        let q = "Do you support the additional COVID-19 relief measures proposed in this bill?";
        let p = question_prompt("A B", q, "R").unwrap();
        assert_eq!(p.system, "You are U.S. congressperson A B.");
        assert!(p.user.starts_with(
            "Write a Tweet that addresses the following question: Do you support the additional COVID-19 relief measures"
        ));
        assert_eq!(
            p.user,
            format!(
                "Write a Tweet that addresses the following question: {q} Here is an example Tweet \
                 potentially related to the to-be-completed Tweet: \"R\". Respond with the full Tweet."
            )
        );
        assert_eq!(question_prompt("A B", "  ", "R"), Err(PromptError::Empty("question")));
    }

    #[test]
    fn question_prompt_differs_only_in_first_sentence() {
        let rag = completion_prompt(&PromptConfig::persona_rag("A B"), "start", Some("R")).unwrap();
        let q = question_prompt("A B", "Why", "R").unwrap();
        assert_eq!(rag.system, q.system);
        let tail = |s: &str| s[s.find(" Here is").unwrap()..].to_string();
        assert_eq!(tail(&rag.user), tail(&q.user));
    }

    #[test]
    fn prefixes_count_scalars() {
        let long = "a".repeat(50);
        assert_eq!(tweet_prefix(&long, 20), "a".repeat(20));
        assert_eq!(tweet_prefix("seven c", 20), "seven c");
        let emoji = "🇺🇸🎉 Große Freude über das Ergebnis heute!";
        let p = tweet_prefix(emoji, 20);
        assert_eq!(p.chars().count(), 20);
        assert!(emoji.starts_with(&p));
    }

    #[test]
    fn refusal_detection() {
        let policy = RefusalPolicy::default();
        assert!(policy.is_refusal(
            "I cannot create content that defames or harasses others. Is there something else I can help you with?"
        ));
        assert!(!policy.is_refusal("Proud to vote YES today!"));
        assert!(policy.is_refusal("  i'm sorry, but…"));
        assert!(policy.is_refusal("I\u{2019}m sorry, no"));
        assert!(!policy.is_refusal("Sorry I cannot attend"));
    }

    #[test]
    fn pattern_file_parsing() {
        let p = RefusalPolicy::parse("# comment\nI cannot\n\n  Nope \n").unwrap();
        assert_eq!(p.patterns(), ["I cannot", "Nope"]);
        assert_eq!(RefusalPolicy::parse("# only\n"), Err(PromptError::EmptyPolicy));
    }

    fn texts(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix} {i}")).collect()
    }

    #[test]
    fn balanced_filter_cases() {
        let policy = RefusalPolicy::default();
        let real = texts("real", 100);
        let gen = texts("gen", 100);
        let out = balanced_filter(&real, &gen, &policy, 1).unwrap();
        assert_eq!(out.n_removed, 0);
        assert_eq!(out.real, real);
        assert_eq!(out.generated, gen);

        let mut gen95 = gen.clone();
        for g in gen95.iter_mut().take(95) {
            *g = "I cannot do that".into();
        }
        let out = balanced_filter(&real, &gen95, &policy, 1).unwrap();
        assert_eq!((out.real.len(), out.generated.len(), out.n_removed), (5, 5, 95));
        assert_eq!(out, balanced_filter(&real, &gen95, &policy, 1).unwrap());

        let all: Vec<String> = vec!["I cannot".into(); 100];
        assert_eq!(balanced_filter(&real, &all, &policy, 1), Err(PromptError::AllRefused(100)));
    }
}
