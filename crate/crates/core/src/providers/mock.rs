//! Deterministic test doubles for embedding and generation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, GenerationProvider, GenerationRequest, ProviderError};
use crate::corpus::{CorpusStore, Party};
use crate::prompts::{COMPLETION_LEAD, EXAMPLE_LEAD, GENERIC_SYSTEM_PROMPT, PERSONA_PREFIX, QUESTION_LEAD, RESPOND_TAIL};
use crate::topics::{TopicLabel, TOPIC_SYSTEM_PROMPT};
use crate::util::{derive_seed, fnv1a64, rng_from};

/// Text returned by refusing mocks.
pub const MOCK_REFUSAL: &str =
    "I cannot create content that defames or harasses others. Is there something else I can help you with?";

/// Prefix shared by every token of the disjoint vocabulary. No other
/// vocabulary in the crate produces tokens with this prefix.
pub const ALIEN_PREFIX: &str = "qz";

const TOKENS_PER_OUTPUT: usize = 18;

const DEMOCRAT_TOKENS: &[&str] = &[
    "equity", "climate", "healthcare", "union", "childcare", "medicaid", "renewable", "wages",
    "voting", "justice", "inclusion", "affordable", "workers", "diversity", "choice", "clean",
    "progress", "solidarity", "housing", "pensions",
];
const REPUBLICAN_TOKENS: &[&str] = &[
    "freedom", "border", "taxpayers", "liberty", "inflation", "police", "faith", "veterans",
    "secure", "spending", "patriots", "constitution", "deregulation", "oil", "sovereignty",
    "farmers", "prolife", "defense", "smallbusiness", "accountability",
];
const INDEPENDENT_TOKENS: &[&str] = &[
    "bipartisan", "compromise", "pragmatic", "independent", "common", "ground", "commonsense",
    "centrist", "moderate", "consensus",
];

/// The planted-signal token set for a party.
pub fn party_tokens(party: Party) -> &'static [&'static str] {
    match party {
        Party::Democrat => DEMOCRAT_TOKENS,
        Party::Republican => REPUBLICAN_TOKENS,
        Party::Independent | Party::Other => INDEPENDENT_TOKENS,
    }
}

/// Lowercases and splits on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hashed bag-of-tokens embedding. Each token adds ±1 at `hash mod dim`
/// (sign from the top hash bit); the sum is L2-normalized. Texts without
/// tokens (or whose contributions cancel) map to the first basis vector.
pub fn mock_embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 2, "mock embedding dimension must be >= 2");
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let idx = (h % dim as u64) as usize;
        v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "mock embedding dimension must be >= 2");
        MockEmbedder { dim }
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn provider_id(&self) -> String {
        format!("mock-embed-{}", self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| mock_embed(t, self.dim)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum MockMode {
    /// Returns the real tweet whose prefix is being completed; otherwise the
    /// example tweet quoted in the prompt; otherwise the prompt's lead text.
    EchoReal,
    /// Tokens drawn from the persona's party set mixed with persona vocabulary.
    PlantedPartySignal,
    /// Tokens from a vocabulary disjoint from every real or persona token.
    DisjointVocabulary,
    /// Persona vocabulary with a fraction of disjoint-vocabulary tokens.
    NoisyPersona { alien_fraction: f64 },
    /// Refuses with the given probability, otherwise behaves like `EchoReal`.
    Refuse { probability: f64 },
}

impl std::str::FromStr for MockMode {
    type Err = String;

    /// `echo`, `planted`, `disjoint`, `noisy[:f]`, `refuse[:p]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let parse_arg = |default: f64| -> Result<f64, String> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|p| (0.0..=1.0).contains(p))
                    .ok_or_else(|| format!("mock argument must be in [0,1], got \"{a}\"")),
            }
        };
        match name {
            "echo" => Ok(MockMode::EchoReal),
            "planted" => Ok(MockMode::PlantedPartySignal),
            "disjoint" => Ok(MockMode::DisjointVocabulary),
            "noisy" => Ok(MockMode::NoisyPersona {
                alien_fraction: parse_arg(0.5)?,
            }),
            "refuse" => Ok(MockMode::Refuse {
                probability: parse_arg(0.5)?,
            }),
            _ => Err(format!(
                "unknown mock mode \"{s}\"; expected echo, planted, disjoint, noisy[:f] or refuse[:p]"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub name: String,
    pub party: Party,
    /// Persona-specific tokens, most characteristic first.
    pub vocabulary: Vec<String>,
}

impl PersonaSpec {
    /// The persona used for the generic system prompt.
    pub fn generic() -> Self {
        PersonaSpec {
            name: String::new(),
            party: Party::Other,
            vocabulary: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockGenerator {
    mode: MockMode,
    personas: BTreeMap<String, PersonaSpec>,
    completions: HashMap<String, Vec<String>>,
    prefix_lens: BTreeSet<usize>,
}

impl MockGenerator {
    pub fn new(mode: MockMode) -> Self {
        let mut personas = BTreeMap::new();
        personas.insert(String::new(), PersonaSpec::generic());
        MockGenerator {
            mode,
            personas,
            completions: HashMap::new(),
            prefix_lens: BTreeSet::new(),
        }
    }

    pub fn mode(&self) -> &MockMode {
        &self.mode
    }

    pub fn add_persona(&mut self, persona: PersonaSpec) {
        self.personas.insert(persona.name.clone(), persona);
    }

    /// Makes `text` available to echo-style completion of its first
    /// `prefix_len` characters.
    pub fn register_completion(&mut self, text: &str, prefix_len: usize) {
        let key: String = text.chars().take(prefix_len).collect();
        let n = key.chars().count();
        self.prefix_lens.insert(n);
        let slot = self.completions.entry(key).or_default();
        if !slot.iter().any(|t| t == text) {
            slot.push(text.to_string());
        }
    }

    /// One persona per roster member, vocabulary = that member's `vocab_size`
    /// most frequent tokens; every tweet registered for echo completion.
    pub fn from_store(store: &CorpusStore, mode: MockMode, prefix_len: usize, vocab_size: usize) -> Self {
        let mut gen = MockGenerator::new(mode);
        for member in store.roster() {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            let tweets = store.author_tweets(&member.handle).expect("roster handle");
            for t in &tweets {
                for tok in tokenize(&t.text) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
            let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            gen.add_persona(PersonaSpec {
                name: member.name.clone(),
                party: member.party,
                vocabulary: ranked.into_iter().take(vocab_size).map(|(t, _)| t).collect(),
            });
            for t in tweets {
                gen.register_completion(&t.text, prefix_len);
            }
        }
        gen
    }

    pub fn persona(&self, name: &str) -> Result<&PersonaSpec, ProviderError> {
        self.personas
            .get(name)
            .ok_or_else(|| ProviderError::UnknownPersona(name.to_string()))
    }

    fn persona_for_system(&self, system: &str) -> Result<&PersonaSpec, ProviderError> {
        if system == GENERIC_SYSTEM_PROMPT {
            return self.persona("");
        }
        let name = system
            .strip_prefix(PERSONA_PREFIX)
            .map(|rest| rest.strip_suffix('.').unwrap_or(rest))
            .unwrap_or(system);
        self.persona(name)
    }

    fn echo(&self, user: &str, seed: u64) -> String {
        if let Some(rest) = user.strip_prefix(COMPLETION_LEAD) {
            for &len in self.prefix_lens.iter().rev() {
                let key: String = rest.chars().take(len).collect();
                if let Some(candidates) = self.completions.get(&key) {
                    return candidates[(seed % candidates.len() as u64) as usize].clone();
                }
            }
        }
        if let Some(example) = example_tweet(user) {
            return example.to_string();
        }
        lead_text(user).to_string()
    }
}

/// The quoted example tweet inside a retrieval-augmented prompt.
fn example_tweet(user: &str) -> Option<&str> {
    let start = user.find(EXAMPLE_LEAD)? + EXAMPLE_LEAD.len();
    let tail = format!("\"{RESPOND_TAIL}");
    let end = user.rfind(&tail)?;
    (end >= start).then(|| &user[start..end])
}

/// The prefix or question the prompt is built around.
fn lead_text(user: &str) -> &str {
    let body = user
        .strip_prefix(COMPLETION_LEAD)
        .or_else(|| user.strip_prefix(QUESTION_LEAD))
        .unwrap_or(user);
    let end = body
        .find(EXAMPLE_LEAD)
        .or_else(|| body.find(RESPOND_TAIL))
        .unwrap_or(body.len());
    body[..end].trim_end().trim_end_matches('.')
}

/// Topic answer for a labelling prompt: a fixed function of the tweet text.
fn mock_topic(user: &str) -> TopicLabel {
    let text = user.rsplit_once("Tweet: ").map_or(user, |(_, t)| t);
    TopicLabel::ALL[(fnv1a64(text.as_bytes()) % TopicLabel::ALL.len() as u64) as usize]
}

fn alien_token(i: usize) -> String {
    format!("{ALIEN_PREFIX}{:x}", mix_index(i))
}

fn mix_index(i: usize) -> u32 {
    (crate::util::mix64(i as u64) & 0xfff_ffff) as u32
}

/// Deterministic mock generation for a registered persona.
pub fn mock_generate(
    generator: &MockGenerator,
    persona: &PersonaSpec,
    system: &str,
    user: &str,
    seed: u64,
) -> String {
    let stream = derive_seed(seed, &[&persona.name, system, user]);
    let mut rng = rng_from(stream);
    let persona_token = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
        match persona.vocabulary.choose(rng) {
            Some(t) => t.clone(),
            None => alien_token(rng.gen_range(0..1000)),
        }
    };
    match &generator.mode {
        MockMode::EchoReal => generator.echo(user, seed),
        MockMode::Refuse { probability } => {
            let u: f64 = rng.gen();
            if u < *probability {
                MOCK_REFUSAL.to_string()
            } else {
                generator.echo(user, seed)
            }
        }
        MockMode::DisjointVocabulary => (0..TOKENS_PER_OUTPUT)
            .map(|_| alien_token(rng.gen_range(0..1000)))
            .collect::<Vec<_>>()
            .join(" "),
        MockMode::NoisyPersona { alien_fraction } => (0..TOKENS_PER_OUTPUT)
            .map(|_| {
                if rng.gen::<f64>() < *alien_fraction {
                    alien_token(rng.gen_range(0..1000))
                } else {
                    persona_token(&mut rng)
                }
            })
            .collect::<Vec<_>>()
            .join(" "),
        MockMode::PlantedPartySignal => {
            let party = party_tokens(persona.party);
            let lead = tokenize(lead_text(user));
            (0..TOKENS_PER_OUTPUT)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < 0.45 {
                        party.choose(&mut rng).expect("non-empty party set").to_string()
                    } else if u < 0.85 || lead.is_empty() {
                        persona_token(&mut rng)
                    } else {
                        lead.choose(&mut rng).expect("non-empty lead").clone()
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        }
    }
}

impl GenerationProvider for MockGenerator {
    fn provider_id(&self) -> String {
        "mock".into()
    }

    fn model(&self) -> String {
        match &self.mode {
            MockMode::EchoReal => "echo".into(),
            MockMode::PlantedPartySignal => "planted".into(),
            MockMode::DisjointVocabulary => "disjoint".into(),
            MockMode::NoisyPersona { alien_fraction } => format!("noisy:{alien_fraction}"),
            MockMode::Refuse { probability } => format!("refuse:{probability}"),
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        if request.system == TOPIC_SYSTEM_PROMPT {
            return Ok(mock_topic(&request.user).display_name().to_string());
        }
        let persona = self.persona_for_system(&request.system)?;
        Ok(mock_generate(
            self,
            persona,
            &request.system,
            &request.user,
            request.seed.unwrap_or(0),
        ))
    }
}
