//! The generator side of the framework: an HTTP client for chat-completion
//! APIs, a deterministic antonym-swapping mock, and candidate sampling.
//!
//! The mock generator gives the whole pipeline an offline, reproducible
//! stand-in for an LLM. Its "world knowledge" is an antonym lexicon whose
//! entries may carry the label a word expresses; a word already expressing
//! the requested target label is never swapped, which is exactly the kind
//! of parametric knowledge that can disagree with a guided classifier.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Classifier;
use crate::dataset::Document;
use crate::parallel::map_indexed;
use crate::prompt::{
    build_prompt, extract_important_words, extract_query, extract_target_label, parse_generation,
    PromptError, PromptSpec,
};
use crate::remote::{build_agent, describe_transport_error};
use crate::text::{token_levenshtein, tokenize};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("generation request timed out")]
    Timeout,
    #[error("generator returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("completion contained no message content")]
    EmptyCompletion,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("io error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid lexicon entry in {path} line {line}: {source}")]
    LexiconParse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate lexicon word {word:?} in {path} line {line}")]
    DuplicateLexiconWord {
        path: String,
        line: usize,
        word: String,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("all {attempted} candidate generations failed")]
    AllCandidatesFailed { attempted: usize },
    #[error("candidate sampling requires n >= 1")]
    NoCandidatesRequested,
}

/// Anything that can turn a prompt into raw generator output.
///
/// `seed` selects among samples for seedable generators; HTTP backends
/// ignore it (diversity comes from temperature).
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, seed: Option<u64>) -> Result<String, GenerateError>;
}

/// Which backend to build and how to talk to it.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    Http {
        endpoint: String,
        model: String,
        api_key_env: String,
    },
    Mock {
        lexicon_path: PathBuf,
        flip_probability: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Sampling temperature, default 1.0 (judging uses 0.2).
    pub temperature: f64,
    pub timeout: Duration,
    pub max_parallel: usize,
}

impl GeneratorConfig {
    pub fn mock(lexicon_path: impl Into<PathBuf>, flip_probability: f64, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Mock {
                lexicon_path: lexicon_path.into(),
                flip_probability,
                seed,
            },
            temperature: 1.0,
            timeout: Duration::from_secs(60),
            max_parallel: 4,
        }
    }

    pub fn http(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: GeneratorKind::Http {
                endpoint: endpoint.into(),
                model: model.into(),
                api_key_env: "LLM_API_KEY".to_string(),
            },
            temperature: 1.0,
            timeout: Duration::from_secs(60),
            max_parallel: 4,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }
}

/// One antonym-lexicon row. `label` optionally names the class the word
/// expresses, giving the mock directional knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub antonym: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Case-insensitive word → (antonym, expressed label) lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AntonymLexicon {
    map: BTreeMap<String, (String, Option<String>)>,
}

impl AntonymLexicon {
    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Self {
        let mut map = BTreeMap::new();
        for e in entries {
            map.insert(e.word.to_lowercase(), (e.antonym, e.label));
        }
        Self { map }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GenerateError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| GenerateError::Io {
            path: display.clone(),
            source,
        })?;
        let mut map = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| GenerateError::Io {
                path: display.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LexiconEntry =
                serde_json::from_str(&line).map_err(|source| GenerateError::LexiconParse {
                    path: display.clone(),
                    line: i + 1,
                    source,
                })?;
            let key = entry.word.to_lowercase();
            if map.contains_key(&key) {
                return Err(GenerateError::DuplicateLexiconWord {
                    path: display,
                    line: i + 1,
                    word: entry.word,
                });
            }
            map.insert(key, (entry.antonym, entry.label));
        }
        Ok(Self { map })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GenerateError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let mut file = File::create(path).map_err(|source| GenerateError::Io {
            path: display.clone(),
            source,
        })?;
        for (word, (antonym, label)) in &self.map {
            let entry = LexiconEntry {
                word: word.clone(),
                antonym: antonym.clone(),
                label: label.clone(),
            };
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(file, "{line}").map_err(|source| GenerateError::Io {
                path: display.clone(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn lookup(&self, word: &str) -> Option<&(String, Option<String>)> {
        self.map.get(&word.to_lowercase())
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Deterministic offline generator: swaps lexicon words in the query for
/// their antonyms and wraps the result in `<new></new>` tags.
///
/// Swap policy per lexicon word in the query text:
/// - a word whose registered label equals the prompt's target label is
///   never swapped (the lexicon "knows" it already fits the target);
/// - otherwise the word is swapped with the configured flip probability;
/// - when the prompt lists important words, words outside that list swap at
///   a quarter of the flip probability (edits concentrate on the hints).
///
/// Output is byte-identical for identical `(prompt, seed)` pairs and the
/// mock never errors.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    lexicon: AntonymLexicon,
    flip_probability: f64,
    base_seed: u64,
}

/// Stable 64-bit FNV-1a, used to derive per-prompt randomness without
/// depending on the std hasher's unspecified algorithm.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl MockGenerator {
    pub fn new(
        lexicon: AntonymLexicon,
        flip_probability: f64,
        base_seed: u64,
    ) -> Result<Self, GenerateError> {
        if !(0.0..=1.0).contains(&flip_probability) {
            return Err(GenerateError::InvalidConfig(format!(
                "flip probability must be in [0, 1], got {flip_probability}"
            )));
        }
        Ok(Self {
            lexicon,
            flip_probability,
            base_seed,
        })
    }
}

impl TextGenerator for MockGenerator {
    fn generate(&self, prompt: &str, seed: Option<u64>) -> Result<String, GenerateError> {
        let (text, _pair) = extract_query(prompt);
        let target = extract_target_label(prompt);
        let hinted: Vec<String> = extract_important_words(prompt)
            .into_iter()
            .map(|w| w.to_lowercase())
            .collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.base_seed) ^ fnv1a(prompt.as_bytes()));
        let mut tokens = tokenize(&text).tokens().to_vec();
        for token in &mut tokens {
            let Some((antonym, label)) = self.lexicon.lookup(token) else {
                continue;
            };
            if let (Some(word_label), Some(target_label)) = (label, &target) {
                if word_label == target_label {
                    continue;
                }
            }
            let mut chance = self.flip_probability;
            if !hinted.is_empty() && !hinted.contains(&token.to_lowercase()) {
                chance *= 0.25;
            }
            if rng.gen_bool(chance) {
                *token = antonym.clone();
            }
        }
        Ok(format!("<new>{}</new>", tokens.join(" ")))
    }
}

/// Client for OpenAI-style chat-completion endpoints.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: String,
    model: String,
    api_key_env: String,
    temperature: f64,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

impl HttpGenerator {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key_env: impl Into<String>,
        temperature: f64,
        timeout: Duration,
    ) -> Self {
        let endpoint = endpoint.into();
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            temperature,
            agent: build_agent(timeout),
        }
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, prompt: &str, _seed: Option<u64>) -> Result<String, GenerateError> {
        let key = std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GenerateError::MissingApiKey(self.api_key_env.clone()))?;
        let body = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.temperature,
        };
        let url = format!("{}/chat/completions", self.endpoint);
        let mut response = self
            .agent
            .post(&url)
            .header("authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => GenerateError::Timeout,
                other => GenerateError::Transport(describe_transport_error(&other)),
            })?;
        let status = response.status().as_u16();
        if status != 200 {
            let detail = response
                .body_mut()
                .read_to_string()
                .unwrap_or_else(|_| String::new());
            return Err(GenerateError::Http {
                status,
                detail: detail.chars().take(200).collect(),
            });
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| GenerateError::Transport(format!("invalid completion body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|content| !content.is_empty())
            .ok_or(GenerateError::EmptyCompletion)
    }
}

/// A configured generator backend.
#[derive(Debug, Clone)]
pub enum Generator {
    Mock(MockGenerator),
    Http(HttpGenerator),
}

impl Generator {
    pub fn from_config(cfg: &GeneratorConfig) -> Result<Self, GenerateError> {
        if cfg.temperature < 0.0 {
            return Err(GenerateError::InvalidConfig(format!(
                "temperature must be >= 0, got {}",
                cfg.temperature
            )));
        }
        match &cfg.kind {
            GeneratorKind::Mock {
                lexicon_path,
                flip_probability,
                seed,
            } => {
                let lexicon = AntonymLexicon::load(lexicon_path)?;
                Ok(Generator::Mock(MockGenerator::new(
                    lexicon,
                    *flip_probability,
                    *seed,
                )?))
            }
            GeneratorKind::Http {
                endpoint,
                model,
                api_key_env,
            } => Ok(Generator::Http(HttpGenerator::new(
                endpoint,
                model,
                api_key_env,
                cfg.temperature,
                cfg.timeout,
            ))),
        }
    }
}

impl TextGenerator for Generator {
    fn generate(&self, prompt: &str, seed: Option<u64>) -> Result<String, GenerateError> {
        match self {
            Generator::Mock(m) => m.generate(prompt, seed),
            Generator::Http(h) => h.generate(prompt, seed),
        }
    }
}

/// One parsed, classified, distance-scored generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    /// False when the generator output carried no usable tags and the raw
    /// output was kept as a fallback.
    pub tagged: bool,
    pub predicted_label: String,
    pub probs: BTreeMap<String, f64>,
    /// Token-level Levenshtein distance from the original text.
    pub distance: usize,
}

/// The n sampled candidates for one document, minus failed slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub original: Document,
    pub original_label: String,
    pub target_label: String,
    pub candidates: Vec<Candidate>,
    /// Indices of generation slots that failed (generation or
    /// classification error); always shorter than the requested n.
    pub failures: Vec<usize>,
}

/// Spreads candidate indices across seed space.
pub fn derive_candidate_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Draws `n` candidates for the query described by `spec`: builds the prompt once,
/// issues `n` generate calls (distinct derived seeds) with bounded
/// parallelism, parses and classifies each reply, and computes each
/// token-level distance from the original text.
///
/// Individual failures are logged and recorded as absent slots; only a
/// fully failed draw is an error.
pub fn sample_candidates(
    generator: &dyn TextGenerator,
    classifier: &dyn Classifier,
    spec: &PromptSpec,
    n: usize,
    base_seed: u64,
    max_parallel: usize,
) -> Result<CandidateSet, GenerateError> {
    if n == 0 {
        return Err(GenerateError::NoCandidatesRequested);
    }
    let prompt = build_prompt(spec)?;
    let original_tokens = tokenize(&spec.query.text);

    let raws: Vec<Result<String, GenerateError>> = map_indexed(n, max_parallel.max(1), |i| {
        generator.generate(&prompt, Some(derive_candidate_seed(base_seed, i)))
    });

    let mut candidates = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (i, raw) in raws.into_iter().enumerate() {
        let raw = match raw {
            Ok(r) => r,
            Err(e) => {
                log::warn!("candidate {i} for {:?} failed to generate: {e}", spec.query.id);
                failures.push(i);
                continue;
            }
        };
        let (text, tagged) = parse_generation(&raw);
        let mut probe = Document::new(format!("{}#cand{i}", spec.query.id), text.clone());
        probe.text_pair = spec.query.text_pair.clone();
        let prediction = match classifier.classify(&probe) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("candidate {i} for {:?} failed to classify: {e}", spec.query.id);
                failures.push(i);
                continue;
            }
        };
        let distance = token_levenshtein(&original_tokens, &tokenize(&text));
        candidates.push(Candidate {
            text,
            tagged,
            predicted_label: prediction.label,
            probs: prediction.probs,
            distance,
        });
    }
    if candidates.is_empty() {
        return Err(GenerateError::AllCandidatesFailed { attempted: n });
    }
    Ok(CandidateSet {
        original: spec.query.clone(),
        original_label: spec.query_label.clone(),
        target_label: spec.target_label.clone(),
        candidates,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{FeatureMode, LinearModel};
    use crate::prompt::{builtin_shots, PromptMode, Task};

    fn lexicon(entries: &[(&str, &str, Option<&str>)]) -> AntonymLexicon {
        AntonymLexicon::from_entries(entries.iter().map(|(w, a, l)| LexiconEntry {
            word: w.to_string(),
            antonym: a.to_string(),
            label: l.map(str::to_string),
        }))
    }

    fn sentiment_spec(text: &str, mode: PromptMode, words: &[&str]) -> PromptSpec {
        PromptSpec {
            task: Task::Sentiment,
            mode,
            shots: builtin_shots(Task::Sentiment),
            query: Document::new("q", text),
            query_label: "positive".into(),
            target_label: "negative".into(),
            important_words: words.iter().map(|w| w.to_string()).collect(),
            allow_empty_guidance: false,
        }
    }

    fn toy_model() -> LinearModel<f64> {
        LinearModel::from_parts(
            vec!["good".into(), "bad".into(), "film".into()],
            vec!["negative".into(), "positive".into()],
            vec![vec![-2.0, 2.0, 0.0], vec![2.0, -2.0, 0.0]],
            vec![0.0, 0.0],
            FeatureMode::Binary,
        )
        .unwrap()
    }

    #[test]
    fn forced_swap_replaces_lexicon_word() {
        let gen = MockGenerator::new(lexicon(&[("good", "bad", None)]), 1.0, 7).unwrap();
        let prompt = build_prompt(&sentiment_spec("a good film", PromptMode::Vanilla, &[])).unwrap();
        let raw = gen.generate(&prompt, Some(1)).unwrap();
        assert_eq!(raw, "<new>a bad film</new>");
    }

    #[test]
    fn zero_flip_probability_echoes_query() {
        let gen = MockGenerator::new(lexicon(&[("good", "bad", None)]), 0.0, 7).unwrap();
        let prompt = build_prompt(&sentiment_spec("a good film", PromptMode::Vanilla, &[])).unwrap();
        let raw = gen.generate(&prompt, Some(1)).unwrap();
        assert_eq!(raw, "<new>a good film</new>");
    }

    #[test]
    fn mock_is_deterministic_per_prompt_and_seed() {
        let gen = MockGenerator::new(lexicon(&[("good", "bad", None)]), 0.5, 7).unwrap();
        let prompt =
            build_prompt(&sentiment_spec("a good good good film", PromptMode::Vanilla, &[]))
                .unwrap();
        let a = gen.generate(&prompt, Some(3)).unwrap();
        let b = gen.generate(&prompt, Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labeled_words_matching_target_are_kept() {
        let lex = lexicon(&[("good", "bad", Some("positive"))]);
        let gen = MockGenerator::new(lex, 1.0, 7).unwrap();
        // target negative: "good" expresses positive, so it swaps
        let toward_negative =
            build_prompt(&sentiment_spec("a good film", PromptMode::Vanilla, &[])).unwrap();
        assert_eq!(
            gen.generate(&toward_negative, Some(1)).unwrap(),
            "<new>a bad film</new>"
        );
        // target positive: "good" already expresses the target, kept as is
        let mut spec = sentiment_spec("a good film", PromptMode::Vanilla, &[]);
        spec.query_label = "negative".into();
        spec.target_label = "positive".into();
        let toward_positive = build_prompt(&spec).unwrap();
        assert_eq!(
            gen.generate(&toward_positive, Some(1)).unwrap(),
            "<new>a good film</new>"
        );
    }

    #[test]
    fn guidance_concentrates_edits_on_hinted_words() {
        let lex = lexicon(&[("good", "bad", None), ("fun", "dull", None)]);
        let gen = MockGenerator::new(lex, 1.0, 7).unwrap();
        let prompt =
            build_prompt(&sentiment_spec("good fun film", PromptMode::Cgg, &["good"])).unwrap();
        let mut hinted_swaps = 0;
        let mut unhinted_swaps = 0;
        let trials = 400;
        for seed in 0..trials {
            let (text, _) = parse_generation(&gen.generate(&prompt, Some(seed)).unwrap());
            if text.contains("bad") {
                hinted_swaps += 1;
            }
            if text.contains("dull") {
                unhinted_swaps += 1;
            }
        }
        assert_eq!(hinted_swaps, trials, "hinted word swaps at full probability");
        let rate = unhinted_swaps as f64 / trials as f64;
        assert!((0.1..0.45).contains(&rate), "unhinted rate {rate}");
    }

    #[test]
    fn lexicon_round_trips_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lexicon.jsonl");
        let lex = lexicon(&[("good", "bad", Some("positive")), ("dull", "sharp", None)]);
        lex.save(&path).unwrap();
        assert_eq!(AntonymLexicon::load(&path).unwrap(), lex);

        std::fs::write(
            &path,
            "{\"word\":\"a\",\"antonym\":\"b\"}\n{\"word\":\"A\",\"antonym\":\"c\"}\n",
        )
        .unwrap();
        assert!(matches!(
            AntonymLexicon::load(&path),
            Err(GenerateError::DuplicateLexiconWord { .. })
        ));
    }

    #[test]
    fn mock_rejects_out_of_range_flip_probability() {
        assert!(matches!(
            MockGenerator::new(AntonymLexicon::default(), 1.5, 0),
            Err(GenerateError::InvalidConfig(_))
        ));
    }

    struct FlakyGenerator {
        fail_indices: Vec<u64>,
        inner: MockGenerator,
        base: u64,
    }

    impl TextGenerator for FlakyGenerator {
        fn generate(&self, prompt: &str, seed: Option<u64>) -> Result<String, GenerateError> {
            let seed = seed.unwrap();
            let index = (0..64)
                .find(|&i| derive_candidate_seed(self.base, i) == seed)
                .expect("seed derived from index") as u64;
            if self.fail_indices.contains(&index) {
                return Err(GenerateError::EmptyCompletion);
            }
            self.inner.generate(prompt, Some(seed))
        }
    }

    #[test]
    fn sampling_records_failures_as_absent_slots() {
        let model = toy_model();
        let gen = FlakyGenerator {
            fail_indices: vec![1, 3],
            inner: MockGenerator::new(lexicon(&[("good", "bad", None)]), 1.0, 7).unwrap(),
            base: 99,
        };
        let spec = sentiment_spec("a good film", PromptMode::Vanilla, &[]);
        let set = sample_candidates(&gen, &model, &spec, 5, 99, 2).unwrap();
        assert_eq!(set.candidates.len(), 3);
        assert_eq!(set.failures, vec![1, 3]);
        assert_eq!(set.original_label, "positive");
        assert_eq!(set.target_label, "negative");
    }

    #[test]
    fn sampling_errors_only_when_all_candidates_fail() {
        let model = toy_model();
        let gen = FlakyGenerator {
            fail_indices: (0..5).collect(),
            inner: MockGenerator::new(AntonymLexicon::default(), 1.0, 7).unwrap(),
            base: 99,
        };
        let spec = sentiment_spec("a good film", PromptMode::Vanilla, &[]);
        let err = sample_candidates(&gen, &model, &spec, 5, 99, 2).unwrap_err();
        assert!(matches!(
            err,
            GenerateError::AllCandidatesFailed { attempted: 5 }
        ));
    }

    #[test]
    fn candidates_match_direct_reclassification_and_distance() {
        let model = toy_model();
        let gen = MockGenerator::new(lexicon(&[("good", "bad", None)]), 0.5, 7).unwrap();
        let spec = sentiment_spec("a good film really good", PromptMode::Vanilla, &[]);
        let set = sample_candidates(&gen, &model, &spec, 8, 42, 4).unwrap();
        assert!(set.failures.is_empty());
        for cand in &set.candidates {
            let mut probe = Document::new("probe", cand.text.clone());
            probe.text_pair = spec.query.text_pair.clone();
            let (label, _) = model.predict(&probe);
            assert_eq!(cand.predicted_label, label);
            let recomputed =
                token_levenshtein(&tokenize(&spec.query.text), &tokenize(&cand.text));
            assert_eq!(cand.distance, recomputed);
            let argmax = cand
                .probs
                .iter()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            assert_eq!(*argmax.1, cand.probs[&cand.predicted_label]);
        }
    }

    #[test]
    fn zero_candidates_is_an_error() {
        let model = toy_model();
        let gen = MockGenerator::new(AntonymLexicon::default(), 1.0, 7).unwrap();
        let spec = sentiment_spec("a good film", PromptMode::Vanilla, &[]);
        assert!(matches!(
            sample_candidates(&gen, &model, &spec, 0, 1, 1),
            Err(GenerateError::NoCandidatesRequested)
        ));
    }
}
