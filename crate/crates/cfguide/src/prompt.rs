//! Few-shot prompt construction and generator-output parsing.
//!
//! Prompts pair an instruction with worked examples whose counterfactuals
//! are wrapped in `<new></new>` tags, followed by the request block for the
//! query document. Guided (CGG) prompts additionally carry an ordered
//! important-word list rendered verbatim.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Document;

const OPEN_TAG: &str = "<new>";
const CLOSE_TAG: &str = "</new>";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt requires at least one shot")]
    NoShots,
    #[error("target label {0:?} equals the query's current label")]
    TargetEqualsCurrent(String),
    #[error("guided prompt has no important words (set allow_empty_guidance to permit)")]
    MissingImportantWords,
    #[error("io error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid shot in {path} line {line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("shot in {path} line {line} has empty {field}")]
    EmptyShotField {
        path: String,
        line: usize,
        field: &'static str,
    },
}

/// The classification task the prompt speaks about. Sentiment edits the
/// whole text; NLI edits the premise and leaves the hypothesis fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sentiment,
    Nli,
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentiment" => Ok(Task::Sentiment),
            "nli" => Ok(Task::Nli),
            other => Err(format!("unknown task {other:?}, expected sentiment|nli")),
        }
    }
}

/// Whether the prompt carries attribution guidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    Vanilla,
    Cgg,
}

/// One worked example: a source text with its label, the requested target
/// label, and the known counterfactual (optionally with the words that were
/// changed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub source: String,
    pub source_label: String,
    pub target_label: String,
    pub counterfactual: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub important_words: Option<Vec<String>>,
}

/// Everything needed to render one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub task: Task,
    pub mode: PromptMode,
    pub shots: Vec<Shot>,
    pub query: Document,
    /// The query's current (predicted) label.
    pub query_label: String,
    pub target_label: String,
    /// Required for [`PromptMode::Cgg`]; most important first.
    pub important_words: Vec<String>,
    /// Permits a guided prompt with no words (the attribution came up
    /// empty); the guidance clause is simply omitted.
    pub allow_empty_guidance: bool,
}

struct TaskVocabulary {
    instruction: &'static str,
    text_field: &'static str,
    label_field: &'static str,
    target_field: &'static str,
    output_field: &'static str,
}

const SENTIMENT_VOCAB: TaskVocabulary = TaskVocabulary {
    instruction: "You are given a review and its sentiment. Rewrite the review with minimal \
                  edits so that its sentiment becomes the target sentiment, keeping as much of \
                  the original wording as possible. Return the new review within <new> and \
                  </new> tags.",
    text_field: "Review",
    label_field: "Sentiment",
    target_field: "Target sentiment",
    output_field: "New review",
};

const NLI_VOCAB: TaskVocabulary = TaskVocabulary {
    instruction: "You are given a premise and a hypothesis together with their relationship \
                  label. Change the premise with minimal edits so that its relationship to the \
                  unchanged hypothesis becomes the target relationship. Return the new premise \
                  within <new> and </new> tags.",
    text_field: "Premise",
    label_field: "Relationship",
    target_field: "Target relationship",
    output_field: "New premise",
};

fn vocab_for(task: Task) -> &'static TaskVocabulary {
    match task {
        Task::Sentiment => &SENTIMENT_VOCAB,
        Task::Nli => &NLI_VOCAB,
    }
}

/// Renders a word list as `['a', 'b']`. Tokenized words never contain
/// quotes (punctuation is split into its own tokens), so no escaping is
/// needed.
pub fn render_word_list(words: &[String]) -> String {
    let inner: Vec<String> = words.iter().map(|w| format!("'{w}'")).collect();
    format!("[{}]", inner.join(", "))
}

fn parse_word_list(raw: &str) -> Option<Vec<String>> {
    let inner = raw.trim().strip_prefix('[')?.strip_suffix(']')?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    inner
        .split(", ")
        .map(|item| {
            item.strip_prefix('\'')
                .and_then(|s| s.strip_suffix('\''))
                .map(str::to_string)
        })
        .collect()
}

fn guidance_clause(words: &[String]) -> String {
    format!(
        "Change these important words: {}. The first word is the most important.",
        render_word_list(words)
    )
}

/// Renders the full prompt for a spec.
///
/// Layout: instruction, one worked example per shot (counterfactual inside
/// `<new></new>`), then the request block naming the query text, its label,
/// and the target label. Guided prompts list the important words verbatim
/// in the given order. Deterministic for a fixed spec.
pub fn build_prompt(spec: &PromptSpec) -> Result<String, PromptError> {
    if spec.shots.is_empty() {
        return Err(PromptError::NoShots);
    }
    if spec.target_label == spec.query_label {
        return Err(PromptError::TargetEqualsCurrent(spec.target_label.clone()));
    }
    let guided = spec.mode == PromptMode::Cgg;
    if guided && spec.important_words.is_empty() && !spec.allow_empty_guidance {
        return Err(PromptError::MissingImportantWords);
    }
    let v = vocab_for(spec.task);
    let mut out = String::new();
    out.push_str(v.instruction);
    out.push_str("\n\n");

    for shot in &spec.shots {
        out.push_str(&format!("{}: {}\n", v.text_field, shot.source));
        out.push_str(&format!("{}: {}\n", v.label_field, shot.source_label));
        out.push_str(&format!("{}: {}\n", v.target_field, shot.target_label));
        if guided {
            if let Some(words) = shot.important_words.as_deref().filter(|w| !w.is_empty()) {
                out.push_str(&format!("Important words: {}\n", render_word_list(words)));
            }
        }
        out.push_str(&format!(
            "{}: {OPEN_TAG}{}{CLOSE_TAG}\n\n",
            v.output_field, shot.counterfactual
        ));
    }

    out.push_str(&format!("{}: {}\n", v.text_field, spec.query.text));
    if spec.task == Task::Nli {
        if let Some(pair) = &spec.query.text_pair {
            out.push_str(&format!("Hypothesis: {pair}\n"));
        }
    }
    out.push_str(&format!("{}: {}\n", v.label_field, spec.query_label));
    out.push_str(&format!("{}: {}\n", v.target_field, spec.target_label));
    if guided && !spec.important_words.is_empty() {
        out.push_str(&format!(
            "Important words: {}\n",
            render_word_list(&spec.important_words)
        ));
        out.push_str(&guidance_clause(&spec.important_words));
        out.push('\n');
    }
    out.push_str(&format!("{}:", v.output_field));
    Ok(out)
}

/// Extracts the text between the first `<new>` and the next `</new>`,
/// trimmed, with `tagged = true`. When the tags are absent or malformed the
/// whole raw output is returned trimmed with `tagged = false`.
pub fn parse_generation(raw: &str) -> (String, bool) {
    if let Some(start) = raw.find(OPEN_TAG) {
        let after = &raw[start + OPEN_TAG.len()..];
        if let Some(end) = after.find(CLOSE_TAG) {
            return (after[..end].trim().to_string(), true);
        }
    }
    (raw.trim().to_string(), false)
}

fn last_line_value<'a>(prompt: &'a str, field: &str) -> Option<&'a str> {
    let marker = format!("{field}: ");
    prompt
        .lines()
        .rev()
        .find_map(|line| line.strip_prefix(&marker))
        .map(str::trim)
}

/// Recovers the query text (and hypothesis, if any) from a rendered prompt:
/// the last request block wins. Used by the deterministic mock generator;
/// returns the whole prompt when no known field marker is present.
pub fn extract_query(prompt: &str) -> (String, Option<String>) {
    for field in ["Review", "Premise"] {
        if let Some(text) = last_line_value(prompt, field) {
            let pair = last_line_value(prompt, "Hypothesis").map(str::to_string);
            return (text.to_string(), pair);
        }
    }
    (prompt.trim().to_string(), None)
}

/// Recovers the target label from a rendered prompt (last request block).
pub fn extract_target_label(prompt: &str) -> Option<String> {
    for field in ["Target sentiment", "Target relationship"] {
        if let Some(label) = last_line_value(prompt, field) {
            return Some(label.to_string());
        }
    }
    None
}

/// Recovers the important-word list from a rendered prompt, empty when the
/// prompt carries no guidance.
pub fn extract_important_words(prompt: &str) -> Vec<String> {
    last_line_value(prompt, "Important words")
        .and_then(parse_word_list)
        .unwrap_or_default()
}

/// Reads shots from a JSONL file, one object per line; blank lines are
/// skipped and file order is preserved.
pub fn load_shots(path: impl AsRef<Path>) -> Result<Vec<Shot>, PromptError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| PromptError::Io {
        path: display.clone(),
        source,
    })?;
    let mut shots = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PromptError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let shot: Shot = serde_json::from_str(&line).map_err(|source| PromptError::Parse {
            path: display.clone(),
            line: i + 1,
            source,
        })?;
        for (field, value) in [
            ("source", &shot.source),
            ("source_label", &shot.source_label),
            ("target_label", &shot.target_label),
            ("counterfactual", &shot.counterfactual),
        ] {
            if value.trim().is_empty() {
                return Err(PromptError::EmptyShotField {
                    path: display,
                    line: i + 1,
                    field,
                });
            }
        }
        shots.push(shot);
    }
    Ok(shots)
}

/// Built-in worked examples, used when no exemplar file is supplied.
pub fn builtin_shots(task: Task) -> Vec<Shot> {
    let shot = |source: &str,
                source_label: &str,
                target_label: &str,
                counterfactual: &str,
                words: &[&str]| Shot {
        source: source.into(),
        source_label: source_label.into(),
        target_label: target_label.into(),
        counterfactual: counterfactual.into(),
        important_words: if words.is_empty() {
            None
        } else {
            Some(words.iter().map(|w| w.to_string()).collect())
        },
    };
    match task {
        Task::Sentiment => vec![
            shot(
                "The plot was dull and the acting felt wooden .",
                "negative",
                "positive",
                "The plot was gripping and the acting felt natural .",
                &["dull", "wooden"],
            ),
            shot(
                "A heartfelt story carried by a brilliant cast .",
                "positive",
                "negative",
                "A hollow story dragged down by a dreadful cast .",
                &["heartfelt", "brilliant"],
            ),
            shot(
                "I expected more , but the jokes kept falling flat .",
                "negative",
                "positive",
                "I expected little , but the jokes kept landing perfectly .",
                &["flat"],
            ),
        ],
        Task::Nli => vec![
            shot(
                "A man is playing a guitar on stage .",
                "entailment",
                "contradiction",
                "A man is asleep next to a guitar backstage .",
                &["playing", "stage"],
            ),
            shot(
                "A child is sleeping in a quiet room .",
                "contradiction",
                "entailment",
                "A child is running across a sunny yard .",
                &["sleeping", "quiet"],
            ),
            shot(
                "A woman walks through a park .",
                "neutral",
                "entailment",
                "A woman walks her dog through a park .",
                &["walks"],
            ),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(mode: PromptMode, words: &[&str]) -> PromptSpec {
        PromptSpec {
            task: Task::Sentiment,
            mode,
            shots: builtin_shots(Task::Sentiment),
            query: Document::new("q", "a boring , blasphemous film ; glad it ended"),
            query_label: "negative".into(),
            target_label: "positive".into(),
            important_words: words.iter().map(|w| w.to_string()).collect(),
            allow_empty_guidance: false,
        }
    }

    #[test]
    fn vanilla_prompt_has_shot_exemplar_and_no_guidance() {
        let mut s = spec(PromptMode::Vanilla, &[]);
        s.shots.truncate(1);
        let prompt = build_prompt(&s).unwrap();
        assert!(prompt.contains("<new>The plot was gripping and the acting felt natural .</new>"));
        assert!(!prompt.contains("Important words"));
        assert!(prompt.contains("Review: a boring , blasphemous film ; glad it ended"));
        assert!(prompt.contains("Target sentiment: positive"));
    }

    #[test]
    fn guided_prompt_lists_words_verbatim_in_order() {
        let s = spec(PromptMode::Cgg, &["boring", "blasphemous", "glad"]);
        let prompt = build_prompt(&s).unwrap();
        assert!(prompt.contains("['boring', 'blasphemous', 'glad']"));
        for word in &s.important_words {
            assert!(prompt.contains(word.as_str()));
        }
    }

    #[test]
    fn prompt_contains_one_tagged_exemplar_per_shot() {
        for k in 1..=3 {
            let mut s = spec(PromptMode::Vanilla, &[]);
            s.shots.truncate(k);
            let prompt = build_prompt(&s).unwrap();
            assert_eq!(
                prompt.matches("New review: <new>").count(),
                k,
                "k={k}: one tagged exemplar per shot"
            );
            // the instruction names the tags once; the exemplars add k more
            assert_eq!(prompt.matches(OPEN_TAG).count(), k + 1, "k={k}");
            assert_eq!(prompt.matches(CLOSE_TAG).count(), k + 1, "k={k}");
        }
    }

    #[test]
    fn nli_prompt_targets_the_premise() {
        let s = PromptSpec {
            task: Task::Nli,
            mode: PromptMode::Vanilla,
            shots: builtin_shots(Task::Nli),
            query: Document::new("q", "A dog runs across the field .")
                .with_text_pair("An animal is outside ."),
            query_label: "entailment".into(),
            target_label: "contradiction".into(),
            important_words: Vec::new(),
            allow_empty_guidance: false,
        };
        let prompt = build_prompt(&s).unwrap();
        assert!(prompt.contains("Change the premise with minimal edits"));
        assert!(prompt.contains("Premise: A dog runs across the field ."));
        assert!(prompt.contains("Hypothesis: An animal is outside ."));
        assert!(prompt.ends_with("New premise:"));
    }

    #[test]
    fn build_prompt_validates_spec() {
        let mut no_shots = spec(PromptMode::Vanilla, &[]);
        no_shots.shots.clear();
        assert!(matches!(build_prompt(&no_shots), Err(PromptError::NoShots)));

        let mut same_label = spec(PromptMode::Vanilla, &[]);
        same_label.target_label = same_label.query_label.clone();
        assert!(matches!(
            build_prompt(&same_label),
            Err(PromptError::TargetEqualsCurrent(_))
        ));

        let empty_guidance = spec(PromptMode::Cgg, &[]);
        assert!(matches!(
            build_prompt(&empty_guidance),
            Err(PromptError::MissingImportantWords)
        ));

        let mut allowed = spec(PromptMode::Cgg, &[]);
        allowed.allow_empty_guidance = true;
        let prompt = build_prompt(&allowed).unwrap();
        // shots keep their exemplar word lists, but the query block gets
        // neither a word list nor the guidance clause
        let query_block = &prompt[prompt.rfind("Review:").unwrap()..];
        assert!(!query_block.contains("Important words"));
        assert!(!prompt.contains("Change these important words"));
    }

    #[test]
    fn prompt_is_deterministic() {
        let s = spec(PromptMode::Cgg, &["boring"]);
        assert_eq!(build_prompt(&s).unwrap(), build_prompt(&s).unwrap());
    }

    #[test]
    fn parse_generation_takes_first_tag_pair() {
        assert_eq!(
            parse_generation("<new>great movie</new>"),
            ("great movie".to_string(), true)
        );
        assert_eq!(
            parse_generation("sure! <new>A</new> junk <new>B</new>"),
            ("A".to_string(), true)
        );
        assert_eq!(
            parse_generation("no tags here"),
            ("no tags here".to_string(), false)
        );
        assert_eq!(
            parse_generation("broken </new> order <new> tail"),
            ("broken </new> order <new> tail".to_string(), false)
        );
    }

    #[test]
    fn extraction_recovers_query_fields_from_prompt() {
        let s = spec(PromptMode::Cgg, &["boring", "glad"]);
        let prompt = build_prompt(&s).unwrap();
        let (text, pair) = extract_query(&prompt);
        assert_eq!(text, s.query.text);
        assert_eq!(pair, None);
        assert_eq!(extract_target_label(&prompt).as_deref(), Some("positive"));
        assert_eq!(extract_important_words(&prompt), s.important_words);
    }

    #[test]
    fn extraction_falls_back_to_whole_prompt() {
        let (text, pair) = extract_query("  free-form prompt with no markers  ");
        assert_eq!(text, "free-form prompt with no markers");
        assert_eq!(pair, None);
        assert_eq!(extract_target_label("nothing"), None);
        assert!(extract_important_words("nothing").is_empty());
    }

    #[test]
    fn word_list_round_trips() {
        for words in [vec![], vec!["boring,".to_string()], vec!["a".into(), "b c".into()]] {
            let rendered = render_word_list(&words);
            assert_eq!(parse_word_list(&rendered), Some(words));
        }
    }

    #[test]
    fn shots_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shots.jsonl");
        let shots = builtin_shots(Task::Sentiment);
        let mut lines: Vec<String> = shots
            .iter()
            .map(|s| serde_json::to_string(s).unwrap())
            .collect();
        lines.insert(1, String::new()); // blank lines are skipped
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert_eq!(load_shots(&path).unwrap(), shots);
    }

    #[test]
    fn load_shots_rejects_empty_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shots.jsonl");
        std::fs::write(
            &path,
            r#"{"source":"", "source_label":"a", "target_label":"b", "counterfactual":"c"}"#,
        )
        .unwrap();
        assert!(matches!(
            load_shots(&path),
            Err(PromptError::EmptyShotField { field: "source", .. })
        ));
    }

    proptest! {
        #[test]
        fn parse_round_trips_tag_free_payloads(t in "[^<>]{0,60}") {
            let (text, tagged) = parse_generation(&format!("{OPEN_TAG}{t}{CLOSE_TAG}"));
            prop_assert!(tagged);
            prop_assert_eq!(text, t.trim());
        }
    }
}
