//! Corpus-level evaluation: flip rate, mean edit distance, perplexity under
//! an in-repo n-gram language model, modification rate of guidance words,
//! and an optional LLM quality judge.

use std::collections::{BTreeSet, HashMap};
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Document;
use crate::generate::{GenerateError, Generator, GeneratorConfig, TextGenerator};
use crate::select::CounterfactualRecord;
use crate::text::{changed_words, tokenize, TextError};
use crate::Scalar;

pub const DEFAULT_NGRAM_ORDER: usize = 3;
pub const DEFAULT_ADD_K: f64 = 0.1;
/// Judge calls sample close to greedily.
pub const JUDGE_TEMPERATURE: f64 = 0.2;

const BOS: &str = "<s>";
const UNK: &str = "<unk>";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("scorer corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be >= 1, got {0}")]
    InvalidOrder(usize),
    #[error("smoothing constant must be >= 0, got {0}")]
    InvalidSmoothing(f64),
    #[error("text tokenizes to an empty sequence")]
    EmptyText,
    #[error("record {id:?} lacks important words")]
    MissingImportantWords { id: String },
    #[error("judge reply has no parseable scores: {raw:?}")]
    JudgeParse { raw: String },
    #[error("judge score {field}={value} is outside 1..=5 in {raw:?}")]
    JudgeOutOfRange {
        field: &'static str,
        value: i64,
        raw: String,
    },
    #[error("io error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record file {path} line {line}: {source}")]
    RecordParse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

/// Add-k smoothed n-gram language model over the corpus vocabulary plus a
/// reserved unknown token.
///
/// Sequences are left-padded with a reserved boundary marker so the first
/// tokens condition on something; there is no end-of-sequence event, so the
/// event space is exactly vocabulary-plus-unknown. A context never seen in
/// training scores uniformly over that event space (for k = 0 this is taken
/// as the limit); k > 0 keeps every probability strictly positive.
#[derive(Debug, Clone)]
pub struct NGramScorer<S> {
    order: usize,
    k: f64,
    vocab: BTreeSet<String>,
    counts: HashMap<Vec<String>, ContextCounts>,
    _scalar: PhantomData<S>,
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: usize,
    next: HashMap<String, usize>,
}

/// The `(context, token)` events of a token sequence under `order`-gram
/// scoring with boundary padding; shared by the scorer and by oracle-style
/// recomputations.
pub fn padded_contexts(tokens: &[String], order: usize) -> Vec<(Vec<String>, String)> {
    let width = order - 1;
    tokens
        .iter()
        .enumerate()
        .map(|(i, token)| {
            let start = i.saturating_sub(width);
            let mut ctx: Vec<String> = Vec::with_capacity(width);
            for _ in 0..width.saturating_sub(i) {
                ctx.push(BOS.to_string());
            }
            ctx.extend(tokens[start..i].iter().cloned());
            (ctx, token.clone())
        })
        .collect()
}

impl<S: Scalar> NGramScorer<S> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Size of the event space: vocabulary plus the unknown token.
    pub fn event_count(&self) -> usize {
        self.vocab.len() + 1
    }

    fn known<'a>(&self, token: &'a str) -> &'a str {
        if token == BOS || self.vocab.contains(token) {
            token
        } else {
            UNK
        }
    }

    fn map_tokens(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| self.known(t).to_string()).collect()
    }

    /// Smoothed conditional probability of `token` given `context` (only
    /// the last `order - 1` context tokens matter; missing ones count as
    /// boundary markers). Out-of-vocabulary words map to the unknown token.
    pub fn token_probability(&self, context: &[String], token: &str) -> S {
        let width = self.order - 1;
        let mut ctx: Vec<String> = Vec::with_capacity(width);
        for _ in 0..width.saturating_sub(context.len()) {
            ctx.push(BOS.to_string());
        }
        let start = context.len().saturating_sub(width);
        ctx.extend(context[start..].iter().map(|t| self.known(t).to_string()));

        let token = self.known(token);
        let events = S::from_usize(self.event_count()).unwrap();
        let k = S::from_f64(self.k).unwrap();
        let (count, total) = match self.counts.get(&ctx) {
            Some(c) => (*c.next.get(token).unwrap_or(&0), c.total),
            None => (0, 0),
        };
        if total == 0 && self.k == 0.0 {
            // limit of (count + k) / (total + k * events) as k -> 0
            return S::one() / events;
        }
        (S::from_usize(count).unwrap() + k)
            / (S::from_usize(total).unwrap() + k * events)
    }

    /// Sum of log conditional probabilities of `tokens` and the event
    /// count, before exponentiation.
    pub fn log_likelihood(&self, tokens: &[String]) -> Result<(S, usize), MetricsError> {
        if tokens.is_empty() {
            return Err(MetricsError::EmptyText);
        }
        let mapped = self.map_tokens(tokens);
        let mut total = S::zero();
        for (ctx, token) in padded_contexts(&mapped, self.order) {
            total = total + self.token_probability(&ctx, &token).ln();
        }
        Ok((total, tokens.len()))
    }
}

/// Fits an add-k n-gram model on the corpus (`text` and any `text_pair`
/// both count as training text).
pub fn fit_ngram<S: Scalar>(
    corpus: &[Document],
    order: usize,
    k: f64,
) -> Result<NGramScorer<S>, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if order == 0 {
        return Err(MetricsError::InvalidOrder(order));
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(MetricsError::InvalidSmoothing(k));
    }
    let mut scorer = NGramScorer {
        order,
        k,
        vocab: BTreeSet::new(),
        counts: HashMap::new(),
        _scalar: PhantomData,
    };
    for doc in corpus {
        for text in std::iter::once(&doc.text).chain(doc.text_pair.iter()) {
            let tokens = tokenize(text).tokens().to_vec();
            for token in &tokens {
                scorer.vocab.insert(token.clone());
            }
            for (ctx, token) in padded_contexts(&tokens, order) {
                let entry = scorer.counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(token).or_insert(0) += 1;
            }
        }
    }
    Ok(scorer)
}

/// Perplexity of a text: the exponentiated mean negative log-likelihood of
/// its token sequence under the scorer.
pub fn perplexity<S: Scalar>(scorer: &NGramScorer<S>, text: &str) -> Result<S, MetricsError> {
    let tokens = tokenize(text).tokens().to_vec();
    let (log_total, n) = scorer.log_likelihood(&tokens)?;
    Ok((-log_total / S::from_usize(n).unwrap()).exp())
}

/// Fraction of records whose counterfactual flipped the prediction.
pub fn flip_rate(records: &[CounterfactualRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let flips = records.iter().filter(|r| r.flipped).count();
    Ok(flips as f64 / records.len() as f64)
}

/// Mean stored edit distance.
pub fn mean_distance(records: &[CounterfactualRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let total: usize = records.iter().map(|r| r.distance).sum();
    Ok(total as f64 / records.len() as f64)
}

fn record_modification_rate(record: &CounterfactualRecord) -> Result<Option<f64>, MetricsError> {
    let Some(words) = &record.important_words else {
        return Ok(None);
    };
    let original = tokenize(&record.original.text);
    let generated = tokenize(&record.counterfactual_text);
    Ok(Some(changed_words(&original, &generated, words)?))
}

/// Mean fraction of each record's important words that are absent from its
/// counterfactual. Every record must carry important words.
pub fn modification_rate(records: &[CounterfactualRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let mut total = 0.0;
    for record in records {
        match record_modification_rate(record)? {
            Some(rate) => total += rate,
            None => {
                return Err(MetricsError::MissingImportantWords {
                    id: record.original.id.clone(),
                })
            }
        }
    }
    Ok(total / records.len() as f64)
}

/// Integer 1–5 judgments for one text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub grammar: u8,
    pub cohesiveness: u8,
    pub fluency: u8,
}

/// The fixed-format instruction sent to the judge for one text.
pub fn build_judge_prompt(text: &str) -> String {
    format!(
        "Rate the following text on a 1-5 scale for grammar (syntactic and grammatical \
         correctness), cohesiveness (logical and coherent structure), and fluency (readable, \
         natural flow). Reply with a single line in exactly this format:\n\
         grammar=<1-5> cohesiveness=<1-5> fluency=<1-5>\n\n\
         Text: {text}"
    )
}

fn parse_score(raw: &str, field: &'static str) -> Result<u8, MetricsError> {
    let marker = format!("{field}=");
    let start = raw.find(&marker).ok_or_else(|| MetricsError::JudgeParse {
        raw: raw.to_string(),
    })?;
    let rest = &raw[start + marker.len()..];
    let digits: String = rest
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '-')
        .collect();
    let value: i64 = digits.parse().map_err(|_| MetricsError::JudgeParse {
        raw: raw.to_string(),
    })?;
    if !(1..=5).contains(&value) {
        return Err(MetricsError::JudgeOutOfRange {
            field,
            value,
            raw: raw.to_string(),
        });
    }
    Ok(value as u8)
}

/// Parses a judge reply of the form
/// `grammar=<n> cohesiveness=<n> fluency=<n>`; scores outside 1–5 or
/// missing keys are errors that keep the raw reply.
pub fn parse_judge_reply(raw: &str) -> Result<JudgeScores, MetricsError> {
    Ok(JudgeScores {
        grammar: parse_score(raw, "grammar")?,
        cohesiveness: parse_score(raw, "cohesiveness")?,
        fluency: parse_score(raw, "fluency")?,
    })
}

/// Judges one text with the given generator backend.
pub fn judge_quality_with(
    judge: &dyn TextGenerator,
    text: &str,
) -> Result<JudgeScores, MetricsError> {
    let raw = judge.generate(&build_judge_prompt(text), None)?;
    parse_judge_reply(&raw)
}

/// Judges one text with a generator built from the config (callers usually
/// set `temperature` to [`JUDGE_TEMPERATURE`]).
pub fn judge_quality(cfg: &GeneratorConfig, text: &str) -> Result<JudgeScores, MetricsError> {
    let generator = Generator::from_config(cfg)?;
    judge_quality_with(&generator, text)
}

/// Mean 1–5 quality scores over a set of judged texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAggregate {
    pub grammar: f64,
    pub cohesiveness: f64,
    pub fluency: f64,
}

/// One evaluated counterfactual, carrying everything needed to recompute
/// the report aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub id: String,
    pub original_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_pair: Option<String>,
    pub original_label: String,
    pub target_label: String,
    pub counterfactual_text: String,
    pub flipped: bool,
    pub distance: usize,
    pub method: crate::select::Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub important_words: Option<Vec<String>>,
    pub candidate_count_used: usize,
    pub perplexity: Option<f64>,
    pub modification_rate: Option<f64>,
    pub quality: Option<JudgeScores>,
}

impl RecordRow {
    /// Rebuilds the selection-stage record, e.g. to re-evaluate or augment
    /// from rows previously written to disk.
    pub fn to_counterfactual_record(&self) -> CounterfactualRecord {
        let mut original = Document::new(self.id.clone(), self.original_text.clone());
        if let Some(pair) = &self.text_pair {
            original = original.with_text_pair(pair.clone());
        }
        CounterfactualRecord {
            original,
            original_label: self.original_label.clone(),
            target_label: self.target_label.clone(),
            counterfactual_text: self.counterfactual_text.clone(),
            flipped: self.flipped,
            distance: self.distance,
            method: self.method,
            important_words: self.important_words.clone(),
            candidate_count_used: self.candidate_count_used,
        }
    }
}

/// Reads rows from a JSONL file (one row per line, blank lines skipped).
pub fn read_record_rows(path: impl AsRef<std::path::Path>) -> Result<Vec<RecordRow>, MetricsError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|source| MetricsError::RecordParse {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Corpus-level evaluation results plus the per-record rows they were
/// computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub flip_rate: f64,
    pub mean_distance: f64,
    pub mean_perplexity: Option<f64>,
    pub mean_modification_rate: Option<f64>,
    pub quality: Option<QualityAggregate>,
    pub records: Vec<RecordRow>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        None
    } else {
        Some(collected.iter().sum::<f64>() / collected.len() as f64)
    }
}

/// Builds the full report: aggregates FR and Dis over all records,
/// perplexity over records the scorer can score, modification rate over
/// records that carry important words, and quality over records the judge
/// rated. Judge failures degrade to missing row entries rather than
/// aborting the evaluation.
pub fn build_report(
    records: &[CounterfactualRecord],
    scorer: Option<&NGramScorer<f64>>,
    judge: Option<&dyn TextGenerator>,
) -> Result<EvaluationReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let mut rows = Vec::with_capacity(records.len());
    for record in records {
        let perplexity = match scorer {
            Some(s) => match perplexity(s, &record.counterfactual_text) {
                Ok(pp) => Some(pp),
                Err(e) => {
                    log::warn!(
                        "perplexity unavailable for {:?}: {e}",
                        record.original.id
                    );
                    None
                }
            },
            None => None,
        };
        let modification_rate = record_modification_rate(record)?;
        let quality = match judge {
            Some(j) => match judge_quality_with(j, &record.counterfactual_text) {
                Ok(scores) => Some(scores),
                Err(e) => {
                    log::warn!("judge failed for {:?}: {e}", record.original.id);
                    None
                }
            },
            None => None,
        };
        rows.push(RecordRow {
            id: record.original.id.clone(),
            original_text: record.original.text.clone(),
            text_pair: record.original.text_pair.clone(),
            original_label: record.original_label.clone(),
            target_label: record.target_label.clone(),
            counterfactual_text: record.counterfactual_text.clone(),
            flipped: record.flipped,
            distance: record.distance,
            method: record.method,
            important_words: record.important_words.clone(),
            candidate_count_used: record.candidate_count_used,
            perplexity,
            modification_rate,
            quality,
        });
    }

    let quality = {
        let judged: Vec<&JudgeScores> = rows.iter().filter_map(|r| r.quality.as_ref()).collect();
        if judged.is_empty() {
            None
        } else {
            let n = judged.len() as f64;
            Some(QualityAggregate {
                grammar: judged.iter().map(|q| q.grammar as f64).sum::<f64>() / n,
                cohesiveness: judged.iter().map(|q| q.cohesiveness as f64).sum::<f64>() / n,
                fluency: judged.iter().map(|q| q.fluency as f64).sum::<f64>() / n,
            })
        }
    };

    Ok(EvaluationReport {
        n: records.len(),
        flip_rate: flip_rate(records)?,
        mean_distance: mean_distance(records)?,
        mean_perplexity: mean_of(rows.iter().filter_map(|r| r.perplexity)),
        mean_modification_rate: mean_of(rows.iter().filter_map(|r| r.modification_rate)),
        quality,
        records: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::Method;

    fn record(
        id: &str,
        original: &str,
        cf: &str,
        flipped: bool,
        distance: usize,
        words: Option<&[&str]>,
    ) -> CounterfactualRecord {
        CounterfactualRecord {
            original: Document::new(id, original),
            original_label: "pos".into(),
            target_label: "neg".into(),
            counterfactual_text: cf.into(),
            flipped,
            distance,
            method: Method::Cgv,
            important_words: words.map(|w| w.iter().map(|s| s.to_string()).collect()),
            candidate_count_used: 1,
        }
    }

    fn corpus(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), *t))
            .collect()
    }

    #[test]
    fn record_rows_round_trip_through_jsonl() {
        let records = vec![
            record("a", "a good film", "a bad film", true, 1, Some(&["good"])),
            record("b", "fine work", "fine work", false, 0, None),
        ];
        let scorer = fit_ngram::<f64>(&corpus(&["a good film", "fine work"]), 2, 0.1).unwrap();
        let report = build_report(&records, Some(&scorer), None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut text = String::new();
        for row in &report.records {
            text.push_str(&serde_json::to_string(row).unwrap());
            text.push('\n');
        }
        std::fs::write(&path, text).unwrap();

        let rows = read_record_rows(&path).unwrap();
        assert_eq!(rows, report.records);
        let rebuilt: Vec<CounterfactualRecord> =
            rows.iter().map(RecordRow::to_counterfactual_record).collect();
        assert_eq!(rebuilt, records);
    }

    #[test]
    fn flip_rate_is_the_indicator_mean() {
        let all: Vec<_> = (0..4)
            .map(|i| record(&format!("{i}"), "a", "b", true, 1, None))
            .collect();
        assert_eq!(flip_rate(&all).unwrap(), 1.0);
        let none: Vec<_> = (0..4)
            .map(|i| record(&format!("{i}"), "a", "b", false, 1, None))
            .collect();
        assert_eq!(flip_rate(&none).unwrap(), 0.0);
        let mixed: Vec<_> = (0..5)
            .map(|i| record(&format!("{i}"), "a", "b", i < 3, 1, None))
            .collect();
        assert_eq!(flip_rate(&mixed).unwrap(), 0.6);
        assert!(matches!(flip_rate(&[]), Err(MetricsError::EmptyRecords)));
    }

    #[test]
    fn mean_distance_averages_stored_distances() {
        let recs = vec![
            record("1", "a", "a", false, 2, None),
            record("2", "a", "b", true, 4, None),
        ];
        assert_eq!(mean_distance(&recs).unwrap(), 3.0);
        let zero = vec![record("1", "same text", "same text", false, 0, None)];
        assert_eq!(mean_distance(&zero).unwrap(), 0.0);
    }

    #[test]
    fn modification_rate_trivial_cases() {
        let kept = vec![
            record("1", "boring glad film", "boring glad film", false, 0, Some(&["boring", "glad"])),
        ];
        assert_eq!(modification_rate(&kept).unwrap(), 0.0);
        let removed = vec![
            record("1", "boring glad film", "nice new film", true, 2, Some(&["boring", "glad"])),
        ];
        assert_eq!(modification_rate(&removed).unwrap(), 1.0);
        let mixed = vec![
            record("1", "boring glad film", "boring new film", true, 1, Some(&["boring", "glad"])),
            record("2", "boring glad film", "nice new film", true, 2, Some(&["boring", "glad"])),
        ];
        assert_eq!(modification_rate(&mixed).unwrap(), 0.75);
    }

    #[test]
    fn modification_rate_requires_important_words() {
        let recs = vec![record("1", "a", "b", true, 1, None)];
        assert!(matches!(
            modification_rate(&recs),
            Err(MetricsError::MissingImportantWords { .. })
        ));
    }

    #[test]
    fn unigram_near_zero_smoothing_concentrates_probability() {
        let scorer: NGramScorer<f64> = fit_ngram(&corpus(&["a"]), 1, 1e-12).unwrap();
        let p = scorer.token_probability(&[], "a");
        assert!(p > 0.999_999, "p = {p}");
    }

    #[test]
    fn uniform_unigram_perplexity_equals_vocabulary_size() {
        for v in [4usize, 10] {
            let words: Vec<String> = (0..v).map(|i| format!("tok{i}")).collect();
            let docs = corpus(&[words.join(" ").as_str()]);
            let scorer: NGramScorer<f64> = fit_ngram(&docs, 1, 0.0).unwrap();
            let pp = perplexity(&scorer, &words.join(" ")).unwrap();
            assert!((pp - v as f64).abs() < 1e-9, "v={v}, pp={pp}");
        }
    }

    #[test]
    fn certain_scorer_gives_perplexity_one() {
        // deterministic continuation: every context has exactly one successor
        let scorer: NGramScorer<f64> = fit_ngram(&corpus(&["a b c"]), 2, 0.0).unwrap();
        let pp = perplexity(&scorer, "a b c").unwrap();
        assert!((pp - 1.0).abs() < 1e-12, "pp={pp}");
    }

    #[test]
    fn trigram_counts_match_manual_table() {
        let docs = corpus(&["the cat sat", "the cat ran", "the dog sat"]);
        let scorer: NGramScorer<f64> = fit_ngram(&docs, 3, 0.1).unwrap();
        // vocabulary {the, cat, sat, ran, dog} -> 6 events with <unk>
        assert_eq!(scorer.event_count(), 6);
        let s = |ctx: &[&str], t: &str| {
            scorer.token_probability(
                &ctx.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                t,
            )
        };
        // context (<s>, <s>): "the" 3 of 3
        assert!((s(&[], "the") - 3.1 / 3.6).abs() < 1e-12);
        // context (<s>, the): cat 2, dog 1 of 3
        assert!((s(&["the"], "cat") - 2.1 / 3.6).abs() < 1e-12);
        assert!((s(&["the"], "dog") - 1.1 / 3.6).abs() < 1e-12);
        // context (the, cat): sat 1, ran 1 of 2
        assert!((s(&["the", "cat"], "sat") - 1.1 / 2.6).abs() < 1e-12);
        assert!((s(&["the", "cat"], "ran") - 1.1 / 2.6).abs() < 1e-12);
        // unseen context: uniform over 6 events
        assert!((s(&["cat", "dog"], "the") - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_normalize_per_context() {
        let docs = corpus(&["the cat sat on the mat", "a dog sat"]);
        let scorer: NGramScorer<f64> = fit_ngram(&docs, 3, 0.1).unwrap();
        let mut events: Vec<String> = scorer.vocab.iter().cloned().collect();
        events.push(UNK.to_string());
        for ctx in [vec![], vec!["the".to_string()], vec!["the".into(), "cat".into()], vec!["zz".into(), "qq".into()]] {
            let total: f64 = events.iter().map(|t| scorer.token_probability(&ctx, t)).sum();
            assert!((total - 1.0).abs() < 1e-9, "ctx {ctx:?} sums to {total}");
        }
    }

    #[test]
    fn perplexity_matches_direct_log_sum() {
        let docs = corpus(&["the cat sat on the mat", "the dog ran far"]);
        let scorer: NGramScorer<f64> = fit_ngram(&docs, 3, 0.1).unwrap();
        let text = "the cat ran onto the unknown mat";
        let tokens = tokenize(text).tokens().to_vec();
        let mapped: Vec<String> = tokens
            .iter()
            .map(|t| {
                if scorer.vocab.contains(t) {
                    t.clone()
                } else {
                    UNK.to_string()
                }
            })
            .collect();
        let mut log_sum = 0.0;
        for (ctx, token) in padded_contexts(&mapped, 3) {
            log_sum += scorer.token_probability(&ctx, &token).ln();
        }
        let direct = (-log_sum / tokens.len() as f64).exp();
        let pp = perplexity(&scorer, text).unwrap();
        assert!((pp - direct).abs() < 1e-9);
        assert!(pp >= 1.0);
    }

    #[test]
    fn perplexity_rejects_empty_text() {
        let scorer: NGramScorer<f64> = fit_ngram(&corpus(&["a b"]), 2, 0.1).unwrap();
        assert!(matches!(
            perplexity(&scorer, "   "),
            Err(MetricsError::EmptyText)
        ));
    }

    #[test]
    fn fit_ngram_validates_inputs() {
        assert!(matches!(
            fit_ngram::<f64>(&[], 3, 0.1),
            Err(MetricsError::EmptyCorpus)
        ));
        assert!(matches!(
            fit_ngram::<f64>(&corpus(&["a"]), 0, 0.1),
            Err(MetricsError::InvalidOrder(0))
        ));
        assert!(matches!(
            fit_ngram::<f64>(&corpus(&["a"]), 3, -0.5),
            Err(MetricsError::InvalidSmoothing(_))
        ));
    }

    #[test]
    fn judge_reply_parses_fixed_format() {
        let scores = parse_judge_reply("grammar=5 cohesiveness=4 fluency=4").unwrap();
        assert_eq!(
            scores,
            JudgeScores {
                grammar: 5,
                cohesiveness: 4,
                fluency: 4
            }
        );
        // chatter around the line is tolerated
        let chatty =
            parse_judge_reply("Sure!\ngrammar=3 cohesiveness=2 fluency=5\nHope that helps")
                .unwrap();
        assert_eq!(chatty.grammar, 3);
    }

    #[test]
    fn judge_reply_range_and_parse_errors() {
        assert!(matches!(
            parse_judge_reply("grammar=9 cohesiveness=4 fluency=4"),
            Err(MetricsError::JudgeOutOfRange {
                field: "grammar",
                value: 9,
                ..
            })
        ));
        assert!(matches!(
            parse_judge_reply("I think it reads well."),
            Err(MetricsError::JudgeParse { .. })
        ));
        assert!(matches!(
            parse_judge_reply("grammar=5 fluency=4"),
            Err(MetricsError::JudgeParse { .. })
        ));
    }

    struct FixedJudge(&'static str);
    impl TextGenerator for FixedJudge {
        fn generate(&self, _prompt: &str, _seed: Option<u64>) -> Result<String, GenerateError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn judge_quality_runs_through_a_generator() {
        let scores =
            judge_quality_with(&FixedJudge("grammar=5 cohesiveness=4 fluency=4"), "nice text")
                .unwrap();
        assert_eq!(scores.grammar, 5);
        assert_eq!(scores.cohesiveness, 4);
        assert_eq!(scores.fluency, 4);
    }

    #[test]
    fn report_aggregates_match_row_recomputation() {
        let records = vec![
            record("1", "boring glad film", "nice new film", true, 2, Some(&["boring", "glad"])),
            record("2", "boring glad film", "boring glad film", false, 0, Some(&["boring", "glad"])),
        ];
        let scorer: NGramScorer<f64> =
            fit_ngram(&corpus(&["boring glad film", "nice new film"]), 3, 0.1).unwrap();
        let judge = FixedJudge("grammar=4 cohesiveness=3 fluency=5");
        let report = build_report(&records, Some(&scorer), Some(&judge)).unwrap();

        assert_eq!(report.n, 2);
        assert_eq!(report.flip_rate, 0.5);
        assert_eq!(report.mean_distance, 1.0);
        assert_eq!(report.mean_modification_rate, Some(0.5));

        let pp_mean = report
            .records
            .iter()
            .map(|r| r.perplexity.unwrap())
            .sum::<f64>()
            / 2.0;
        assert!((report.mean_perplexity.unwrap() - pp_mean).abs() < 1e-12);
        let q = report.quality.as_ref().unwrap();
        assert_eq!((q.grammar, q.cohesiveness, q.fluency), (4.0, 3.0, 5.0));
        for row in &report.records {
            assert_eq!(row.quality.unwrap().grammar, 4);
        }
    }

    #[test]
    fn report_without_scorer_or_words_uses_nulls() {
        let records = vec![record("1", "a b", "a c", true, 1, None)];
        let report = build_report(&records, None, None).unwrap();
        assert_eq!(report.mean_perplexity, None);
        assert_eq!(report.mean_modification_rate, None);
        assert_eq!(report.quality, None);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"mean_perplexity\":null"));
        assert!(json.contains("\"quality\":null"));
    }
}
