//! End-to-end orchestration: dataset ingestion, experiment execution across
//! the four method arms, the reversed-label faithfulness probe, and
//! synthetic corpus generation for offline runs.

use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{select_important_words, SelectError};
use crate::augment::{cyclic_mapping, reverse_labels, AugmentError};
use crate::classifier::{
    fit_logistic, gradient_saliency, linear_shap, Classifier, ClassifierError, ClassifyError,
    LinearModel, TrainConfig,
};
use crate::dataset::{read_jsonl, write_jsonl, DatasetError, Document};
use crate::generate::{
    sample_candidates, AntonymLexicon, GenerateError, Generator, GeneratorConfig, LexiconEntry,
    TextGenerator,
};
use crate::metrics::{
    build_report, fit_ngram, EvaluationReport, MetricsError, NGramScorer, RecordRow,
    DEFAULT_ADD_K, DEFAULT_NGRAM_ORDER,
};
use crate::parallel::map_indexed;
use crate::prompt::{builtin_shots, load_shots, PromptError, PromptSpec, Shot, Task};
use crate::remote::RemoteClassifier;
use crate::select::{select_counterfactual, CounterfactualRecord, Method, SelectionError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("dataset {0} contains no documents")]
    EmptyDataset(String),
    #[error("need {want} shots but only {have} are available")]
    InsufficientShots { have: usize, want: usize },
    #[error("every document failed ({total} of {total})")]
    AllDocumentsFailed { total: usize },
    #[error("io error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Attribution(#[from] SelectError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

/// Where predictions come from during an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSource {
    /// A trained model saved by `fit_logistic` + `LinearModel::save`.
    Model(PathBuf),
    /// A remote endpoint speaking the classify wire schema, with the label
    /// set the caller expects.
    Remote {
        endpoint: String,
        class_names: Vec<String>,
    },
}

/// Which attribution produces the guidance words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributionMethod {
    Saliency,
    Shap,
}

impl std::str::FromStr for AttributionMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "saliency" => Ok(AttributionMethod::Saliency),
            "shap" => Ok(AttributionMethod::Shap),
            other => Err(format!(
                "unknown attribution {other:?}, expected saliency|shap"
            )),
        }
    }
}

/// Full description of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dataset: PathBuf,
    pub classifier: ClassifierSource,
    pub method: Method,
    /// Candidates per document for validated methods (single-sample
    /// methods always draw one).
    pub n_candidates: usize,
    /// Worked examples per prompt.
    pub shots: usize,
    /// Shot exemplars; built-in examples are used when absent.
    pub shot_file: Option<PathBuf>,
    pub attribution: AttributionMethod,
    /// Share of distinct attributed words injected as guidance.
    pub fraction: f64,
    pub generator: GeneratorConfig,
    /// Optional quality judge; when absent the report's quality is null.
    pub judge: Option<GeneratorConfig>,
    /// Corpus for the perplexity scorer; defaults to the dataset itself.
    pub scorer_corpus: Option<PathBuf>,
    /// Fixed target label; documents already predicted as it fall back to
    /// the cyclic successor rule.
    pub target_label: Option<String>,
    pub seed: u64,
    pub max_parallel: usize,
    /// Per-record JSONL output.
    pub records_out: Option<PathBuf>,
    /// Report JSON output.
    pub report_out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(
        task: Task,
        dataset: impl Into<PathBuf>,
        classifier: ClassifierSource,
        generator: GeneratorConfig,
    ) -> Self {
        Self {
            task,
            dataset: dataset.into(),
            classifier,
            method: Method::Cggv,
            n_candidates: 5,
            shots: 1,
            shot_file: None,
            attribution: AttributionMethod::Saliency,
            fraction: crate::attribution::DEFAULT_FRACTION,
            generator,
            judge: None,
            scorer_corpus: None,
            target_label: None,
            seed: 42,
            max_parallel: 4,
            records_out: None,
            report_out: None,
        }
    }

    fn validate_with(&self, classifier_is_local: bool) -> Result<(), PipelineError> {
        if self.method.uses_validation() && self.n_candidates < 2 {
            return Err(PipelineError::InvalidConfig(format!(
                "method {} validates candidates and needs n >= 2, got {}",
                self.method, self.n_candidates
            )));
        }
        if self.n_candidates == 0 {
            return Err(PipelineError::InvalidConfig("n must be >= 1".into()));
        }
        if self.shots == 0 {
            return Err(PipelineError::InvalidConfig(
                "prompts need at least one shot".into(),
            ));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "fraction must be in (0, 1], got {}",
                self.fraction
            )));
        }
        if self.max_parallel == 0 {
            return Err(PipelineError::InvalidConfig(
                "max_parallel must be >= 1".into(),
            ));
        }
        if self.method.uses_guidance() && !classifier_is_local {
            return Err(PipelineError::InvalidConfig(format!(
                "method {} needs attribution scores, which remote classifiers do not expose; \
                 use an in-repo model file",
                self.method
            )));
        }
        if let ClassifierSource::Remote { class_names, .. } = &self.classifier {
            if class_names.len() < 2 {
                return Err(PipelineError::InvalidConfig(
                    "remote classifier needs at least 2 class names".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.validate_with(matches!(self.classifier, ClassifierSource::Model(_)))
    }
}

enum ActiveClassifier {
    Local(LinearModel<f64>),
    Remote(RemoteClassifier),
}

impl ActiveClassifier {
    fn local(&self) -> Option<&LinearModel<f64>> {
        match self {
            ActiveClassifier::Local(m) => Some(m),
            ActiveClassifier::Remote(_) => None,
        }
    }
}

impl Classifier for ActiveClassifier {
    fn classify(&self, doc: &Document) -> Result<crate::classifier::Prediction, ClassifyError> {
        match self {
            ActiveClassifier::Local(m) => m.classify(doc),
            ActiveClassifier::Remote(r) => r.classify(doc),
        }
    }

    fn class_names(&self) -> &[String] {
        match self {
            ActiveClassifier::Local(m) => Classifier::class_names(m),
            ActiveClassifier::Remote(r) => Classifier::class_names(r),
        }
    }
}

/// One document that could not be explained, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentFailure {
    pub id: String,
    pub error: String,
}

/// Result of an experiment: the evaluation report over all documents that
/// succeeded, plus the per-document failures.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub failures: Vec<DocumentFailure>,
}

/// Spreads document indices across seed space; candidate seeds derive from
/// the per-document seed in turn.
pub fn derive_doc_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The target label for a document predicted as `predicted`: the
/// configured target when set and different, otherwise the next class in
/// declared order (for binary tasks, the other class).
fn choose_target(
    class_names: &[String],
    predicted: &str,
    configured: Option<&str>,
) -> Result<String, PipelineError> {
    if let Some(target) = configured {
        if !class_names.iter().any(|c| c == target) {
            return Err(PipelineError::InvalidConfig(format!(
                "target label {target:?} is not one of {class_names:?}"
            )));
        }
        if target != predicted {
            return Ok(target.to_string());
        }
    }
    let idx = class_names
        .iter()
        .position(|c| c == predicted)
        .ok_or_else(|| {
            PipelineError::InvalidConfig(format!(
                "prediction {predicted:?} is not one of {class_names:?}"
            ))
        })?;
    Ok(class_names[(idx + 1) % class_names.len()].clone())
}

/// Builds the prompt spec for one document (prediction, target choice,
/// attribution-selected guidance). Guided and validated arms that share a
/// seed therefore share prompts: only the candidate count and selection
/// differ downstream.
fn build_prompt_spec(
    cfg: &ExperimentConfig,
    classifier: &ActiveClassifier,
    shots: &[Shot],
    background: &[Document],
    doc: &Document,
) -> Result<(PromptSpec, Option<Vec<String>>), PipelineError> {
    let prediction = classifier.classify(doc)?;
    let target = choose_target(
        classifier.class_names(),
        &prediction.label,
        cfg.target_label.as_deref(),
    )?;

    let (important_words, empty_guidance) = if cfg.method.uses_guidance() {
        let model = classifier
            .local()
            .expect("guidance methods are validated to use a local model");
        let attr = match cfg.attribution {
            AttributionMethod::Saliency => gradient_saliency(model, doc),
            AttributionMethod::Shap => linear_shap(model, doc, background)?,
        };
        let selection = select_important_words(&attr, cfg.fraction)?;
        (Some(selection.words), selection.empty_attribution)
    } else {
        (None, false)
    };

    let spec = PromptSpec {
        task: cfg.task,
        mode: cfg.method.prompt_mode(),
        shots: shots.to_vec(),
        query: doc.clone(),
        query_label: prediction.label,
        target_label: target,
        important_words: important_words.clone().unwrap_or_default(),
        allow_empty_guidance: empty_guidance,
    };
    Ok((spec, important_words))
}

fn explain_document(
    cfg: &ExperimentConfig,
    classifier: &ActiveClassifier,
    generator: &Generator,
    shots: &[Shot],
    background: &[Document],
    doc: &Document,
    index: usize,
) -> Result<CounterfactualRecord, PipelineError> {
    let (spec, important_words) = build_prompt_spec(cfg, classifier, shots, background, doc)?;
    let n = if cfg.method.uses_validation() {
        cfg.n_candidates
    } else {
        1
    };
    let set = sample_candidates(
        generator,
        classifier,
        &spec,
        n,
        derive_doc_seed(cfg.seed, index),
        1,
    )?;
    Ok(select_counterfactual(&set, cfg.method, important_words)?)
}

fn resolve_shots(cfg: &ExperimentConfig) -> Result<Vec<Shot>, PipelineError> {
    let mut shots = match &cfg.shot_file {
        Some(path) => load_shots(path)?,
        None => builtin_shots(cfg.task),
    };
    if shots.len() < cfg.shots {
        return Err(PipelineError::InsufficientShots {
            have: shots.len(),
            want: cfg.shots,
        });
    }
    shots.truncate(cfg.shots);
    Ok(shots)
}

fn build_classifier(cfg: &ExperimentConfig) -> Result<ActiveClassifier, PipelineError> {
    match &cfg.classifier {
        ClassifierSource::Model(path) => Ok(ActiveClassifier::Local(LinearModel::load(path)?)),
        ClassifierSource::Remote {
            endpoint,
            class_names,
        } => Ok(ActiveClassifier::Remote(
            RemoteClassifier::new(endpoint.clone(), class_names.clone())
                .with_max_parallel(cfg.max_parallel),
        )),
    }
}

fn run_on_docs(
    cfg: &ExperimentConfig,
    classifier: &ActiveClassifier,
    docs: &[Document],
    shots: &[Shot],
    scorer: &NGramScorer<f64>,
    judge: Option<&dyn TextGenerator>,
) -> Result<RunOutput, PipelineError> {
    let generator = Generator::from_config(&cfg.generator)?;
    let results: Vec<Result<CounterfactualRecord, PipelineError>> =
        map_indexed(docs.len(), cfg.max_parallel, |i| {
            explain_document(cfg, classifier, &generator, shots, docs, &docs[i], i)
        });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (doc, result) in docs.iter().zip(results) {
        match result {
            Ok(record) => records.push(record),
            Err(e) => {
                log::warn!("document {:?} failed: {e}", doc.id);
                failures.push(DocumentFailure {
                    id: doc.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(PipelineError::AllDocumentsFailed { total: docs.len() });
    }
    let report = build_report(&records, Some(scorer), judge)?;
    Ok(RunOutput { report, failures })
}

fn write_report_json(path: &Path, report: &EvaluationReport) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json + "\n").map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_records_jsonl(path: &Path, rows: &[RecordRow]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Runs one experiment arm end to end: classify every document, build its
/// prompt, sample and select a counterfactual, aggregate metrics, and write
/// any configured outputs. Per-document failures are collected instead of
/// aborting; the run errors only if every document fails. Deterministic for
/// a fixed config and seed with the mock generator.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let docs = read_jsonl(&cfg.dataset)?;
    if docs.is_empty() {
        return Err(PipelineError::EmptyDataset(
            cfg.dataset.display().to_string(),
        ));
    }
    let classifier = build_classifier(cfg)?;
    let shots = resolve_shots(cfg)?;
    let scorer_docs = match &cfg.scorer_corpus {
        Some(path) => read_jsonl(path)?,
        None => docs.clone(),
    };
    let scorer = fit_ngram::<f64>(&scorer_docs, DEFAULT_NGRAM_ORDER, DEFAULT_ADD_K)?;
    let judge = cfg
        .judge
        .as_ref()
        .map(Generator::from_config)
        .transpose()?;

    let output = run_on_docs(
        cfg,
        &classifier,
        &docs,
        &shots,
        &scorer,
        judge.as_ref().map(|g| g as &dyn TextGenerator),
    )?;
    if let Some(path) = &cfg.records_out {
        write_records_jsonl(path, &output.report.records)?;
    }
    if let Some(path) = &cfg.report_out {
        write_report_json(path, &output.report)?;
    }
    Ok(output)
}

/// Faithfulness probe results: the same experiment run against the
/// baseline classifier and against one trained on label-reversed data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub baseline_flip_rate: f64,
    pub reversed_flip_rate: f64,
    /// `reversed - baseline`; a large negative delta means the
    /// counterfactuals followed the generator's knowledge, not the
    /// classifier.
    pub delta: f64,
    pub baseline_report: EvaluationReport,
    pub reversed_report: EvaluationReport,
}

/// Trains a baseline classifier and a label-reversed twin on `train`, runs
/// the configured experiment against both, and reports the flip-rate drop.
/// The config's own classifier source is ignored: both arms must share
/// training data and hyperparameters to isolate the label reversal.
pub fn probe_faithfulness(
    cfg: &ExperimentConfig,
    train: &[Document],
    train_config: &TrainConfig,
) -> Result<ProbeOutcome, PipelineError> {
    cfg.validate_with(true)?;
    let baseline_model = fit_logistic::<f64>(train, train_config)?;
    let mapping = cyclic_mapping(baseline_model.class_names());
    let reversed_train = reverse_labels(train, &mapping)?;
    let reversed_model = fit_logistic::<f64>(&reversed_train, train_config)?;

    let docs = read_jsonl(&cfg.dataset)?;
    if docs.is_empty() {
        return Err(PipelineError::EmptyDataset(
            cfg.dataset.display().to_string(),
        ));
    }
    let shots = resolve_shots(cfg)?;
    let scorer_docs = match &cfg.scorer_corpus {
        Some(path) => read_jsonl(path)?,
        None => docs.clone(),
    };
    let scorer = fit_ngram::<f64>(&scorer_docs, DEFAULT_NGRAM_ORDER, DEFAULT_ADD_K)?;

    let baseline = run_on_docs(
        cfg,
        &ActiveClassifier::Local(baseline_model),
        &docs,
        &shots,
        &scorer,
        None,
    )?;
    let reversed = run_on_docs(
        cfg,
        &ActiveClassifier::Local(reversed_model),
        &docs,
        &shots,
        &scorer,
        None,
    )?;
    Ok(ProbeOutcome {
        baseline_flip_rate: baseline.report.flip_rate,
        reversed_flip_rate: reversed.report.flip_rate,
        delta: reversed.report.flip_rate - baseline.report.flip_rate,
        baseline_report: baseline.report,
        reversed_report: reversed.report,
    })
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

const ANTONYM_PAIRS: &[(&str, &str)] = &[
    ("good", "bad"),
    ("great", "terrible"),
    ("wonderful", "awful"),
    ("enjoyable", "dreary"),
    ("brilliant", "dismal"),
    ("charming", "grating"),
    ("delightful", "dreadful"),
    ("engaging", "tedious"),
    ("fresh", "stale"),
    ("gripping", "boring"),
    ("heartfelt", "hollow"),
    ("inspired", "lifeless"),
    ("lively", "dull"),
    ("memorable", "forgettable"),
    ("moving", "flat"),
    ("polished", "sloppy"),
    ("sharp", "clumsy"),
    ("smart", "mindless"),
    ("strong", "weak"),
    ("stylish", "drab"),
    ("subtle", "clunky"),
    ("superb", "poor"),
    ("tender", "cold"),
    ("thrilling", "plodding"),
    ("tight", "bloated"),
    ("vivid", "murky"),
    ("warm", "bleak"),
    ("witty", "witless"),
    ("elegant", "awkward"),
    ("crisp", "muddled"),
];

/// Swappable but label-neutral descriptors. Each side appears equally often
/// under both labels, so a trained classifier puts near-zero weight on them
/// and attribution ranks them below every sentiment word: they are the
/// edits an unguided generator wastes and a guided one skips.
const NEUTRAL_PAIRS: &[(&str, &str)] = &[
    ("long", "short"),
    ("early", "late"),
    ("loud", "quiet"),
    ("indoor", "outdoor"),
    ("modern", "vintage"),
    ("local", "foreign"),
];

const NOUNS: &[&str] = &[
    "movie", "film", "plot", "scene", "cast", "story", "script", "acting", "pacing", "ending",
    "dialogue", "soundtrack", "tone", "style", "performance", "lead", "sequence", "premise",
    "editing", "finale",
];

const VERBS: &[&str] = &["was", "felt", "seemed", "looked", "stayed"];

const CLOSERS: &[&str] = &["overall", "ultimately", "somehow", "tonight", "certainly"];

const COMPOSITIONS: &[(usize, usize)] = &[(1, 0), (2, 1), (3, 0), (4, 1)];

pub const POSITIVE_LABEL: &str = "positive";
pub const NEGATIVE_LABEL: &str = "negative";

/// Parameters for [`make_synthetic_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub seed: u64,
    /// Training documents; must be at least 50.
    pub train_size: usize,
    pub test_size: usize,
    pub ood_size: usize,
    /// How many antonym pairs to draw on (capped at the built-in list).
    pub lexicon_pairs: usize,
    /// When set, this token co-occurs with the positive label in the train
    /// and test splits but is decorrelated in the OOD split.
    pub spurious_token: Option<String>,
}

impl CorpusSpec {
    pub fn new(seed: u64, train_size: usize) -> Self {
        Self {
            seed,
            train_size,
            test_size: (train_size / 5).max(20),
            ood_size: (train_size / 5).max(20),
            lexicon_pairs: ANTONYM_PAIRS.len(),
            spurious_token: None,
        }
    }

    pub fn with_spurious_token(mut self, token: impl Into<String>) -> Self {
        self.spurious_token = Some(token.into());
        self
    }
}

/// A generated train/test/OOD benchmark plus the antonym lexicon its
/// sentiment words were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub ood: Vec<Document>,
    pub lexicon: AntonymLexicon,
    pub class_names: Vec<String>,
}

impl SyntheticCorpus {
    /// Writes `train.jsonl`, `test.jsonl`, `ood.jsonl`, and
    /// `lexicon.jsonl` into the directory.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_jsonl(dir.join("train.jsonl"), &self.train)?;
        write_jsonl(dir.join("test.jsonl"), &self.test)?;
        write_jsonl(dir.join("ood.jsonl"), &self.ood)?;
        self.lexicon.save(dir.join("lexicon.jsonl"))?;
        Ok(())
    }
}

fn synth_document(
    rng: &mut ChaCha8Rng,
    id: String,
    positive: bool,
    pairs: &[(String, String)],
    spurious_prefix: Option<&str>,
) -> Document {
    let (majority, minority) = COMPOSITIONS[rng.gen_range(0..COMPOSITIONS.len())];
    let total = majority + minority;
    let pair_indices = rand::seq::index::sample(rng, pairs.len(), total).into_vec();
    let mut slot_words: Vec<String> = pair_indices
        .iter()
        .enumerate()
        .map(|(slot, &pi)| {
            // majority slots carry the document label's polarity
            let wants_positive = if slot < majority { positive } else { !positive };
            if wants_positive {
                pairs[pi].0.clone()
            } else {
                pairs[pi].1.clone()
            }
        })
        .collect();

    // Filler clauses around neutral descriptors, drawn independently of the
    // label and mixed in among the sentiment clauses.
    let neutral_count = rng.gen_range(1..=2usize);
    for ni in rand::seq::index::sample(rng, NEUTRAL_PAIRS.len(), neutral_count) {
        let (a, b) = NEUTRAL_PAIRS[ni];
        slot_words.push(if rng.gen_bool(0.5) { a } else { b }.to_string());
    }
    slot_words.shuffle(rng);

    let clause_count = slot_words.len();
    let noun_indices = rand::seq::index::sample(rng, NOUNS.len(), clause_count).into_vec();
    let mut tokens: Vec<String> = Vec::new();
    if let Some(token) = spurious_prefix {
        tokens.push(token.to_string());
    }
    for (i, word) in slot_words.iter().enumerate() {
        if i > 0 {
            tokens.push(if i + 1 == clause_count { "and" } else { "," }.to_string());
        }
        tokens.push("the".to_string());
        tokens.push(NOUNS[noun_indices[i]].to_string());
        tokens.push(VERBS[rng.gen_range(0..VERBS.len())].to_string());
        tokens.push(word.clone());
    }
    if rng.gen_bool(0.5) {
        tokens.push(CLOSERS[rng.gen_range(0..CLOSERS.len())].to_string());
    }
    let label = if positive { POSITIVE_LABEL } else { NEGATIVE_LABEL };
    Document::new(id, tokens.join(" ")).with_label(label)
}

/// Exact presence quota per label group: `rate` of the group, rounded,
/// shuffled so presence is independent of everything else.
fn presence_stack(rng: &mut ChaCha8Rng, group_size: usize, rate: f64) -> Vec<bool> {
    let quota = ((rate * group_size as f64).round() as usize).min(group_size);
    let mut stack = vec![false; group_size];
    for slot in stack.iter_mut().take(quota) {
        *slot = true;
    }
    stack.shuffle(rng);
    stack
}

fn synth_split(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    size: usize,
    pairs: &[(String, String)],
    spurious: Option<&str>,
    spurious_given_positive: f64,
    spurious_given_negative: f64,
) -> Vec<Document> {
    // balanced labels, order shuffled
    let mut positives: Vec<bool> = (0..size).map(|i| i < size / 2).collect();
    positives.shuffle(rng);
    let positive_count = size / 2;
    let mut positive_presence = presence_stack(rng, positive_count, spurious_given_positive);
    let mut negative_presence = presence_stack(rng, size - positive_count, spurious_given_negative);
    positives
        .into_iter()
        .enumerate()
        .map(|(i, positive)| {
            let present = if positive {
                positive_presence.pop().unwrap_or(false)
            } else {
                negative_presence.pop().unwrap_or(false)
            };
            let prefix_token = if present { spurious } else { None };
            synth_document(rng, format!("{prefix}-{i:04}"), positive, pairs, prefix_token)
        })
        .collect()
}

/// Generates a balanced sentiment benchmark. Each document is built from
/// clause templates around sentiment-bearing lexicon words; the label is
/// the majority polarity of those words (compositions are chosen so the
/// majority never ties, before or after a full antonym swap). One or two
/// filler clauses per document carry label-neutral descriptors that are
/// also swappable, so edit budgets can be wasted on them. The returned
/// lexicon maps every word to its antonym and records the polarity each
/// sentiment word expresses; neutral fillers carry no polarity.
///
/// With a spurious token configured, the token opens 97% of positive and
/// 3% of negative train/test documents (exact quotas per label, so the
/// correlation is deterministic), but is independent of the label (50/50)
/// in the OOD split.
pub fn make_synthetic_corpus(spec: &CorpusSpec) -> SyntheticCorpus {
    assert!(spec.train_size >= 50, "train_size must be at least 50");
    let pair_count = spec.lexicon_pairs.clamp(5, ANTONYM_PAIRS.len());
    let pairs: Vec<(String, String)> = ANTONYM_PAIRS[..pair_count]
        .iter()
        .map(|(p, n)| (p.to_string(), n.to_string()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spurious = spec.spurious_token.as_deref();
    let train = synth_split(&mut rng, "train", spec.train_size, &pairs, spurious, 0.97, 0.03);
    let test = synth_split(&mut rng, "test", spec.test_size, &pairs, spurious, 0.97, 0.03);
    let ood = synth_split(&mut rng, "ood", spec.ood_size, &pairs, spurious, 0.5, 0.5);

    let mut entries = Vec::with_capacity((pairs.len() + NEUTRAL_PAIRS.len()) * 2);
    for (pos, neg) in &pairs {
        entries.push(LexiconEntry {
            word: pos.clone(),
            antonym: neg.clone(),
            label: Some(POSITIVE_LABEL.to_string()),
        });
        entries.push(LexiconEntry {
            word: neg.clone(),
            antonym: pos.clone(),
            label: Some(NEGATIVE_LABEL.to_string()),
        });
    }
    for (a, b) in NEUTRAL_PAIRS {
        entries.push(LexiconEntry {
            word: a.to_string(),
            antonym: b.to_string(),
            label: None,
        });
        entries.push(LexiconEntry {
            word: b.to_string(),
            antonym: a.to_string(),
            label: None,
        });
    }
    SyntheticCorpus {
        train,
        test,
        ood,
        lexicon: AntonymLexicon::from_entries(entries),
        class_names: vec![NEGATIVE_LABEL.to_string(), POSITIVE_LABEL.to_string()],
    }
}

/// Phi coefficient between a token's presence and the positive label;
/// 0 when either margin is degenerate.
pub fn label_token_correlation(docs: &[Document], token: &str, positive_label: &str) -> f64 {
    let mut counts = [[0f64; 2]; 2];
    for doc in docs {
        let present = crate::text::tokenize(&doc.text)
            .tokens()
            .iter()
            .any(|t| t == token);
        let positive = doc.label.as_deref() == Some(positive_label);
        counts[present as usize][positive as usize] += 1.0;
    }
    let n00 = counts[0][0];
    let n01 = counts[0][1];
    let n10 = counts[1][0];
    let n11 = counts[1][1];
    let denominator =
        ((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)).sqrt();
    if denominator == 0.0 {
        return 0.0;
    }
    (n11 * n00 - n10 * n01) / denominator
}
