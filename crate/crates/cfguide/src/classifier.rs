//! The classifier side of the framework: a trainable multiclass logistic
//! regression over bag-of-words features, with analytic gradients for
//! saliency maps and exact SHAP values for linear models.
//!
//! The model is deliberately small and deterministic so that guidance
//! signals can be verified against independent oracles (finite differences,
//! coalition enumeration). External classifiers plug in through the
//! [`Classifier`] trait; see [`crate::remote`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Document;
use crate::text::tokenize;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training requires at least 2 distinct labels, found {0}")]
    FewerThanTwoClasses(usize),
    #[error("vocabulary is empty after tokenization")]
    EmptyVocabulary,
    #[error("document {0:?} has no label")]
    UnlabeledDocument(String),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("inconsistent model shape: {0}")]
    InvalidShape(String),
    #[error("io error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file {path} is invalid: {source}")]
    InvalidModelFile {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Errors from classifying a document, local or remote.
#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed classifier response: {0}")]
    Malformed(String),
    #[error("classifier response names unknown class {0:?}")]
    UnknownClass(String),
}

/// A label with its probability distribution over all classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub probs: BTreeMap<String, f64>,
}

/// Anything that can classify documents: the in-repo linear model or a
/// remote endpoint.
pub trait Classifier: Send + Sync {
    fn classify(&self, doc: &Document) -> Result<Prediction, ClassifyError>;
    fn class_names(&self) -> &[String];
}

/// How token occurrences map onto feature values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Feature is 1 when the word occurs at all. The default: importance is
    /// per word, not per occurrence count.
    #[default]
    Binary,
    /// Feature is the occurrence count.
    Count,
}

/// Hyperparameters for [`fit_logistic`].
///
/// Training is full-batch gradient descent from zero-initialized weights, so
/// runs are deterministic; `seed` is recorded for provenance and to key
/// derived experiment randomness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 42,
        }
    }
}

/// Multiclass logistic regression over a bag-of-words vocabulary.
///
/// Immutable after fitting. Class scores are linear, `w_c · x + b_c`, and
/// predictions are the softmax over scores with ties broken by class order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<S> {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    class_names: Vec<String>,
    weights: Vec<Vec<S>>,
    bias: Vec<S>,
    feature_mode: FeatureMode,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    vocabulary: Vec<String>,
    class_names: Vec<String>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    feature_mode: FeatureMode,
}

impl<S: Scalar> LinearModel<S> {
    /// Builds a model from explicit parts, validating shapes.
    pub fn from_parts(
        vocabulary: Vec<String>,
        class_names: Vec<String>,
        weights: Vec<Vec<S>>,
        bias: Vec<S>,
        feature_mode: FeatureMode,
    ) -> Result<Self, ClassifierError> {
        if class_names.len() < 2 {
            return Err(ClassifierError::FewerThanTwoClasses(class_names.len()));
        }
        if weights.len() != class_names.len() || bias.len() != class_names.len() {
            return Err(ClassifierError::InvalidShape(format!(
                "{} classes but {} weight rows / {} biases",
                class_names.len(),
                weights.len(),
                bias.len()
            )));
        }
        for row in &weights {
            if row.len() != vocabulary.len() {
                return Err(ClassifierError::InvalidShape(format!(
                    "weight row has {} entries for {} vocabulary words",
                    row.len(),
                    vocabulary.len()
                )));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(ClassifierError::InvalidShape("non-finite weight".into()));
            }
        }
        let mut index = HashMap::with_capacity(vocabulary.len());
        for (j, word) in vocabulary.iter().enumerate() {
            if index.insert(word.clone(), j).is_some() {
                return Err(ClassifierError::InvalidShape(format!(
                    "duplicate vocabulary word {word:?}"
                )));
            }
        }
        Ok(Self {
            vocabulary,
            index,
            class_names,
            weights,
            bias,
            feature_mode,
        })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_mode(&self) -> FeatureMode {
        self.feature_mode
    }

    pub fn weights(&self) -> &[Vec<S>] {
        &self.weights
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    fn word_index(&self, token: &str) -> Option<usize> {
        self.index.get(&token.to_lowercase()).copied()
    }

    /// Sparse feature vector for a document; text and text_pair both count.
    /// Out-of-vocabulary words contribute nothing.
    pub fn featurize(&self, doc: &Document) -> Vec<(usize, S)> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut add = |text: &str| {
            for token in tokenize(text).tokens() {
                if let Some(j) = self.word_index(token) {
                    *counts.entry(j).or_insert(0) += 1;
                }
            }
        };
        add(&doc.text);
        if let Some(pair) = &doc.text_pair {
            add(pair);
        }
        counts
            .into_iter()
            .map(|(j, c)| {
                let v = match self.feature_mode {
                    FeatureMode::Binary => S::one(),
                    FeatureMode::Count => S::from_usize(c).expect("count fits scalar"),
                };
                (j, v)
            })
            .collect()
    }

    /// Dense feature vector; mostly useful for oracle-style checks.
    pub fn featurize_dense(&self, doc: &Document) -> Vec<S> {
        let mut x = vec![S::zero(); self.vocabulary.len()];
        for (j, v) in self.featurize(doc) {
            x[j] = v;
        }
        x
    }

    /// Pre-softmax score of one class at a feature vector.
    pub fn class_score(&self, class_idx: usize, features: &[(usize, S)]) -> S {
        let row = &self.weights[class_idx];
        let mut score = self.bias[class_idx];
        for &(j, v) in features {
            score = score + row[j] * v;
        }
        score
    }

    /// Gradient of [`Self::class_score`] with respect to the feature vector.
    ///
    /// The score is linear in the features, so the derivative of each
    /// coordinate is the corresponding class weight; finite differences of
    /// `class_score` must reproduce this exactly.
    pub fn score_gradient(&self, class_idx: usize, _features: &[(usize, S)]) -> Vec<S> {
        self.weights[class_idx].clone()
    }

    fn logits(&self, features: &[(usize, S)]) -> Vec<S> {
        (0..self.class_names.len())
            .map(|c| self.class_score(c, features))
            .collect()
    }

    /// Predicted label and softmax distribution aligned with `class_names`.
    /// Ties break toward the earlier class.
    pub fn predict(&self, doc: &Document) -> (String, Vec<S>) {
        let probs = softmax(&self.logits(&self.featurize(doc)));
        let mut best = 0;
        for (c, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = c;
            }
        }
        (self.class_names[best].clone(), probs)
    }

    /// Serializes the model as JSON (weights stored as f64).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let path = path.as_ref();
        let file = ModelFile {
            vocabulary: self.vocabulary.clone(),
            class_names: self.class_names.clone(),
            weights: self
                .weights
                .iter()
                .map(|row| row.iter().map(|w| w.to_f64().unwrap()).collect())
                .collect(),
            bias: self.bias.iter().map(|b| b.to_f64().unwrap()).collect(),
            feature_mode: self.feature_mode,
        };
        let json = serde_json::to_string_pretty(&file).expect("model serializes");
        std::fs::write(path, json).map_err(|source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ModelFile =
            serde_json::from_str(&raw).map_err(|source| ClassifierError::InvalidModelFile {
                path: path.display().to_string(),
                source,
            })?;
        let from = |v: f64| S::from_f64(v).expect("weight fits scalar");
        Self::from_parts(
            file.vocabulary,
            file.class_names,
            file.weights
                .into_iter()
                .map(|row| row.into_iter().map(from).collect())
                .collect(),
            file.bias.into_iter().map(from).collect(),
            file.feature_mode,
        )
    }
}

impl<S: Scalar> Classifier for LinearModel<S> {
    fn classify(&self, doc: &Document) -> Result<Prediction, ClassifyError> {
        let (label, probs) = self.predict(doc);
        let probs = self
            .class_names
            .iter()
            .zip(&probs)
            .map(|(c, p)| (c.clone(), p.to_f64().unwrap()))
            .collect();
        Ok(Prediction { label, probs })
    }

    fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Trains a multiclass logistic regression with full-batch gradient descent
/// on the mean cross-entropy plus an L2 penalty on the weights.
///
/// Weights start at zero, so a zero-epoch fit predicts the uniform
/// distribution and training is deterministic for a given config.
pub fn fit_logistic<S: Scalar>(
    train: &[Document],
    config: &TrainConfig,
) -> Result<LinearModel<S>, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let mut labels = BTreeSet::new();
    for doc in train {
        match &doc.label {
            Some(l) => {
                labels.insert(l.clone());
            }
            None => return Err(ClassifierError::UnlabeledDocument(doc.id.clone())),
        }
    }
    if labels.len() < 2 {
        return Err(ClassifierError::FewerThanTwoClasses(labels.len()));
    }
    let class_names: Vec<String> = labels.into_iter().collect();

    // Vocabulary in first-occurrence order over the training stream.
    let mut vocabulary = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for doc in train {
        for text in std::iter::once(&doc.text).chain(doc.text_pair.iter()) {
            for token in tokenize(text).tokens() {
                let word = token.to_lowercase();
                if !index.contains_key(&word) {
                    index.insert(word.clone(), vocabulary.len());
                    vocabulary.push(word);
                }
            }
        }
    }
    if vocabulary.is_empty() {
        return Err(ClassifierError::EmptyVocabulary);
    }

    let n_classes = class_names.len();
    let n_features = vocabulary.len();
    let mut model = LinearModel {
        vocabulary,
        index,
        class_names: class_names.clone(),
        weights: vec![vec![S::zero(); n_features]; n_classes],
        bias: vec![S::zero(); n_classes],
        feature_mode: FeatureMode::Binary,
    };

    let features: Vec<Vec<(usize, S)>> = train.iter().map(|d| model.featurize(d)).collect();
    let targets: Vec<usize> = train
        .iter()
        .map(|d| {
            class_names
                .iter()
                .position(|c| Some(c) == d.label.as_ref())
                .expect("label seen above")
        })
        .collect();

    let n = S::from_usize(train.len()).unwrap();
    let lr = S::from_f64(config.learning_rate).unwrap();
    let l2 = S::from_f64(config.l2).unwrap();

    let mut grad_w = vec![vec![S::zero(); n_features]; n_classes];
    let mut grad_b = vec![S::zero(); n_classes];
    for _ in 0..config.epochs {
        for row in &mut grad_w {
            row.fill(S::zero());
        }
        grad_b.fill(S::zero());

        for (x, &y) in features.iter().zip(&targets) {
            let probs = softmax(&model.logits(x));
            for c in 0..n_classes {
                let coef = probs[c] - if c == y { S::one() } else { S::zero() };
                for &(j, v) in x {
                    grad_w[c][j] = grad_w[c][j] + coef * v;
                }
                grad_b[c] = grad_b[c] + coef;
            }
        }

        for c in 0..n_classes {
            for j in 0..n_features {
                let g = grad_w[c][j] / n + l2 * model.weights[c][j];
                model.weights[c][j] = model.weights[c][j] - lr * g;
            }
            model.bias[c] = model.bias[c] - lr * grad_b[c] / n;
        }
    }
    Ok(model)
}

/// Mean cross-entropy of the model on labeled documents.
pub fn mean_cross_entropy<S: Scalar>(
    model: &LinearModel<S>,
    docs: &[Document],
) -> Result<S, ClassifierError> {
    if docs.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let mut total = S::zero();
    for doc in docs {
        let label = doc
            .label
            .as_ref()
            .ok_or_else(|| ClassifierError::UnlabeledDocument(doc.id.clone()))?;
        let y = model
            .class_index(label)
            .ok_or_else(|| ClassifierError::InvalidShape(format!("unknown label {label:?}")))?;
        let probs = softmax(&model.logits(&model.featurize(doc)));
        total = total - probs[y].ln();
    }
    Ok(total / S::from_usize(docs.len()).unwrap())
}

/// Fraction of labeled documents whose predicted label matches.
pub fn accuracy<S: Scalar>(
    model: &LinearModel<S>,
    docs: &[Document],
) -> Result<f64, ClassifierError> {
    if docs.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let mut correct = 0usize;
    for doc in docs {
        let label = doc
            .label
            .as_ref()
            .ok_or_else(|| ClassifierError::UnlabeledDocument(doc.id.clone()))?;
        if &model.predict(doc).0 == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / docs.len() as f64)
}

/// Per-word importance scores for one document's prediction.
///
/// Entries enumerate occurrences in the editable text (`doc.text`) only,
/// since their purpose is to guide edits there; `text_pair` words still
/// influence the prediction itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution<S> {
    pub predicted_class: String,
    pub entries: Vec<AttributionEntry<S>>,
    /// Set when the document had no in-vocabulary word to score.
    pub no_coverage: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEntry<S> {
    pub word: String,
    /// Token position within the document text.
    pub position: usize,
    pub score: S,
}

fn occurrence_entries<S: Scalar>(
    model: &LinearModel<S>,
    doc: &Document,
    dense_scores: &[S],
) -> Vec<AttributionEntry<S>> {
    tokenize(&doc.text)
        .tokens()
        .iter()
        .enumerate()
        .filter_map(|(position, token)| {
            model.word_index(token).map(|j| AttributionEntry {
                word: token.clone(),
                position,
                score: dense_scores[j],
            })
        })
        .collect()
}

/// Saliency scores: absolute gradient of the predicted-class score with
/// respect to each occurring feature.
pub fn gradient_saliency<S: Scalar>(model: &LinearModel<S>, doc: &Document) -> Attribution<S> {
    let features = model.featurize(doc);
    let (predicted_class, _) = model.predict(doc);
    let class_idx = model.class_index(&predicted_class).unwrap();
    let grad = model.score_gradient(class_idx, &features);
    let magnitudes: Vec<S> = grad.into_iter().map(|g| g.abs()).collect();
    let entries = occurrence_entries(model, doc, &magnitudes);
    if entries.is_empty() {
        log::warn!("document {:?} has no in-vocabulary words to attribute", doc.id);
    }
    Attribution {
        predicted_class,
        no_coverage: entries.is_empty(),
        entries,
    }
}

/// Exact Shapley values of the predicted-class score for a linear model
/// under feature independence: `phi_j = w_j * (x_j - mu_j)` with `mu` the
/// background feature mean.
///
/// Returns the predicted class index and the dense `phi` vector.
pub fn linear_shap_values<S: Scalar>(
    model: &LinearModel<S>,
    doc: &Document,
    background: &[Document],
) -> Result<(usize, Vec<S>), ClassifierError> {
    if background.is_empty() {
        return Err(ClassifierError::EmptyBackground);
    }
    let mut mu = vec![S::zero(); model.vocabulary.len()];
    for bg in background {
        for (j, v) in model.featurize(bg) {
            mu[j] = mu[j] + v;
        }
    }
    let count = S::from_usize(background.len()).unwrap();
    for m in &mut mu {
        *m = *m / count;
    }

    let x = model.featurize_dense(doc);
    let (predicted_class, _) = model.predict(doc);
    let class_idx = model.class_index(&predicted_class).unwrap();
    let row = &model.weights[class_idx];
    let phi: Vec<S> = (0..x.len()).map(|j| row[j] * (x[j] - mu[j])).collect();
    Ok((class_idx, phi))
}

/// SHAP-based attribution: per-occurrence absolute `phi` of the predicted
/// class. `background` supplies the feature means.
pub fn linear_shap<S: Scalar>(
    model: &LinearModel<S>,
    doc: &Document,
    background: &[Document],
) -> Result<Attribution<S>, ClassifierError> {
    let (class_idx, phi) = linear_shap_values(model, doc, background)?;
    let magnitudes: Vec<S> = phi.into_iter().map(|p| p.abs()).collect();
    let entries = occurrence_entries(model, doc, &magnitudes);
    Ok(Attribution {
        predicted_class: model.class_names[class_idx].clone(),
        no_coverage: entries.is_empty(),
        entries,
    })
}
