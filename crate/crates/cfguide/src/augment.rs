//! Counterfactual data augmentation and the label-reversal helper used by
//! the faithfulness probe.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{accuracy, fit_logistic, ClassifierError, TrainConfig};
use crate::dataset::Document;
use crate::select::CounterfactualRecord;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("mapping is not a permutation of the label set: {0}")]
    NotAPermutation(String),
    #[error("binary label mapping must have no fixed points, but {0:?} maps to itself")]
    FixedPoint(String),
    #[error("document {id:?} has label {label:?} outside the mapping")]
    UnmappedLabel { id: String, label: String },
    #[error("document {0:?} has no label")]
    UnlabeledDocument(String),
    #[error("evaluation set {0:?} is empty")]
    EmptyEvalSet(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// The permutation sending each class to its successor in the given order
/// (for two classes: the swap).
pub fn cyclic_mapping(class_names: &[String]) -> BTreeMap<String, String> {
    class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), class_names[(i + 1) % class_names.len()].clone()))
        .collect()
}

/// Returns a copy of the dataset with labels permuted by `mapping`; texts
/// are untouched. The mapping must be a permutation of the label set
/// (fixed-point-free when binary) and must cover every document label.
pub fn reverse_labels(
    data: &[Document],
    mapping: &BTreeMap<String, String>,
) -> Result<Vec<Document>, AugmentError> {
    let keys: BTreeSet<&String> = mapping.keys().collect();
    let values: BTreeSet<&String> = mapping.values().collect();
    if keys != values {
        return Err(AugmentError::NotAPermutation(format!(
            "keys {keys:?} != values {values:?}"
        )));
    }
    if mapping.len() == 2 {
        if let Some((k, _)) = mapping.iter().find(|(k, v)| k == v) {
            return Err(AugmentError::FixedPoint(k.clone()));
        }
    }
    data.iter()
        .map(|doc| {
            let label = doc
                .label
                .as_ref()
                .ok_or_else(|| AugmentError::UnlabeledDocument(doc.id.clone()))?;
            let mapped = mapping.get(label).ok_or_else(|| AugmentError::UnmappedLabel {
                id: doc.id.clone(),
                label: label.clone(),
            })?;
            let mut copy = doc.clone();
            copy.label = Some(mapped.clone());
            Ok(copy)
        })
        .collect()
}

/// Per-set accuracies before and after augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub baseline: BTreeMap<String, f64>,
    pub augmented: BTreeMap<String, f64>,
}

/// Result of an augmentation run: the accuracy table plus how many flipped
/// counterfactuals were actually added.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub table: AccuracyTable,
    pub flipped_added: usize,
}

/// Turns a flipped counterfactual into a training document labeled with its
/// target label.
fn counterfactual_document(record: &CounterfactualRecord) -> Document {
    let mut doc = Document::new(
        format!("{}#cf", record.original.id),
        record.counterfactual_text.clone(),
    )
    .with_label(record.target_label.clone());
    doc.text_pair = record.original.text_pair.clone();
    doc
}

/// Retrains on the training set plus all flipped counterfactuals (labeled
/// with their target label; non-flipped records have no trustworthy label
/// and are skipped) and reports per-set accuracy next to a seed-matched
/// baseline. The input training list is never mutated.
///
/// With zero flipped counterfactuals, the augmented model retrains on the
/// identical set, so both columns match exactly; a warning is logged.
pub fn augment_and_retrain<S: Scalar>(
    train: &[Document],
    cfs: &[CounterfactualRecord],
    eval_sets: &[(String, Vec<Document>)],
    config: &TrainConfig,
) -> Result<AugmentOutcome, AugmentError> {
    for (name, docs) in eval_sets {
        if docs.is_empty() {
            return Err(AugmentError::EmptyEvalSet(name.clone()));
        }
    }
    let additions: Vec<Document> = cfs
        .iter()
        .filter(|r| r.flipped)
        .map(counterfactual_document)
        .collect();
    if additions.is_empty() {
        log::warn!("no flipped counterfactuals to add; augmented run equals baseline");
    }

    let baseline_model = fit_logistic::<S>(train, config)?;
    let mut augmented_train = train.to_vec();
    augmented_train.extend(additions.iter().cloned());
    let augmented_model = fit_logistic::<S>(&augmented_train, config)?;

    let mut table = AccuracyTable {
        baseline: BTreeMap::new(),
        augmented: BTreeMap::new(),
    };
    for (name, docs) in eval_sets {
        table
            .baseline
            .insert(name.clone(), accuracy(&baseline_model, docs)?);
        table
            .augmented
            .insert(name.clone(), accuracy(&augmented_model, docs)?);
    }
    Ok(AugmentOutcome {
        table,
        flipped_added: additions.len(),
    })
}
