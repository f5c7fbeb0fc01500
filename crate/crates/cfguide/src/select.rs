//! Candidate selection: picks the final counterfactual out of a sampled
//! candidate set — the label-flipping candidate with minimal edit distance,
//! falling back to the overall minimal-distance candidate when nothing
//! flips.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Document;
use crate::generate::CandidateSet;
use crate::prompt::PromptMode;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("candidate set for {0:?} is empty")]
    EmptyCandidateSet(String),
}

/// The four experiment arms: guidance can be applied before generation
/// (attribution words in the prompt), after it (validated selection among
/// n candidates), both, or not at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    Cgg,
    Cgv,
    Cggv,
}

impl Method {
    pub fn prompt_mode(self) -> PromptMode {
        match self {
            Method::Cgg | Method::Cggv => PromptMode::Cgg,
            Method::Vanilla | Method::Cgv => PromptMode::Vanilla,
        }
    }

    /// Whether prompts carry attribution-selected important words.
    pub fn uses_guidance(self) -> bool {
        matches!(self, Method::Cgg | Method::Cggv)
    }

    /// Whether n > 1 candidates are drawn and validated.
    pub fn uses_validation(self) -> bool {
        matches!(self, Method::Cgv | Method::Cggv)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Cgg => "cgg",
            Method::Cgv => "cgv",
            Method::Cggv => "cggv",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(Method::Vanilla),
            "cgg" => Ok(Method::Cgg),
            "cgv" => Ok(Method::Cgv),
            "cggv" => Ok(Method::Cggv),
            other => Err(format!(
                "unknown method {other:?}, expected vanilla|cgg|cgv|cggv"
            )),
        }
    }
}

/// The selected counterfactual for one document, carrying everything the
/// metrics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub original: Document,
    pub original_label: String,
    pub target_label: String,
    pub counterfactual_text: String,
    /// True iff the counterfactual's predicted label equals the target.
    pub flipped: bool,
    /// Token-level Levenshtein distance from the original text.
    pub distance: usize,
    pub method: Method,
    /// The guidance words, when the method used any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub important_words: Option<Vec<String>>,
    /// How many candidates survived generation and entered selection.
    pub candidate_count_used: usize,
}

/// Selects the counterfactual from a candidate set.
///
/// If any candidate flips (predicted label equals the target), the flipped
/// candidate with minimal distance wins; otherwise the overall
/// minimal-distance candidate is returned unflipped. Distance ties break
/// toward the lowest candidate index. Single-candidate methods are the
/// degenerate n = 1 case of the same rule.
pub fn select_counterfactual(
    cands: &CandidateSet,
    method: Method,
    important_words: Option<Vec<String>>,
) -> Result<CounterfactualRecord, SelectionError> {
    let pick = |flipped_only: bool| -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in cands.candidates.iter().enumerate() {
            if flipped_only && c.predicted_label != cands.target_label {
                continue;
            }
            if best.map_or(true, |b| c.distance < cands.candidates[b].distance) {
                best = Some(i);
            }
        }
        best
    };
    let (index, flipped) = match pick(true) {
        Some(i) => (i, true),
        None => (
            pick(false).ok_or_else(|| SelectionError::EmptyCandidateSet(cands.original.id.clone()))?,
            false,
        ),
    };
    let chosen = &cands.candidates[index];
    Ok(CounterfactualRecord {
        original: cands.original.clone(),
        original_label: cands.original_label.clone(),
        target_label: cands.target_label.clone(),
        counterfactual_text: chosen.text.clone(),
        flipped,
        distance: chosen.distance,
        method,
        important_words,
        candidate_count_used: cands.candidates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::Candidate;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn candidate(label: &str, distance: usize, text: &str) -> Candidate {
        let mut probs = BTreeMap::new();
        probs.insert(label.to_string(), 1.0);
        Candidate {
            text: text.to_string(),
            tagged: true,
            predicted_label: label.to_string(),
            probs,
            distance,
        }
    }

    fn set(target: &str, candidates: Vec<Candidate>) -> CandidateSet {
        CandidateSet {
            original: Document::new("d", "original text"),
            original_label: "pos".into(),
            target_label: target.into(),
            candidates,
            failures: Vec::new(),
        }
    }

    #[test]
    fn single_flipped_candidate_wins() {
        let s = set("neg", vec![candidate("neg", 4, "a")]);
        let rec = select_counterfactual(&s, Method::Vanilla, None).unwrap();
        assert!(rec.flipped);
        assert_eq!(rec.distance, 4);
        assert_eq!(rec.counterfactual_text, "a");
        assert_eq!(rec.candidate_count_used, 1);
    }

    #[test]
    fn flip_constraint_dominates_distance() {
        let s = set(
            "neg",
            vec![
                candidate("neg", 5, "far flip"),
                candidate("neg", 3, "near flip"),
                candidate("pos", 1, "nearest non-flip"),
            ],
        );
        let rec = select_counterfactual(&s, Method::Cgv, None).unwrap();
        assert!(rec.flipped);
        assert_eq!(rec.distance, 3);
        assert_eq!(rec.counterfactual_text, "near flip");
    }

    #[test]
    fn fallback_returns_minimal_distance_unflipped() {
        let s = set(
            "neg",
            vec![
                candidate("pos", 7, "a"),
                candidate("pos", 2, "b"),
                candidate("pos", 9, "c"),
            ],
        );
        let rec = select_counterfactual(&s, Method::Cgv, None).unwrap();
        assert!(!rec.flipped);
        assert_eq!(rec.distance, 2);
        assert_eq!(rec.counterfactual_text, "b");
    }

    #[test]
    fn distance_ties_break_toward_lowest_index() {
        let s = set(
            "neg",
            vec![
                candidate("neg", 3, "first"),
                candidate("neg", 3, "second"),
            ],
        );
        let rec = select_counterfactual(&s, Method::Cgv, None).unwrap();
        assert_eq!(rec.counterfactual_text, "first");
    }

    #[test]
    fn empty_set_is_an_error() {
        let s = set("neg", vec![]);
        assert!(matches!(
            select_counterfactual(&s, Method::Cgv, None),
            Err(SelectionError::EmptyCandidateSet(_))
        ));
    }

    proptest! {
        /// Brute-force contract: never return a non-flipped candidate when a
        /// flipped one exists, and the distance is minimal within the
        /// returned flip class with the lowest index among ties.
        #[test]
        fn selection_matches_brute_force(
            entries in proptest::collection::vec((prop::bool::ANY, 0usize..30), 1..12)
        ) {
            let candidates: Vec<Candidate> = entries
                .iter()
                .enumerate()
                .map(|(i, (flips, dist))| {
                    candidate(if *flips { "neg" } else { "pos" }, *dist, &format!("c{i}"))
                })
                .collect();
            let s = set("neg", candidates);
            let rec = select_counterfactual(&s, Method::Cgv, None).unwrap();

            let any_flip = s.candidates.iter().any(|c| c.predicted_label == "neg");
            prop_assert_eq!(rec.flipped, any_flip);

            let pool: Vec<(usize, &Candidate)> = s
                .candidates
                .iter()
                .enumerate()
                .filter(|(_, c)| !any_flip || c.predicted_label == "neg")
                .collect();
            let best = pool
                .iter()
                .min_by_key(|(i, c)| (c.distance, *i))
                .unwrap();
            prop_assert_eq!(rec.distance, best.1.distance);
            prop_assert_eq!(&rec.counterfactual_text, &best.1.text);
        }
    }
}
