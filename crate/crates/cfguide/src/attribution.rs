//! Turns per-occurrence attribution scores into the ordered important-word
//! list that guides generation.

use thiserror::Error;

use crate::classifier::Attribution;
use crate::Scalar;

/// Default share of distinct words to keep.
pub const DEFAULT_FRACTION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
}

/// A distinct word with its best score and the position of that occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedWord<S> {
    pub word: String,
    pub score: S,
    pub position: usize,
}

/// Ordered important words plus a flag for documents that had nothing to
/// score.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSelection {
    /// Most important first.
    pub words: Vec<String>,
    /// True when the attribution carried no entries.
    pub empty_attribution: bool,
}

/// All distinct words of an attribution, case-insensitively deduplicated.
///
/// Each word keeps its maximal score (with the surface form and earliest
/// position of that maximal occurrence) and the list is sorted by
/// descending score, ties broken by earlier position.
pub fn ranked_distinct_words<S: Scalar>(attr: &Attribution<S>) -> Vec<RankedWord<S>> {
    let mut ranked: Vec<RankedWord<S>> = Vec::new();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for entry in &attr.entries {
        let key = entry.word.to_lowercase();
        match seen.get(&key) {
            Some(&i) => {
                if entry.score > ranked[i].score {
                    ranked[i] = RankedWord {
                        word: entry.word.clone(),
                        score: entry.score,
                        position: entry.position,
                    };
                }
            }
            None => {
                seen.insert(key, ranked.len());
                ranked.push(RankedWord {
                    word: entry.word.clone(),
                    score: entry.score,
                    position: entry.position,
                });
            }
        }
    }
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.position.cmp(&b.position))
    });
    ranked
}

/// Selects the top `ceil(fraction * distinct words)` important words,
/// descending by score (the first word matters most).
pub fn select_important_words<S: Scalar>(
    attr: &Attribution<S>,
    fraction: f64,
) -> Result<WordSelection, SelectError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SelectError::InvalidFraction(fraction));
    }
    let ranked = ranked_distinct_words(attr);
    if ranked.is_empty() {
        log::warn!("empty attribution: no important words to select");
        return Ok(WordSelection {
            words: Vec::new(),
            empty_attribution: true,
        });
    }
    let k = (fraction * ranked.len() as f64).ceil() as usize;
    Ok(WordSelection {
        words: ranked.into_iter().take(k).map(|r| r.word).collect(),
        empty_attribution: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::AttributionEntry;
    use proptest::prelude::*;

    fn attr(entries: &[(&str, usize, f64)]) -> Attribution<f64> {
        Attribution {
            predicted_class: "pos".into(),
            entries: entries
                .iter()
                .map(|(word, position, score)| AttributionEntry {
                    word: word.to_string(),
                    position: *position,
                    score: *score,
                })
                .collect(),
            no_coverage: entries.is_empty(),
        }
    }

    #[test]
    fn quarter_fraction_of_four_words_keeps_the_top_one() {
        let a = attr(&[("a", 0, 0.1), ("b", 1, 0.9), ("c", 2, 0.3), ("d", 3, 0.2)]);
        let sel = select_important_words(&a, 0.25).unwrap();
        assert_eq!(sel.words, vec!["b"]);
        assert!(!sel.empty_attribution);
    }

    #[test]
    fn full_fraction_returns_all_words_sorted() {
        let a = attr(&[("a", 0, 0.1), ("b", 1, 0.9), ("c", 2, 0.3)]);
        let sel = select_important_words(&a, 1.0).unwrap();
        assert_eq!(sel.words, vec!["b", "c", "a"]);
    }

    #[test]
    fn score_ties_break_by_earlier_position() {
        let a = attr(&[("b", 0, 3.0), ("c", 1, 1.0), ("a", 2, 3.0)]);
        let sel = select_important_words(&a, 0.5).unwrap();
        assert_eq!(sel.words, vec!["b", "a"]);
    }

    #[test]
    fn dedup_is_case_insensitive_keeping_max_score() {
        let a = attr(&[("Good", 0, 0.4), ("good", 3, 0.9), ("bad", 1, 0.5)]);
        let ranked = ranked_distinct_words(&a);
        assert_eq!(ranked.len(), 2);
        assert_eq!(ranked[0].word, "good");
        assert_eq!(ranked[0].score, 0.9);
        assert_eq!(ranked[0].position, 3);
    }

    #[test]
    fn empty_attribution_yields_flagged_empty_selection() {
        let sel = select_important_words(&attr(&[]), 0.25).unwrap();
        assert!(sel.words.is_empty());
        assert!(sel.empty_attribution);
    }

    #[test]
    fn rejects_out_of_range_fractions() {
        let a = attr(&[("a", 0, 1.0)]);
        for bad in [0.0, -0.3, 1.5, f64::NAN] {
            assert!(matches!(
                select_important_words(&a, bad),
                Err(SelectError::InvalidFraction(_))
            ));
        }
    }

    proptest! {
        #[test]
        fn selection_size_and_order_invariants(
            words in proptest::collection::vec((0u8..6, 0.0f64..10.0), 1..30),
            fraction in 0.01f64..=1.0,
        ) {
            let entries: Vec<(String, usize, f64)> = words
                .iter()
                .enumerate()
                .map(|(pos, (w, s))| (format!("w{w}"), pos, *s))
                .collect();
            let a = Attribution {
                predicted_class: "pos".into(),
                entries: entries
                    .iter()
                    .map(|(w, p, s)| AttributionEntry { word: w.clone(), position: *p, score: *s })
                    .collect(),
                no_coverage: false,
            };
            let ranked = ranked_distinct_words(&a);
            let sel = select_important_words(&a, fraction).unwrap();

            let expected_k = (fraction * ranked.len() as f64).ceil() as usize;
            prop_assert_eq!(sel.words.len(), expected_k);

            // every selected word occurs in the source entries
            for w in &sel.words {
                prop_assert!(entries.iter().any(|(ew, _, _)| ew == w));
            }
            // scores along the ranking are non-increasing
            for pair in ranked.windows(2) {
                prop_assert!(pair[0].score >= pair[1].score);
            }
        }
    }
}
