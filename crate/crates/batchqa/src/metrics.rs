//! Scoring: judgment accuracy, navigation macro-F1, navigation MAE, and the
//! combined per-(model, group size) report.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Judgment, Navigation};
use crate::error::{Error, Result};
use crate::parser::{Anomaly, ParseOutcome};

/// Navigation label as seen by the scorer. `Unanswered` covers missing keys,
/// invalid values and out-of-range indices; it can never match a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NavLabel {
    Index(u32),
    Na,
    Unanswered,
}

impl From<Navigation> for NavLabel {
    fn from(nav: Navigation) -> Self {
        match nav {
            Navigation::Index(i) => NavLabel::Index(i),
            Navigation::Na => NavLabel::Na,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NavigationPair {
    pub reference: NavLabel,
    pub predicted: NavLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyMode {
    /// Questions inside decode-failed responses leave the denominator; the
    /// failure is reported through the decode error rate column instead.
    ExcludeDecodeFailures,
    /// Questions inside decode-failed responses count as incorrect.
    CountAsWrong,
}

/// Accuracy over (reference, predicted-or-unanswered) pairs. An unanswered
/// question is incorrect.
pub fn judgment_accuracy(pairs: &[(Judgment, Option<Judgment>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("judgment_accuracy".into()));
    }
    let correct = pairs
        .iter()
        .filter(|(reference, predicted)| *predicted == Some(*reference))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Mean absolute index distance over pairs where both sides are numeric.
/// NA or unanswered on either side excludes the pair; the count of pairs that
/// qualified is returned alongside.
pub fn navigation_mae(pairs: &[NavigationPair]) -> (f64, usize) {
    let mut total = 0.0;
    let mut used = 0usize;
    for pair in pairs {
        if let (NavLabel::Index(y), NavLabel::Index(y_hat)) = (pair.reference, pair.predicted) {
            total += (y as f64 - y_hat as f64).abs();
            used += 1;
        }
    }
    if used == 0 {
        (0.0, 0)
    } else {
        (total / used as f64, used)
    }
}

/// Macro-averaged F1 over the label set observed in references and
/// predictions. Each utterance index is its own class and NA is one class;
/// `Unanswered` never enters the label set and never matches.
pub fn navigation_f1(pairs: &[NavigationPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("navigation_f1".into()));
    }
    let labels: BTreeSet<NavLabel> = pairs
        .iter()
        .flat_map(|p| [p.reference, p.predicted])
        .filter(|l| *l != NavLabel::Unanswered)
        .collect();
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut f1_sum = 0.0;
    for label in &labels {
        let tp = pairs
            .iter()
            .filter(|p| p.reference == *label && p.predicted == *label)
            .count() as f64;
        let fp = pairs
            .iter()
            .filter(|p| p.reference != *label && p.predicted == *label)
            .count() as f64;
        let fn_ = pairs
            .iter()
            .filter(|p| p.reference == *label && p.predicted != *label)
            .count() as f64;
        let denom = 2.0 * tp + fp + fn_;
        if denom > 0.0 {
            f1_sum += 2.0 * tp / denom;
        }
    }
    Ok(f1_sum / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub scored_questions: usize,
    pub decode_failures: usize,
    pub unanswered: usize,
    pub nav_pairs_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub group_size: usize,
    pub judgment_accuracy: f64,
    pub navigation_f1: f64,
    pub navigation_mae: f64,
    pub json_decode_error_rate: f64,
    pub counts: ReportCounts,
}

/// One evaluation unit: the parsed outcome for one (transcript, group) round,
/// with the group's reference answers in question order and the transcript's
/// utterance count for range checks.
#[derive(Debug, Clone)]
pub struct ScoringUnit {
    /// (judgment, navigation) per position, 1-based order.
    pub references: Vec<(Judgment, Navigation)>,
    pub outcome: ParseOutcome,
    pub utterance_count: u32,
}

pub fn aggregate_report(
    model_name: &str,
    group_size: usize,
    units: &[ScoringUnit],
    accuracy_mode: AccuracyMode,
) -> Result<EvalReport> {
    if units.is_empty() {
        return Err(Error::EmptyInput("aggregate_report".into()));
    }
    let mut judgment_pairs: Vec<(Judgment, Option<Judgment>)> = Vec::new();
    let mut nav_pairs: Vec<NavigationPair> = Vec::new();
    let mut decode_failures = 0usize;
    let mut unanswered = 0usize;

    for unit in units {
        if unit.references.is_empty() {
            return Err(Error::AlignmentError(
                "scoring unit without references".into(),
            ));
        }
        if unit.outcome.is_decode_error() {
            decode_failures += 1;
            if accuracy_mode == AccuracyMode::CountAsWrong {
                for (reference, _) in &unit.references {
                    judgment_pairs.push((*reference, None));
                    unanswered += 1;
                }
            }
            continue;
        }
        for (i, (ref_judgment, ref_nav)) in unit.references.iter().enumerate() {
            let position = i + 1;
            match unit.outcome.answers.get(&position) {
                Some(answer) => {
                    judgment_pairs.push((*ref_judgment, Some(answer.judgment)));
                    let predicted = match answer.navigation {
                        Some(Navigation::Index(idx)) if idx >= 1 && idx <= unit.utterance_count => {
                            NavLabel::Index(idx)
                        }
                        // out-of-range indices are invalid at scoring time
                        Some(Navigation::Index(_)) | None => NavLabel::Unanswered,
                        Some(Navigation::Na) => NavLabel::Na,
                    };
                    nav_pairs.push(NavigationPair {
                        reference: NavLabel::from(*ref_nav),
                        predicted,
                    });
                }
                None => {
                    judgment_pairs.push((*ref_judgment, None));
                    unanswered += 1;
                    nav_pairs.push(NavigationPair {
                        reference: NavLabel::from(*ref_nav),
                        predicted: NavLabel::Unanswered,
                    });
                }
            }
        }
    }

    let outcomes: Vec<ParseOutcome> = units.iter().map(|u| u.outcome.clone()).collect();
    let json_decode_error_rate = crate::parser::decode_error_rate(&outcomes)?;
    let judgment_accuracy = if judgment_pairs.is_empty() {
        0.0
    } else {
        judgment_accuracy(&judgment_pairs)?
    };
    let navigation_f1 = if nav_pairs.is_empty() {
        0.0
    } else {
        navigation_f1(&nav_pairs)?
    };
    let (navigation_mae, nav_pairs_used) = navigation_mae(&nav_pairs);

    Ok(EvalReport {
        model_name: model_name.to_string(),
        group_size,
        judgment_accuracy,
        navigation_f1,
        navigation_mae,
        json_decode_error_rate,
        counts: ReportCounts {
            scored_questions: judgment_pairs.len(),
            decode_failures,
            unanswered,
            nav_pairs_used,
        },
    })
}

/// Count anomalies added at scoring time for out-of-range navigation; exposed
/// for diagnostics.
pub fn out_of_range_navigation(outcome: &ParseOutcome, utterance_count: u32) -> Vec<Anomaly> {
    outcome
        .answers
        .values()
        .filter_map(|a| match a.navigation {
            Some(Navigation::Index(idx)) if idx > utterance_count => {
                Some(Anomaly::InvalidNavigation(a.position))
            }
            _ => None,
        })
        .collect()
}
