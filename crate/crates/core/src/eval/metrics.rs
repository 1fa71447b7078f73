//! Metric aggregation over evaluation transcripts: per-category accuracy
//! stratified by data split, dual per-question / per-option accounting for
//! reframed runs, and per-class F1 for the stability categories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qa::{Category, QAItem};
use crate::scene::to_canonical_json;

use super::{EvalRecord, Mode, UNPARSEABLE};

/// Binary confusion counts for one positive class. Shared with the triage
/// scorer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn observe(&mut self, predicted_positive: bool, actual_positive: bool) {
        match (predicted_positive, actual_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<ConfusionMatrix> for ClassScores {
    fn from(m: ConfusionMatrix) -> Self {
        ClassScores { precision: m.precision(), recall: m.recall(), f1: m.f1() }
    }
}

/// Per-class and macro F1 for a binary stability category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityF1 {
    pub true_class: ClassScores,
    pub false_class: ClassScores,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    /// Parent questions scored (after exclusions).
    pub questions: usize,
    /// Fraction of questions answered entirely correctly.
    pub per_question_accuracy: f64,
    /// Fraction of binary sub-questions answered correctly; absent for
    /// unreframed runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_option_accuracy: Option<f64>,
    /// Transactions whose response yielded no option.
    pub unparseable: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<StabilityF1>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset_hash: String,
    pub endpoint: String,
    pub mode: Mode,
    pub reframed: bool,
    /// metrics group ("sim" / "real") -> category name -> metrics.
    pub splits: BTreeMap<String, BTreeMap<String, CategoryMetrics>>,
}

impl MetricsReport {
    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        to_canonical_json(self)
    }
}

struct ItemOutcome {
    question_correct: bool,
    sub_correct: Option<(usize, usize)>,
    unparseable: usize,
    /// Reconstructed predicted label, when well-defined.
    predicted: Option<String>,
    truth: String,
}

/// Score one parent item against its (deduplicated) records.
/// Returns None (after a warning) when sub-records are missing.
fn score_item(
    item: &QAItem,
    records: &BTreeMap<Option<usize>, &EvalRecord>,
    reframed: bool,
) -> Option<ItemOutcome> {
    let truth = item.answer[0].clone();
    if !reframed {
        let record = match records.get(&None) {
            Some(r) => *r,
            None => {
                eprintln!("warning: no record for {}; excluded from metrics", item.qa_id);
                return None;
            }
        };
        let unparseable = usize::from(record.extracted == UNPARSEABLE);
        return Some(ItemOutcome {
            question_correct: record.correct,
            sub_correct: None,
            unparseable,
            predicted: (record.extracted != UNPARSEABLE).then(|| record.extracted.clone()),
            truth,
        });
    }

    let k = item.options.len();
    let mut sub_records = Vec::with_capacity(k);
    for i in 0..k {
        match records.get(&Some(i)) {
            Some(r) => sub_records.push(*r),
            None => {
                eprintln!(
                    "warning: missing sub-question {i} for {}; excluded from metrics",
                    item.qa_id
                );
                return None;
            }
        }
    }
    let correct = sub_records.iter().filter(|r| r.correct).count();
    let unparseable = sub_records.iter().filter(|r| r.extracted == UNPARSEABLE).count();
    // The model's label is well-defined only when it affirmed exactly one
    // option: the option whose sub-question it answered "True".
    let affirmed: Vec<&String> = item
        .options
        .iter()
        .zip(&sub_records)
        .filter(|(_, r)| r.extracted == "True")
        .map(|(o, _)| o)
        .collect();
    let predicted = if affirmed.len() == 1 { Some(affirmed[0].clone()) } else { None };
    Some(ItemOutcome {
        question_correct: correct == k,
        sub_correct: Some((correct, k)),
        unparseable,
        predicted,
        truth,
    })
}

/// Aggregate a transcript into the stratified report. Duplicate records for
/// the same (qa, sub-question) keep the latest timestamp; items with
/// missing records are excluded with a warning.
pub fn compute_metrics(
    records: &[EvalRecord],
    dataset: &[QAItem],
    reframed: bool,
    dataset_hash: &str,
    endpoint: &str,
    mode: Mode,
) -> Result<MetricsReport> {
    let mut by_item: BTreeMap<&str, BTreeMap<Option<usize>, &EvalRecord>> = BTreeMap::new();
    for record in records {
        let slot = by_item
            .entry(record.qa_id.as_str())
            .or_default()
            .entry(record.sub_question);
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(record);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                eprintln!(
                    "warning: duplicate record for {} sub {:?}; keeping latest",
                    record.qa_id, record.sub_question
                );
                if record.timestamp_ms >= o.get().timestamp_ms {
                    o.insert(record);
                }
            }
        }
    }

    struct Bucket {
        questions: usize,
        questions_correct: usize,
        subs: usize,
        subs_correct: usize,
        unparseable: usize,
        confusion_true: ConfusionMatrix,
        confusion_false: ConfusionMatrix,
        any_subs: bool,
    }
    impl Default for Bucket {
        fn default() -> Self {
            Bucket {
                questions: 0,
                questions_correct: 0,
                subs: 0,
                subs_correct: 0,
                unparseable: 0,
                confusion_true: ConfusionMatrix::default(),
                confusion_false: ConfusionMatrix::default(),
                any_subs: false,
            }
        }
    }

    let mut buckets: BTreeMap<(String, Category), Bucket> = BTreeMap::new();
    let mut scored_any = false;
    for item in dataset {
        let Some(item_records) = by_item.get(item.qa_id.as_str()) else {
            eprintln!("warning: no records for {}; excluded from metrics", item.qa_id);
            continue;
        };
        let Some(outcome) = score_item(item, item_records, reframed) else {
            continue;
        };
        scored_any = true;
        let key = (item.split.metrics_group().to_string(), item.category);
        let bucket = buckets.entry(key).or_default();
        bucket.questions += 1;
        bucket.questions_correct += usize::from(outcome.question_correct);
        if let Some((correct, k)) = outcome.sub_correct {
            bucket.subs += k;
            bucket.subs_correct += correct;
            bucket.any_subs = true;
        }
        bucket.unparseable += outcome.unparseable;
        if item.category.is_stability() {
            let predicted = outcome.predicted.as_deref();
            bucket.confusion_true.observe(predicted == Some("True"), outcome.truth == "True");
            bucket.confusion_false.observe(predicted == Some("False"), outcome.truth == "False");
        }
    }
    if !scored_any {
        return Err(Error::Aggregation(
            "no evaluation records matched the dataset".to_string(),
        ));
    }

    let mut splits: BTreeMap<String, BTreeMap<String, CategoryMetrics>> = BTreeMap::new();
    for ((group, category), bucket) in buckets {
        let f1 = category.is_stability().then(|| {
            let true_class = ClassScores::from(bucket.confusion_true);
            let false_class = ClassScores::from(bucket.confusion_false);
            StabilityF1 {
                true_class,
                false_class,
                macro_f1: (true_class.f1 + false_class.f1) / 2.0,
            }
        });
        let metrics = CategoryMetrics {
            questions: bucket.questions,
            per_question_accuracy: ratio(bucket.questions_correct, bucket.questions),
            per_option_accuracy: bucket.any_subs.then(|| ratio(bucket.subs_correct, bucket.subs)),
            unparseable: bucket.unparseable,
            f1,
        };
        splits.entry(group).or_default().insert(category.as_str().to_string(), metrics);
    }

    Ok(MetricsReport {
        dataset_hash: dataset_hash.to_string(),
        endpoint: endpoint.to_string(),
        mode,
        reframed,
        splits,
    })
}

/// Plain-text table: one row per (split, category).
pub fn to_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "endpoint: {}  mode: {}  reframed: {}\n",
        report.endpoint,
        report.mode.as_str(),
        report.reframed
    ));
    out.push_str(&format!(
        "{:<6} {:<22} {:>6} {:>8} {:>8} {:>7} {:>8}\n",
        "split", "category", "n", "per-q%", "per-o%", "unpars", "macro-F1"
    ));
    for (group, categories) in &report.splits {
        for (name, m) in categories {
            let per_o = m
                .per_option_accuracy
                .map(|v| format!("{:.1}", v * 100.0))
                .unwrap_or_else(|| "-".to_string());
            let f1 = m
                .f1
                .map(|f| format!("{:.4}", f.macro_f1))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{:<6} {:<22} {:>6} {:>8.1} {:>8} {:>7} {:>8}\n",
                group,
                name,
                m.questions,
                m.per_question_accuracy * 100.0,
                per_o,
                m.unparseable,
                f1
            ));
        }
    }
    out
}
