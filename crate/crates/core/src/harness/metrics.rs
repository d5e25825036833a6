//! Preference-accuracy metrics: exact 3-class agreement, per-category
//! accuracy, and a 3×3 confusion matrix over {A, B, Tie}.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::harness::dataset::Dataset;
use crate::model::{PreferenceLabel, TaskCategory};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{} validation instance(s) have no prediction (first: {})", .0.len(), .0.first().cloned().unwrap_or_default())]
    MissingPredictions(Vec<String>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
}

/// 3×3 counts, rows = true label, columns = predicted, both in {A, B, Tie}
/// order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[u64; 3]; 3]);

fn label_index(label: PreferenceLabel) -> usize {
    match label {
        PreferenceLabel::A => 0,
        PreferenceLabel::B => 1,
        PreferenceLabel::Tie => 2,
    }
}

impl Confusion {
    pub fn observe(&mut self, truth: PreferenceLabel, predicted: PreferenceLabel) {
        self.0[label_index(truth)][label_index(predicted)] += 1;
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.0[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// Per-class true counts (row sums), in {A, B, Tie} order.
    pub fn row_sums(&self) -> [u64; 3] {
        [0, 1, 2].map(|i| self.0[i].iter().sum())
    }
}

/// Accuracy report over a scored prediction set.
///
/// When `failed_as_wrong` is empty (every scored instance had a real
/// prediction) the exact invariants hold: confusion row sums equal per-class
/// true counts and `overall_accuracy = trace / n`. Instances counted wrong
/// for lack of a prediction are included in `n` and per-category totals but
/// have no confusion cell; excluded and unlabeled instances are outside `n`
/// entirely and listed for the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub n: u64,
    pub overall_accuracy: f64,
    pub per_category: BTreeMap<TaskCategory, CategoryAccuracy>,
    pub confusion: Confusion,
    /// Instances scored as wrong because the pipeline produced no
    /// prediction for them (default failure policy).
    pub failed_as_wrong: Vec<String>,
    /// Instances excluded from scoring by the failure policy.
    pub excluded: Vec<String>,
    /// Validation instances with no human label — never scored.
    pub unlabeled: Vec<String>,
}

/// Exact 3-class accuracy over the labeled validation instances.
///
/// Every labeled validation id must have a prediction; missing ones are an
/// error listing the ids. Use [`score_with_policy`] to pre-apply a
/// failed-instance policy.
pub fn accuracy(
    predictions: &BTreeMap<String, PreferenceLabel>,
    val_ids: &BTreeSet<String>,
    dataset: &Dataset,
    method: &str,
) -> Result<MetricsReport, MetricsError> {
    score(predictions, val_ids, dataset, method, FailurePolicy::CountWrong, &BTreeSet::new())
}

/// How instances without a prediction are accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Failed instances count toward `n` with zero credit (conservative).
    #[default]
    CountWrong,
    /// Failed instances are dropped from scoring and reported.
    Exclude,
}

/// Score predictions with an explicit failure policy. `failed_ids` names
/// instances known to have produced no prediction; any OTHER labeled
/// validation id without a prediction is still an error.
pub fn score_with_policy(
    predictions: &BTreeMap<String, PreferenceLabel>,
    val_ids: &BTreeSet<String>,
    dataset: &Dataset,
    method: &str,
    policy: FailurePolicy,
    failed_ids: &BTreeSet<String>,
) -> Result<MetricsReport, MetricsError> {
    score(predictions, val_ids, dataset, method, policy, failed_ids)
}

fn score(
    predictions: &BTreeMap<String, PreferenceLabel>,
    val_ids: &BTreeSet<String>,
    dataset: &Dataset,
    method: &str,
    policy: FailurePolicy,
    failed_ids: &BTreeSet<String>,
) -> Result<MetricsReport, MetricsError> {
    let mut unlabeled = Vec::new();
    let mut excluded = Vec::new();
    let mut failed_as_wrong = Vec::new();
    let mut missing = Vec::new();
    let mut confusion = Confusion::default();
    let mut per_category: BTreeMap<TaskCategory, CategoryAccuracy> = BTreeMap::new();
    let mut n = 0u64;
    let mut correct = 0u64;

    for instance in dataset.instances.iter().filter(|i| val_ids.contains(&i.id)) {
        let Some(truth) = instance.human_overall else {
            unlabeled.push(instance.id.clone());
            continue;
        };
        let predicted = predictions.get(&instance.id).copied();
        let cat = per_category.entry(instance.category).or_default();
        match predicted {
            Some(label) => {
                n += 1;
                cat.n += 1;
                confusion.observe(truth, label);
                if label == truth {
                    correct += 1;
                    cat.correct += 1;
                }
            }
            None if failed_ids.contains(&instance.id) => match policy {
                FailurePolicy::CountWrong => {
                    n += 1;
                    cat.n += 1;
                    failed_as_wrong.push(instance.id.clone());
                }
                FailurePolicy::Exclude => excluded.push(instance.id.clone()),
            },
            None => missing.push(instance.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(MetricsError::MissingPredictions(missing));
    }
    for cat in per_category.values_mut() {
        cat.accuracy = if cat.n == 0 { 0.0 } else { cat.correct as f64 / cat.n as f64 };
    }
    per_category.retain(|_, c| c.n > 0);
    Ok(MetricsReport {
        method: method.to_string(),
        n,
        overall_accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        per_category,
        confusion,
        failed_as_wrong,
        excluded,
        unlabeled,
    })
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::FORMAT_VERSION;
    use crate::model::{EvidenceBundle, Instance};

    fn dataset(labels: &[(&str, PreferenceLabel, TaskCategory)]) -> Dataset {
        let instances = labels
            .iter()
            .map(|(id, label, cat)| Instance {
                id: (*id).to_string(),
                instruction: "x".into(),
                response_a: "a".into(),
                response_b: "b".into(),
                evidence: EvidenceBundle::default(),
                category: *cat,
                human_overall: Some(*label),
                human_aspect_votes: BTreeMap::new(),
            })
            .collect();
        Dataset { instances, source_path: "mem".into(), format_version: FORMAT_VERSION.into() }
    }

    fn ids(dataset: &Dataset) -> BTreeSet<String> {
        dataset.ids()
    }

    const WEB: TaskCategory = TaskCategory::WebDevelopment;
    const GAME: TaskCategory = TaskCategory::GameDevelopment;

    #[test]
    fn test_all_correct_is_one() {
        let ds = dataset(&[
            ("i1", PreferenceLabel::A, WEB),
            ("i2", PreferenceLabel::B, WEB),
            ("i3", PreferenceLabel::Tie, GAME),
        ]);
        let preds: BTreeMap<String, PreferenceLabel> = ds
            .instances
            .iter()
            .map(|i| (i.id.clone(), i.human_overall.unwrap()))
            .collect();
        let report = accuracy(&preds, &ids(&ds), &ds, "test").unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
        assert_eq!(report.n, 3);
        assert_eq!(report.confusion.trace(), 3);
        assert_eq!(report.per_category[&WEB].accuracy, 1.0);
    }

    #[test]
    fn test_three_of_five_correct() {
        let ds = dataset(&[
            ("i1", PreferenceLabel::A, WEB),
            ("i2", PreferenceLabel::A, WEB),
            ("i3", PreferenceLabel::B, WEB),
            ("i4", PreferenceLabel::Tie, GAME),
            ("i5", PreferenceLabel::B, GAME),
        ]);
        let preds = BTreeMap::from([
            ("i1".to_string(), PreferenceLabel::A),   // correct
            ("i2".to_string(), PreferenceLabel::B),   // wrong
            ("i3".to_string(), PreferenceLabel::B),   // correct
            ("i4".to_string(), PreferenceLabel::Tie), // correct
            ("i5".to_string(), PreferenceLabel::A),   // wrong
        ]);
        let report = accuracy(&preds, &ids(&ds), &ds, "test").unwrap();
        assert!((report.overall_accuracy - 0.6).abs() < 1e-12);
        assert_eq!(report.confusion.trace(), 3);
        assert_eq!(report.confusion.total(), 5);
        // Confusion row sums equal per-class true counts: A=2, B=2, Tie=1.
        assert_eq!(report.confusion.row_sums(), [2, 2, 1]);
        assert_eq!(report.per_category[&WEB].n, 3);
        assert_eq!(report.per_category[&GAME].correct, 1);
    }

    #[test]
    fn test_missing_predictions_listed() {
        let ds = dataset(&[("i1", PreferenceLabel::A, WEB), ("i2", PreferenceLabel::B, WEB)]);
        let preds = BTreeMap::from([("i1".to_string(), PreferenceLabel::A)]);
        let err = accuracy(&preds, &ids(&ds), &ds, "test").unwrap_err();
        let MetricsError::MissingPredictions(missing) = err;
        assert_eq!(missing, vec!["i2".to_string()]);
    }

    #[test]
    fn test_permuted_predictions_score_tie_fraction() {
        // Predictions = truth with A and B exchanged: only true Ties match.
        let ds = dataset(&[
            ("i1", PreferenceLabel::A, WEB),
            ("i2", PreferenceLabel::B, WEB),
            ("i3", PreferenceLabel::Tie, WEB),
            ("i4", PreferenceLabel::Tie, GAME),
            ("i5", PreferenceLabel::A, GAME),
        ]);
        let preds: BTreeMap<String, PreferenceLabel> = ds
            .instances
            .iter()
            .map(|i| (i.id.clone(), i.human_overall.unwrap().swapped()))
            .collect();
        let report = accuracy(&preds, &ids(&ds), &ds, "test").unwrap();
        let tie_fraction = 2.0 / 5.0;
        assert!((report.overall_accuracy - tie_fraction).abs() < 1e-12);
    }

    #[test]
    fn test_failure_policies() {
        let ds = dataset(&[
            ("i1", PreferenceLabel::A, WEB),
            ("i2", PreferenceLabel::B, WEB),
            ("i3", PreferenceLabel::B, WEB),
        ]);
        let preds = BTreeMap::from([
            ("i1".to_string(), PreferenceLabel::A),
            ("i2".to_string(), PreferenceLabel::B),
        ]);
        let failed = BTreeSet::from(["i3".to_string()]);

        let wrong = score_with_policy(
            &preds, &ids(&ds), &ds, "m", FailurePolicy::CountWrong, &failed,
        )
        .unwrap();
        assert_eq!(wrong.n, 3, "failed instance counted");
        assert!((wrong.overall_accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(wrong.failed_as_wrong, vec!["i3".to_string()]);
        assert_eq!(wrong.confusion.total(), 2, "no confusion cell without a prediction");

        let excl =
            score_with_policy(&preds, &ids(&ds), &ds, "m", FailurePolicy::Exclude, &failed)
                .unwrap();
        assert_eq!(excl.n, 2, "failed instance excluded");
        assert_eq!(excl.overall_accuracy, 1.0);
        assert_eq!(excl.excluded, vec!["i3".to_string()]);
    }

    #[test]
    fn test_unlabeled_instances_are_reported_not_scored() {
        let mut ds = dataset(&[("i1", PreferenceLabel::A, WEB)]);
        ds.instances.push(Instance {
            id: "i2".into(),
            instruction: "x".into(),
            response_a: "a".into(),
            response_b: "b".into(),
            evidence: EvidenceBundle::default(),
            category: WEB,
            human_overall: None,
            human_aspect_votes: BTreeMap::new(),
        });
        let preds = BTreeMap::from([("i1".to_string(), PreferenceLabel::A)]);
        let report = accuracy(&preds, &ids(&ds), &ds, "m").unwrap();
        assert_eq!(report.n, 1);
        assert_eq!(report.unlabeled, vec!["i2".to_string()]);
    }

    #[test]
    fn test_val_subset_only_is_scored() {
        let ds = dataset(&[("i1", PreferenceLabel::A, WEB), ("i2", PreferenceLabel::B, WEB)]);
        let val = BTreeSet::from(["i2".to_string()]);
        let preds = BTreeMap::from([("i2".to_string(), PreferenceLabel::B)]);
        let report = accuracy(&preds, &val, &ds, "m").unwrap();
        assert_eq!(report.n, 1);
        assert_eq!(report.overall_accuracy, 1.0);
    }
}
