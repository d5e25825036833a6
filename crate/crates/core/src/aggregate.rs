//! Final-label synthesis and the aggregation baselines.
//!
//! The guided pipeline ends with [`final_judge`], one model call that reads
//! the surviving criterion verdicts and synthesizes an overall preference,
//! degrading to a strict-majority vote when the call fails. The baselines:
//! [`monolithic_judge`] (one call, no criteria) and [`pointwise_judge`] with
//! uniform or weight-elicited aggregation of YES/NO criterion checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::criteria::{common_pairwise_bindings, criteria_list_json};
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::model::{
    Criterion, CriterionJudgment, Instance, PreferenceLabel, Verdict, Warning,
};
use crate::prompts::{self, StageGuidance, TemplateId};

/// Outcome of a final or monolithic judging call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalDecision {
    pub label: PreferenceLabel,
    pub reasoning: String,
    /// True when the model call failed and a deterministic fallback
    /// produced the label instead.
    pub used_fallback: bool,
}

#[derive(Deserialize)]
struct WireFinal {
    #[serde(rename = "Overall")]
    overall: WireOverall,
}

#[derive(Deserialize)]
struct WireOverall {
    winner: String,
    reasoning: String,
}

fn parse_winner(token: &str) -> Option<PreferenceLabel> {
    match token {
        "A" => Some(PreferenceLabel::A),
        "B" => Some(PreferenceLabel::B),
        "Tie" | "tie" => Some(PreferenceLabel::Tie),
        _ => None,
    }
}

#[derive(Serialize)]
struct CriterionResultEntry<'a> {
    criterion_id: &'a str,
    criterion: &'a str,
    judgment: &'static str,
    confidence: &'a crate::model::Confidence,
    rationale: &'a str,
    evidence_basis: Vec<&'static str>,
    mapped_aspect: &'static str,
}

/// The `{CRITERION_RESULTS}` binding: a pretty-printed JSON array of full
/// judgment records in input order, echoing each criterion's statement.
pub fn criterion_results_json(criteria: &[Criterion], judgments: &[CriterionJudgment]) -> String {
    if judgments.is_empty() {
        return "No criterion-level evidence available.".to_string();
    }
    let statements: BTreeMap<&str, &str> =
        criteria.iter().map(|c| (c.id.as_str(), c.statement.as_str())).collect();
    let entries: Vec<CriterionResultEntry> = judgments
        .iter()
        .map(|j| CriterionResultEntry {
            criterion_id: &j.criterion_id,
            criterion: statements.get(j.criterion_id.as_str()).copied().unwrap_or(""),
            judgment: j.verdict.wire(),
            confidence: &j.confidence,
            rationale: &j.rationale,
            evidence_basis: j.evidence_used.iter().map(|b| b.wire()).collect(),
            mapped_aspect: j.mapped_aspect.wire(),
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("criterion results serialize")
}

/// Strict-majority fallback over forward-frame verdicts: A wins only with
/// more A than B verdicts, B symmetrically, everything else is a tie.
pub fn majority_fallback(judgments: &[CriterionJudgment]) -> PreferenceLabel {
    let a = judgments.iter().filter(|j| j.verdict == Verdict::A).count();
    let b = judgments.iter().filter(|j| j.verdict == Verdict::B).count();
    match a.cmp(&b) {
        std::cmp::Ordering::Greater => PreferenceLabel::A,
        std::cmp::Ordering::Less => PreferenceLabel::B,
        std::cmp::Ordering::Equal => PreferenceLabel::Tie,
    }
}

fn judge_call(
    gw: &Gateway,
    model_id: &str,
    template: TemplateId,
    tag: &str,
    bindings: &BTreeMap<&'static str, String>,
) -> Result<(PreferenceLabel, String), GatewayError> {
    let prompt =
        prompts::render(template, bindings).map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
    let req = ChatRequest::new(model_id, tag, prompt).with_schema(template.schema_id());
    let result = gw.complete_structured(&req)?;
    let wire: WireFinal =
        serde_json::from_value(result.value).map_err(|e| GatewayError::Unparseable(e.to_string()))?;
    let label = parse_winner(&wire.overall.winner)
        .ok_or_else(|| GatewayError::Unparseable(format!("unknown winner {:?}", wire.overall.winner)))?;
    Ok((label, wire.overall.reasoning))
}

/// Guided final synthesis over the surviving criterion judgments.
///
/// On model failure the label comes from [`majority_fallback`] with a
/// warning; the instance never fails at this stage.
pub fn final_judge(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    criteria: &[Criterion],
    kept: &[CriterionJudgment],
    guidance: &StageGuidance,
) -> (FinalDecision, Vec<Warning>) {
    let mut bindings = common_pairwise_bindings(instance, guidance);
    bindings.insert("CRITERION_RESULTS", criterion_results_json(criteria, kept));
    match judge_call(gw, model_id, TemplateId::FinalJudge, "final_judge", &bindings) {
        Ok((label, reasoning)) => {
            (FinalDecision { label, reasoning, used_fallback: false }, Vec::new())
        }
        Err(e) => {
            let label = majority_fallback(kept);
            let a = kept.iter().filter(|j| j.verdict == Verdict::A).count();
            let b = kept.iter().filter(|j| j.verdict == Verdict::B).count();
            let decision = FinalDecision {
                label,
                reasoning: format!("majority fallback over kept criterion verdicts: A={a}, B={b}"),
                used_fallback: true,
            };
            let warnings =
                vec![Warning::new("final_judge", format!("final judging failed; majority fallback used: {e}"))];
            (decision, warnings)
        }
    }
}

/// Single-call baseline: judge the pair directly with no criterion evidence.
/// On model failure the label degrades to a tie.
pub fn monolithic_judge(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    guidance: &StageGuidance,
) -> (FinalDecision, Vec<Warning>) {
    let bindings = common_pairwise_bindings(instance, guidance);
    match judge_call(gw, model_id, TemplateId::MonolithicJudge, "monolithic_judge", &bindings) {
        Ok((label, reasoning)) => {
            (FinalDecision { label, reasoning, used_fallback: false }, Vec::new())
        }
        Err(e) => (
            FinalDecision {
                label: PreferenceLabel::Tie,
                reasoning: "judge failed".to_string(),
                used_fallback: true,
            },
            vec![Warning::new("monolithic_judge", format!("monolithic judging failed: {e}"))],
        ),
    }
}

// ─── Pointwise baseline ─────────────────────────────────────────────────────

#[derive(Deserialize)]
struct WirePointwise {
    criterion_results: Vec<WirePointwiseEntry>,
}

#[derive(Deserialize)]
struct WirePointwiseEntry {
    criterion_id: String,
    decision: String,
}

/// Criterion ids each response individually satisfied.
#[derive(Debug, Clone, Default)]
pub struct PointwiseOutcome {
    pub yes_a: BTreeSet<String>,
    pub yes_b: BTreeSet<String>,
    pub warnings: Vec<Warning>,
}

fn pointwise_side(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    criteria: &[Criterion],
    guidance: &StageGuidance,
    side_a: bool,
) -> Result<BTreeSet<String>, GatewayError> {
    let (answer, shots, exec) = if side_a {
        (&instance.response_a, &instance.evidence.screenshot_refs_a, instance.evidence.exec_output_a.as_deref())
    } else {
        (&instance.response_b, &instance.evidence.screenshot_refs_b, instance.evidence.exec_output_b.as_deref())
    };
    let (global, category) = guidance.binding_values();
    let bindings = BTreeMap::from([
        ("INSTRUCTION", instance.instruction.clone()),
        ("ANSWER", answer.clone()),
        ("SCREENSHOT_SECTION", prompts::screenshot_section(shots)),
        ("VISUAL_SECTION", prompts::visual_section(exec)),
        ("GUIDANCE", global),
        ("CATEGORY_GUIDANCE", category),
        ("CRITERIA_LIST", criteria_list_json(criteria)),
    ]);
    let tag = if side_a { "pointwise_judging_a" } else { "pointwise_judging_b" };
    let prompt = prompts::render(TemplateId::PointwiseCriterionJudging, &bindings)
        .map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
    let req = ChatRequest::new(model_id, tag, prompt)
        .with_schema(TemplateId::PointwiseCriterionJudging.schema_id());
    let result = gw.complete_structured(&req)?;
    let wire: WirePointwise =
        serde_json::from_value(result.value).map_err(|e| GatewayError::Unparseable(e.to_string()))?;
    let known: BTreeSet<&str> = criteria.iter().map(|c| c.id.as_str()).collect();
    Ok(wire
        .criterion_results
        .into_iter()
        .filter(|e| e.decision == "YES" && known.contains(e.criterion_id.as_str()))
        .map(|e| e.criterion_id)
        .collect())
}

/// Judge each response against the criteria independently (one call per
/// side). A failed side contributes no YES decisions, with a warning.
pub fn pointwise_judge(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    criteria: &[Criterion],
    guidance: &StageGuidance,
) -> PointwiseOutcome {
    let mut out = PointwiseOutcome::default();
    match pointwise_side(gw, model_id, instance, criteria, guidance, true) {
        Ok(yes) => out.yes_a = yes,
        Err(e) => out.warnings.push(Warning::new(
            "pointwise_judging_a",
            format!("pointwise judging of response A failed; scoring it zero: {e}"),
        )),
    }
    match pointwise_side(gw, model_id, instance, criteria, guidance, false) {
        Ok(yes) => out.yes_b = yes,
        Err(e) => out.warnings.push(Warning::new(
            "pointwise_judging_b",
            format!("pointwise judging of response B failed; scoring it zero: {e}"),
        )),
    }
    out
}

#[derive(Deserialize)]
struct WireWeights {
    weights: Vec<WireWeight>,
}

#[derive(Deserialize)]
struct WireWeight {
    criterion_id: String,
    weight: f64,
}

/// Ask the model for per-criterion importance weights, normalized to sum
/// to 1. Negative weights clamp to zero; a failed call, unknown ids only,
/// or an all-zero response fall back to uniform weights with a warning.
pub fn elicit_weights(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    criteria: &[Criterion],
) -> (BTreeMap<String, f64>, Vec<Warning>) {
    let uniform = || -> BTreeMap<String, f64> {
        let w = 1.0 / criteria.len().max(1) as f64;
        criteria.iter().map(|c| (c.id.clone(), w)).collect()
    };
    let mut warnings = Vec::new();
    let bindings = BTreeMap::from([
        ("INSTRUCTION", instance.instruction.clone()),
        ("CRITERIA_LIST", criteria_list_json(criteria)),
    ]);
    let prompt = match prompts::render(TemplateId::CriterionWeighting, &bindings) {
        Ok(p) => p,
        Err(e) => {
            warnings.push(Warning::new("criterion_weighting", format!("render failed; uniform weights: {e}")));
            return (uniform(), warnings);
        }
    };
    let req = ChatRequest::new(model_id, "criterion_weighting", prompt)
        .with_schema(TemplateId::CriterionWeighting.schema_id());
    let wire: WireWeights = match gw
        .complete_structured(&req)
        .and_then(|r| serde_json::from_value(r.value).map_err(|e| GatewayError::Unparseable(e.to_string())))
    {
        Ok(w) => w,
        Err(e) => {
            warnings.push(Warning::new(
                "criterion_weighting",
                format!("weight elicitation failed; uniform weights: {e}"),
            ));
            return (uniform(), warnings);
        }
    };

    let known: BTreeSet<&str> = criteria.iter().map(|c| c.id.as_str()).collect();
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    for w in wire.weights {
        if !known.contains(w.criterion_id.as_str()) {
            warnings.push(Warning::new(
                "criterion_weighting",
                format!("weight for unknown criterion {:?} ignored", w.criterion_id),
            ));
            continue;
        }
        weights.entry(w.criterion_id).or_insert(w.weight.max(0.0));
    }
    for c in criteria {
        if !weights.contains_key(&c.id) {
            warnings.push(Warning::new(
                "criterion_weighting",
                format!("no weight returned for criterion {:?}; using zero", c.id),
            ));
            weights.insert(c.id.clone(), 0.0);
        }
    }
    let total: f64 = weights.values().sum();
    if total <= 0.0 {
        warnings.push(Warning::new("criterion_weighting", "weights sum to zero; uniform weights".to_string()));
        return (uniform(), warnings);
    }
    for w in weights.values_mut() {
        *w /= total;
    }
    (weights, warnings)
}

/// Compare per-side criterion scores. With `weights` absent every criterion
/// counts 1; score differences below 1e-9 are ties.
pub fn pointwise_aggregate(
    criteria: &[Criterion],
    outcome: &PointwiseOutcome,
    weights: Option<&BTreeMap<String, f64>>,
) -> PreferenceLabel {
    let weight_of = |id: &str| -> f64 {
        match weights {
            Some(map) => map.get(id).copied().unwrap_or(0.0),
            None => 1.0,
        }
    };
    let mut score_a = 0.0;
    let mut score_b = 0.0;
    for c in criteria {
        let w = weight_of(&c.id);
        if outcome.yes_a.contains(&c.id) {
            score_a += w;
        }
        if outcome.yes_b.contains(&c.id) {
            score_b += w;
        }
    }
    if (score_a - score_b).abs() < 1e-9 {
        PreferenceLabel::Tie
    } else if score_a > score_b {
        PreferenceLabel::A
    } else {
        PreferenceLabel::B
    }
}
