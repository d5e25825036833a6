//! Criterion generation and pairwise criterion judging.
//!
//! `generate_criteria` asks the model for task-specific criteria and
//! renumbers them `c1..cN` so downstream ids are always unique and stable.
//! `judge_criteria` evaluates a criterion set against one instance in either
//! presentation order; backward calls swap the responses in the prompt and
//! map raw verdicts through the swap involution, so stored judgments are
//! always in the canonical forward frame.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::model::{
    Aspect, Confidence, Criterion, CriterionJudgment, CriterionOrigin, EvidenceBasis, Instance,
    JudgingOrder, Verdict, Warning, swap_verdict,
};
use crate::prompts::{self, StageGuidance, TemplateId};

/// How criterion judging batches its model calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JudgingMode {
    /// One call judging the whole criterion list (the default).
    #[default]
    Batched,
    /// One call per criterion.
    PerCriterion,
}

#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub criteria: Vec<Criterion>,
    pub warnings: Vec<Warning>,
    pub model_calls: u64,
}

#[derive(Debug, Clone)]
pub struct JudgingOutcome {
    pub judgments: Vec<CriterionJudgment>,
    pub warnings: Vec<Warning>,
    pub model_calls: u64,
}

// ─── Prompt assembly ────────────────────────────────────────────────────────

/// Bindings shared by every pairwise prompt: instruction, both answers,
/// their evidence sections, and stage guidance.
///
/// For backward-order prompts pass `instance.swapped()`.
pub fn common_pairwise_bindings(
    instance: &Instance,
    guidance: &StageGuidance,
) -> BTreeMap<&'static str, String> {
    let sections = prompts::evidence_sections(&instance.evidence);
    let (global, category) = guidance.binding_values();
    BTreeMap::from([
        ("INSTRUCTION", instance.instruction.clone()),
        ("ANSWER_A", instance.response_a.clone()),
        ("ANSWER_B", instance.response_b.clone()),
        ("SCREENSHOT_A_SECTION", sections.screenshot_a),
        ("SCREENSHOT_B_SECTION", sections.screenshot_b),
        ("VISUAL_A_SECTION", sections.visual_a),
        ("VISUAL_B_SECTION", sections.visual_b),
        ("GUIDANCE", global),
        ("CATEGORY_GUIDANCE", category),
    ])
}

#[derive(Serialize)]
struct CriterionListEntry<'a> {
    id: &'a str,
    criterion: &'a str,
    rationale: &'a str,
    evidence_basis: Vec<&'static str>,
}

/// Criteria rendered for a `{CRITERIA_LIST}`/`{TIED_CRITERIA}` slot: a
/// pretty-printed JSON array of id/criterion/rationale/evidence_basis
/// records in input order. Empty input renders as `(none)`.
pub fn criteria_list_json(criteria: &[Criterion]) -> String {
    if criteria.is_empty() {
        return "(none)".to_string();
    }
    let entries: Vec<CriterionListEntry> = criteria
        .iter()
        .map(|c| CriterionListEntry {
            id: &c.id,
            criterion: &c.statement,
            rationale: &c.rationale,
            evidence_basis: c.evidence_basis.iter().map(|b| b.wire()).collect(),
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("criteria serialize")
}

// ─── Criterion generation ───────────────────────────────────────────────────

#[derive(Deserialize)]
struct WireGeneration {
    criteria: Vec<WireCriterion>,
}

#[derive(Deserialize)]
struct WireCriterion {
    #[allow(dead_code)]
    id: String,
    criterion: String,
    rationale: String,
    evidence_basis: Vec<EvidenceBasis>,
}

/// Generate task-specific criteria for one instance.
///
/// Model-provided ids are discarded and criteria renumbered `c1..cN` in
/// arrival order, so ids are unique regardless of model behavior. Errors
/// propagate to the caller, which decides the degradation policy (the
/// pipeline fails the instance or falls back to a monolithic judgment).
pub fn generate_criteria(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    guidance: &StageGuidance,
) -> Result<GenerationOutcome, GatewayError> {
    let bindings = common_pairwise_bindings(instance, guidance);
    let prompt = prompts::render(TemplateId::CriterionGeneration, &bindings)
        .map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
    let req = ChatRequest::new(model_id, "criterion_generation", prompt)
        .with_schema(TemplateId::CriterionGeneration.schema_id());
    let result = gw.complete_structured(&req)?;
    let wire: WireGeneration =
        serde_json::from_value(result.value).map_err(|e| GatewayError::Unparseable(e.to_string()))?;

    let criteria = wire
        .criteria
        .into_iter()
        .enumerate()
        .map(|(i, w)| Criterion {
            id: format!("c{}", i + 1),
            statement: w.criterion,
            rationale: w.rationale,
            evidence_basis: w.evidence_basis,
            parent_id: None,
            origin: CriterionOrigin::Generated,
        })
        .collect();
    Ok(GenerationOutcome { criteria, warnings: Vec::new(), model_calls: u64::from(result.model_calls) })
}

// ─── Criterion judging ──────────────────────────────────────────────────────

#[derive(Deserialize)]
struct WireJudging {
    criterion_results: Vec<WireJudgment>,
}

#[derive(Deserialize)]
struct WireJudgment {
    criterion_id: String,
    judgment: Verdict,
    confidence: Confidence,
    rationale: String,
    #[serde(default)]
    evidence_basis: Vec<EvidenceBasis>,
    mapped_aspect: Aspect,
}

/// The stored judgment for a criterion the model failed to judge.
pub fn degraded_judgment(criterion_id: &str, order: JudgingOrder) -> CriterionJudgment {
    CriterionJudgment {
        criterion_id: criterion_id.to_string(),
        verdict: Verdict::InsufficientEvidence,
        confidence: Confidence::Low,
        rationale: "judging failed".to_string(),
        evidence_used: Vec::new(),
        mapped_aspect: Aspect::Others,
        order,
    }
}

/// Degraded judgments for a whole criterion set (used when the judging call
/// itself failed and the pipeline downgrades rather than aborts).
pub fn degraded_judgments(criteria: &[Criterion], order: JudgingOrder) -> Vec<CriterionJudgment> {
    criteria.iter().map(|c| degraded_judgment(&c.id, order)).collect()
}

/// Judge `criteria` against `instance` in the given presentation order.
///
/// Backward order presents the responses swapped and maps each raw verdict
/// through the swap involution before storage, so all returned judgments are
/// in the canonical forward frame regardless of `order`.
///
/// In [`JudgingMode::Batched`] a transport/structured failure is returned as
/// `Err` (callers need to see it — swap-consistency filtering disables
/// itself when the backward pass fails). In [`JudgingMode::PerCriterion`]
/// failures degrade per criterion and the call itself always succeeds.
pub fn judge_criteria(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    criteria: &[Criterion],
    order: JudgingOrder,
    guidance: &StageGuidance,
    mode: JudgingMode,
    request_tag: &str,
) -> Result<JudgingOutcome, GatewayError> {
    if criteria.is_empty() {
        return Ok(JudgingOutcome { judgments: Vec::new(), warnings: Vec::new(), model_calls: 0 });
    }
    let presented = match order {
        JudgingOrder::Forward => instance.clone(),
        JudgingOrder::Backward => instance.swapped(),
    };
    let mut bindings = common_pairwise_bindings(&presented, guidance);

    match mode {
        JudgingMode::Batched => {
            bindings.insert("CRITERIA_LIST", criteria_list_json(criteria));
            let prompt = prompts::render(TemplateId::PairwiseCriterionJudging, &bindings)
                .map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
            let req = ChatRequest::new(model_id, request_tag, prompt)
                .with_schema(TemplateId::PairwiseCriterionJudging.schema_id());
            let result = gw.complete_structured(&req)?;
            let wire: WireJudging = serde_json::from_value(result.value)
                .map_err(|e| GatewayError::Unparseable(e.to_string()))?;
            let (judgments, warnings) =
                normalize_judgments(criteria, wire.criterion_results, order, request_tag);
            Ok(JudgingOutcome { judgments, warnings, model_calls: u64::from(result.model_calls) })
        }
        JudgingMode::PerCriterion => {
            let mut judgments = Vec::with_capacity(criteria.len());
            let mut warnings = Vec::new();
            let mut model_calls = 0u64;
            for criterion in criteria {
                let one = std::slice::from_ref(criterion);
                bindings.insert("CRITERIA_LIST", criteria_list_json(one));
                let prompt = prompts::render(TemplateId::PairwiseCriterionJudging, &bindings)
                    .map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
                let req = ChatRequest::new(model_id, request_tag, prompt)
                    .with_schema(TemplateId::PairwiseCriterionJudging.schema_id());
                match gw.complete_structured(&req) {
                    Ok(result) => {
                        model_calls += u64::from(result.model_calls);
                        match serde_json::from_value::<WireJudging>(result.value) {
                            Ok(wire) => {
                                let (mut js, ws) = normalize_judgments(
                                    one,
                                    wire.criterion_results,
                                    order,
                                    request_tag,
                                );
                                judgments.append(&mut js);
                                warnings.extend(ws);
                            }
                            Err(e) => {
                                warnings.push(Warning::new(
                                    request_tag,
                                    format!("criterion {}: unusable judgment payload: {e}", criterion.id),
                                ));
                                judgments.push(degraded_judgment(&criterion.id, order));
                            }
                        }
                    }
                    Err(e) => {
                        warnings.push(Warning::new(
                            request_tag,
                            format!("criterion {}: judging call failed: {e}", criterion.id),
                        ));
                        judgments.push(degraded_judgment(&criterion.id, order));
                    }
                }
            }
            Ok(JudgingOutcome { judgments, warnings, model_calls })
        }
    }
}

/// Map wire judging records onto the sent criterion list.
///
/// Every sent criterion gets exactly one judgment, in the sent order:
/// missing entries degrade to insufficient evidence, duplicate entries keep
/// the first occurrence, and entries for unknown ids are dropped — each with
/// a warning. Backward raw verdicts are mapped to the forward frame here.
fn normalize_judgments(
    criteria: &[Criterion],
    wire: Vec<WireJudgment>,
    order: JudgingOrder,
    request_tag: &str,
) -> (Vec<CriterionJudgment>, Vec<Warning>) {
    let known: BTreeSet<&str> = criteria.iter().map(|c| c.id.as_str()).collect();
    let mut warnings = Vec::new();
    let mut by_id: BTreeMap<String, WireJudgment> = BTreeMap::new();
    for w in wire {
        if !known.contains(w.criterion_id.as_str()) {
            warnings.push(Warning::new(
                request_tag,
                format!("judgment for unknown criterion id {:?} dropped", w.criterion_id),
            ));
            continue;
        }
        if by_id.contains_key(&w.criterion_id) {
            warnings.push(Warning::new(
                request_tag,
                format!("duplicate judgment for criterion {:?}; keeping the first", w.criterion_id),
            ));
            continue;
        }
        by_id.insert(w.criterion_id.clone(), w);
    }

    let judgments = criteria
        .iter()
        .map(|c| match by_id.remove(c.id.as_str()) {
            Some(w) => CriterionJudgment {
                criterion_id: c.id.clone(),
                verdict: match order {
                    JudgingOrder::Forward => w.judgment,
                    JudgingOrder::Backward => swap_verdict(w.judgment),
                },
                confidence: w.confidence,
                rationale: w.rationale,
                evidence_used: w.evidence_basis,
                mapped_aspect: w.mapped_aspect,
                order,
            },
            None => {
                warnings.push(Warning::new(
                    request_tag,
                    format!("no judgment returned for criterion {:?}", c.id),
                ));
                degraded_judgment(&c.id, order)
            }
        })
        .collect();
    (judgments, warnings)
}
