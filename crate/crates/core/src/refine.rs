//! Batched tie-driven criterion refinement.
//!
//! When the pairwise judge returns ties, the tied criteria are too coarse to
//! separate the two responses. Refinement decomposes every tied criterion
//! into two more granular sub-criteria, filters the candidates for
//! redundancy and conflict against the accepted set, re-judges the
//! survivors, and retires each parent that produced at least one surviving
//! child. All four stages are batched: one decomposition call covers every
//! selected tie, one call per filter covers every candidate, and one call
//! re-judges all survivors — at most three decomposition+filter calls per
//! iteration, versus one call per tie plus one per candidate per filter in
//! the per-item loop this replaces (see [`plain_loop_call_count`]).
//!
//! Refinement never fails an instance: every model failure degrades (ties
//! stand, or candidates are conservatively dropped) with a warning.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::criteria::{self, JudgingMode, criteria_list_json};
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::model::{
    Criterion, CriterionJudgment, CriterionOrigin, EvidenceBasis, Instance, JudgingOrder, Verdict,
    Warning,
};
use crate::prompts::{self, StageGuidance, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Maximum refinement iterations per instance.
    pub max_iterations: u32,
    /// Maximum parent-chain depth a criterion may have and still be
    /// decomposed; generated criteria have depth 0, their children depth 1.
    pub depth_limit: u32,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig { max_iterations: 2, depth_limit: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementStats {
    /// Iterations that selected at least one tie.
    pub iterations: u64,
    pub ties_selected: u64,
    /// Sub-criteria candidates accepted from decomposition (after truncation).
    pub subs_candidates: u64,
    pub subs_nonredundant: u64,
    pub subs_surviving: u64,
    pub parents_retired: u64,
    pub decomposition_calls: u64,
    pub filter_calls: u64,
    pub rejudge_calls: u64,
    /// Model calls a per-item refinement loop would have made for the same
    /// work: one decomposition per tie plus one filter call per candidate
    /// per filter stage.
    pub plain_loop_equivalent: u64,
}

impl RefinementStats {
    /// Decomposition+filter calls actually made (the batched counterpart of
    /// [`RefinementStats::plain_loop_equivalent`]).
    pub fn batched_equivalent(&self) -> u64 {
        self.decomposition_calls + self.filter_calls
    }
}

/// Calls a per-item refinement loop makes: one decomposition call per tie,
/// one redundancy check per candidate, one conflict check per
/// non-redundant candidate.
pub fn plain_loop_call_count(n_ties: u64, n_subs: u64, n_nonredundant: u64) -> u64 {
    n_ties + n_subs + n_nonredundant
}

/// Percentage of calls saved by batching: `100 * (plain - batched) / plain`.
pub fn savings_percent(plain: u64, batched: u64) -> f64 {
    if plain == 0 {
        return 0.0;
    }
    100.0 * (plain.saturating_sub(batched)) as f64 / plain as f64
}

#[derive(Debug, Clone)]
pub struct RefinementOutcome {
    /// Active criteria after refinement: the originals minus retired
    /// parents, with surviving sub-criteria appended in assignment order.
    pub criteria: Vec<Criterion>,
    /// Forward-frame judgments aligned with `criteria`.
    pub judgments: Vec<CriterionJudgment>,
    /// Parents retired in favor of their children.
    pub retired: Vec<Criterion>,
    pub stats: RefinementStats,
    pub warnings: Vec<Warning>,
}

// ─── Wire shapes ────────────────────────────────────────────────────────────

#[derive(Deserialize)]
struct WireDecompositions {
    decompositions: Vec<WireDecomposition>,
}

#[derive(Deserialize)]
struct WireDecomposition {
    parent_id: String,
    sub_criteria: Vec<WireSubCriterion>,
}

#[derive(Deserialize)]
struct WireSubCriterion {
    criterion: String,
    rationale: String,
    #[serde(default)]
    evidence_basis: Vec<EvidenceBasis>,
}

#[derive(Deserialize)]
struct WireFilterResults {
    results: Vec<WireFilterResult>,
}

#[derive(Deserialize)]
struct WireFilterResult {
    id: String,
    #[serde(default)]
    redundant: Option<bool>,
    #[serde(default)]
    conflicting: Option<bool>,
}

#[derive(Serialize)]
struct NewRubricEntry<'a> {
    id: &'a str,
    criterion: &'a str,
}

fn existing_rubrics_json(criteria: &[&Criterion]) -> String {
    if criteria.is_empty() {
        return "(none)".to_string();
    }
    let statements: Vec<&str> = criteria.iter().map(|c| c.statement.as_str()).collect();
    serde_json::to_string_pretty(&statements).expect("rubrics serialize")
}

fn new_rubrics_json(candidates: &[Criterion]) -> String {
    let entries: Vec<NewRubricEntry> = candidates
        .iter()
        .map(|c| NewRubricEntry { id: &c.id, criterion: &c.statement })
        .collect();
    serde_json::to_string_pretty(&entries).expect("rubrics serialize")
}

// ─── Refinement loop ────────────────────────────────────────────────────────

/// Run tie-driven refinement over an instance's judged criterion set.
pub fn refine_ties(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    criteria: &[Criterion],
    judgments: &[CriterionJudgment],
    guidance: &StageGuidance,
    judging_mode: JudgingMode,
    cfg: &RefinementConfig,
) -> RefinementOutcome {
    let mut active: Vec<Criterion> = criteria.to_vec();
    let mut verdicts: BTreeMap<String, CriterionJudgment> =
        judgments.iter().map(|j| (j.criterion_id.clone(), j.clone())).collect();
    // Every criterion ever seen, for depth lookups across retirements.
    let mut lineage: BTreeMap<String, Option<String>> =
        active.iter().map(|c| (c.id.clone(), c.parent_id.clone())).collect();
    let mut retired: Vec<Criterion> = Vec::new();
    let mut stats = RefinementStats::default();
    let mut warnings: Vec<Warning> = Vec::new();
    let mut next_sub_id: u64 = 1;

    for _ in 0..cfg.max_iterations {
        let tied_ids: Vec<String> = active
            .iter()
            .filter(|c| {
                verdicts.get(&c.id).map(|j| j.verdict) == Some(Verdict::Tie)
                    && depth_of(&lineage, &c.id) < cfg.depth_limit
            })
            .map(|c| c.id.clone())
            .collect();
        if tied_ids.is_empty() {
            break;
        }
        stats.iterations += 1;
        stats.ties_selected += tied_ids.len() as u64;
        stats.plain_loop_equivalent += tied_ids.len() as u64;

        let tied: Vec<Criterion> =
            active.iter().filter(|c| tied_ids.contains(&c.id)).cloned().collect();
        let others: Vec<&Criterion> =
            active.iter().filter(|c| !tied_ids.contains(&c.id)).collect();

        // Stage 1: one batched decomposition call for all selected ties.
        stats.decomposition_calls += 1;
        let decompositions = match decompose(gw, model_id, instance, &tied, &others) {
            Ok(d) => d,
            Err(e) => {
                warnings.push(Warning::new(
                    "tie_decomposition",
                    format!("decomposition call failed; tied criteria stand: {e}"),
                ));
                break;
            }
        };

        let mut by_parent: BTreeMap<String, Vec<Criterion>> = BTreeMap::new();
        let known_parents: BTreeSet<&str> = tied.iter().map(|c| c.id.as_str()).collect();
        for d in decompositions {
            if !known_parents.contains(d.parent_id.as_str()) {
                warnings.push(Warning::new(
                    "tie_decomposition",
                    format!("decomposition for unknown parent {:?} dropped", d.parent_id),
                ));
                continue;
            }
            if by_parent.contains_key(&d.parent_id) {
                warnings.push(Warning::new(
                    "tie_decomposition",
                    format!("duplicate decomposition for parent {:?}; keeping the first", d.parent_id),
                ));
                continue;
            }
            let mut subs = d.sub_criteria;
            if subs.len() > 2 {
                warnings.push(Warning::new(
                    "tie_decomposition",
                    format!(
                        "parent {:?}: {} sub-criteria returned; truncating to 2",
                        d.parent_id,
                        subs.len()
                    ),
                ));
                subs.truncate(2);
            } else if subs.len() == 1 {
                warnings.push(Warning::new(
                    "tie_decomposition",
                    format!("parent {:?}: only 1 sub-criterion returned (2 requested)", d.parent_id),
                ));
            }
            let children = subs
                .into_iter()
                .map(|s| {
                    let id = format!("t{next_sub_id}");
                    next_sub_id += 1;
                    Criterion {
                        id,
                        statement: s.criterion,
                        rationale: s.rationale,
                        evidence_basis: s.evidence_basis,
                        parent_id: Some(d.parent_id.clone()),
                        origin: CriterionOrigin::Refined,
                    }
                })
                .collect();
            by_parent.insert(d.parent_id, children);
        }
        for p in &tied {
            if !by_parent.contains_key(&p.id) || by_parent[&p.id].is_empty() {
                warnings.push(Warning::new(
                    "tie_decomposition",
                    format!("no decomposition for tied criterion {:?}; tie stands", p.id),
                ));
            }
        }

        let candidates: Vec<Criterion> = by_parent.values().flatten().cloned().collect();
        stats.subs_candidates += candidates.len() as u64;
        stats.plain_loop_equivalent += candidates.len() as u64;
        if candidates.is_empty() {
            continue;
        }

        // Stage 2: one batched redundancy call over all candidates.
        stats.filter_calls += 1;
        let nonredundant = apply_filter(
            gw,
            model_id,
            TemplateId::RedundancyFilter,
            "redundancy_filter",
            &others,
            candidates,
            |r| r.redundant,
            &mut warnings,
        );
        stats.subs_nonredundant += nonredundant.len() as u64;
        stats.plain_loop_equivalent += nonredundant.len() as u64;
        if nonredundant.is_empty() {
            continue;
        }

        // Stage 3: one batched conflict call over the survivors.
        stats.filter_calls += 1;
        let surviving = apply_filter(
            gw,
            model_id,
            TemplateId::ConflictFilter,
            "conflict_filter",
            &others,
            nonredundant,
            |r| r.conflicting,
            &mut warnings,
        );
        stats.subs_surviving += surviving.len() as u64;
        if surviving.is_empty() {
            continue;
        }

        // Stage 4: one batched re-judge of the survivors.
        stats.rejudge_calls += 1;
        let rejudged = match criteria::judge_criteria(
            gw,
            model_id,
            instance,
            &surviving,
            JudgingOrder::Forward,
            guidance,
            judging_mode,
            "criterion_rejudge",
        ) {
            Ok(out) => {
                warnings.extend(out.warnings);
                out.judgments
            }
            Err(e) => {
                warnings.push(Warning::new(
                    "criterion_rejudge",
                    format!("re-judge call failed; sub-criteria kept as insufficient evidence: {e}"),
                ));
                criteria::degraded_judgments(&surviving, JudgingOrder::Forward)
            }
        };
        for j in rejudged {
            verdicts.insert(j.criterion_id.clone(), j);
        }

        // Retire each parent with at least one surviving child; append the
        // children to the active set.
        let surviving_parents: BTreeSet<String> =
            surviving.iter().filter_map(|c| c.parent_id.clone()).collect();
        for c in &surviving {
            lineage.insert(c.id.clone(), c.parent_id.clone());
        }
        active.retain(|c| {
            if surviving_parents.contains(&c.id) {
                retired.push(c.clone());
                verdicts.remove(&c.id);
                false
            } else {
                true
            }
        });
        stats.parents_retired += surviving_parents.len() as u64;
        active.extend(surviving);
    }

    let judgments = active
        .iter()
        .map(|c| {
            verdicts
                .get(&c.id)
                .cloned()
                .unwrap_or_else(|| criteria::degraded_judgment(&c.id, JudgingOrder::Forward))
        })
        .collect();
    RefinementOutcome { criteria: active, judgments, retired, stats, warnings }
}

fn depth_of(lineage: &BTreeMap<String, Option<String>>, id: &str) -> u32 {
    let mut depth = 0;
    let mut current = id;
    while let Some(Some(parent)) = lineage.get(current) {
        depth += 1;
        current = parent;
        if depth > 64 {
            break; // defensive: malformed cycles must not hang the pipeline
        }
    }
    depth
}

fn decompose(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
    tied: &[Criterion],
    others: &[&Criterion],
) -> Result<Vec<WireDecomposition>, GatewayError> {
    let others_owned: Vec<Criterion> = others.iter().map(|c| (*c).clone()).collect();
    let mut bindings = criteria::common_pairwise_bindings(instance, &StageGuidance::none());
    bindings.remove("GUIDANCE");
    bindings.remove("CATEGORY_GUIDANCE");
    bindings.insert("TIED_CRITERIA", criteria_list_json(tied));
    bindings.insert("OTHER_CRITERIA", criteria_list_json(&others_owned));
    let prompt = prompts::render(TemplateId::TieDecomposition, &bindings)
        .map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
    let req = ChatRequest::new(model_id, "tie_decomposition", prompt)
        .with_schema(TemplateId::TieDecomposition.schema_id());
    let result = gw.complete_structured(&req)?;
    let wire: WireDecompositions =
        serde_json::from_value(result.value).map_err(|e| GatewayError::Unparseable(e.to_string()))?;
    Ok(wire.decompositions)
}

/// Run one batched filter call and return the candidates it kept.
///
/// Conservative on every failure mode: a failed call, a missing entry, or a
/// malformed flag drops the affected candidates.
#[allow(clippy::too_many_arguments)]
fn apply_filter(
    gw: &Gateway,
    model_id: &str,
    template: TemplateId,
    tag: &str,
    existing: &[&Criterion],
    candidates: Vec<Criterion>,
    flag: impl Fn(&WireFilterResult) -> Option<bool>,
    warnings: &mut Vec<Warning>,
) -> Vec<Criterion> {
    let bindings = BTreeMap::from([
        ("EXISTING_RUBRICS", existing_rubrics_json(existing)),
        ("NEW_RUBRICS", new_rubrics_json(&candidates)),
    ]);
    let prompt = match prompts::render(template, &bindings) {
        Ok(p) => p,
        Err(e) => {
            warnings.push(Warning::new(tag, format!("prompt render failed; dropping all candidates: {e}")));
            return Vec::new();
        }
    };
    let req = ChatRequest::new(model_id, tag, prompt).with_schema(template.schema_id());
    let wire: WireFilterResults = match gw
        .complete_structured(&req)
        .and_then(|r| serde_json::from_value(r.value).map_err(|e| GatewayError::Unparseable(e.to_string())))
    {
        Ok(w) => w,
        Err(e) => {
            warnings.push(Warning::new(tag, format!("filter call failed; dropping all candidates: {e}")));
            return Vec::new();
        }
    };

    let mut flagged: BTreeMap<&str, bool> = BTreeMap::new();
    let known: BTreeSet<&str> = candidates.iter().map(|c| c.id.as_str()).collect();
    for r in &wire.results {
        match (known.contains(r.id.as_str()), flagged.contains_key(r.id.as_str())) {
            (false, _) => {
                warnings.push(Warning::new(tag, format!("result for unknown id {:?} dropped", r.id)));
            }
            (true, true) => {
                warnings.push(Warning::new(tag, format!("duplicate result for id {:?}; keeping the first", r.id)));
            }
            (true, false) => match flag(r) {
                Some(f) => {
                    flagged.insert(r.id.as_str(), f);
                }
                None => {
                    warnings.push(Warning::new(
                        tag,
                        format!("result for {:?} lacks the filter flag; dropping it", r.id),
                    ));
                    flagged.insert(r.id.as_str(), true);
                }
            },
        }
    }

    candidates
        .iter()
        .filter(|c| match flagged.get(c.id.as_str()) {
            Some(f) => !*f,
            None => {
                warnings.push(Warning::new(
                    tag,
                    format!("no filter result for {:?}; conservatively dropped", c.id),
                ));
                false
            }
        })
        .cloned()
        .collect()
}
