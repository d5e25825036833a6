//! Pipeline execution over a dataset: per-instance orchestration, an
//! instance-level worker pool, deterministic result logs, and run-level
//! reports (call-savings accounting and position-bias statistics).
//!
//! Results deliberately carry no wall-clock fields, are sorted by instance
//! id, and serialize with stable field order, so a repeated run over the
//! same inputs produces a byte-identical `results.jsonl`.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::aggregate;
use crate::criteria;
use crate::gateway::Gateway;
use crate::guidance::{self, GuidanceArtifact, PipelineStage};
use crate::harness::config::{Config, Method, PipelineSection, PointwiseWeighting};
use crate::model::{
    Criterion, CriterionJudgment, Instance, JudgingOrder, PreferenceLabel, TaskCategory, Verdict,
    Warning,
};
use crate::prompts::StageGuidance;
use crate::refine::{self, RefinementStats};
use crate::scf::{self, ScfDropped, ScfOutcome, VerdictDistribution};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("results parse: {0}")]
    Parse(String),
    #[error("no judgments available for the requested bias statistic")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Ok,
    Failed,
}

/// Stage-level exchange counts for one instance (structured repair rounds
/// included where the stage API reports them).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCallCounters {
    pub generation: u64,
    pub forward_judging: u64,
    pub backward_judging: u64,
    pub refinement: u64,
    pub final_judge: u64,
    pub total: u64,
}

/// The full per-instance trace of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub instance_id: String,
    pub category: TaskCategory,
    pub method: String,
    pub status: InstanceStatus,
    pub prediction: Option<PreferenceLabel>,
    pub reasoning: String,
    pub used_fallback: bool,
    pub criteria: Vec<Criterion>,
    pub retired_criteria: Vec<Criterion>,
    pub forward_judgments: Vec<CriterionJudgment>,
    pub backward_judgments: Vec<CriterionJudgment>,
    pub kept_evidence: Vec<CriterionJudgment>,
    pub scf_applied: bool,
    pub scf_dropped: Vec<ScfDropped>,
    pub refinement: Option<RefinementStats>,
    pub calls: StageCallCounters,
    pub warnings: Vec<Warning>,
}

impl PipelineResult {
    fn skeleton(instance: &Instance, method: &str) -> PipelineResult {
        PipelineResult {
            instance_id: instance.id.clone(),
            category: instance.category,
            method: method.to_string(),
            status: InstanceStatus::Ok,
            prediction: None,
            reasoning: String::new(),
            used_fallback: false,
            criteria: Vec::new(),
            retired_criteria: Vec::new(),
            forward_judgments: Vec::new(),
            backward_judgments: Vec::new(),
            kept_evidence: Vec::new(),
            scf_applied: false,
            scf_dropped: Vec::new(),
            refinement: None,
            calls: StageCallCounters::default(),
            warnings: Vec::new(),
        }
    }
}

/// The method label recorded in results (distinguishes the pointwise
/// aggregation variants).
pub fn method_label(pipeline: &PipelineSection) -> &'static str {
    match (pipeline.method, pipeline.pointwise_weighting) {
        (Method::Pairwise, _) => "pairwise",
        (Method::Monolithic, _) => "monolithic",
        (Method::Pointwise, PointwiseWeighting::Uniform) => "pointwise_uniform",
        (Method::Pointwise, PointwiseWeighting::Llm) => "pointwise_weighted",
    }
}

fn guidance_for(
    pipeline: &PipelineSection,
    artifact: Option<&GuidanceArtifact>,
    stage: PipelineStage,
    category: TaskCategory,
) -> StageGuidance {
    if !pipeline.stage_in_mask(stage) {
        return StageGuidance::none();
    }
    guidance::stage_guidance(artifact, pipeline.guidance_mode, stage, category)
}

/// Generate criteria, or resolve the configured fallback. `Ok(criteria)`
/// continues the pipeline; `Err(result)` is the finished (failed or
/// fallback) record.
fn generate_or_fallback(
    gw: &Gateway,
    config: &Config,
    artifact: Option<&GuidanceArtifact>,
    instance: &Instance,
    result: &mut PipelineResult,
) -> Result<Vec<Criterion>, ()> {
    let pipeline = &config.pipeline;
    let gen_guidance =
        guidance_for(pipeline, artifact, PipelineStage::CriterionGeneration, instance.category);
    match criteria::generate_criteria(
        gw,
        config.gateway.models.criterion_generation(),
        instance,
        &gen_guidance,
    ) {
        Ok(gen) => {
            result.calls.generation = gen.model_calls;
            result.warnings.extend(gen.warnings);
            Ok(gen.criteria)
        }
        Err(e) => {
            result.warnings.push(Warning::new(
                "criterion_generation",
                format!("criterion generation failed: {e}"),
            ));
            if pipeline.fallback_monolithic {
                let final_guidance = guidance_for(
                    pipeline,
                    artifact,
                    PipelineStage::FinalJudging,
                    instance.category,
                );
                let (decision, warnings) = aggregate::monolithic_judge(
                    gw,
                    config.gateway.models.monolithic(),
                    instance,
                    &final_guidance,
                );
                result.warnings.extend(warnings);
                result.prediction = Some(decision.label);
                result.reasoning = decision.reasoning;
                result.used_fallback = true;
                result.calls.final_judge = 1;
            } else {
                result.status = InstanceStatus::Failed;
            }
            Err(())
        }
    }
}

fn run_pairwise(
    gw: &Gateway,
    config: &Config,
    artifact: Option<&GuidanceArtifact>,
    instance: &Instance,
) -> PipelineResult {
    let pipeline = &config.pipeline;
    let models = &config.gateway.models;
    let mut result = PipelineResult::skeleton(instance, method_label(pipeline));

    let Ok(mut criteria) = generate_or_fallback(gw, config, artifact, instance, &mut result)
    else {
        return result;
    };

    let judge_guidance =
        guidance_for(pipeline, artifact, PipelineStage::CriterionJudging, instance.category);
    let mut forward = match criteria::judge_criteria(
        gw,
        models.criterion_judging(),
        instance,
        &criteria,
        JudgingOrder::Forward,
        &judge_guidance,
        pipeline.judging_mode,
        "criterion_judging_forward",
    ) {
        Ok(outcome) => {
            result.calls.forward_judging = outcome.model_calls;
            result.warnings.extend(outcome.warnings);
            outcome.judgments
        }
        Err(e) => {
            result.warnings.push(Warning::new(
                "criterion_judging_forward",
                format!("batched forward judging failed ({e}); all verdicts degraded"),
            ));
            criteria::degraded_judgments(&criteria, JudgingOrder::Forward)
        }
    };

    if pipeline.btcr_enabled {
        let outcome = refine::refine_ties(
            gw,
            models.refinement(),
            instance,
            &criteria,
            &forward,
            &judge_guidance,
            pipeline.judging_mode,
            &pipeline.refinement_config(),
        );
        result.calls.refinement = outcome.stats.decomposition_calls
            + outcome.stats.filter_calls
            + outcome.stats.rejudge_calls;
        criteria = outcome.criteria;
        forward = outcome.judgments;
        result.retired_criteria = outcome.retired;
        result.refinement = Some(outcome.stats);
        result.warnings.extend(outcome.warnings);
    }

    let scf_outcome: ScfOutcome = if pipeline.scf_enabled {
        match criteria::judge_criteria(
            gw,
            models.criterion_judging(),
            instance,
            &criteria,
            JudgingOrder::Backward,
            &judge_guidance,
            pipeline.judging_mode,
            "criterion_judging_backward",
        ) {
            Ok(outcome) => {
                result.calls.backward_judging = outcome.model_calls;
                result.warnings.extend(outcome.warnings.clone());
                result.backward_judgments = outcome.judgments.clone();
                scf::scf_filter(&forward, &outcome.judgments)
            }
            Err(e) => scf::skip_scf(&forward, &format!("backward judging failed: {e}")),
        }
    } else {
        scf::skip_scf(&forward, "swap-consistency filtering disabled by config")
    };
    // With SCF disabled the skip is expected: drop the informational warning.
    if pipeline.scf_enabled {
        result.warnings.extend(scf_outcome.warnings.clone());
        result.scf_applied = scf_outcome.scf_applied;
        result.scf_dropped = scf_outcome.dropped.clone();
    }
    result.forward_judgments = forward;
    result.kept_evidence = scf_outcome.kept;

    let final_guidance =
        guidance_for(pipeline, artifact, PipelineStage::FinalJudging, instance.category);
    let (decision, warnings) = aggregate::final_judge(
        gw,
        models.final_judge(),
        instance,
        &criteria,
        &result.kept_evidence,
        &final_guidance,
    );
    result.calls.final_judge = 1;
    result.warnings.extend(warnings);
    result.prediction = Some(decision.label);
    result.reasoning = decision.reasoning;
    result.used_fallback = decision.used_fallback;
    result.criteria = criteria;
    result
}

fn run_pointwise(
    gw: &Gateway,
    config: &Config,
    artifact: Option<&GuidanceArtifact>,
    instance: &Instance,
) -> PipelineResult {
    let pipeline = &config.pipeline;
    let models = &config.gateway.models;
    let mut result = PipelineResult::skeleton(instance, method_label(pipeline));

    let Ok(criteria) = generate_or_fallback(gw, config, artifact, instance, &mut result) else {
        return result;
    };

    let judge_guidance =
        guidance_for(pipeline, artifact, PipelineStage::CriterionJudging, instance.category);
    let outcome =
        aggregate::pointwise_judge(gw, models.pointwise(), instance, &criteria, &judge_guidance);
    result.calls.forward_judging = 2; // one call per side
    result.warnings.extend(outcome.warnings.clone());

    let weights = match pipeline.pointwise_weighting {
        PointwiseWeighting::Uniform => None,
        PointwiseWeighting::Llm => {
            let (weights, warnings) =
                aggregate::elicit_weights(gw, models.weighting(), instance, &criteria);
            result.warnings.extend(warnings);
            Some(weights)
        }
    };
    let label = aggregate::pointwise_aggregate(&criteria, &outcome, weights.as_ref());
    result.reasoning = format!(
        "pointwise satisfied-criterion comparison: A={}, B={} ({})",
        outcome.yes_a.len(),
        outcome.yes_b.len(),
        match pipeline.pointwise_weighting {
            PointwiseWeighting::Uniform => "uniform weights",
            PointwiseWeighting::Llm => "model-elicited weights",
        },
    );
    result.prediction = Some(label);
    result.criteria = criteria;
    result
}

fn run_monolithic(
    gw: &Gateway,
    config: &Config,
    artifact: Option<&GuidanceArtifact>,
    instance: &Instance,
) -> PipelineResult {
    let pipeline = &config.pipeline;
    let mut result = PipelineResult::skeleton(instance, method_label(pipeline));
    let final_guidance =
        guidance_for(pipeline, artifact, PipelineStage::FinalJudging, instance.category);
    let (decision, warnings) = aggregate::monolithic_judge(
        gw,
        config.gateway.models.monolithic(),
        instance,
        &final_guidance,
    );
    result.calls.final_judge = 1;
    result.warnings.extend(warnings);
    result.prediction = Some(decision.label);
    result.reasoning = decision.reasoning;
    result.used_fallback = decision.used_fallback;
    result
}

/// Run one instance end to end. Total: every failure path ends in a record,
/// never a panic or error.
pub fn run_instance(
    gw: &Gateway,
    config: &Config,
    artifact: Option<&GuidanceArtifact>,
    instance: &Instance,
) -> PipelineResult {
    let mut result = match config.pipeline.method {
        Method::Pairwise => run_pairwise(gw, config, artifact, instance),
        Method::Pointwise => run_pointwise(gw, config, artifact, instance),
        Method::Monolithic => run_monolithic(gw, config, artifact, instance),
    };
    result.calls.total = result.calls.generation
        + result.calls.forward_judging
        + result.calls.backward_judging
        + result.calls.refinement
        + result.calls.final_judge;
    result
}

/// Run the pipeline over a set of instances with an instance-level worker
/// pool. Per-instance failures isolate; the returned results are sorted by
/// instance id.
pub fn run_pipeline(
    gw: &Gateway,
    instances: &[Instance],
    config: &Config,
    artifact: Option<&GuidanceArtifact>,
) -> Vec<PipelineResult> {
    let n = instances.len();
    if n == 0 {
        return Vec::new();
    }
    let workers = config.harness.workers.clamp(1, n);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<PipelineResult>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= n {
                    break;
                }
                let result = run_instance(gw, config, artifact, &instances[idx]);
                *slots[idx].lock().unwrap() = Some(result);
            });
        }
    });
    let mut results: Vec<PipelineResult> = slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot filled"))
        .collect();
    results.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    results
}

// ─── Result persistence ─────────────────────────────────────────────────────

/// Write results as JSONL, sorted by instance id: byte-identical for
/// identical results regardless of production order.
pub fn write_results(results: &[PipelineResult], path: &Path) -> Result<(), RunnerError> {
    let mut sorted: Vec<&PipelineResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut body = String::new();
    for r in sorted {
        body.push_str(&serde_json::to_string(r).expect("result serializes"));
        body.push('\n');
    }
    std::fs::write(path, body)?;
    Ok(())
}

pub fn load_results(path: &Path) -> Result<Vec<PipelineResult>, RunnerError> {
    let raw = std::fs::read_to_string(path)?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RunnerError::Parse(e.to_string())))
        .collect()
}

// ─── Savings report (batched vs plain-loop refinement accounting) ───────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub instance_id: String,
    pub plain_loop_calls: u64,
    pub batched_calls: u64,
    pub saved_calls: u64,
    pub savings_percent: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub rows: Vec<SavingsRow>,
    pub total_plain_loop: u64,
    pub total_batched: u64,
    pub total_saved: u64,
    pub total_savings_percent: f64,
}

/// Per-instance and aggregate batched-vs-plain-loop call accounting, from
/// each result's refinement stats.
pub fn savings_report(results: &[PipelineResult]) -> SavingsReport {
    let mut report = SavingsReport::default();
    for r in results {
        let Some(stats) = &r.refinement else { continue };
        let plain = stats.plain_loop_equivalent;
        let batched = stats.batched_equivalent();
        report.rows.push(SavingsRow {
            instance_id: r.instance_id.clone(),
            plain_loop_calls: plain,
            batched_calls: batched,
            saved_calls: plain.saturating_sub(batched),
            savings_percent: refine::savings_percent(plain, batched),
        });
        report.total_plain_loop += plain;
        report.total_batched += batched;
    }
    report.total_saved = report.total_plain_loop.saturating_sub(report.total_batched);
    report.total_savings_percent =
        refine::savings_percent(report.total_plain_loop, report.total_batched);
    report
}

// ─── Bias statistics ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasLevel {
    /// Count every criterion verdict.
    CriterionLevel,
    /// One vote per instance: strict majority of its criterion verdicts.
    SampleLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasStage {
    /// Forward verdicts after refinement, before swap-consistency filtering.
    PreScf,
    /// The kept evidence set.
    PostScf,
}

/// One row of the position-bias table: A/B/Tie shares of decided verdicts,
/// the A−B skew in percentage points, and the A:B ratio (null when no B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasStats {
    pub level: BiasLevel,
    pub stage: BiasStage,
    pub count_a: u64,
    pub count_b: u64,
    pub count_tie: u64,
    /// Excluded from the decided percentages, reported separately.
    pub count_insufficient: u64,
    pub pct_a: f64,
    pub pct_b: f64,
    pub pct_tie: f64,
    pub skew_pp: f64,
    pub ab_ratio: Option<f64>,
}

fn stage_judgments<'a>(result: &'a PipelineResult, stage: BiasStage) -> &'a [CriterionJudgment] {
    match stage {
        BiasStage::PreScf => &result.forward_judgments,
        BiasStage::PostScf => &result.kept_evidence,
    }
}

/// Position-bias statistics over a run's judgment sets.
pub fn bias_stats(
    results: &[PipelineResult],
    level: BiasLevel,
    stage: BiasStage,
) -> Result<BiasStats, RunnerError> {
    let mut dist = VerdictDistribution::default();
    for result in results {
        let judgments = stage_judgments(result, stage);
        match level {
            BiasLevel::CriterionLevel => {
                for j in judgments {
                    dist.observe(j.verdict);
                }
            }
            BiasLevel::SampleLevel => {
                if judgments.is_empty() {
                    continue;
                }
                let verdict = match aggregate::majority_fallback(judgments) {
                    PreferenceLabel::A => Verdict::A,
                    PreferenceLabel::B => Verdict::B,
                    PreferenceLabel::Tie => Verdict::Tie,
                };
                dist.observe(verdict);
            }
        }
    }
    if dist.decided() + dist.insufficient == 0 {
        return Err(RunnerError::EmptyInput);
    }
    let ratio = dist.a_b_ratio();
    Ok(BiasStats {
        level,
        stage,
        count_a: dist.a,
        count_b: dist.b,
        count_tie: dist.tie,
        count_insufficient: dist.insufficient,
        pct_a: dist.pct_a(),
        pct_b: dist.pct_b(),
        pct_tie: dist.pct_tie(),
        skew_pp: dist.skew_pp(),
        ab_ratio: ratio.is_finite().then_some(ratio),
    })
}

// ─── Run report ─────────────────────────────────────────────────────────────

/// Criterion-pool accounting across a run (both of the published counting
/// conventions, reported side by side).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolAccounting {
    pub total_criteria: u64,
    pub kept_criteria: u64,
    pub dropped_criteria: u64,
    /// Order-sensitive judgments removed, counting both directions of each
    /// dropped criterion.
    pub position_sensitive_judgments: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub instances: u64,
    pub failed: u64,
    pub fallbacks: u64,
    pub warning_count: u64,
    pub savings: SavingsReport,
    pub pool: PoolAccounting,
    /// Bias rows for every (level, stage) combination that had data.
    pub bias: Vec<BiasStats>,
}

/// Aggregate a finished run into its report.
pub fn run_report(results: &[PipelineResult]) -> RunReport {
    let mut pool = PoolAccounting::default();
    for r in results {
        if r.scf_applied {
            let kept = r.kept_evidence.len() as u64;
            let dropped = r.scf_dropped.len() as u64;
            pool.total_criteria += kept + dropped;
            pool.kept_criteria += kept;
            pool.dropped_criteria += dropped;
            pool.position_sensitive_judgments += 2 * dropped;
        }
    }
    let mut bias = Vec::new();
    for level in [BiasLevel::CriterionLevel, BiasLevel::SampleLevel] {
        for stage in [BiasStage::PreScf, BiasStage::PostScf] {
            if let Ok(stats) = bias_stats(results, level, stage) {
                bias.push(stats);
            }
        }
    }
    RunReport {
        method: results.first().map(|r| r.method.clone()).unwrap_or_default(),
        instances: results.len() as u64,
        failed: results.iter().filter(|r| r.status == InstanceStatus::Failed).count() as u64,
        fallbacks: results.iter().filter(|r| r.used_fallback).count() as u64,
        warning_count: results.iter().map(|r| r.warnings.len() as u64).sum(),
        savings: savings_report(results),
        pool,
        bias,
    }
}

/// Predictions map + failed-id set, the inputs scoring needs.
pub fn predictions(
    results: &[PipelineResult],
) -> (std::collections::BTreeMap<String, PreferenceLabel>, BTreeSet<String>) {
    let mut map = std::collections::BTreeMap::new();
    let mut failed = BTreeSet::new();
    for r in results {
        match r.prediction {
            Some(label) => {
                map.insert(r.instance_id.clone(), label);
            }
            None => {
                failed.insert(r.instance_id.clone());
            }
        }
    }
    (map, failed)
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockBackend, MockScript};
    use crate::gateway::GatewayConfig;
    use crate::model::{Aspect, Confidence, EvidenceBundle};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn instance(id: &str) -> Instance {
        Instance {
            id: id.into(),
            instruction: "draw a spiral".into(),
            response_a: "ALPHA".into(),
            response_b: "BETA".into(),
            evidence: EvidenceBundle::default(),
            category: TaskCategory::WebDevelopment,
            human_overall: Some(PreferenceLabel::A),
            human_aspect_votes: BTreeMap::new(),
        }
    }

    const GENERATION: &str = r#"{"criteria":[
        {"id":"g1","criterion":"Which response renders the spiral correctly?","rationale":"r","evidence_basis":["code"]},
        {"id":"g2","criterion":"Which response is more efficient?","rationale":"r","evidence_basis":["code"]}]}"#;

    const FORWARD: &str = r#"{"criterion_results":[
        {"criterion_id":"c1","judgment":"A","confidence":"high","rationale":"x","mapped_aspect":"correctness"},
        {"criterion_id":"c2","judgment":"tie","confidence":"low","rationale":"x","mapped_aspect":"efficiency"}]}"#;

    const DECOMPOSITION: &str = r#"{"decompositions":[{"parent_id":"c2","sub_criteria":[
        {"criterion":"Which response allocates less memory?","rationale":"r","evidence_basis":["code"]},
        {"criterion":"Which response renders faster?","rationale":"r","evidence_basis":["execution_output"]}]}]}"#;

    const REDUNDANCY: &str = r#"{"results":[{"id":"t1","redundant":false},{"id":"t2","redundant":false}]}"#;
    const CONFLICT: &str = r#"{"results":[{"id":"t1","conflicting":false},{"id":"t2","conflicting":false}]}"#;

    const REJUDGE: &str = r#"{"criterion_results":[
        {"criterion_id":"t1","judgment":"A","confidence":"medium","rationale":"x","mapped_aspect":"efficiency"},
        {"criterion_id":"t2","judgment":"B","confidence":"medium","rationale":"x","mapped_aspect":"efficiency"}]}"#;

    const BACKWARD: &str = r#"{"criterion_results":[
        {"criterion_id":"c1","judgment":"B","confidence":"high","rationale":"x","mapped_aspect":"correctness"},
        {"criterion_id":"t1","judgment":"B","confidence":"medium","rationale":"x","mapped_aspect":"efficiency"},
        {"criterion_id":"t2","judgment":"B","confidence":"medium","rationale":"x","mapped_aspect":"efficiency"}]}"#;

    const FINAL: &str = r#"{"Overall":{"winner":"A","reasoning":"order-consistent evidence favors A"}}"#;
    const MONO: &str = r#"{"Overall":{"winner":"B","reasoning":"single-call judgment"}}"#;

    fn full_script() -> MockScript {
        MockScript::new()
            .rule(Some("criterion_generation"), None, GENERATION)
            .rule(Some("criterion_judging_forward"), None, FORWARD)
            .rule(Some("tie_decomposition"), None, DECOMPOSITION)
            .rule(Some("redundancy_filter"), None, REDUNDANCY)
            .rule(Some("conflict_filter"), None, CONFLICT)
            .rule(Some("criterion_rejudge"), None, REJUDGE)
            .rule(Some("criterion_judging_backward"), None, BACKWARD)
            .rule(Some("final_judge"), None, FINAL)
            .rule(Some("monolithic_judge"), None, MONO)
    }

    fn gw(script: MockScript) -> Gateway {
        let cfg = GatewayConfig { backoff_ms: 0, ..GatewayConfig::default() };
        Gateway::ephemeral(Arc::new(MockBackend::new(script)), cfg)
    }

    fn config() -> Config {
        let mut cfg = Config::default();
        cfg.harness.workers = 2;
        cfg
    }

    #[test]
    fn test_full_pairwise_flow() {
        let gw = gw(full_script());
        let result = run_instance(&gw, &config(), None, &instance("i1"));
        assert_eq!(result.status, InstanceStatus::Ok);
        assert_eq!(result.prediction, Some(PreferenceLabel::A));
        assert!(!result.used_fallback);
        // c2 retired and replaced by t1/t2; c1 survives.
        let ids: Vec<&str> = result.criteria.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["c1", "t1", "t2"]);
        assert_eq!(result.retired_criteria.len(), 1);
        assert_eq!(result.retired_criteria[0].id, "c2");
        // Backward raw B = canonical A: c1 (fwd A) kept, t1 (fwd A) kept,
        // t2 (fwd B) dropped as order-sensitive.
        assert!(result.scf_applied);
        let kept_ids: Vec<&str> =
            result.kept_evidence.iter().map(|j| j.criterion_id.as_str()).collect();
        assert_eq!(kept_ids, vec!["c1", "t1"]);
        assert_eq!(result.scf_dropped.len(), 1);
        assert_eq!(result.scf_dropped[0].criterion_id, "t2");
        let stats = result.refinement.as_ref().expect("refinement ran");
        assert_eq!(stats.parents_retired, 1);
        assert!(result.calls.total >= 7, "gen + fwd + 4 refinement + bwd + final");
    }

    #[test]
    fn test_ablation_flags_change_stage_set() {
        let mut cfg = config();
        cfg.pipeline.btcr_enabled = false;
        cfg.pipeline.scf_enabled = false;
        let gw = gw(full_script());
        let result = run_instance(&gw, &cfg, None, &instance("i1"));
        assert_eq!(result.status, InstanceStatus::Ok);
        assert!(result.refinement.is_none(), "no refinement stats without BTCR");
        assert!(!result.scf_applied);
        assert!(result.backward_judgments.is_empty());
        // Without SCF every forward verdict is evidence (c2's tie included).
        assert_eq!(result.kept_evidence.len(), 2);
        let tags: BTreeSet<String> =
            gw.store().transcript().iter().map(|e| e.request_tag.clone()).collect();
        assert_eq!(
            tags,
            BTreeSet::from([
                "criterion_generation".to_string(),
                "criterion_judging_forward".to_string(),
                "final_judge".to_string(),
            ]),
            "reduced flow touches exactly three stages"
        );
    }

    #[test]
    fn test_generation_failure_marks_failed_without_fallback() {
        // No generation rule: that call fails. (Plain default would also
        // fail schema validation, but absence is the simplest failure.)
        let script = MockScript::new().rule(Some("monolithic_judge"), None, MONO);
        let gw = gw(script);
        let result = run_instance(&gw, &config(), None, &instance("i1"));
        assert_eq!(result.status, InstanceStatus::Failed);
        assert_eq!(result.prediction, None);
        assert!(result.criteria.is_empty());
    }

    #[test]
    fn test_generation_failure_with_fallback_monolithic() {
        let script = MockScript::new().rule(Some("monolithic_judge"), None, MONO);
        let gw = gw(script);
        let mut cfg = config();
        cfg.pipeline.fallback_monolithic = true;
        let result = run_instance(&gw, &cfg, None, &instance("i1"));
        assert_eq!(result.status, InstanceStatus::Ok);
        assert_eq!(result.prediction, Some(PreferenceLabel::B));
        assert!(result.used_fallback);
        assert!(result.warnings.iter().any(|w| w.message.contains("generation failed")));
    }

    #[test]
    fn test_backward_failure_degrades_to_skip_scf() {
        let script = MockScript::new()
            .rule(Some("criterion_generation"), None, GENERATION)
            .rule(Some("criterion_judging_forward"), None, FORWARD)
            .rule(Some("tie_decomposition"), None, DECOMPOSITION)
            .rule(Some("redundancy_filter"), None, REDUNDANCY)
            .rule(Some("conflict_filter"), None, CONFLICT)
            .rule(Some("criterion_rejudge"), None, REJUDGE)
            // no backward rule: backward judging fails
            .rule(Some("final_judge"), None, FINAL);
        let gw = gw(script);
        let result = run_instance(&gw, &config(), None, &instance("i1"));
        assert_eq!(result.status, InstanceStatus::Ok);
        assert!(!result.scf_applied, "backward failure disables SCF");
        assert_eq!(result.kept_evidence.len(), result.forward_judgments.len());
        assert!(result.warnings.iter().any(|w| w.message.contains("backward")));
    }

    #[test]
    fn test_monolithic_method() {
        let gw = gw(full_script());
        let mut cfg = config();
        cfg.pipeline.method = Method::Monolithic;
        let result = run_instance(&gw, &cfg, None, &instance("i1"));
        assert_eq!(result.method, "monolithic");
        assert_eq!(result.prediction, Some(PreferenceLabel::B));
        assert!(result.criteria.is_empty());
        assert_eq!(result.calls.total, 1);
        let tags: BTreeSet<String> =
            gw.store().transcript().iter().map(|e| e.request_tag.clone()).collect();
        assert_eq!(tags, BTreeSet::from(["monolithic_judge".to_string()]));
    }

    #[test]
    fn test_pointwise_method_uniform() {
        let pointwise_a = r#"{"criterion_results":[
            {"criterion_id":"c1","decision":"YES","rationale":"x"},
            {"criterion_id":"c2","decision":"YES","rationale":"x"}]}"#;
        let pointwise_b = r#"{"criterion_results":[
            {"criterion_id":"c1","decision":"NO","rationale":"x"},
            {"criterion_id":"c2","decision":"YES","rationale":"x"}]}"#;
        let script = MockScript::new()
            .rule(Some("criterion_generation"), None, GENERATION)
            .rule(Some("pointwise_judging_a"), None, pointwise_a)
            .rule(Some("pointwise_judging_b"), None, pointwise_b);
        let gw = gw(script);
        let mut cfg = config();
        cfg.pipeline.method = Method::Pointwise;
        let result = run_instance(&gw, &cfg, None, &instance("i1"));
        assert_eq!(result.method, "pointwise_uniform");
        assert_eq!(result.prediction, Some(PreferenceLabel::A), "2 YES beats 1 YES");
        assert!(result.reasoning.contains("A=2, B=1"));
        let tags: BTreeSet<String> =
            gw.store().transcript().iter().map(|e| e.request_tag.clone()).collect();
        assert!(!tags.contains("final_judge"), "pointwise flow has no final synthesis call");
        assert!(!tags.contains("criterion_judging_forward"));
    }

    #[test]
    fn test_run_pipeline_sorted_and_isolated() {
        // i2's generation succeeds; i1 uses a prompt-matched rule to fail.
        let script = MockScript::new()
            .rule(None, Some("draw a circle"), "not json")
            .rule(Some("criterion_generation"), None, GENERATION)
            .rule(Some("criterion_judging_forward"), None, FORWARD)
            .rule(Some("tie_decomposition"), None, DECOMPOSITION)
            .rule(Some("redundancy_filter"), None, REDUNDANCY)
            .rule(Some("conflict_filter"), None, CONFLICT)
            .rule(Some("criterion_rejudge"), None, REJUDGE)
            .rule(Some("criterion_judging_backward"), None, BACKWARD)
            .rule(Some("final_judge"), None, FINAL);
        let gw = gw(script);
        let mut failing = instance("i9");
        failing.instruction = "draw a circle".into();
        let instances = vec![failing, instance("i1")];
        let results = run_pipeline(&gw, &instances, &config(), None);
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].instance_id, "i1", "sorted by id");
        assert_eq!(results[0].status, InstanceStatus::Ok);
        assert_eq!(results[1].instance_id, "i9");
        assert_eq!(results[1].status, InstanceStatus::Failed, "failure isolated");
    }

    #[test]
    fn test_results_round_trip_and_determinism() {
        let gw1 = gw(full_script());
        let instances = vec![instance("i1"), instance("i2")];
        let results = run_pipeline(&gw1, &instances, &config(), None);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("r1.jsonl");
        let p2 = dir.path().join("r2.jsonl");
        write_results(&results, &p1).unwrap();

        let gw2 = gw(full_script());
        let again = run_pipeline(&gw2, &instances, &config(), None);
        write_results(&again, &p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "two runs, byte-identical logs"
        );
        let loaded = load_results(&p1).unwrap();
        assert_eq!(loaded, results);
    }

    fn judgment(id: &str, verdict: Verdict) -> CriterionJudgment {
        CriterionJudgment {
            criterion_id: id.into(),
            verdict,
            confidence: Confidence::High,
            rationale: "x".into(),
            evidence_used: Vec::new(),
            mapped_aspect: Aspect::Correctness,
            order: JudgingOrder::Forward,
        }
    }

    fn synthetic_result(id: &str, forward: Vec<Verdict>, kept: Vec<Verdict>) -> PipelineResult {
        let mut r = PipelineResult::skeleton(&instance(id), "pairwise");
        r.forward_judgments =
            forward.into_iter().enumerate().map(|(i, v)| judgment(&format!("c{i}"), v)).collect();
        r.kept_evidence =
            kept.into_iter().enumerate().map(|(i, v)| judgment(&format!("c{i}"), v)).collect();
        r.scf_applied = true;
        r.scf_dropped = Vec::new();
        r
    }

    #[test]
    fn test_bias_stats_criterion_level() {
        use Verdict::*;
        let results = vec![
            synthetic_result("i1", vec![A, A, B, Tie], vec![A, B]),
            synthetic_result("i2", vec![A, B, InsufficientEvidence], vec![Tie]),
        ];
        let pre = bias_stats(&results, BiasLevel::CriterionLevel, BiasStage::PreScf).unwrap();
        assert_eq!((pre.count_a, pre.count_b, pre.count_tie, pre.count_insufficient), (3, 2, 1, 1));
        assert!((pre.pct_a - 50.0).abs() < 1e-9);
        assert!((pre.skew_pp - (50.0 - 100.0 / 3.0)).abs() < 1e-9);
        assert_eq!(pre.ab_ratio, Some(1.5));

        let post = bias_stats(&results, BiasLevel::CriterionLevel, BiasStage::PostScf).unwrap();
        assert_eq!((post.count_a, post.count_b, post.count_tie), (1, 1, 1));
        assert!((post.skew_pp).abs() < 1e-9);
    }

    #[test]
    fn test_bias_stats_sample_level_majority() {
        use Verdict::*;
        let results = vec![
            synthetic_result("i1", vec![A, A, B], vec![]),   // sample A
            synthetic_result("i2", vec![A, B], vec![]),      // equal → Tie
            synthetic_result("i3", vec![B, B, Tie], vec![]), // sample B
            synthetic_result("i4", vec![], vec![]),          // no judgments → skipped
        ];
        let stats = bias_stats(&results, BiasLevel::SampleLevel, BiasStage::PreScf).unwrap();
        assert_eq!((stats.count_a, stats.count_b, stats.count_tie), (1, 1, 1));
        let empty = bias_stats(&[], BiasLevel::SampleLevel, BiasStage::PreScf);
        assert!(matches!(empty, Err(RunnerError::EmptyInput)));
    }

    #[test]
    fn test_ab_ratio_null_when_no_b() {
        use Verdict::*;
        let results = vec![synthetic_result("i1", vec![A, A, Tie], vec![])];
        let stats = bias_stats(&results, BiasLevel::CriterionLevel, BiasStage::PreScf).unwrap();
        assert_eq!(stats.ab_ratio, None, "A/B ratio undefined without B verdicts");
    }

    #[test]
    fn test_run_report_aggregates() {
        let gw = gw(full_script());
        let results = run_pipeline(&gw, &[instance("i1"), instance("i2")], &config(), None);
        let report = run_report(&results);
        assert_eq!(report.instances, 2);
        assert_eq!(report.failed, 0);
        assert_eq!(report.method, "pairwise");
        // Each instance: 3 active criteria into SCF, 2 kept, 1 dropped.
        assert_eq!(report.pool.total_criteria, 6);
        assert_eq!(report.pool.kept_criteria, 4);
        assert_eq!(report.pool.dropped_criteria, 2);
        assert_eq!(report.pool.position_sensitive_judgments, 4, "both directions counted");
        assert_eq!(report.savings.rows.len(), 2);
        assert!(report.savings.total_plain_loop >= report.savings.total_batched);
        assert_eq!(report.bias.len(), 4, "all four (level, stage) rows have data");
    }

    #[test]
    fn test_predictions_split_ok_and_failed() {
        let script = MockScript::new().rule(Some("monolithic_judge"), None, MONO);
        let gw = gw(script);
        let mut cfg = config();
        let results = run_pipeline(&gw, &[instance("i1")], &cfg, None);
        let (preds, failed) = predictions(&results);
        assert!(preds.is_empty());
        assert_eq!(failed, BTreeSet::from(["i1".to_string()]));

        cfg.pipeline.method = Method::Monolithic;
        let gw = super::tests::gw(full_script());
        let results = run_pipeline(&gw, &[instance("i1")], &cfg, None);
        let (preds, failed) = predictions(&results);
        assert_eq!(preds.len(), 1);
        assert!(failed.is_empty());
    }
}
