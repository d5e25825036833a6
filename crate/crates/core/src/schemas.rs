//! Registered output schemas for structured model calls.
//!
//! Each prompt template that demands JSON output has a named schema here.
//! Validation is typed Rust rather than a schema language: the schemas are
//! few and closed, and hand checks produce precise, repair-friendly error
//! messages ("criteria[3].evidence_basis[1]: unknown token \"logs\"").
//!
//! Validators check shape and closed-enum tokens. Cross-entry semantics
//! (duplicate ids, count ranges, weight sums) belong to the pipeline stages,
//! which degrade instead of rejecting.

use serde_json::Value;

pub const CRITERION_GENERATION: &str = "criterion_generation";
pub const CRITERION_JUDGING: &str = "criterion_judging";
pub const TIE_DECOMPOSITION: &str = "tie_decomposition";
pub const REDUNDANCY_FILTER: &str = "redundancy_filter";
pub const CONFLICT_FILTER: &str = "conflict_filter";
pub const FINAL_JUDGE: &str = "final_judge";
pub const HUMAN_RATIONALE: &str = "human_rationale";
pub const GUIDANCE_SYNTHESIS: &str = "guidance_synthesis";
pub const POINTWISE_JUDGING: &str = "pointwise_judging";
pub const CRITERION_WEIGHTING: &str = "criterion_weighting";

pub const ALL: [&str; 10] = [
    CRITERION_GENERATION,
    CRITERION_JUDGING,
    TIE_DECOMPOSITION,
    REDUNDANCY_FILTER,
    CONFLICT_FILTER,
    FINAL_JUDGE,
    HUMAN_RATIONALE,
    GUIDANCE_SYNTHESIS,
    POINTWISE_JUDGING,
    CRITERION_WEIGHTING,
];

const EVIDENCE_TOKENS: [&str; 4] = ["instruction", "code", "execution_output", "screenshot"];
const VERDICT_TOKENS: [&str; 5] = ["A", "B", "tie", "insufficient_evidence", "insufficient"];
const CONFIDENCE_TOKENS: [&str; 3] = ["high", "medium", "low"];
const ASPECT_TOKENS: [&str; 6] = [
    "correctness",
    "efficiency",
    "explainability",
    "maintainability",
    "ui_ux_design",
    "OTHERS",
];
/// Aspects the rationale reconstruction may name (a superset of the five
/// human-rated aspects).
const RATIONALE_ASPECT_TOKENS: [&str; 7] = [
    "correctness",
    "efficiency",
    "explainability",
    "maintainability",
    "ui_ux_design",
    "visual_output",
    "completeness",
];
const IMPORTANCE_TOKENS: [&str; 4] = ["high", "medium", "low", "not_applicable"];
const CATEGORY_TOKENS: [&str; 6] = [
    "web_development",
    "game_development",
    "creative_coding",
    "diagram_creation",
    "scientific_computing",
    "problem_solving",
];

pub fn is_known(schema_id: &str) -> bool {
    ALL.contains(&schema_id)
}

/// Validate `v` against the named schema; `Err` carries a human-readable
/// violation detail for the repair prompt.
pub fn validate(schema_id: &str, v: &Value) -> Result<(), String> {
    match schema_id {
        CRITERION_GENERATION => criterion_generation(v),
        CRITERION_JUDGING => criterion_judging(v),
        TIE_DECOMPOSITION => tie_decomposition(v),
        REDUNDANCY_FILTER => boolean_filter(v, "redundant"),
        CONFLICT_FILTER => boolean_filter(v, "conflicting"),
        FINAL_JUDGE => final_judge(v),
        HUMAN_RATIONALE => human_rationale(v),
        GUIDANCE_SYNTHESIS => guidance_synthesis(v),
        POINTWISE_JUDGING => pointwise_judging(v),
        CRITERION_WEIGHTING => criterion_weighting(v),
        other => Err(format!("unknown schema id {other:?}")),
    }
}

// ─── Field helpers ──────────────────────────────────────────────────────────

fn obj<'a>(v: &'a Value, at: &str) -> Result<&'a serde_json::Map<String, Value>, String> {
    v.as_object().ok_or_else(|| format!("{at}: expected an object"))
}

fn field<'a>(m: &'a serde_json::Map<String, Value>, at: &str, key: &str) -> Result<&'a Value, String> {
    m.get(key).ok_or_else(|| format!("{at}: missing field {key:?}"))
}

fn string<'a>(m: &serde_json::Map<String, Value>, at: &str, key: &'a str) -> Result<String, String> {
    let v = field(m, at, key)?;
    let s = v.as_str().ok_or_else(|| format!("{at}.{key}: expected a string"))?;
    if s.trim().is_empty() {
        return Err(format!("{at}.{key}: must be non-empty"));
    }
    Ok(s.to_string())
}

fn array<'a>(v: &'a Value, at: &str, key: &str) -> Result<&'a Vec<Value>, String> {
    let m = obj(v, at)?;
    field(m, at, key)?.as_array().ok_or_else(|| format!("{at}.{key}: expected an array"))
}

fn token(m: &serde_json::Map<String, Value>, at: &str, key: &str, allowed: &[&str]) -> Result<(), String> {
    let s = string(m, at, key)?;
    if allowed.contains(&s.as_str()) {
        Ok(())
    } else {
        Err(format!("{at}.{key}: unknown token {s:?} (expected one of {allowed:?})"))
    }
}

fn token_array(m: &serde_json::Map<String, Value>, at: &str, key: &str, allowed: &[&str]) -> Result<(), String> {
    let arr = field(m, at, key)?
        .as_array()
        .ok_or_else(|| format!("{at}.{key}: expected an array"))?;
    for (i, entry) in arr.iter().enumerate() {
        let s = entry
            .as_str()
            .ok_or_else(|| format!("{at}.{key}[{i}]: expected a string"))?;
        if !allowed.contains(&s) {
            return Err(format!("{at}.{key}[{i}]: unknown token {s:?}"));
        }
    }
    Ok(())
}

// ─── Per-schema validators ──────────────────────────────────────────────────

fn criterion_generation(v: &Value) -> Result<(), String> {
    let criteria = array(v, "$", "criteria")?;
    if criteria.is_empty() {
        return Err("$.criteria: must be non-empty".into());
    }
    for (i, c) in criteria.iter().enumerate() {
        let at = format!("criteria[{i}]");
        let m = obj(c, &at)?;
        string(m, &at, "id")?;
        string(m, &at, "criterion")?;
        string(m, &at, "rationale")?;
        token_array(m, &at, "evidence_basis", &EVIDENCE_TOKENS)?;
        let basis = m.get("evidence_basis").and_then(Value::as_array).unwrap();
        if basis.is_empty() {
            return Err(format!("{at}.evidence_basis: must be non-empty"));
        }
    }
    Ok(())
}

fn criterion_judging(v: &Value) -> Result<(), String> {
    let results = array(v, "$", "criterion_results")?;
    for (i, r) in results.iter().enumerate() {
        let at = format!("criterion_results[{i}]");
        let m = obj(r, &at)?;
        string(m, &at, "criterion_id")?;
        token(m, &at, "judgment", &VERDICT_TOKENS)?;
        token(m, &at, "confidence", &CONFIDENCE_TOKENS)?;
        string(m, &at, "rationale")?;
        token(m, &at, "mapped_aspect", &ASPECT_TOKENS)?;
        if m.contains_key("evidence_basis") {
            token_array(m, &at, "evidence_basis", &EVIDENCE_TOKENS)?;
        }
    }
    Ok(())
}

fn tie_decomposition(v: &Value) -> Result<(), String> {
    let decs = array(v, "$", "decompositions")?;
    for (i, d) in decs.iter().enumerate() {
        let at = format!("decompositions[{i}]");
        let m = obj(d, &at)?;
        string(m, &at, "parent_id")?;
        let subs = field(m, &at, "sub_criteria")?
            .as_array()
            .ok_or_else(|| format!("{at}.sub_criteria: expected an array"))?;
        for (j, s) in subs.iter().enumerate() {
            let at = format!("{at}.sub_criteria[{j}]");
            let m = obj(s, &at)?;
            string(m, &at, "criterion")?;
            string(m, &at, "rationale")?;
            token_array(m, &at, "evidence_basis", &EVIDENCE_TOKENS)?;
        }
    }
    Ok(())
}

fn boolean_filter(v: &Value, flag: &str) -> Result<(), String> {
    let results = array(v, "$", "results")?;
    for (i, r) in results.iter().enumerate() {
        let at = format!("results[{i}]");
        let m = obj(r, &at)?;
        string(m, &at, "id")?;
        field(m, &at, flag)?
            .as_bool()
            .ok_or_else(|| format!("{at}.{flag}: expected a boolean"))?;
    }
    Ok(())
}

fn final_judge(v: &Value) -> Result<(), String> {
    let m = obj(v, "$")?;
    let overall = obj(field(m, "$", "Overall")?, "$.Overall")?;
    // "Tie" per the output schema; lowercase accepted on input.
    let s = string(overall, "$.Overall", "winner")?;
    if !["A", "B", "Tie", "tie"].contains(&s.as_str()) {
        return Err(format!("$.Overall.winner: unknown token {s:?}"));
    }
    string(overall, "$.Overall", "reasoning")?;
    Ok(())
}

fn human_rationale(v: &Value) -> Result<(), String> {
    let m = obj(v, "$")?;
    string(m, "$", "reasoning")?;
    let factors = field(m, "$", "key_factors")?
        .as_array()
        .ok_or("$.key_factors: expected an array")?;
    if factors.is_empty() {
        return Err("$.key_factors: must be non-empty".into());
    }
    token(m, "$", "primary_aspect", &RATIONALE_ASPECT_TOKENS)?;
    let analysis = obj(field(m, "$", "aspect_analysis")?, "$.aspect_analysis")?;
    for aspect in ["correctness", "efficiency", "explainability", "maintainability", "ui_ux_design"] {
        let at = format!("$.aspect_analysis.{aspect}");
        let entry = obj(
            analysis.get(aspect).ok_or_else(|| format!("{at}: missing"))?,
            &at,
        )?;
        let vote = field(entry, &at, "vote")?;
        if !vote.is_null() {
            let s = vote.as_str().ok_or_else(|| format!("{at}.vote: expected string or null"))?;
            if !["A", "B", "Tie"].contains(&s) {
                return Err(format!("{at}.vote: unknown token {s:?}"));
            }
        }
        token(entry, &at, "importance", &IMPORTANCE_TOKENS)?;
        string(entry, &at, "explanation")?;
    }
    token_array(m, "$", "decisive_aspects", &RATIONALE_ASPECT_TOKENS)?;
    Ok(())
}

fn guidance_block(v: &Value, at: &str) -> Result<(), String> {
    let m = obj(v, at)?;
    let patterns = field(m, at, "key_divergence_patterns")?
        .as_array()
        .ok_or_else(|| format!("{at}.key_divergence_patterns: expected an array"))?;
    if patterns.is_empty() {
        return Err(format!("{at}.key_divergence_patterns: must be non-empty"));
    }
    string(m, at, "criterion_generation_guidance")?;
    string(m, at, "criterion_judging_guidance")?;
    string(m, at, "final_judging_guidance")?;
    Ok(())
}

fn guidance_synthesis(v: &Value) -> Result<(), String> {
    guidance_block(v, "$")?;
    let m = obj(v, "$")?;
    let cats = obj(field(m, "$", "category_specific_guidance")?, "$.category_specific_guidance")?;
    for cat in CATEGORY_TOKENS {
        let at = format!("$.category_specific_guidance.{cat}");
        let block = cats.get(cat).ok_or_else(|| format!("{at}: missing category block"))?;
        guidance_block(block, &at)?;
    }
    Ok(())
}

fn pointwise_judging(v: &Value) -> Result<(), String> {
    let results = array(v, "$", "criterion_results")?;
    for (i, r) in results.iter().enumerate() {
        let at = format!("criterion_results[{i}]");
        let m = obj(r, &at)?;
        string(m, &at, "criterion_id")?;
        token(m, &at, "decision", &["YES", "NO"])?;
        string(m, &at, "rationale")?;
    }
    Ok(())
}

fn criterion_weighting(v: &Value) -> Result<(), String> {
    let weights = array(v, "$", "weights")?;
    for (i, w) in weights.iter().enumerate() {
        let at = format!("weights[{i}]");
        let m = obj(w, &at)?;
        string(m, &at, "criterion_id")?;
        let x = field(m, &at, "weight")?
            .as_f64()
            .ok_or_else(|| format!("{at}.weight: expected a number"))?;
        if !x.is_finite() {
            return Err(format!("{at}.weight: must be finite"));
        }
    }
    Ok(())
}

// ─── Tests ──────────────────────────────────────────────────────────────────
