//! Human-preference-aligned guidance: offline synthesis and runtime injection.
//!
//! The guidance workflow runs entirely on the training split, strictly
//! before evaluation:
//!
//! 1. For each training instance, run the monolithic judge and reconstruct
//!    the human's likely rationale from their recorded votes
//!    ([`build_record`]).
//! 2. Downsample the records to a token budget — seeded shuffle, one record
//!    per represented category first, then prefix fill ([`downsample`]).
//! 3. One synthesis call turns the records into a [`GuidanceArtifact`]:
//!    global divergence patterns plus per-stage guidance, and the same block
//!    for each of the six task categories ([`synthesize_guidance`]).
//!
//! A leakage guard makes the train-only property structural: synthesis
//! refuses to start — before any model call — if any record references an
//! instance outside the declared training split.
//!
//! The artifact serializes canonically (stable bytes for identical content)
//! with a sha256 sidecar manifest, so a loaded artifact re-serializes to the
//! exact bytes on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::model::{Aspect, Instance, PreferenceLabel, TaskCategory, Warning};
use crate::prompts::{self, StageGuidance, TemplateId};

#[derive(Debug, thiserror::Error)]
pub enum GuidanceError {
    #[error("token budget {budget} cannot fit the stratified minimum (~{minimum} tokens)")]
    BudgetTooSmall { budget: u64, minimum: u64 },
    #[error(
        "guidance synthesis would leak evaluation data: {count} record(s) reference \
         instances outside the training split (first: {first:?})"
    )]
    Leakage { count: usize, first: String },
    #[error("instance {0:?} has no human overall label")]
    MissingHumanLabel(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("artifact io: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact parse: {0}")]
    Parse(String),
    #[error("artifact integrity: {0}")]
    Integrity(String),
}

// ─── Human rationale reconstruction ─────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Importance {
    High,
    Medium,
    Low,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectAnalysisEntry {
    pub vote: Option<PreferenceLabel>,
    pub importance: Importance,
    pub explanation: String,
}

/// A reconstructed explanation of why the human preferred what they did,
/// grounded in their per-aspect votes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRationale {
    pub reasoning: String,
    pub key_factors: Vec<String>,
    pub primary_aspect: String,
    pub aspect_analysis: BTreeMap<Aspect, AspectAnalysisEntry>,
    pub decisive_aspects: Vec<String>,
}

/// The `{HUMAN_ASPECT_VOTES}` binding: a JSON object over the five rated
/// aspects, `null` where the human cast no vote.
pub fn aspect_votes_json(votes: &BTreeMap<Aspect, Option<PreferenceLabel>>) -> String {
    let map: BTreeMap<&str, Option<&str>> = Aspect::HUMAN_RATED
        .iter()
        .map(|a| (a.wire(), votes.get(a).copied().flatten().map(PreferenceLabel::wire)))
        .collect();
    serde_json::to_string_pretty(&map).expect("votes serialize")
}

/// Ask the model to explain the human's recorded preference (request tag
/// `human_rationale`). Requires the instance to carry a human overall label.
pub fn reconstruct_human_rationale(
    gw: &Gateway,
    model_id: &str,
    instance: &Instance,
) -> Result<HumanRationale, GuidanceError> {
    let human_overall = instance
        .human_overall
        .ok_or_else(|| GuidanceError::MissingHumanLabel(instance.id.clone()))?;
    let mut bindings = crate::criteria::common_pairwise_bindings(instance, &StageGuidance::none());
    bindings.remove("GUIDANCE");
    bindings.remove("CATEGORY_GUIDANCE");
    bindings.insert("HUMAN_VOTE_LABEL", human_overall.wire().to_string());
    bindings.insert("HUMAN_ASPECT_VOTES", aspect_votes_json(&instance.human_aspect_votes));
    let prompt = prompts::render(TemplateId::HumanRationale, &bindings)
        .map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
    let req = ChatRequest::new(model_id, "human_rationale", prompt)
        .with_schema(TemplateId::HumanRationale.schema_id());
    let result = gw.complete_structured(&req)?;
    serde_json::from_value(result.value)
        .map_err(|e| GuidanceError::Gateway(GatewayError::Unparseable(e.to_string())))
}

// ─── Guidance records ───────────────────────────────────────────────────────

/// One training instance's human-vs-judge comparison, the unit of evidence
/// guidance synthesis consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceRecord {
    pub instance_ref: String,
    pub category: TaskCategory,
    pub mono_prediction: PreferenceLabel,
    pub mono_rationale: String,
    pub human_label: PreferenceLabel,
    pub aspect_votes: BTreeMap<Aspect, Option<PreferenceLabel>>,
    pub human_rationale: HumanRationale,
}

impl GuidanceRecord {
    /// True when the monolithic judge disagreed with the human.
    pub fn is_divergent(&self) -> bool {
        self.mono_prediction != self.human_label
    }
}

/// A stub rationale used when reconstruction fails: empty reasoning with an
/// empty analysis, so synthesis can still use the record's other signal.
pub fn stub_rationale() -> HumanRationale {
    HumanRationale {
        reasoning: String::new(),
        key_factors: Vec::new(),
        primary_aspect: String::new(),
        aspect_analysis: BTreeMap::new(),
        decisive_aspects: Vec::new(),
    }
}

/// Reasoning outside the requested 100–180 word window is worth a warning
/// but never a rejection.
pub fn reasoning_length_warning(rationale: &HumanRationale) -> Option<Warning> {
    let words = rationale.reasoning.split_whitespace().count();
    (!rationale.reasoning.is_empty() && !(100..=180).contains(&words)).then(|| {
        Warning::new(
            "human_rationale",
            format!("reconstructed reasoning is {words} words (requested 100-180)"),
        )
    })
}

/// Build one guidance record: monolithic prediction plus reconstructed
/// human rationale. Model failures degrade — the monolithic judge to a tie,
/// the rationale to an empty flagged stub — so record preparation never
/// loses an instance to a flaky call. Only a missing human label is fatal.
pub fn build_record(
    gw: &Gateway,
    judge_model_id: &str,
    rationale_model_id: &str,
    instance: &Instance,
) -> Result<(GuidanceRecord, Vec<Warning>), GuidanceError> {
    let human_label = instance
        .human_overall
        .ok_or_else(|| GuidanceError::MissingHumanLabel(instance.id.clone()))?;
    let (mono, mut warnings) =
        aggregate::monolithic_judge(gw, judge_model_id, instance, &StageGuidance::none());
    let rationale = match reconstruct_human_rationale(gw, rationale_model_id, instance) {
        Ok(r) => r,
        Err(GuidanceError::Gateway(e)) => {
            warnings.push(Warning::new(
                "human_rationale",
                format!("rationale reconstruction failed ({e}); record carries an empty stub"),
            ));
            stub_rationale()
        }
        Err(other) => return Err(other),
    };
    if let Some(w) = reasoning_length_warning(&rationale) {
        warnings.push(w);
    }
    Ok((
        GuidanceRecord {
            instance_ref: instance.id.clone(),
            category: instance.category,
            mono_prediction: mono.label,
            mono_rationale: mono.reasoning,
            human_label,
            aspect_votes: instance.human_aspect_votes.clone(),
            human_rationale: rationale,
        },
        warnings,
    ))
}

// ─── Downsampling ───────────────────────────────────────────────────────────

/// Rough token cost of a record in the synthesis prompt: serialized
/// character count divided by four.
pub fn estimate_tokens(record: &GuidanceRecord) -> u64 {
    (serde_json::to_string(record).expect("record serialize").chars().count() as u64).div_ceil(4)
}

/// Select records to fit `token_budget`, deterministically for a given seed.
///
/// The records are shuffled with a seeded generator, then selected in two
/// passes: first one record for every category represented in the input
/// (coverage must fit the budget or the call fails), then remaining records
/// in shuffle order until one no longer fits.
pub fn downsample(
    records: &[GuidanceRecord],
    token_budget: u64,
    seed: u64,
) -> Result<Vec<GuidanceRecord>, GuidanceError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut shuffled: Vec<&GuidanceRecord> = records.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let mut picked: Vec<&GuidanceRecord> = Vec::new();
    let mut covered: BTreeSet<TaskCategory> = BTreeSet::new();
    let mut spent: u64 = 0;

    // Stratified pass: the first shuffled record of each represented category.
    for r in &shuffled {
        if covered.insert(r.category) {
            spent += estimate_tokens(r);
            picked.push(r);
        }
    }
    if spent > token_budget {
        return Err(GuidanceError::BudgetTooSmall { budget: token_budget, minimum: spent });
    }

    // Prefix fill with whatever budget remains.
    for r in &shuffled {
        if picked.iter().any(|p| p.instance_ref == r.instance_ref) {
            continue;
        }
        let cost = estimate_tokens(r);
        if spent + cost > token_budget {
            break;
        }
        spent += cost;
        picked.push(r);
    }
    Ok(picked.into_iter().cloned().collect())
}

// ─── Guidance artifact ──────────────────────────────────────────────────────

/// One level of synthesized guidance: observed divergence patterns plus a
/// ready-to-inject paragraph for each pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceBlock {
    pub key_divergence_patterns: Vec<String>,
    pub criterion_generation_guidance: String,
    pub criterion_judging_guidance: String,
    pub final_judging_guidance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub synthesizer_model_id: String,
    pub train_split_content_hash: String,
    pub created_at: String,
    /// Records the synthesis prompt actually contained (after downsampling).
    pub record_count: u64,
}

/// The persisted output of guidance synthesis: the synthesis response
/// schema (global block plus one block per category) with provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceArtifact {
    #[serde(flatten)]
    pub global: GuidanceBlock,
    pub category_specific_guidance: BTreeMap<TaskCategory, GuidanceBlock>,
    pub provenance: Provenance,
}

impl GuidanceArtifact {
    /// Canonical serialization: identical content always yields identical
    /// bytes, so artifacts can be content-hashed and compared.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serialize");
        s.push('\n');
        s.into_bytes()
    }

    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub artifact_file: String,
    pub sha256: String,
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Write the artifact canonically plus a `<file>.manifest.json` sidecar
/// carrying its sha256.
pub fn save_artifact(artifact: &GuidanceArtifact, path: &Path) -> Result<(), GuidanceError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, artifact.canonical_bytes())?;
    let manifest = ArtifactManifest {
        artifact_file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        sha256: artifact.sha256_hex(),
    };
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serialize");
    body.push('\n');
    std::fs::write(manifest_path(path), body)?;
    Ok(())
}

/// Load an artifact, verifying the sidecar hash when the sidecar exists.
pub fn load_artifact(path: &Path) -> Result<GuidanceArtifact, GuidanceError> {
    let raw = std::fs::read(path)?;
    let artifact: GuidanceArtifact =
        serde_json::from_slice(&raw).map_err(|e| GuidanceError::Parse(e.to_string()))?;
    let sidecar = manifest_path(path);
    if sidecar.exists() {
        let manifest: ArtifactManifest =
            serde_json::from_slice(&std::fs::read(&sidecar)?)
                .map_err(|e| GuidanceError::Parse(format!("sidecar: {e}")))?;
        let actual = hex::encode(Sha256::digest(&raw));
        if manifest.sha256 != actual {
            return Err(GuidanceError::Integrity(format!(
                "artifact hash {actual} does not match sidecar {}",
                manifest.sha256
            )));
        }
    }
    Ok(artifact)
}

// ─── Synthesis ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub synthesizer_model_id: String,
    /// Token budget for the sampled cases in the synthesis prompt.
    pub token_budget: u64,
    pub seed: u64,
    /// Per-field character cap applied to rationale text in sample cases.
    pub sample_case_char_cap: usize,
    /// Override for the provenance timestamp; `None` uses the current time.
    /// Deterministic runs must pin this.
    pub created_at: Option<String>,
}

impl SynthesisOptions {
    pub fn new(synthesizer_model_id: &str, token_budget: u64, seed: u64) -> SynthesisOptions {
        SynthesisOptions {
            synthesizer_model_id: synthesizer_model_id.to_string(),
            token_budget,
            seed,
            sample_case_char_cap: 2_000,
            created_at: None,
        }
    }
}

/// The `{AGGREGATE_STATS}` binding: pretty-printed JSON over the full record
/// set — totals, per-category record counts, judge-human agreement rates
/// overall and per category, and per-aspect human-vote distributions.
pub fn aggregate_stats_json(records: &[GuidanceRecord]) -> String {
    let total = records.len();
    let pct = |agree: usize, n: usize| {
        if n == 0 {
            serde_json::Value::Null
        } else {
            serde_json::json!((10_000.0 * agree as f64 / n as f64).round() / 100.0)
        }
    };

    let mut per_category: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut agree_total = 0usize;
    for r in records {
        let e = per_category.entry(r.category.wire()).or_default();
        e.0 += 1;
        if !r.is_divergent() {
            e.1 += 1;
            agree_total += 1;
        }
    }
    let category_counts: BTreeMap<&str, usize> =
        per_category.iter().map(|(k, (n, _))| (*k, *n)).collect();
    let category_agreement: BTreeMap<&str, serde_json::Value> =
        per_category.iter().map(|(k, (n, a))| (*k, pct(*a, *n))).collect();

    let mut aspect_votes: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for aspect in Aspect::HUMAN_RATED {
        let counts = aspect_votes.entry(aspect.wire()).or_default();
        for token in ["A", "B", "Tie", "no_vote"] {
            counts.insert(token, 0);
        }
        for r in records {
            let token = match r.aspect_votes.get(&aspect).copied().flatten() {
                Some(label) => label.wire(),
                None => "no_vote",
            };
            *counts.entry(token).or_default() += 1;
        }
    }

    let stats = serde_json::json!({
        "total_records": total,
        "per_category_record_counts": category_counts,
        "mono_human_agreement_pct": {
            "overall": pct(agree_total, total),
            "per_category": category_agreement,
        },
        "human_aspect_vote_distributions": aspect_votes,
    });
    serde_json::to_string_pretty(&stats).expect("stats serialize")
}

fn truncate_chars(text: &str, cap: usize) -> String {
    if text.chars().count() <= cap {
        return text.to_string();
    }
    let kept: String = text.chars().take(cap).collect();
    format!("{kept}… [truncated]")
}

/// The `{SAMPLE_CASES}` binding: the downsampled records, disagreement
/// cases first, free-text fields truncated to `char_cap` characters.
pub fn sample_cases_text(records: &[GuidanceRecord], char_cap: usize) -> String {
    let (divergent, agreeing): (Vec<&GuidanceRecord>, Vec<&GuidanceRecord>) =
        records.iter().partition(|r| r.is_divergent());
    let mut s = String::new();
    for r in divergent.into_iter().chain(agreeing) {
        let marker = if r.is_divergent() { "DISAGREEMENT" } else { "AGREEMENT" };
        let _ = writeln!(s, "### Case {} [{}] — {marker}", r.instance_ref, r.category.wire());
        let _ = writeln!(
            s,
            "Human overall: {} | LLM judge: {}",
            r.human_label.wire(),
            r.mono_prediction.wire()
        );
        let votes: Vec<String> = Aspect::HUMAN_RATED
            .iter()
            .map(|a| {
                let v = r.aspect_votes.get(a).copied().flatten();
                format!("{}={}", a.wire(), v.map(PreferenceLabel::wire).unwrap_or("-"))
            })
            .collect();
        let _ = writeln!(s, "Human aspect votes: {}", votes.join(", "));
        let _ = writeln!(
            s,
            "Human rationale (reconstructed): {}",
            truncate_chars(&r.human_rationale.reasoning, char_cap)
        );
        if !r.human_rationale.key_factors.is_empty() {
            let _ = writeln!(s, "Key factors: {}", r.human_rationale.key_factors.join("; "));
        }
        let _ = writeln!(s, "LLM judge rationale: {}", truncate_chars(&r.mono_rationale, char_cap));
        let _ = writeln!(s);
    }
    s
}

#[derive(Deserialize)]
struct WireSynthesis {
    #[serde(flatten)]
    global: GuidanceBlock,
    category_specific_guidance: BTreeMap<TaskCategory, GuidanceBlock>,
}

/// Synthesize a guidance artifact from training records.
///
/// The leakage guard runs first: if any record references an instance not
/// in `train_ids`, the call fails before any model traffic. The records are
/// then downsampled to the option budget and sent in a single synthesis
/// call (request tag `guidance_synthesis`).
pub fn synthesize_guidance(
    gw: &Gateway,
    records: &[GuidanceRecord],
    train_ids: &BTreeSet<String>,
    train_split_content_hash: &str,
    opts: &SynthesisOptions,
) -> Result<GuidanceArtifact, GuidanceError> {
    let leaked: Vec<&str> = records
        .iter()
        .filter(|r| !train_ids.contains(&r.instance_ref))
        .map(|r| r.instance_ref.as_str())
        .collect();
    if let Some(first) = leaked.first() {
        return Err(GuidanceError::Leakage { count: leaked.len(), first: (*first).to_string() });
    }

    let sampled = downsample(records, opts.token_budget, opts.seed)?;
    let bindings = BTreeMap::from([
        ("AGGREGATE_STATS", aggregate_stats_json(records)),
        ("SAMPLE_CASES", sample_cases_text(&sampled, opts.sample_case_char_cap)),
    ]);
    let prompt = prompts::render(TemplateId::GuidanceSynthesis, &bindings)
        .map_err(|e| GatewayError::BackendRefused(e.to_string()))?;
    let req = ChatRequest::new(&opts.synthesizer_model_id, "guidance_synthesis", prompt)
        .with_schema(TemplateId::GuidanceSynthesis.schema_id());
    let result = gw.complete_structured(&req)?;
    let wire: WireSynthesis = serde_json::from_value(result.value)
        .map_err(|e| GuidanceError::Gateway(GatewayError::Unparseable(e.to_string())))?;

    Ok(GuidanceArtifact {
        global: wire.global,
        category_specific_guidance: wire.category_specific_guidance,
        provenance: Provenance {
            synthesizer_model_id: opts.synthesizer_model_id.clone(),
            train_split_content_hash: train_split_content_hash.to_string(),
            created_at: opts
                .created_at
                .clone()
                .unwrap_or_else(|| chrono::Utc::now().to_rfc3339()),
            record_count: sampled.len() as u64,
        },
    })
}

// ─── Runtime injection ──────────────────────────────────────────────────────

/// How synthesized guidance is injected at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    /// No guidance: prompts carry the no-guidance sentinels.
    #[default]
    None,
    /// Global guidance only.
    Global,
    /// Global guidance plus the instance category's block.
    GlobalPlusCategory,
    /// Control arm: global guidance plus an explicitly empty category slot
    /// (distinct from the no-guidance sentinel).
    GlobalPlusEmptyCategory,
}

/// The pipeline stages guidance can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    CriterionGeneration,
    CriterionJudging,
    FinalJudging,
}

fn compose_block(block: &GuidanceBlock, stage: PipelineStage) -> String {
    let stage_text = match stage {
        PipelineStage::CriterionGeneration => &block.criterion_generation_guidance,
        PipelineStage::CriterionJudging => &block.criterion_judging_guidance,
        PipelineStage::FinalJudging => &block.final_judging_guidance,
    };
    let mut s = String::from("Key divergence patterns observed between human and LLM judgments:");
    for p in &block.key_divergence_patterns {
        let _ = write!(s, "\n- {p}");
    }
    let _ = write!(s, "\n\n{stage_text}");
    s
}

/// Resolve the guidance text a stage's prompt should carry for an instance
/// of the given category.
pub fn stage_guidance(
    artifact: Option<&GuidanceArtifact>,
    mode: GuidanceMode,
    stage: PipelineStage,
    category: TaskCategory,
) -> StageGuidance {
    let artifact = match (mode, artifact) {
        (GuidanceMode::None, _) | (_, None) => return StageGuidance::none(),
        (_, Some(a)) => a,
    };
    let global = Some(compose_block(&artifact.global, stage));
    let category_text = match mode {
        GuidanceMode::None => unreachable!("handled above"),
        GuidanceMode::Global => None,
        GuidanceMode::GlobalPlusCategory => artifact
            .category_specific_guidance
            .get(&category)
            .map(|block| compose_block(block, stage)),
        GuidanceMode::GlobalPlusEmptyCategory => Some(String::new()),
    };
    StageGuidance { global, category: category_text }
}
