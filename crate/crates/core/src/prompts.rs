//! Prompt template registry.
//!
//! Templates are compiled into the binary via `include_str!` and indexed by
//! [`TemplateId`]. A JSON manifest pins the sha256 of every template file so
//! that silent edits are caught ([`verify_manifest`]), and rendering is
//! strict: every `{UPPER_SNAKE}` placeholder in a template must be bound, and
//! every binding must be consumed.
//!
//! Substitution is a single pass over the template text — substituted values
//! are never re-scanned, so braces inside payloads (code, JSON) are inert.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::model::EvidenceBundle;
use crate::schemas;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {template}: no binding for placeholder {{{name}}}")]
    MissingPlaceholder { template: TemplateId, name: String },
    #[error("template {template}: binding {name:?} matches no placeholder")]
    UnknownPlaceholder { template: TemplateId, name: String },
    #[error("template manifest: {0}")]
    Manifest(String),
}

/// The eleven registered prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    HumanRationale,
    GuidanceSynthesis,
    CriterionGeneration,
    PairwiseCriterionJudging,
    TieDecomposition,
    RedundancyFilter,
    ConflictFilter,
    FinalJudge,
    MonolithicJudge,
    PointwiseCriterionJudging,
    CriterionWeighting,
}

pub const ALL_TEMPLATES: [TemplateId; 11] = [
    TemplateId::HumanRationale,
    TemplateId::GuidanceSynthesis,
    TemplateId::CriterionGeneration,
    TemplateId::PairwiseCriterionJudging,
    TemplateId::TieDecomposition,
    TemplateId::RedundancyFilter,
    TemplateId::ConflictFilter,
    TemplateId::FinalJudge,
    TemplateId::MonolithicJudge,
    TemplateId::PointwiseCriterionJudging,
    TemplateId::CriterionWeighting,
];

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id_str())
    }
}

impl TemplateId {
    pub fn id_str(self) -> &'static str {
        match self {
            Self::HumanRationale => "HumanRationale",
            Self::GuidanceSynthesis => "GuidanceSynthesis",
            Self::CriterionGeneration => "CriterionGeneration",
            Self::PairwiseCriterionJudging => "PairwiseCriterionJudging",
            Self::TieDecomposition => "TieDecomposition",
            Self::RedundancyFilter => "RedundancyFilter",
            Self::ConflictFilter => "ConflictFilter",
            Self::FinalJudge => "FinalJudge",
            Self::MonolithicJudge => "MonolithicJudge",
            Self::PointwiseCriterionJudging => "PointwiseCriterionJudging",
            Self::CriterionWeighting => "CriterionWeighting",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::HumanRationale => "human_rationale.txt",
            Self::GuidanceSynthesis => "guidance_synthesis.txt",
            Self::CriterionGeneration => "criterion_generation.txt",
            Self::PairwiseCriterionJudging => "pairwise_criterion_judging.txt",
            Self::TieDecomposition => "tie_decomposition.txt",
            Self::RedundancyFilter => "redundancy_filter.txt",
            Self::ConflictFilter => "conflict_filter.txt",
            Self::FinalJudge => "final_judge.txt",
            Self::MonolithicJudge => "monolithic_judge.txt",
            Self::PointwiseCriterionJudging => "pointwise_criterion_judging.txt",
            Self::CriterionWeighting => "criterion_weighting.txt",
        }
    }

    /// The raw template text.
    pub fn text(self) -> &'static str {
        match self {
            Self::HumanRationale => include_str!("../templates/human_rationale.txt"),
            Self::GuidanceSynthesis => include_str!("../templates/guidance_synthesis.txt"),
            Self::CriterionGeneration => include_str!("../templates/criterion_generation.txt"),
            Self::PairwiseCriterionJudging => {
                include_str!("../templates/pairwise_criterion_judging.txt")
            }
            Self::TieDecomposition => include_str!("../templates/tie_decomposition.txt"),
            Self::RedundancyFilter => include_str!("../templates/redundancy_filter.txt"),
            Self::ConflictFilter => include_str!("../templates/conflict_filter.txt"),
            Self::FinalJudge => include_str!("../templates/final_judge.txt"),
            Self::MonolithicJudge => include_str!("../templates/monolithic_judge.txt"),
            Self::PointwiseCriterionJudging => {
                include_str!("../templates/pointwise_criterion_judging.txt")
            }
            Self::CriterionWeighting => include_str!("../templates/criterion_weighting.txt"),
        }
    }

    /// Output schema the template's response must satisfy.
    pub fn schema_id(self) -> &'static str {
        match self {
            Self::HumanRationale => schemas::HUMAN_RATIONALE,
            Self::GuidanceSynthesis => schemas::GUIDANCE_SYNTHESIS,
            Self::CriterionGeneration => schemas::CRITERION_GENERATION,
            Self::PairwiseCriterionJudging => schemas::CRITERION_JUDGING,
            Self::TieDecomposition => schemas::TIE_DECOMPOSITION,
            Self::RedundancyFilter => schemas::REDUNDANCY_FILTER,
            Self::ConflictFilter => schemas::CONFLICT_FILTER,
            Self::FinalJudge | Self::MonolithicJudge => schemas::FINAL_JUDGE,
            Self::PointwiseCriterionJudging => schemas::POINTWISE_JUDGING,
            Self::CriterionWeighting => schemas::CRITERION_WEIGHTING,
        }
    }

    /// Placeholder names the template requires, derived by scanning its text.
    pub fn placeholders(self) -> BTreeSet<String> {
        scan_placeholders(self.text())
    }
}

/// Find all `{UPPER_SNAKE}` placeholders in `text`.
pub fn scan_placeholders(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some((name, end)) = match_placeholder(bytes, i) {
                out.insert(name);
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// If `bytes[open..]` starts a `{UPPER_SNAKE}` placeholder, return its name
/// and the index one past the closing brace.
fn match_placeholder(bytes: &[u8], open: usize) -> Option<(String, usize)> {
    let start = open + 1;
    if start >= bytes.len() || !bytes[start].is_ascii_uppercase() {
        return None;
    }
    let mut j = start + 1;
    while j < bytes.len() && (bytes[j].is_ascii_uppercase() || bytes[j].is_ascii_digit() || bytes[j] == b'_') {
        j += 1;
    }
    if j < bytes.len() && bytes[j] == b'}' {
        Some((String::from_utf8_lossy(&bytes[start..j]).into_owned(), j + 1))
    } else {
        None
    }
}

/// Render a template by substituting every placeholder from `bindings`.
///
/// Strict in both directions: an unbound placeholder and an unused binding
/// are both errors. Binding values are inserted verbatim — they are never
/// re-scanned for placeholders.
pub fn render(id: TemplateId, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let text = id.text();
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some((name, end)) = match_placeholder(bytes, i) {
                match bindings.get_key_value(name.as_str()) {
                    Some((key, value)) => {
                        used.insert(*key);
                        out.push_str(value);
                        i = end;
                        continue;
                    }
                    None => return Err(PromptError::MissingPlaceholder { template: id, name }),
                }
            }
        }
        // Safe: placeholders are pure ASCII, so a non-placeholder position
        // can be copied byte by byte without splitting UTF-8 sequences only
        // if we copy the whole code point. Find the char at this position.
        let ch_len = utf8_len(bytes[i]);
        out.push_str(&text[i..i + ch_len]);
        i += ch_len;
    }
    for key in bindings.keys() {
        if !used.contains(key) {
            return Err(PromptError::UnknownPlaceholder { template: id, name: (*key).to_string() });
        }
    }
    Ok(out)
}

fn utf8_len(first: u8) -> usize {
    match first {
        b if b < 0x80 => 1,
        b if b >= 0xF0 => 4,
        b if b >= 0xE0 => 3,
        _ => 2,
    }
}

// ─── Manifest verification ──────────────────────────────────────────────────

#[derive(Deserialize)]
struct Manifest {
    templates: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct ManifestEntry {
    template_id: String,
    file: String,
    sha256: String,
}

const MANIFEST_JSON: &str = include_str!("../templates/manifest.json");

/// Check every registered template against the pinned manifest hashes, and
/// that the manifest lists exactly the registered templates.
pub fn verify_manifest() -> Result<(), PromptError> {
    let manifest: Manifest = serde_json::from_str(MANIFEST_JSON)
        .map_err(|e| PromptError::Manifest(format!("unparseable: {e}")))?;
    let mut seen = BTreeSet::new();
    for entry in &manifest.templates {
        let id = ALL_TEMPLATES
            .iter()
            .copied()
            .find(|t| t.id_str() == entry.template_id)
            .ok_or_else(|| {
                PromptError::Manifest(format!("unregistered template_id {:?}", entry.template_id))
            })?;
        if entry.file != id.file_name() {
            return Err(PromptError::Manifest(format!(
                "{}: file {:?} does not match registered {:?}",
                id,
                entry.file,
                id.file_name()
            )));
        }
        let actual = hex::encode(Sha256::digest(id.text().as_bytes()));
        if actual != entry.sha256 {
            return Err(PromptError::Manifest(format!(
                "{}: content hash {} does not match pinned {}",
                id, actual, entry.sha256
            )));
        }
        seen.insert(id);
    }
    for t in ALL_TEMPLATES {
        if !seen.contains(&t) {
            return Err(PromptError::Manifest(format!("{t} missing from manifest")));
        }
    }
    Ok(())
}

// ─── Guidance composition ───────────────────────────────────────────────────

/// Sentinel inserted for `{GUIDANCE}` when no global guidance is configured.
pub const NO_GLOBAL_GUIDANCE: &str = "No additional guidance.";
/// Sentinel inserted for `{CATEGORY_GUIDANCE}` when no category guidance applies.
pub const NO_CATEGORY_GUIDANCE: &str = "No category-specific guidance.";

/// Guidance text destined for one pipeline stage's prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageGuidance {
    pub global: Option<String>,
    pub category: Option<String>,
}

impl StageGuidance {
    pub fn none() -> Self {
        Self::default()
    }

    /// The `{GUIDANCE}` and `{CATEGORY_GUIDANCE}` binding values, with
    /// sentinels substituted for absent parts.
    pub fn binding_values(&self) -> (String, String) {
        (
            self.global.clone().unwrap_or_else(|| NO_GLOBAL_GUIDANCE.to_string()),
            self.category.clone().unwrap_or_else(|| NO_CATEGORY_GUIDANCE.to_string()),
        )
    }
}

// ─── Evidence sections ──────────────────────────────────────────────────────

/// Rendered evidence blocks for the A/B answer slots of a pairwise prompt.
///
/// Section text is position-neutral (it never names A or B), so swapping the
/// response payloads swaps the sections verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvidenceSections {
    pub screenshot_a: String,
    pub screenshot_b: String,
    pub visual_a: String,
    pub visual_b: String,
}

/// Screenshot block for one answer slot: empty when there are no
/// screenshots, otherwise a labeled run of image markers the gateway
/// expands into multimodal attachments.
pub fn screenshot_section(refs: &[String]) -> String {
    if refs.is_empty() {
        return String::new();
    }
    let mut s = String::from("\n\n[Screenshots of the rendered result]");
    for r in refs {
        s.push('\n');
        s.push_str(&crate::gateway::image_marker(r));
    }
    s
}

/// Execution-output block for one answer slot; empty when absent.
pub fn visual_section(exec_output: Option<&str>) -> String {
    match exec_output {
        None => String::new(),
        Some(out) => format!("\n\nExecution output:\n```\n{out}\n```"),
    }
}

/// Build both answers' evidence sections from an instance's bundle.
pub fn evidence_sections(e: &EvidenceBundle) -> EvidenceSections {
    EvidenceSections {
        screenshot_a: screenshot_section(&e.screenshot_refs_a),
        screenshot_b: screenshot_section(&e.screenshot_refs_b),
        visual_a: visual_section(e.exec_output_a.as_deref()),
        visual_b: visual_section(e.exec_output_b.as_deref()),
    }
}
