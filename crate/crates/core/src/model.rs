//! Shared vocabulary: labels, verdicts, criteria, judgments, instances.
//!
//! Everything downstream (judging, refinement, filtering, aggregation,
//! metrics) speaks in these types. Wire forms are fixed here via serde
//! renames and must not drift: preference labels serialize as `"A"`, `"B"`,
//! `"Tie"`; criterion verdicts as `"A"`, `"B"`, `"tie"`,
//! `"insufficient_evidence"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from label mapping.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    /// A raw dataset vote token had no entry in the vote-mapping table.
    #[error("unknown vote token: {0:?}")]
    UnknownVoteToken(String),
}

// ─── Labels and verdicts ────────────────────────────────────────────────────

/// Overall human (or predicted) preference between responses A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PreferenceLabel {
    A,
    B,
    Tie,
}

impl PreferenceLabel {
    pub const ALL: [PreferenceLabel; 3] = [PreferenceLabel::A, PreferenceLabel::B, PreferenceLabel::Tie];

    /// The label seen when the two responses exchange positions.
    pub fn swapped(self) -> PreferenceLabel {
        match self {
            PreferenceLabel::A => PreferenceLabel::B,
            PreferenceLabel::B => PreferenceLabel::A,
            PreferenceLabel::Tie => PreferenceLabel::Tie,
        }
    }

    pub fn wire(self) -> &'static str {
        match self {
            PreferenceLabel::A => "A",
            PreferenceLabel::B => "B",
            PreferenceLabel::Tie => "Tie",
        }
    }
}

impl std::fmt::Display for PreferenceLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.wire())
    }
}

/// Per-criterion pairwise verdict.
///
/// `InsufficientEvidence` is a first-class outcome, not an error: the judge
/// could not decide from the available artifacts. It is excluded from bias
/// distributions and reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    #[serde(rename = "tie")]
    Tie,
    #[serde(rename = "insufficient_evidence", alias = "insufficient")]
    InsufficientEvidence,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::A,
        Verdict::B,
        Verdict::Tie,
        Verdict::InsufficientEvidence,
    ];

    pub fn wire(self) -> &'static str {
        match self {
            Verdict::A => "A",
            Verdict::B => "B",
            Verdict::Tie => "tie",
            Verdict::InsufficientEvidence => "insufficient_evidence",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.wire())
    }
}

/// The swap operator π: the verdict an order-invariant judge would report
/// after the two responses exchange positions. Self-inverse by construction.
pub fn swap_verdict(v: Verdict) -> Verdict {
    match v {
        Verdict::A => Verdict::B,
        Verdict::B => Verdict::A,
        Verdict::Tie => Verdict::Tie,
        Verdict::InsufficientEvidence => Verdict::InsufficientEvidence,
    }
}

/// Judge self-reported confidence in one criterion verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

impl Confidence {
    pub fn wire(self) -> &'static str {
        match self {
            Confidence::High => "high",
            Confidence::Medium => "medium",
            Confidence::Low => "low",
        }
    }
}

/// Human evaluation aspect a criterion maps onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Aspect {
    #[serde(rename = "correctness")]
    Correctness,
    #[serde(rename = "efficiency")]
    Efficiency,
    #[serde(rename = "explainability")]
    Explainability,
    #[serde(rename = "maintainability")]
    Maintainability,
    #[serde(rename = "ui_ux_design")]
    UiUxDesign,
    #[serde(rename = "OTHERS")]
    Others,
}

impl Aspect {
    /// The five aspects humans rate directly (`Others` is judge-only).
    pub const HUMAN_RATED: [Aspect; 5] = [
        Aspect::Correctness,
        Aspect::Efficiency,
        Aspect::Explainability,
        Aspect::Maintainability,
        Aspect::UiUxDesign,
    ];

    pub fn wire(self) -> &'static str {
        match self {
            Aspect::Correctness => "correctness",
            Aspect::Efficiency => "efficiency",
            Aspect::Explainability => "explainability",
            Aspect::Maintainability => "maintainability",
            Aspect::UiUxDesign => "ui_ux_design",
            Aspect::Others => "OTHERS",
        }
    }
}

/// Task category of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCategory {
    WebDevelopment,
    GameDevelopment,
    CreativeCoding,
    DiagramCreation,
    ScientificComputing,
    ProblemSolving,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 6] = [
        TaskCategory::WebDevelopment,
        TaskCategory::GameDevelopment,
        TaskCategory::CreativeCoding,
        TaskCategory::DiagramCreation,
        TaskCategory::ScientificComputing,
        TaskCategory::ProblemSolving,
    ];

    pub fn wire(self) -> &'static str {
        match self {
            TaskCategory::WebDevelopment => "web_development",
            TaskCategory::GameDevelopment => "game_development",
            TaskCategory::CreativeCoding => "creative_coding",
            TaskCategory::DiagramCreation => "diagram_creation",
            TaskCategory::ScientificComputing => "scientific_computing",
            TaskCategory::ProblemSolving => "problem_solving",
        }
    }
}

impl std::fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.wire())
    }
}

// ─── Vote mapping ───────────────────────────────────────────────────────────

/// Configurable raw-vote-token → label table.
///
/// Defaults cover the BigCodeReward export tokens. Lookup is exact on the
/// trimmed token; anything unmapped is a hard error so silent label drift is
/// impossible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoteMap(pub BTreeMap<String, PreferenceLabel>);

impl Default for VoteMap {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert("model_a".to_string(), PreferenceLabel::A);
        m.insert("model_b".to_string(), PreferenceLabel::B);
        m.insert("tie".to_string(), PreferenceLabel::Tie);
        m.insert("tie (bothbad)".to_string(), PreferenceLabel::Tie);
        VoteMap(m)
    }
}

/// Map a raw dataset vote token to a label via the configured table.
pub fn map_raw_label(raw: &str, table: &VoteMap) -> Result<PreferenceLabel, ModelError> {
    table
        .0
        .get(raw.trim())
        .copied()
        .ok_or_else(|| ModelError::UnknownVoteToken(raw.to_string()))
}

// ─── Evidence and instances ─────────────────────────────────────────────────

/// Execution artifacts attached to one response pair.
///
/// Screenshot refs are opaque strings (file paths or URLs); they are resolved
/// lazily, but must resolve before any model call that declares `screenshot`
/// evidence basis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_output_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_output_b: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub screenshot_refs_a: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub screenshot_refs_b: Vec<String>,
}

impl EvidenceBundle {
    /// The bundle as seen after the two responses exchange positions.
    pub fn swapped(&self) -> EvidenceBundle {
        EvidenceBundle {
            exec_output_a: self.exec_output_b.clone(),
            exec_output_b: self.exec_output_a.clone(),
            screenshot_refs_a: self.screenshot_refs_b.clone(),
            screenshot_refs_b: self.screenshot_refs_a.clone(),
        }
    }
}

/// One comparison task: an instruction plus two candidate responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub instruction: String,
    pub response_a: String,
    pub response_b: String,
    #[serde(default)]
    pub evidence: EvidenceBundle,
    pub category: TaskCategory,
    /// Ground-truth overall preference, when the dataset carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_overall: Option<PreferenceLabel>,
    /// Per-aspect human votes; a key may be present with `None` when the
    /// rater explicitly abstained on that aspect.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub human_aspect_votes: BTreeMap<Aspect, Option<PreferenceLabel>>,
}

impl Instance {
    /// The instance with responses A and B exchanged (payloads, evidence,
    /// and any human labels). Used for backward-order judging.
    pub fn swapped(&self) -> Instance {
        Instance {
            id: self.id.clone(),
            instruction: self.instruction.clone(),
            response_a: self.response_b.clone(),
            response_b: self.response_a.clone(),
            evidence: self.evidence.swapped(),
            category: self.category,
            human_overall: self.human_overall.map(PreferenceLabel::swapped),
            human_aspect_votes: self
                .human_aspect_votes
                .iter()
                .map(|(a, v)| (*a, v.map(PreferenceLabel::swapped)))
                .collect(),
        }
    }
}

// ─── Criteria and judgments ─────────────────────────────────────────────────

/// What artifacts a criterion can be judged from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceBasis {
    Instruction,
    Code,
    ExecutionOutput,
    Screenshot,
}

impl EvidenceBasis {
    pub fn wire(self) -> &'static str {
        match self {
            EvidenceBasis::Instruction => "instruction",
            EvidenceBasis::Code => "code",
            EvidenceBasis::ExecutionOutput => "execution_output",
            EvidenceBasis::Screenshot => "screenshot",
        }
    }
}

/// Whether a criterion came from initial generation or tie refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionOrigin {
    Generated,
    Refined,
}

/// One atomic, task-specific evaluation criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    /// `"c1"`, `"c2"`, … for generated criteria; `"t1"`, `"t2"`, … for
    /// refinement sub-criteria.
    pub id: String,
    /// The single checkable claim, response-neutral.
    #[serde(rename = "criterion")]
    pub statement: String,
    pub rationale: String,
    /// Non-empty subset of the four artifact kinds.
    pub evidence_basis: Vec<EvidenceBasis>,
    /// Parent criterion id for refinement sub-criteria.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub origin: CriterionOrigin,
}

/// Presentation order of the responses during judging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgingOrder {
    Forward,
    Backward,
}

/// One criterion-level pairwise judgment, always expressed in the canonical
/// (forward) frame: for backward-order judging the raw verdict is mapped
/// through [`swap_verdict`] before it is compared or stored alongside forward
/// results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionJudgment {
    pub criterion_id: String,
    pub verdict: Verdict,
    pub confidence: Confidence,
    pub rationale: String,
    #[serde(default)]
    pub evidence_used: Vec<EvidenceBasis>,
    pub mapped_aspect: Aspect,
    pub order: JudgingOrder,
}

/// A non-fatal anomaly surfaced by a pipeline stage and carried into the run
/// report. Stage is one of the request tags in [`crate::prompts`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub stage: String,
    pub message: String,
}

impl Warning {
    pub fn new(stage: &str, message: impl Into<String>) -> Warning {
        Warning { stage: stage.to_string(), message: message.into() }
    }
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    // ─── swap algebra ───────────────────────────────────────────────────

    #[test]
    fn test_swap_verdict_exchanges_a_and_b() {
        assert_eq!(swap_verdict(Verdict::A), Verdict::B);
        assert_eq!(swap_verdict(Verdict::B), Verdict::A);
    }

    #[test]
    fn test_swap_verdict_fixes_tie_and_insufficient() {
        assert_eq!(swap_verdict(Verdict::Tie), Verdict::Tie);
        assert_eq!(
            swap_verdict(Verdict::InsufficientEvidence),
            Verdict::InsufficientEvidence
        );
    }

    #[test]
    fn test_swap_verdict_is_involution() {
        for v in Verdict::ALL {
            assert_eq!(swap_verdict(swap_verdict(v)), v, "π(π({v})) != {v}");
        }
    }

    #[test]
    fn test_label_swap_is_involution() {
        for l in PreferenceLabel::ALL {
            assert_eq!(l.swapped().swapped(), l);
        }
    }

    // ─── vote mapping ───────────────────────────────────────────────────

    #[test]
    fn test_map_raw_label_default_table() {
        let table = VoteMap::default();
        assert_eq!(map_raw_label("model_a", &table), Ok(PreferenceLabel::A));
        assert_eq!(map_raw_label("model_b", &table), Ok(PreferenceLabel::B));
        assert_eq!(map_raw_label("tie", &table), Ok(PreferenceLabel::Tie));
        assert_eq!(map_raw_label("tie (bothbad)", &table), Ok(PreferenceLabel::Tie));
    }

    #[test]
    fn test_map_raw_label_unknown_token_is_error() {
        let table = VoteMap::default();
        assert_eq!(
            map_raw_label("both_bad", &table),
            Err(ModelError::UnknownVoteToken("both_bad".to_string()))
        );
    }

    #[test]
    fn test_map_raw_label_trims_whitespace() {
        let table = VoteMap::default();
        assert_eq!(map_raw_label("  model_a ", &table), Ok(PreferenceLabel::A));
    }

    #[test]
    fn test_map_raw_label_custom_table() {
        let mut table = VoteMap::default();
        table.0.insert("left".to_string(), PreferenceLabel::A);
        assert_eq!(map_raw_label("left", &table), Ok(PreferenceLabel::A));
    }

    // ─── wire forms ─────────────────────────────────────────────────────

    #[test]
    fn test_verdict_wire_forms() {
        assert_eq!(serde_json::to_string(&Verdict::A).unwrap(), "\"A\"");
        assert_eq!(serde_json::to_string(&Verdict::Tie).unwrap(), "\"tie\"");
        assert_eq!(
            serde_json::to_string(&Verdict::InsufficientEvidence).unwrap(),
            "\"insufficient_evidence\""
        );
        // Short alias accepted on input only.
        let v: Verdict = serde_json::from_str("\"insufficient\"").unwrap();
        assert_eq!(v, Verdict::InsufficientEvidence);
    }

    #[test]
    fn test_preference_label_wire_forms() {
        for l in PreferenceLabel::ALL {
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.wire()));
            assert_eq!(serde_json::from_str::<PreferenceLabel>(&json).unwrap(), l);
        }
        assert_eq!(PreferenceLabel::Tie.wire(), "Tie");
    }

    #[test]
    fn test_aspect_wire_forms() {
        assert_eq!(serde_json::to_string(&Aspect::UiUxDesign).unwrap(), "\"ui_ux_design\"");
        assert_eq!(serde_json::to_string(&Aspect::Others).unwrap(), "\"OTHERS\"");
        assert_eq!(serde_json::from_str::<Aspect>("\"OTHERS\"").unwrap(), Aspect::Others);
    }

    #[test]
    fn test_category_wire_forms() {
        for c in TaskCategory::ALL {
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.wire()));
        }
        assert_eq!(TaskCategory::WebDevelopment.wire(), "web_development");
    }

    #[test]
    fn test_confidence_wire_forms() {
        assert_eq!(serde_json::to_string(&Confidence::High).unwrap(), "\"high\"");
        assert_eq!(serde_json::from_str::<Confidence>("\"low\"").unwrap(), Confidence::Low);
    }

    #[test]
    fn test_evidence_basis_wire_forms() {
        assert_eq!(
            serde_json::to_string(&EvidenceBasis::ExecutionOutput).unwrap(),
            "\"execution_output\""
        );
        assert_eq!(
            serde_json::from_str::<EvidenceBasis>("\"screenshot\"").unwrap(),
            EvidenceBasis::Screenshot
        );
    }

    // ─── evidence / instance swapping ───────────────────────────────────

    fn sample_instance() -> Instance {
        Instance {
            id: "i1".to_string(),
            instruction: "draw a spiral".to_string(),
            response_a: "code a".to_string(),
            response_b: "code b".to_string(),
            evidence: EvidenceBundle {
                exec_output_a: Some("out a".to_string()),
                exec_output_b: None,
                screenshot_refs_a: vec!["a.png".to_string()],
                screenshot_refs_b: vec![],
            },
            category: TaskCategory::CreativeCoding,
            human_overall: Some(PreferenceLabel::A),
            human_aspect_votes: BTreeMap::from([
                (Aspect::Correctness, Some(PreferenceLabel::A)),
                (Aspect::Efficiency, None),
            ]),
        }
    }

    #[test]
    fn test_evidence_bundle_swap_exchanges_sides() {
        let e = sample_instance().evidence;
        let s = e.swapped();
        assert_eq!(s.exec_output_b.as_deref(), Some("out a"));
        assert_eq!(s.exec_output_a, None);
        assert_eq!(s.screenshot_refs_b, vec!["a.png".to_string()]);
        assert!(s.screenshot_refs_a.is_empty());
        assert_eq!(s.swapped(), e);
    }

    #[test]
    fn test_instance_swapped_is_involution() {
        let i = sample_instance();
        let s = i.swapped();
        assert_eq!(s.response_a, "code b");
        assert_eq!(s.response_b, "code a");
        assert_eq!(s.human_overall, Some(PreferenceLabel::B));
        assert_eq!(
            s.human_aspect_votes.get(&Aspect::Correctness),
            Some(&Some(PreferenceLabel::B))
        );
        assert_eq!(s.human_aspect_votes.get(&Aspect::Efficiency), Some(&None));
        assert_eq!(s.swapped(), i);
    }

    #[test]
    fn test_human_rated_aspects_excludes_others() {
        assert_eq!(Aspect::HUMAN_RATED.len(), 5);
        assert!(!Aspect::HUMAN_RATED.contains(&Aspect::Others));
    }
}
