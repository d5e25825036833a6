//! Swap-consistency filtering of criterion judgments.
//!
//! Every criterion is judged twice: once with the responses in their
//! original order (forward) and once swapped (backward). A judgment is
//! position-sensitive — an artifact of presentation order rather than of
//! the responses — unless the two passes agree once the backward verdict is
//! mapped back through the swap involution. In raw terms exactly four of
//! the sixteen (forward, backward) verdict pairs are consistent:
//!
//! | forward | backward (raw) |
//! |---------|----------------|
//! | A       | B              |
//! | B       | A              |
//! | tie     | tie            |
//! | insufficient_evidence | insufficient_evidence |
//!
//! Judgments are stored in the canonical forward frame (the backward pass
//! maps its raw verdicts at normalization time), so the stored-frame keep
//! rule is plain agreement.

use serde::{Deserialize, Serialize};

use crate::model::{swap_verdict, CriterionJudgment, Verdict, Warning};

/// Keep rule in raw terms: the forward verdict must equal the swapped
/// backward verdict.
pub fn consistency_keep_raw(forward: Verdict, backward_raw: Verdict) -> bool {
    forward == swap_verdict(backward_raw)
}

/// Keep rule in the canonical (stored) frame, where the backward verdict
/// has already been mapped through the swap involution: plain agreement.
pub fn consistency_keep(forward: Verdict, backward_canonical: Verdict) -> bool {
    forward == backward_canonical
}

/// A criterion judgment rejected as position-sensitive. Both verdicts are
/// in the canonical forward frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScfDropped {
    pub criterion_id: String,
    pub forward: Verdict,
    pub backward: Verdict,
}

#[derive(Debug, Clone)]
pub struct ScfOutcome {
    /// Forward judgments that passed the consistency check.
    pub kept: Vec<CriterionJudgment>,
    pub dropped: Vec<ScfDropped>,
    /// False when filtering was skipped (backward pass unavailable), in
    /// which case `kept` is the full forward set and `dropped` is empty.
    pub scf_applied: bool,
    pub warnings: Vec<Warning>,
}

/// Filter forward judgments against their backward counterparts.
///
/// Judgments pair by criterion id. A forward judgment with no backward
/// counterpart cannot be checked and is conservatively dropped with a
/// warning; backward judgments for unknown ids are ignored with a warning.
pub fn scf_filter(forward: &[CriterionJudgment], backward: &[CriterionJudgment]) -> ScfOutcome {
    let by_id: std::collections::BTreeMap<&str, &CriterionJudgment> =
        backward.iter().map(|j| (j.criterion_id.as_str(), j)).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();

    for f in forward {
        match by_id.get(f.criterion_id.as_str()) {
            Some(b) => {
                if consistency_keep(f.verdict, b.verdict) {
                    kept.push(f.clone());
                } else {
                    dropped.push(ScfDropped {
                        criterion_id: f.criterion_id.clone(),
                        forward: f.verdict,
                        backward: b.verdict,
                    });
                }
            }
            None => {
                warnings.push(Warning::new(
                    "swap_consistency",
                    format!("criterion {:?} has no backward judgment; dropped", f.criterion_id),
                ));
                dropped.push(ScfDropped {
                    criterion_id: f.criterion_id.clone(),
                    forward: f.verdict,
                    backward: Verdict::InsufficientEvidence,
                });
            }
        }
    }
    let known: std::collections::BTreeSet<&str> =
        forward.iter().map(|j| j.criterion_id.as_str()).collect();
    for b in backward {
        if !known.contains(b.criterion_id.as_str()) {
            warnings.push(Warning::new(
                "swap_consistency",
                format!("backward judgment for unknown criterion {:?} ignored", b.criterion_id),
            ));
        }
    }
    ScfOutcome { kept, dropped, scf_applied: true, warnings }
}

/// The outcome used when the backward pass failed: filtering is skipped and
/// every forward judgment is kept.
pub fn skip_scf(forward: &[CriterionJudgment], reason: &str) -> ScfOutcome {
    ScfOutcome {
        kept: forward.to_vec(),
        dropped: Vec::new(),
        scf_applied: false,
        warnings: vec![Warning::new(
            "swap_consistency",
            format!("backward judging unavailable; filtering skipped: {reason}"),
        )],
    }
}

// ─── Position-bias accounting ───────────────────────────────────────────────

/// Counts of forward verdicts over some judgment population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictDistribution {
    pub a: u64,
    pub b: u64,
    pub tie: u64,
    /// Excluded from the decided-percentage denominators; reported separately.
    pub insufficient: u64,
}

impl VerdictDistribution {
    pub fn observe(&mut self, v: Verdict) {
        match v {
            Verdict::A => self.a += 1,
            Verdict::B => self.b += 1,
            Verdict::Tie => self.tie += 1,
            Verdict::InsufficientEvidence => self.insufficient += 1,
        }
    }

    /// A + B + tie (the decided population).
    pub fn decided(&self) -> u64 {
        self.a + self.b + self.tie
    }

    pub fn pct_a(&self) -> f64 {
        percentage(self.a, self.decided())
    }

    pub fn pct_b(&self) -> f64 {
        percentage(self.b, self.decided())
    }

    pub fn pct_tie(&self) -> f64 {
        percentage(self.tie, self.decided())
    }

    /// Position skew in percentage points: %A − %B. Positive means the
    /// judge favored whichever response sat in the A slot.
    pub fn skew_pp(&self) -> f64 {
        self.pct_a() - self.pct_b()
    }

    /// Ratio of A verdicts to B verdicts.
    pub fn a_b_ratio(&self) -> f64 {
        if self.b == 0 {
            return f64::NAN;
        }
        self.a as f64 / self.b as f64
    }
}

fn percentage(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        return 0.0;
    }
    100.0 * part as f64 / whole as f64
}

/// Position-bias report over one or many filtered instances.
///
/// Removed work is counted under both conventions: `dropped_criteria`
/// counts criteria whose judgment pair disagreed, while
/// `position_sensitive_judgments` counts the individual judgments involved
/// (two per dropped criterion — one from each pass).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub total_criteria: u64,
    pub kept_criteria: u64,
    pub dropped_criteria: u64,
    pub position_sensitive_judgments: u64,
    /// Forward-verdict distribution of the dropped (position-sensitive) pairs.
    pub dropped_forward: VerdictDistribution,
    /// Forward-verdict distribution of the kept pairs.
    pub kept_forward: VerdictDistribution,
}

impl BiasReport {
    pub fn observe(&mut self, outcome: &ScfOutcome) {
        self.total_criteria += (outcome.kept.len() + outcome.dropped.len()) as u64;
        self.kept_criteria += outcome.kept.len() as u64;
        self.dropped_criteria += outcome.dropped.len() as u64;
        self.position_sensitive_judgments += 2 * outcome.dropped.len() as u64;
        for d in &outcome.dropped {
            self.dropped_forward.observe(d.forward);
        }
        for k in &outcome.kept {
            self.kept_forward.observe(k.verdict);
        }
    }

    pub fn merge(&mut self, other: &BiasReport) {
        self.total_criteria += other.total_criteria;
        self.kept_criteria += other.kept_criteria;
        self.dropped_criteria += other.dropped_criteria;
        self.position_sensitive_judgments += other.position_sensitive_judgments;
        merge_distribution(&mut self.dropped_forward, &other.dropped_forward);
        merge_distribution(&mut self.kept_forward, &other.kept_forward);
    }
}

fn merge_distribution(into: &mut VerdictDistribution, from: &VerdictDistribution) {
    into.a += from.a;
    into.b += from.b;
    into.tie += from.tie;
    into.insufficient += from.insufficient;
}
