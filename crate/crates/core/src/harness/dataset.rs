//! Dataset ingestion and deterministic splitting.
//!
//! The on-disk format is newline-delimited JSON: one object per line with
//! fields `id`, `instruction`, `response_a`, `response_b`, `category`,
//! optional `evidence` (`exec_output_a?`, `exec_output_b?`,
//! `screenshots_a?`, `screenshots_b?`) and optional `human` (`overall_vote?`,
//! `aspect_votes?`). Raw vote tokens pass through the configured vote map.
//! Screenshot paths are stored as given and resolved lazily at first use.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{
    map_raw_label, Aspect, EvidenceBundle, Instance, PreferenceLabel, TaskCategory, VoteMap,
};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("line {line}: unknown vote token {token:?}")]
    UnknownVoteToken { line: usize, token: String },
    #[error("line {line}: duplicate instance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("train_fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("split manifest parse: {0}")]
    ManifestParse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestMode {
    /// First problem aborts the load.
    #[default]
    Strict,
    /// Bad lines are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub source_path: String,
    pub format_version: String,
}

impl Dataset {
    pub fn ids(&self) -> BTreeSet<String> {
        self.instances.iter().map(|i| i.id.clone()).collect()
    }

    pub fn by_id(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Content hash over the parsed instances, in file order. Two files
    /// that parse to the same instances hash identically regardless of
    /// formatting.
    pub fn content_hash(&self) -> String {
        hash_instances(self.instances.iter())
    }
}

fn hash_instances<'a>(instances: impl Iterator<Item = &'a Instance>) -> String {
    let mut hasher = Sha256::new();
    for instance in instances {
        hasher.update(serde_json::to_vec(instance).expect("instance serializes"));
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

// ─── Wire format ────────────────────────────────────────────────────────────

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEvidence {
    #[serde(default)]
    exec_output_a: Option<String>,
    #[serde(default)]
    exec_output_b: Option<String>,
    #[serde(default)]
    screenshots_a: Vec<String>,
    #[serde(default)]
    screenshots_b: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHuman {
    #[serde(default)]
    overall_vote: Option<String>,
    #[serde(default)]
    aspect_votes: BTreeMap<Aspect, Option<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireInstance {
    id: String,
    instruction: String,
    response_a: String,
    response_b: String,
    category: TaskCategory,
    #[serde(default)]
    evidence: Option<WireEvidence>,
    #[serde(default)]
    human: Option<WireHuman>,
}

fn parse_line(line: &str, line_no: usize, votes: &VoteMap) -> Result<Instance, DatasetError> {
    let wire: WireInstance = serde_json::from_str(line)
        .map_err(|e| DatasetError::MalformedLine { line: line_no, detail: e.to_string() })?;
    for (field, value) in [
        ("id", &wire.id),
        ("instruction", &wire.instruction),
        ("response_a", &wire.response_a),
        ("response_b", &wire.response_b),
    ] {
        if value.trim().is_empty() {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                detail: format!("{field} must be non-empty"),
            });
        }
    }
    let evidence = match wire.evidence {
        Some(e) => EvidenceBundle {
            exec_output_a: e.exec_output_a,
            exec_output_b: e.exec_output_b,
            screenshot_refs_a: e.screenshots_a,
            screenshot_refs_b: e.screenshots_b,
        },
        None => EvidenceBundle::default(),
    };
    let mut human_overall = None;
    let mut human_aspect_votes: BTreeMap<Aspect, Option<PreferenceLabel>> = BTreeMap::new();
    if let Some(human) = wire.human {
        if let Some(raw) = human.overall_vote {
            let label = map_raw_label(&raw, votes)
                .map_err(|_| DatasetError::UnknownVoteToken { line: line_no, token: raw })?;
            human_overall = Some(label);
        }
        for (aspect, raw) in human.aspect_votes {
            let label = match raw {
                Some(token) => Some(map_raw_label(&token, votes).map_err(|_| {
                    DatasetError::UnknownVoteToken { line: line_no, token }
                })?),
                None => None,
            };
            human_aspect_votes.insert(aspect, label);
        }
    }
    Ok(Instance {
        id: wire.id,
        instruction: wire.instruction,
        response_a: wire.response_a,
        response_b: wire.response_b,
        evidence,
        category: wire.category,
        human_overall,
        human_aspect_votes,
    })
}

/// Problems found (and skipped) during a lenient ingest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    /// Non-empty only in lenient mode.
    pub skipped: Vec<SkippedLine>,
}

pub const FORMAT_VERSION: &str = "1";

/// Load a JSONL dataset. Blank lines are ignored. Strict mode aborts on the
/// first malformed line, unknown vote token, or duplicate id; lenient mode
/// skips such lines and reports them.
pub fn ingest(path: &Path, mode: IngestMode, votes: &VoteMap) -> Result<IngestOutcome, DatasetError> {
    let raw = std::fs::read_to_string(path)?;
    let mut instances: Vec<Instance> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut skipped = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let result = parse_line(line, line_no, votes).and_then(|instance| {
            if seen.contains(&instance.id) {
                Err(DatasetError::DuplicateId { line: line_no, id: instance.id })
            } else {
                Ok(instance)
            }
        });
        match (result, mode) {
            (Ok(instance), _) => {
                seen.insert(instance.id.clone());
                instances.push(instance);
            }
            (Err(e), IngestMode::Strict) => return Err(e),
            (Err(e), IngestMode::Lenient) => {
                skipped.push(SkippedLine { line: line_no, reason: e.to_string() });
            }
        }
    }
    Ok(IngestOutcome {
        dataset: Dataset {
            instances,
            source_path: path.display().to_string(),
            format_version: FORMAT_VERSION.to_string(),
        },
        skipped,
    })
}

// ─── Splitting ──────────────────────────────────────────────────────────────

/// A persisted train/validation partition. Train and validation ids are
/// disjoint and together cover the dataset; keeping the manifest on disk
/// makes guidance-leakage checks reproducible across sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub dataset_hash: String,
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SplitManifest, DatasetError> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| DatasetError::ManifestParse(e.to_string()))
    }

    /// Content hash over the training instances (sorted by id), recorded in
    /// guidance artifact provenance.
    pub fn train_content_hash(&self, dataset: &Dataset) -> String {
        let mut train: Vec<&Instance> =
            dataset.instances.iter().filter(|i| self.train_ids.contains(&i.id)).collect();
        train.sort_by(|a, b| a.id.cmp(&b.id));
        hash_instances(train.into_iter())
    }
}

/// Deterministically partition a dataset: seeded shuffle of the sorted ids,
/// then the first ⌊n·train_fraction⌋ ids become the training split.
pub fn split(
    dataset: &Dataset,
    seed: u64,
    train_fraction: f64,
) -> Result<SplitManifest, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let mut ids: Vec<String> = dataset.ids().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = (ids.len() as f64 * train_fraction).floor() as usize;
    let train_ids: BTreeSet<String> = ids[..n_train].iter().cloned().collect();
    let val_ids: BTreeSet<String> = ids[n_train..].iter().cloned().collect();
    Ok(SplitManifest {
        seed,
        train_fraction,
        dataset_hash: dataset.content_hash(),
        train_ids,
        val_ids,
    })
}

// ─── Tests ──────────────────────────────────────────────────────────────────
