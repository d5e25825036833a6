//! Content-addressed run store: call cache, transcript, counters.
//!
//! Every model exchange is cached under a key derived from the full request
//! (model, temperature, messages, schema id), so re-running a finished or
//! killed run replays from disk with zero network calls. The transcript is an
//! append-only record of every `complete` invocation — cache hits included —
//! and deliberately carries no wall-clock fields so result logs stay
//! byte-identical across runs.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::ChatResponse;

/// One line of the call transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub request_tag: String,
    pub model_id: String,
    pub cache_key: String,
    pub cache_hit: bool,
    /// Retries after the first attempt (0 = first attempt succeeded).
    pub retries: u32,
    pub outcome: TranscriptOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub prompt_chars: usize,
    pub response_chars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptOutcome {
    Ok,
    Error,
}

/// Monotonic call counters, shared by every clone of a gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    /// Exchanges dispatched to the backend (successes and exhausted
    /// failures); cache hits never count.
    pub network_calls: u64,
    pub cache_hits: u64,
    pub failed_calls: u64,
}

/// Cache + transcript, in memory and optionally mirrored to a run directory.
///
/// Layout under a directory: `cache/<key>.json` (one file per cached
/// response) and `transcript.jsonl` (append-only).
pub struct RunStore {
    dir: Option<PathBuf>,
    cache: Mutex<HashMap<String, ChatResponse>>,
    transcript: Mutex<Vec<TranscriptEntry>>,
    seq: AtomicU64,
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
    failed_calls: AtomicU64,
}

impl RunStore {
    pub fn in_memory() -> RunStore {
        RunStore {
            dir: None,
            cache: Mutex::new(HashMap::new()),
            transcript: Mutex::new(Vec::new()),
            seq: AtomicU64::new(0),
            network_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            failed_calls: AtomicU64::new(0),
        }
    }

    /// Open (or create) a persistent store under `dir`. Cached responses from
    /// previous runs are picked up lazily on `get`.
    pub fn open(dir: &Path) -> std::io::Result<RunStore> {
        fs::create_dir_all(dir.join("cache"))?;
        let mut store = RunStore::in_memory();
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn cache_file(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("cache").join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<ChatResponse> {
        if let Some(resp) = self.cache.lock().unwrap().get(key) {
            return Some(resp.clone());
        }
        let path = self.cache_file(key)?;
        let raw = fs::read_to_string(path).ok()?;
        let resp: ChatResponse = serde_json::from_str(&raw).ok()?;
        self.cache.lock().unwrap().insert(key.to_string(), resp.clone());
        Some(resp)
    }

    pub fn put(&self, key: &str, resp: &ChatResponse) {
        self.cache.lock().unwrap().insert(key.to_string(), resp.clone());
        if let Some(path) = self.cache_file(key) {
            // Atomic via tmp+rename so a killed run never leaves a torn file.
            let tmp = path.with_extension("json.tmp");
            if let Ok(mut f) = fs::File::create(&tmp) {
                let body = serde_json::to_string(resp).expect("response serializes");
                if f.write_all(body.as_bytes()).is_ok() {
                    let _ = fs::rename(&tmp, &path);
                }
            }
        }
    }

    /// Record one `complete` invocation. Assigns the sequence number and
    /// bumps the counters.
    pub fn record(&self, mut entry: TranscriptEntry) {
        entry.seq = self.seq.fetch_add(1, Ordering::SeqCst);
        if entry.cache_hit {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
        } else {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
        }
        if entry.outcome == TranscriptOutcome::Error {
            self.failed_calls.fetch_add(1, Ordering::SeqCst);
        }
        if let Some(dir) = &self.dir {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            if let Ok(mut f) = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join("transcript.jsonl"))
            {
                let _ = writeln!(f, "{line}");
            }
        }
        self.transcript.lock().unwrap().push(entry);
    }

    pub fn counters(&self) -> CounterSnapshot {
        CounterSnapshot {
            network_calls: self.network_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            failed_calls: self.failed_calls.load(Ordering::SeqCst),
        }
    }

    /// This process's transcript (excludes lines appended by earlier runs;
    /// use [`RunStore::load_transcript`] for the on-disk history).
    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().unwrap().clone()
    }

    /// Read the full persisted transcript of a run directory, across every
    /// process that appended to it.
    pub fn load_transcript(dir: &Path) -> std::io::Result<Vec<TranscriptEntry>> {
        let raw = fs::read_to_string(dir.join("transcript.jsonl"))?;
        Ok(raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).expect("valid transcript line"))
            .collect())
    }
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(text: &str) -> ChatResponse {
        ChatResponse {
            text: text.to_string(),
            prompt_tokens: 1,
            completion_tokens: 2,
            backend_id: "mock".to_string(),
        }
    }

    fn entry(tag: &str, hit: bool, outcome: TranscriptOutcome) -> TranscriptEntry {
        TranscriptEntry {
            seq: 0,
            request_tag: tag.to_string(),
            model_id: "m".to_string(),
            cache_key: "k".to_string(),
            cache_hit: hit,
            retries: 0,
            outcome,
            error: None,
            prompt_chars: 10,
            response_chars: 5,
        }
    }

    #[test]
    fn test_in_memory_get_put_round_trip() {
        let store = RunStore::in_memory();
        assert!(store.get("k1").is_none());
        store.put("k1", &resp("hello"));
        assert_eq!(store.get("k1").unwrap().text, "hello");
    }

    #[test]
    fn test_counters_track_network_vs_cache() {
        let store = RunStore::in_memory();
        store.record(entry("a", false, TranscriptOutcome::Ok));
        store.record(entry("a", true, TranscriptOutcome::Ok));
        store.record(entry("b", false, TranscriptOutcome::Error));
        let c = store.counters();
        assert_eq!(c.network_calls, 2);
        assert_eq!(c.cache_hits, 1);
        assert_eq!(c.failed_calls, 1);
        // Invariant: network calls == transcript entries - cache hits.
        let t = store.transcript();
        assert_eq!(c.network_calls, (t.len() as u64) - c.cache_hits);
    }

    #[test]
    fn test_sequence_numbers_are_assigned_in_order() {
        let store = RunStore::in_memory();
        for _ in 0..3 {
            store.record(entry("a", false, TranscriptOutcome::Ok));
        }
        let seqs: Vec<u64> = store.transcript().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
    }

    #[test]
    fn test_persistent_store_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = RunStore::open(dir.path()).unwrap();
            store.put("deadbeef", &resp("persisted"));
            store.record(entry("tag", false, TranscriptOutcome::Ok));
        }
        let store = RunStore::open(dir.path()).unwrap();
        assert_eq!(store.get("deadbeef").unwrap().text, "persisted");
        let history = RunStore::load_transcript(dir.path()).unwrap();
        assert_eq!(history.len(), 1);
        assert_eq!(history[0].request_tag, "tag");
    }

    #[test]
    fn test_transcript_appends_across_reopens() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = RunStore::open(dir.path()).unwrap();
            store.record(entry("first", false, TranscriptOutcome::Ok));
        }
        {
            let store = RunStore::open(dir.path()).unwrap();
            store.record(entry("second", true, TranscriptOutcome::Ok));
        }
        let history = RunStore::load_transcript(dir.path()).unwrap();
        assert_eq!(history.len(), 2);
        assert_eq!(history[1].request_tag, "second");
    }
}
