//! Criterion-centric pairwise preference judging for code responses.
//!
//! Given a programming instruction and two candidate responses (A and B), the
//! engine predicts which one a human would prefer. Instead of asking a judge
//! model for a single holistic verdict, it decomposes the comparison:
//!
//! 1. generate task-specific evaluation criteria ([`criteria`]),
//! 2. judge every criterion pairwise ([`criteria`]),
//! 3. refine tied criteria into more granular sub-criteria with batched
//!    decomposition and filtering calls ([`refine`]),
//! 4. drop position-sensitive judgments via swap-consistency filtering
//!    ([`scf`]),
//! 5. synthesize the final preference from the surviving criterion-level
//!    evidence ([`aggregate`]).
//!
//! Criterion generation, judging, and the final judge can each be steered by
//! an offline-synthesized guidance artifact ([`guidance`]) distilled from
//! human preference rationales on a training split.
//!
//! All model traffic goes through a pluggable [`gateway`] with retries, a
//! content-addressed call cache, and a deterministic mock backend, so every
//! pipeline run is resumable and reproducible. [`harness`] adds dataset
//! ingestion, split management, metrics, and the ablation configs used by the
//! `critjudge` CLI.

pub mod aggregate;
pub mod criteria;
pub mod gateway;
pub mod guidance;
pub mod harness;
pub mod model;
pub mod prompts;
pub mod refine;
pub mod scf;
pub mod schemas;
