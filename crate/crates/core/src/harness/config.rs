//! Run configuration: a TOML document with `[gateway]`, `[pipeline]`, and
//! `[harness]` sections. Every field has a default, so a config file only
//! states what it changes. The API key is NEVER part of the config — the
//! gateway reads it from the environment variable named by `api_key_env`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criteria::JudgingMode;
use crate::gateway::GatewayConfig;
use crate::guidance::{GuidanceMode, PipelineStage};
use crate::harness::metrics::FailurePolicy;
use crate::refine::RefinementConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(String),
}

fn default_api_key_env() -> String {
    "CRITJUDGE_API_KEY".to_string()
}

fn default_model() -> String {
    "default-judge".to_string()
}

/// Model selection per pipeline stage; unset stages use `default`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub default: String,
    pub criterion_generation: Option<String>,
    pub criterion_judging: Option<String>,
    pub refinement: Option<String>,
    pub final_judge: Option<String>,
    pub monolithic: Option<String>,
    pub pointwise: Option<String>,
    pub weighting: Option<String>,
    pub guidance_synthesis: Option<String>,
    pub human_rationale: Option<String>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            default: default_model(),
            criterion_generation: None,
            criterion_judging: None,
            refinement: None,
            final_judge: None,
            monolithic: None,
            pointwise: None,
            weighting: None,
            guidance_synthesis: None,
            human_rationale: None,
        }
    }
}

impl ModelsConfig {
    pub fn criterion_generation(&self) -> &str {
        self.criterion_generation.as_deref().unwrap_or(&self.default)
    }
    pub fn criterion_judging(&self) -> &str {
        self.criterion_judging.as_deref().unwrap_or(&self.default)
    }
    pub fn refinement(&self) -> &str {
        self.refinement.as_deref().unwrap_or(&self.default)
    }
    pub fn final_judge(&self) -> &str {
        self.final_judge.as_deref().unwrap_or(&self.default)
    }
    pub fn monolithic(&self) -> &str {
        self.monolithic.as_deref().unwrap_or(&self.default)
    }
    pub fn pointwise(&self) -> &str {
        self.pointwise.as_deref().unwrap_or(&self.default)
    }
    pub fn weighting(&self) -> &str {
        self.weighting.as_deref().unwrap_or(&self.default)
    }
    pub fn guidance_synthesis(&self) -> &str {
        self.guidance_synthesis.as_deref().unwrap_or(&self.default)
    }
    pub fn human_rationale(&self) -> &str {
        self.human_rationale.as_deref().unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    /// Chat-completion endpoint for the HTTP backend.
    pub base_url: String,
    /// Environment variable holding the API key (the key itself never
    /// appears in config files).
    pub api_key_env: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub repair_rounds: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub models: ModelsConfig,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection {
            base_url: "http://localhost:8000/v1/chat/completions".to_string(),
            api_key_env: default_api_key_env(),
            temperature: 0.0,
            max_retries: 2,
            repair_rounds: 2,
            backoff_ms: 500,
            timeout_secs: 120,
            models: ModelsConfig::default(),
        }
    }
}

impl GatewaySection {
    pub fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            temperature: self.temperature,
            max_retries: self.max_retries,
            repair_rounds: self.repair_rounds,
            backoff_ms: self.backoff_ms,
        }
    }
}

/// Which prediction method the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Full criterion pipeline with pairwise criterion judging.
    #[default]
    Pairwise,
    /// Pointwise criterion judging baseline (per-response YES/NO).
    Pointwise,
    /// Single-call monolithic judge baseline.
    Monolithic,
}

impl Method {
    pub fn wire(self) -> &'static str {
        match self {
            Method::Pairwise => "pairwise",
            Method::Pointwise => "pointwise",
            Method::Monolithic => "monolithic",
        }
    }
}

/// Aggregation for the pointwise method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseWeighting {
    #[default]
    Uniform,
    /// Criterion weights elicited from the model.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub method: Method,
    /// Batched (one call per criterion set) or one call per criterion.
    pub judging_mode: JudgingMode,
    pub btcr_enabled: bool,
    pub btcr_max_iterations: u32,
    pub btcr_depth_limit: u32,
    pub scf_enabled: bool,
    /// On criterion-generation failure, fall back to the monolithic judge
    /// instead of marking the instance failed.
    pub fallback_monolithic: bool,
    /// Path to a synthesized guidance artifact; empty disables guidance
    /// regardless of mode.
    pub guidance_artifact: Option<String>,
    pub guidance_mode: GuidanceMode,
    /// Stages guidance is injected into (the injection mask).
    pub guidance_stages: Vec<PipelineStage>,
    pub pointwise_weighting: PointwiseWeighting,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            method: Method::Pairwise,
            judging_mode: JudgingMode::Batched,
            btcr_enabled: true,
            btcr_max_iterations: RefinementConfig::default().max_iterations,
            btcr_depth_limit: RefinementConfig::default().depth_limit,
            scf_enabled: true,
            fallback_monolithic: false,
            guidance_artifact: None,
            guidance_mode: GuidanceMode::None,
            guidance_stages: vec![
                PipelineStage::CriterionGeneration,
                PipelineStage::CriterionJudging,
                PipelineStage::FinalJudging,
            ],
            pointwise_weighting: PointwiseWeighting::Uniform,
        }
    }
}

impl PipelineSection {
    pub fn refinement_config(&self) -> RefinementConfig {
        RefinementConfig {
            max_iterations: self.btcr_max_iterations,
            depth_limit: self.btcr_depth_limit,
        }
    }

    pub fn stage_in_mask(&self, stage: PipelineStage) -> bool {
        self.guidance_stages.contains(&stage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    /// Instance-level worker threads.
    pub workers: usize,
    pub failure_policy: FailurePolicy,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection { workers: 4, failure_policy: FailurePolicy::CountWrong }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewaySection,
    pub pipeline: PipelineSection,
    pub harness: HarnessSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        Config::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Config, ConfigError> {
        toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_empty_config_is_all_defaults() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.pipeline.method, Method::Pairwise);
        assert!(cfg.pipeline.btcr_enabled);
        assert!(cfg.pipeline.scf_enabled);
        assert_eq!(cfg.pipeline.guidance_mode, GuidanceMode::None);
        assert_eq!(cfg.pipeline.guidance_stages.len(), 3);
        assert_eq!(cfg.gateway.api_key_env, "CRITJUDGE_API_KEY");
    }

    #[test]
    fn test_full_config_round_trip() {
        let raw = r#"
            [gateway]
            base_url = "https://api.example.com/v1/chat/completions"
            temperature = 0.2
            max_retries = 5

            [gateway.models]
            default = "big-judge"
            criterion_judging = "fast-judge"

            [pipeline]
            method = "pointwise"
            judging_mode = "per_criterion"
            btcr_enabled = false
            scf_enabled = false
            guidance_mode = "global_plus_category"
            guidance_artifact = "runs/guidance.json"
            guidance_stages = ["criterion_generation", "final_judging"]
            pointwise_weighting = "llm"

            [harness]
            workers = 2
            failure_policy = "exclude"
        "#;
        let cfg = Config::parse(raw).unwrap();
        assert_eq!(cfg.gateway.max_retries, 5);
        assert_eq!(cfg.gateway.models.criterion_judging(), "fast-judge");
        assert_eq!(cfg.gateway.models.final_judge(), "big-judge", "unset stage uses default");
        assert_eq!(cfg.pipeline.method, Method::Pointwise);
        assert_eq!(cfg.pipeline.judging_mode, JudgingMode::PerCriterion);
        assert!(!cfg.pipeline.btcr_enabled);
        assert_eq!(cfg.pipeline.guidance_mode, GuidanceMode::GlobalPlusCategory);
        assert!(cfg.pipeline.stage_in_mask(PipelineStage::CriterionGeneration));
        assert!(!cfg.pipeline.stage_in_mask(PipelineStage::CriterionJudging));
        assert_eq!(cfg.pipeline.pointwise_weighting, PointwiseWeighting::Llm);
        assert_eq!(cfg.harness.workers, 2);
        assert_eq!(cfg.harness.failure_policy, FailurePolicy::Exclude);
    }

    #[test]
    fn test_unknown_keys_are_rejected() {
        let err = Config::parse("[pipeline]\napi_key = \"sk-123\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err:?}");
    }

    #[test]
    fn test_refinement_config_mapping() {
        let cfg = Config::parse("[pipeline]\nbtcr_max_iterations = 7\nbtcr_depth_limit = 3\n")
            .unwrap();
        let rc = cfg.pipeline.refinement_config();
        assert_eq!(rc.max_iterations, 7);
        assert_eq!(rc.depth_limit, 3);
    }
}
