//! `critjudge` — dataset checks, deterministic splitting, guidance
//! synthesis, pipeline runs, baseline comparison, metrics, position-bias
//! analysis, and run reports.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use critjudge::gateway::http::HttpBackend;
use critjudge::gateway::mock::{MockBackend, MockScript};
use critjudge::gateway::store::RunStore;
use critjudge::gateway::{Backend, Gateway};
use critjudge::guidance::{self, GuidanceMode, SynthesisOptions};
use critjudge::harness::config::{Config, Method, PointwiseWeighting};
use critjudge::harness::dataset::{self, Dataset, IngestMode, SplitManifest};
use critjudge::harness::metrics::{self, FailurePolicy, MetricsReport};
use critjudge::harness::runner::{self, BiasLevel, BiasStage, BiasStats};
use critjudge::model::{Instance, TaskCategory, VoteMap};

#[derive(Parser)]
#[command(
    name = "critjudge",
    version,
    about = "Criterion-based pairwise preference judging for code responses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL dataset and print its shape.
    IngestCheck(IngestCheckArgs),
    /// Deterministically split a dataset into train/validation ids.
    Split(SplitArgs),
    /// Synthesize a guidance artifact from the training split.
    SynthesizeGuidance(SynthesizeArgs),
    /// Run the configured judging pipeline over the validation split.
    Judge(JudgeArgs),
    /// Run several methods over the same split and compare accuracies.
    CompareBaselines(CompareArgs),
    /// Score a results log against human labels.
    Evaluate(EvaluateArgs),
    /// Position-bias statistics (pre- vs post-filtering) from a results log.
    AnalyzeBias(AnalyzeBiasArgs),
    /// Summarize a finished run directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Real chat-completion endpoint (gateway.base_url; API key read from
    /// the environment variable named by gateway.api_key_env).
    Http,
    /// Scripted offline backend; requires --mock-script.
    Mock,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Http)]
    backend: BackendKind,
    /// JSON file of scripted replies for --backend mock.
    #[arg(long)]
    mock_script: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    /// Failed instances count as wrong (conservative default).
    CountWrong,
    /// Failed instances are dropped from scoring and reported.
    Exclude,
}

impl From<PolicyArg> for FailurePolicy {
    fn from(p: PolicyArg) -> FailurePolicy {
        match p {
            PolicyArg::CountWrong => FailurePolicy::CountWrong,
            PolicyArg::Exclude => FailurePolicy::Exclude,
        }
    }
}

#[derive(Args)]
struct IngestCheckArgs {
    /// Dataset (one JSON object per line).
    #[arg(long)]
    data: PathBuf,
    /// Skip malformed lines (with a report) instead of aborting.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Shuffle seed (required: splits must be explicit and reproducible).
    #[arg(long)]
    seed: u64,
    /// Fraction of instances assigned to the training split.
    #[arg(long, default_value_t = 0.2)]
    train_fraction: f64,
    /// Where to write the split manifest (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Split manifest; only its training ids are consulted.
    #[arg(long)]
    split: PathBuf,
    /// Where to write the guidance artifact (a .manifest.json sidecar with
    /// its hash is written next to it).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthesizer model id (default: the configured guidance-synthesis model).
    #[arg(long)]
    synthesizer: Option<String>,
    /// Token budget for the sample-case section of the synthesis prompt.
    #[arg(long, default_value_t = 8_000)]
    budget: u64,
    /// Downsampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional directory for the call cache (resumable synthesis).
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Split manifest; the pipeline runs over its validation ids. Without
    /// one, the whole dataset is judged.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory: call cache, transcript, results, report. Re-running
    /// with the same inputs resumes from the cache.
    #[arg(long)]
    run_dir: PathBuf,
    /// Judge only the first N instances (by id order).
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run_dir: PathBuf,
    /// Comma-separated methods to run.
    #[arg(long, default_value = "monolithic,pointwise_uniform,pointwise_weighted,pairwise")]
    methods: String,
    #[arg(long, value_enum, default_value_t = PolicyArg::CountWrong)]
    policy: PolicyArg,
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Results log written by `judge`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Split manifest; scoring is restricted to its validation ids.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::CountWrong)]
    policy: PolicyArg,
    /// Also write the metrics report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeBiasArgs {
    /// Results log written by `judge`.
    #[arg(long)]
    results: PathBuf,
    /// Also write the statistics as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory produced by `judge`.
    #[arg(long)]
    run_dir: PathBuf,
    /// Dataset, to add an accuracy section.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::CountWrong)]
    policy: PolicyArg,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let output = match cli.command {
        Command::IngestCheck(args) => cmd_ingest_check(&args)?,
        Command::Split(args) => cmd_split(&args)?,
        Command::SynthesizeGuidance(args) => cmd_synthesize(&args)?,
        Command::Judge(args) => cmd_judge(&args)?,
        Command::CompareBaselines(args) => cmd_compare(&args)?,
        Command::Evaluate(args) => cmd_evaluate(&args)?,
        Command::AnalyzeBias(args) => cmd_analyze_bias(&args)?,
        Command::Report(args) => cmd_report(&args)?,
    };
    println!("{output}");
    Ok(())
}

// ─── Shared plumbing ────────────────────────────────────────────────────────

fn load_dataset(path: &Path, mode: IngestMode) -> Result<dataset::IngestOutcome> {
    dataset::ingest(path, mode, &VoteMap::default())
        .with_context(|| format!("loading dataset {}", path.display()))
}

fn load_config(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn load_split(path: &Path, dataset: &Dataset) -> Result<SplitManifest> {
    let manifest = SplitManifest::load(path)
        .with_context(|| format!("loading split manifest {}", path.display()))?;
    if manifest.dataset_hash != dataset.content_hash() {
        eprintln!(
            "warning: split manifest {} was made from a different dataset revision \
             (hash mismatch); ids are matched by value",
            path.display()
        );
    }
    Ok(manifest)
}

fn build_gateway(
    config: &Config,
    backend: &BackendArgs,
    run_dir: Option<&Path>,
) -> Result<Gateway> {
    let backend: Arc<dyn Backend> = match backend.backend {
        BackendKind::Mock => {
            let path = backend
                .mock_script
                .as_ref()
                .context("--backend mock requires --mock-script <file>")?;
            let script = MockScript::from_file(path)
                .with_context(|| format!("loading mock script {}", path.display()))?;
            Arc::new(MockBackend::new(script))
        }
        BackendKind::Http => Arc::new(HttpBackend::new(
            &config.gateway.base_url,
            &config.gateway.api_key_env,
            config.gateway.timeout_secs,
        )),
    };
    let store = match run_dir {
        Some(dir) => Arc::new(
            RunStore::open(dir).with_context(|| format!("opening run dir {}", dir.display()))?,
        ),
        None => Arc::new(RunStore::in_memory()),
    };
    Ok(Gateway::new(backend, store, config.gateway.gateway_config()))
}

/// Instances the run covers: the split's validation ids (or everything),
/// sorted by id, optionally truncated.
fn select_instances(
    dataset: &Dataset,
    split: Option<&SplitManifest>,
    limit: Option<usize>,
) -> Vec<Instance> {
    let mut instances: Vec<Instance> = match split {
        Some(manifest) => dataset
            .instances
            .iter()
            .filter(|i| manifest.val_ids.contains(&i.id))
            .cloned()
            .collect(),
        None => dataset.instances.clone(),
    };
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(n) = limit {
        instances.truncate(n);
    }
    instances
}

fn load_guidance_artifact(config: &Config) -> Result<Option<guidance::GuidanceArtifact>> {
    if config.pipeline.guidance_mode == GuidanceMode::None {
        return Ok(None);
    }
    let path = config.pipeline.guidance_artifact.as_deref().context(
        "pipeline.guidance_mode is enabled but pipeline.guidance_artifact names no file",
    )?;
    let artifact = guidance::load_artifact(Path::new(path))
        .with_context(|| format!("loading guidance artifact {path}"))?;
    Ok(Some(artifact))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ─── ingest-check ───────────────────────────────────────────────────────────

fn cmd_ingest_check(args: &IngestCheckArgs) -> Result<String> {
    let mode = if args.lenient { IngestMode::Lenient } else { IngestMode::Strict };
    let outcome = load_dataset(&args.data, mode)?;
    let ds = &outcome.dataset;
    let labeled = ds.instances.iter().filter(|i| i.human_overall.is_some()).count();
    let mut out = String::new();
    out.push_str(&format!("dataset: {}\n", args.data.display()));
    out.push_str(&format!("format_version: {}\n", ds.format_version));
    out.push_str(&format!("content_hash: {}\n", ds.content_hash()));
    out.push_str(&format!("instances: {}\n", ds.instances.len()));
    out.push_str(&format!(
        "labeled: {labeled}  unlabeled: {}\n",
        ds.instances.len() - labeled
    ));
    out.push_str("per-category counts:\n");
    for cat in TaskCategory::ALL {
        let n = ds.instances.iter().filter(|i| i.category == cat).count();
        out.push_str(&format!("  {:<22} {n}\n", cat.wire()));
    }
    if !outcome.skipped.is_empty() {
        out.push_str(&format!("skipped lines: {}\n", outcome.skipped.len()));
        for s in &outcome.skipped {
            out.push_str(&format!("  line {}: {}\n", s.line, s.reason));
        }
    }
    out.push_str("ok");
    Ok(out)
}

// ─── split ──────────────────────────────────────────────────────────────────

fn cmd_split(args: &SplitArgs) -> Result<String> {
    let outcome = load_dataset(&args.data, IngestMode::Strict)?;
    let manifest = dataset::split(&outcome.dataset, args.seed, args.train_fraction)?;
    manifest.save(&args.out)?;
    Ok(format!(
        "split written to {}\nseed: {}\ntrain_fraction: {}\ntrain: {}  val: {}",
        args.out.display(),
        manifest.seed,
        manifest.train_fraction,
        manifest.train_ids.len(),
        manifest.val_ids.len(),
    ))
}

// ─── synthesize-guidance ────────────────────────────────────────────────────

fn cmd_synthesize(args: &SynthesizeArgs) -> Result<String> {
    let config = load_config(args.config.as_ref())?;
    let outcome = load_dataset(&args.data, IngestMode::Strict)?;
    let ds = &outcome.dataset;
    let manifest = SplitManifest::load(&args.split)
        .with_context(|| format!("loading split manifest {}", args.split.display()))?;
    // Guidance must never see validation data, so the manifest has to match
    // the dataset it was cut from.
    if manifest.dataset_hash != ds.content_hash() {
        bail!(
            "split manifest {} was made from a different dataset revision; \
             refusing to synthesize guidance against it",
            args.split.display()
        );
    }
    let gw = build_gateway(&config, &args.backend, args.run_dir.as_deref())?;
    let models = &config.gateway.models;

    let mut train: Vec<&Instance> =
        ds.instances.iter().filter(|i| manifest.train_ids.contains(&i.id)).collect();
    train.sort_by(|a, b| a.id.cmp(&b.id));
    let unlabeled = train.iter().filter(|i| i.human_overall.is_none()).count();
    train.retain(|i| i.human_overall.is_some());
    if train.is_empty() {
        bail!("training split has no instances with human overall labels");
    }

    let mut records = Vec::new();
    let mut warning_count = 0usize;
    for instance in &train {
        let (record, warnings) =
            guidance::build_record(&gw, models.monolithic(), models.human_rationale(), instance)
                .with_context(|| format!("building guidance record for {}", instance.id))?;
        warning_count += warnings.len();
        records.push(record);
    }

    let synthesizer =
        args.synthesizer.clone().unwrap_or_else(|| models.guidance_synthesis().to_string());
    let opts = SynthesisOptions::new(&synthesizer, args.budget, args.seed);
    let artifact = guidance::synthesize_guidance(
        &gw,
        &records,
        &manifest.train_ids,
        &manifest.train_content_hash(ds),
        &opts,
    )?;
    guidance::save_artifact(&artifact, &args.out)?;

    let divergent = records.iter().filter(|r| r.is_divergent()).count();
    let counters = gw.store().counters();
    Ok(format!(
        "guidance artifact written to {}\nsha256: {}\nrecords: {} ({divergent} divergent, \
         {unlabeled} unlabeled train instances skipped)\nrecord warnings: {warning_count}\n\
         sampled into prompt: {}\nmodel calls: {} network, {} cache hits",
        args.out.display(),
        artifact.sha256_hex(),
        records.len(),
        artifact.provenance.record_count,
        counters.network_calls,
        counters.cache_hits,
    ))
}

// ─── judge ──────────────────────────────────────────────────────────────────

fn cmd_judge(args: &JudgeArgs) -> Result<String> {
    let config = load_config(args.config.as_ref())?;
    let outcome = load_dataset(&args.data, IngestMode::Strict)?;
    let split = match &args.split {
        Some(p) => Some(load_split(p, &outcome.dataset)?),
        None => None,
    };
    let artifact = load_guidance_artifact(&config)?;
    let instances = select_instances(&outcome.dataset, split.as_ref(), args.limit);
    if instances.is_empty() {
        bail!("no instances selected (empty validation split?)");
    }
    let gw = build_gateway(&config, &args.backend, Some(&args.run_dir))?;

    let results = runner::run_pipeline(&gw, &instances, &config, artifact.as_ref());
    let results_path = args.run_dir.join("results.jsonl");
    runner::write_results(&results, &results_path)?;
    let report = runner::run_report(&results);
    let report_path = args.run_dir.join("report.json");
    write_json(&report_path, &serde_json::to_value(&report)?)?;

    let counters = gw.store().counters();
    Ok(format!(
        "judged {} instances with method '{}'\nok: {}  failed: {}  fallbacks: {}\n\
         model calls: {} network, {} cache hits, {} failed\n\
         results: {}\nreport: {}",
        report.instances,
        report.method,
        report.instances - report.failed,
        report.failed,
        report.fallbacks,
        counters.network_calls,
        counters.cache_hits,
        counters.failed_calls,
        results_path.display(),
        report_path.display(),
    ))
}

// ─── compare-baselines ──────────────────────────────────────────────────────

fn apply_method(config: &mut Config, name: &str) -> Result<()> {
    match name {
        "pairwise" => config.pipeline.method = Method::Pairwise,
        "monolithic" => config.pipeline.method = Method::Monolithic,
        "pointwise_uniform" => {
            config.pipeline.method = Method::Pointwise;
            config.pipeline.pointwise_weighting = PointwiseWeighting::Uniform;
        }
        "pointwise_weighted" => {
            config.pipeline.method = Method::Pointwise;
            config.pipeline.pointwise_weighting = PointwiseWeighting::Llm;
        }
        other => bail!(
            "unknown method '{other}' (expected pairwise, monolithic, \
             pointwise_uniform, or pointwise_weighted)"
        ),
    }
    Ok(())
}

fn short_category(cat: TaskCategory) -> &'static str {
    match cat {
        TaskCategory::WebDevelopment => "web",
        TaskCategory::GameDevelopment => "game",
        TaskCategory::CreativeCoding => "creative",
        TaskCategory::DiagramCreation => "diagram",
        TaskCategory::ScientificComputing => "scientific",
        TaskCategory::ProblemSolving => "problem",
    }
}

fn comparison_table(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<20} {:>5} {:>8}", "method", "n", "overall"));
    for cat in TaskCategory::ALL {
        out.push_str(&format!(" {:>10}", short_category(cat)));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{:<20} {:>5} {:>7.1}%",
            r.method,
            r.n,
            r.overall_accuracy * 100.0
        ));
        for cat in TaskCategory::ALL {
            match r.per_category.get(&cat) {
                Some(c) => out.push_str(&format!(" {:>9.1}%", c.accuracy * 100.0)),
                None => out.push_str(&format!(" {:>10}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

fn cmd_compare(args: &CompareArgs) -> Result<String> {
    let base_config = load_config(args.config.as_ref())?;
    let outcome = load_dataset(&args.data, IngestMode::Strict)?;
    let split = match &args.split {
        Some(p) => Some(load_split(p, &outcome.dataset)?),
        None => None,
    };
    let instances = select_instances(&outcome.dataset, split.as_ref(), args.limit);
    if instances.is_empty() {
        bail!("no instances selected (empty validation split?)");
    }
    let val_ids: BTreeSet<String> = instances.iter().map(|i| i.id.clone()).collect();

    let mut reports = Vec::new();
    for name in args.methods.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut config = base_config.clone();
        apply_method(&mut config, name)?;
        let artifact = load_guidance_artifact(&config)?;
        let method_dir = args.run_dir.join(name);
        let gw = build_gateway(&config, &args.backend, Some(&method_dir))?;
        let results = runner::run_pipeline(&gw, &instances, &config, artifact.as_ref());
        runner::write_results(&results, &method_dir.join("results.jsonl"))?;
        let (preds, failed) = runner::predictions(&results);
        let report = metrics::score_with_policy(
            &preds,
            &val_ids,
            &outcome.dataset,
            name,
            args.policy.into(),
            &failed,
        )?;
        reports.push(report);
    }

    let comparison = serde_json::json!({ "methods": reports });
    write_json(&args.run_dir.join("comparison.json"), &comparison)?;
    let mut out = comparison_table(&reports);
    out.push_str(&format!(
        "comparison written to {}",
        args.run_dir.join("comparison.json").display()
    ));
    Ok(out)
}

// ─── evaluate ───────────────────────────────────────────────────────────────

fn cmd_evaluate(args: &EvaluateArgs) -> Result<String> {
    let outcome = load_dataset(&args.data, IngestMode::Strict)?;
    let results = runner::load_results(&args.results)
        .with_context(|| format!("loading results {}", args.results.display()))?;
    if results.is_empty() {
        bail!("results log {} is empty", args.results.display());
    }
    let val_ids: BTreeSet<String> = match &args.split {
        Some(p) => load_split(p, &outcome.dataset)?.val_ids,
        None => results.iter().map(|r| r.instance_id.clone()).collect(),
    };
    let (preds, failed) = runner::predictions(&results);
    let method = results[0].method.clone();
    let report = metrics::score_with_policy(
        &preds,
        &val_ids,
        &outcome.dataset,
        &method,
        args.policy.into(),
        &failed,
    )?;
    let json = serde_json::to_value(&report)?;
    if let Some(out) = &args.out {
        write_json(out, &json)?;
    }
    Ok(serde_json::to_string_pretty(&json)?)
}

// ─── analyze-bias ───────────────────────────────────────────────────────────

fn fmt_ratio(r: Option<f64>) -> String {
    match r {
        Some(v) => format!("{v:.2}"),
        None => "n/a".to_string(),
    }
}

fn bias_text_table(title: &str, rows: &[&BiasStats]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{title}\n"));
    out.push_str(&format!(
        "  {:<10} {:>7} {:>7} {:>7} {:>9} {:>7} {:>8} {:>14}\n",
        "stage", "A %", "B %", "Tie %", "A-B (pp)", "A/B", "decided", "insufficient"
    ));
    for s in rows {
        let stage = match s.stage {
            BiasStage::PreScf => "pre-SCF",
            BiasStage::PostScf => "post-SCF",
        };
        out.push_str(&format!(
            "  {:<10} {:>7.1} {:>7.1} {:>7.1} {:>+9.1} {:>7} {:>8} {:>14}\n",
            stage,
            s.pct_a,
            s.pct_b,
            s.pct_tie,
            s.skew_pp,
            fmt_ratio(s.ab_ratio),
            s.count_a + s.count_b + s.count_tie,
            s.count_insufficient,
        ));
    }
    out
}

fn cmd_analyze_bias(args: &AnalyzeBiasArgs) -> Result<String> {
    let results = runner::load_results(&args.results)
        .with_context(|| format!("loading results {}", args.results.display()))?;
    let stats = |level, stage| runner::bias_stats(&results, level, stage).ok();
    let criterion = [
        stats(BiasLevel::CriterionLevel, BiasStage::PreScf),
        stats(BiasLevel::CriterionLevel, BiasStage::PostScf),
    ];
    let sample = [
        stats(BiasLevel::SampleLevel, BiasStage::PreScf),
        stats(BiasLevel::SampleLevel, BiasStage::PostScf),
    ];
    if criterion.iter().chain(&sample).all(Option::is_none) {
        bail!("results log {} holds no criterion judgments", args.results.display());
    }

    let json = serde_json::json!({
        "criterion_level": { "pre_scf": criterion[0], "post_scf": criterion[1] },
        "sample_level": { "pre_scf": sample[0], "post_scf": sample[1] },
    });
    if let Some(out) = &args.out {
        write_json(out, &json)?;
    }

    fn present(set: &[Option<BiasStats>]) -> Vec<&BiasStats> {
        set.iter().flatten().collect()
    }
    let mut out = String::new();
    let crit_rows = present(&criterion);
    if !crit_rows.is_empty() {
        out.push_str(&bias_text_table("position bias — criterion level", &crit_rows));
    }
    let sample_rows = present(&sample);
    if !sample_rows.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&bias_text_table("position bias — sample level (per-instance majority)", &sample_rows));
    }
    out.push_str(&format!("\n{}", serde_json::to_string_pretty(&json)?));
    Ok(out)
}

// ─── report ─────────────────────────────────────────────────────────────────

fn cmd_report(args: &ReportArgs) -> Result<String> {
    let results_path = args.run_dir.join("results.jsonl");
    let results = runner::load_results(&results_path)
        .with_context(|| format!("loading results {}", results_path.display()))?;
    if results.is_empty() {
        bail!("run directory {} holds no results", args.run_dir.display());
    }
    let report = runner::run_report(&results);
    write_json(&args.run_dir.join("report.json"), &serde_json::to_value(&report)?)?;

    let mut out = String::new();
    out.push_str(&format!("run: {}\n", args.run_dir.display()));
    out.push_str(&format!(
        "method: {}  instances: {}  failed: {}  fallbacks: {}  warnings: {}\n",
        report.method, report.instances, report.failed, report.fallbacks, report.warning_count
    ));

    if let Ok(transcript) = RunStore::load_transcript(&args.run_dir) {
        let hits = transcript.iter().filter(|e| e.cache_hit).count();
        let errors = transcript
            .iter()
            .filter(|e| e.outcome == critjudge::gateway::store::TranscriptOutcome::Error)
            .count();
        out.push_str(&format!(
            "transcript: {} exchanges ({} network, {hits} cache hits, {errors} errors)\n",
            transcript.len(),
            transcript.len() - hits,
        ));
    }

    if report.savings.total_plain_loop > 0 {
        out.push_str(&format!(
            "refinement calls: {} batched vs {} plain-loop ({:.1}% saved)\n",
            report.savings.total_batched,
            report.savings.total_plain_loop,
            report.savings.total_savings_percent,
        ));
    }
    if report.pool.total_criteria > 0 {
        out.push_str(&format!(
            "swap-consistency pool: {} criteria -> {} kept, {} dropped \
             ({} order-sensitive judgments removed)\n",
            report.pool.total_criteria,
            report.pool.kept_criteria,
            report.pool.dropped_criteria,
            report.pool.position_sensitive_judgments,
        ));
    }
    let crit_rows: Vec<&BiasStats> =
        report.bias.iter().filter(|b| b.level == BiasLevel::CriterionLevel).collect();
    if !crit_rows.is_empty() {
        out.push_str(&bias_text_table("position bias — criterion level", &crit_rows));
    }

    if let Some(data) = &args.data {
        let outcome = load_dataset(data, IngestMode::Strict)?;
        let val_ids: BTreeSet<String> = match &args.split {
            Some(p) => load_split(p, &outcome.dataset)?.val_ids,
            None => results.iter().map(|r| r.instance_id.clone()).collect(),
        };
        let (preds, failed) = runner::predictions(&results);
        let metrics_report = metrics::score_with_policy(
            &preds,
            &val_ids,
            &outcome.dataset,
            &report.method,
            args.policy.into(),
            &failed,
        )?;
        out.push_str(&format!(
            "accuracy: {:.1}% over {} scored instances\n",
            metrics_report.overall_accuracy * 100.0,
            metrics_report.n
        ));
    }
    out.push_str(&format!("report: {}", args.run_dir.join("report.json").display()));
    Ok(out)
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    const DATA: &str = concat!(
        r#"{"id":"a1","instruction":"make a page","response_a":"<html>","response_b":"<div>","category":"web_development","human":{"overall_vote":"model_a"}}"#,
        "\n",
        r#"{"id":"a2","instruction":"make a game","response_a":"x","response_b":"y","category":"game_development","human":{"overall_vote":"tie"}}"#,
        "\n",
        r#"{"id":"a3","instruction":"plot data","response_a":"p","response_b":"q","category":"scientific_computing","human":{"overall_vote":"model_b"}}"#,
        "\n",
    );

    fn write_data(dir: &Path) -> PathBuf {
        let path = dir.join("data.jsonl");
        std::fs::write(&path, DATA).unwrap();
        path
    }

    #[test]
    fn test_ingest_check_reports_shape() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_data(dir.path());
        let out = cmd_ingest_check(&IngestCheckArgs { data, lenient: false }).unwrap();
        assert!(out.contains("instances: 3"));
        assert!(out.contains("labeled: 3  unlabeled: 0"));
        assert!(out.contains("web_development"));
        assert!(out.ends_with("ok"));
    }

    #[test]
    fn test_split_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_data(dir.path());
        let out_path = dir.path().join("split.json");
        let summary = cmd_split(&SplitArgs {
            data,
            seed: 7,
            train_fraction: 0.34,
            out: out_path.clone(),
        })
        .unwrap();
        assert!(summary.contains("train: 1  val: 2"));
        let manifest = SplitManifest::load(&out_path).unwrap();
        assert_eq!(manifest.seed, 7);
        assert_eq!(manifest.train_ids.len() + manifest.val_ids.len(), 3);
    }

    #[test]
    fn test_apply_method_rejects_unknown() {
        let mut config = Config::default();
        assert!(apply_method(&mut config, "pointwise_weighted").is_ok());
        assert_eq!(config.pipeline.method, Method::Pointwise);
        assert_eq!(config.pipeline.pointwise_weighting, PointwiseWeighting::Llm);
        assert!(apply_method(&mut config, "bayesian").is_err());
    }

    #[test]
    fn test_mock_backend_requires_script() {
        let config = Config::default();
        let args = BackendArgs { backend: BackendKind::Mock, mock_script: None };
        let err = match build_gateway(&config, &args, None) {
            Ok(_) => panic!("mock backend without a script must be rejected"),
            Err(e) => e,
        };
        assert!(err.to_string().contains("--mock-script"));
    }

    #[test]
    fn test_bias_table_formats_na_ratio() {
        let stats = BiasStats {
            level: BiasLevel::CriterionLevel,
            stage: BiasStage::PreScf,
            count_a: 3,
            count_b: 0,
            count_tie: 1,
            count_insufficient: 2,
            pct_a: 75.0,
            pct_b: 0.0,
            pct_tie: 25.0,
            skew_pp: 75.0,
            ab_ratio: None,
        };
        let table = bias_text_table("t", &[&stats]);
        assert!(table.contains("n/a"));
        assert!(table.contains("pre-SCF"));
    }
}
