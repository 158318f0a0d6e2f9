use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use pearl_core::concurrency::map_ordered;
use pearl_core::eval::dataset::{import_quality, parse_articles, parse_examples, to_jsonl};
use pearl_core::eval::methods::{run_method, MethodContext, QuestionTrace};
use pearl_core::eval::{accuracy_csv, accuracy_report, plan_stats, significance, AccuracyRow, EvalRecord, PlanStats};
use pearl_core::execution::Document;
use pearl_core::gateway::{
    CachedGateway, GatewayError, OpenAiGateway, OpenAiSettings, LlmExchange, LlmRequest, ReplayGateway, UsageReport,
};
use pearl_core::planner::{
    generate_plan, load_demonstrations, refine_demonstrations, PlannerSettings, RefineCandidate,
};
use pearl_core::registry::{
    mine_actions, preset_registry, reduce_actions, seed_actions, MiningQuestion, ReductionSettings,
};
use pearl_core::{
    format_plan, parse_plan, ActionRegistry, Demonstration, ExecutionSettings, LlmGateway, Method,
    ModelConfig, PlanOutcome, QaExample,
};
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::RunConfig;
use crate::error::CliError;

/// Output limit for the reasoning-type labeling call.
const LABEL_MAX_TOKENS: u32 = 32;

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact(path.to_path_buf()))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    require(path)?;
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

/// A path next to `path` with `suffix` replacing its extension.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// The configured backend: a replay transcript or the cached live client.
pub enum Backend {
    Replay(ReplayGateway),
    Live(CachedGateway<OpenAiGateway>),
}

impl LlmGateway for Backend {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError> {
        match self {
            Backend::Replay(g) => g.complete(request),
            Backend::Live(g) => g.complete(request),
        }
    }

    fn order_sensitive(&self) -> bool {
        match self {
            Backend::Replay(g) => g.order_sensitive(),
            Backend::Live(g) => g.order_sensitive(),
        }
    }
}

impl Backend {
    /// Warns when a replay transcript was not used up; leftovers usually
    /// mean the transcript and the pipeline disagree on call order.
    fn check_leftovers(&self) {
        if let Backend::Replay(g) = self {
            let remaining = g.remaining();
            if !remaining.is_empty() {
                warn!(?remaining, "replay transcript has unused entries");
            }
        }
    }
}

pub fn build_gateway(cfg: &RunConfig) -> Result<Backend, CliError> {
    if let Some(path) = &cfg.replay_path {
        require(path)?;
        let gw = ReplayGateway::from_path(path).map_err(|e| anyhow!(e))?;
        return Ok(Backend::Replay(gw));
    }
    let endpoint = cfg
        .endpoint
        .clone()
        .ok_or_else(|| CliError::Config(vec!["no backend configured".into()]))?;
    let mut settings = OpenAiSettings::new(endpoint);
    settings.rpm_limit = cfg.rpm_limit;
    if settings.api_key.is_none() {
        warn!("no API key in the environment; sending unauthenticated requests");
    }
    let cached = CachedGateway::new(OpenAiGateway::new(settings), &cfg.cache_dir)
        .with_context(|| format!("creating cache directory {}", cfg.cache_dir.display()))?;
    Ok(Backend::Live(cached))
}

fn model(cfg: &RunConfig) -> ModelConfig {
    ModelConfig::with_model(&cfg.model)
}

fn planner_settings(cfg: &RunConfig) -> PlannerSettings {
    let model = model(cfg);
    PlannerSettings {
        prompt_budget_tokens: cfg.context_window.saturating_sub(model.max_tokens.default as usize),
        model,
        retry_limit: cfg.retry_limit,
        demo_cap: cfg.demo_cap,
    }
}

fn exec_settings(cfg: &RunConfig) -> ExecutionSettings {
    ExecutionSettings {
        model: model(cfg),
        concat_separator: cfg.concat_separator.clone(),
        context_window: cfg.context_window,
    }
}

fn load_registry(cfg: &RunConfig) -> Result<ActionRegistry, CliError> {
    if cfg.preset == "full" {
        require(&cfg.registry_path)?;
    }
    Ok(preset_registry(&cfg.preset, &cfg.registry_path).map_err(anyhow::Error::from)?)
}

fn load_demos(cfg: &RunConfig, registry: &ActionRegistry) -> Result<Vec<Demonstration>, CliError> {
    let text = read(&cfg.demos_path)?;
    Ok(load_demonstrations(&text, registry).map_err(anyhow::Error::from)?)
}

fn load_examples(path: &Path, limit: Option<usize>) -> Result<Vec<QaExample>, CliError> {
    let text = read(path)?;
    let mut examples =
        parse_examples(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(n) = limit {
        examples.truncate(n);
    }
    Ok(examples)
}

fn load_articles(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = read(path)?;
    let articles = parse_articles(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(articles.into_iter().map(|a| (a.article_id, a.text)).collect())
}

pub fn import(input: &Path, out: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = read(input)?;
    let imported = import_quality(&text).with_context(|| format!("importing {}", input.display()))?;
    write(&out.join("examples.jsonl"), &to_jsonl(&imported.examples))?;
    write(&out.join("articles.jsonl"), &to_jsonl(&imported.articles))?;
    for (split, n) in imported.split_counts() {
        writeln!(stdout, "{}: {n}", split.as_str()).context("writing to stdout")?;
    }
    writeln!(stdout, "articles: {}", imported.articles.len()).context("writing to stdout")?;
    Ok(())
}

pub fn mine(
    cfg: &RunConfig,
    examples: &Path,
    out: &Path,
    limit: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let examples = load_examples(examples, limit)?;
    let questions: Vec<MiningQuestion> = examples
        .iter()
        .map(|e| MiningQuestion {
            question_id: e.question_id.clone(),
            question: e.question.clone(),
        })
        .collect();
    let gateway = build_gateway(cfg)?;
    let mut outcome = mine_actions(&questions, &seed_actions(), &gateway, &model(cfg), cfg.parallelism)
        .map_err(anyhow::Error::from)?;
    gateway.check_leftovers();
    outcome.registry.provenance.date = Some(chrono::Utc::now().format("%Y-%m-%d").to_string());
    outcome.registry.save(out).map_err(anyhow::Error::from)?;
    write(&sibling(out, "mining-log.jsonl"), &to_jsonl(&outcome.log))?;
    let skipped = outcome.log.iter().filter(|e| e.skipped_reason.is_some()).count();
    writeln!(
        stdout,
        "mined {} actions from {} questions ({skipped} skipped)",
        outcome.registry.len(),
        questions.len()
    )
    .context("writing to stdout")?;
    Ok(())
}

pub fn reduce(
    cfg: &RunConfig,
    input: Option<&Path>,
    out: &Path,
    rounds: u32,
    target: usize,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let input = input.unwrap_or(&cfg.registry_path);
    if input == out {
        return Err(CliError::Config(vec![format!(
            "reduce would overwrite its input {}; pass a different --out",
            out.display()
        )]));
    }
    require(input)?;
    let registry = ActionRegistry::load(input).map_err(anyhow::Error::from)?;
    let gateway = build_gateway(cfg)?;
    let settings = ReductionSettings {
        target_hint: target,
        rounds,
        parallelism: cfg.parallelism,
        ..ReductionSettings::default()
    };
    let reduced = reduce_actions(&registry, &settings, &gateway, &model(cfg)).map_err(anyhow::Error::from)?;
    gateway.check_leftovers();
    reduced.save(out).map_err(anyhow::Error::from)?;
    writeln!(stdout, "reduced {} actions to {}", registry.len(), reduced.len()).context("writing to stdout")?;
    Ok(())
}

/// Sidecar written next to each generated plan.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanSidecar {
    pub question_id: String,
    pub valid: bool,
    pub attempts: usize,
    pub errors: Vec<String>,
}

fn file_stem(question_id: &str) -> String {
    question_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn plan(
    cfg: &RunConfig,
    examples: &Path,
    out: &Path,
    limit: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let registry = load_registry(cfg)?;
    let demos = load_demos(cfg, &registry)?;
    let examples = load_examples(examples, limit)?;
    let gateway = build_gateway(cfg)?;
    let settings = planner_settings(cfg);
    let outcomes = map_ordered(&examples, cfg.parallelism, gateway.order_sensitive(), |ex| {
        generate_plan(&ex.question, &registry, &demos, &gateway, &settings)
    });
    gateway.check_leftovers();
    let mut valid = 0;
    for (ex, outcome) in examples.iter().zip(outcomes) {
        let outcome = outcome.with_context(|| format!("planning {}", ex.question_id))?;
        let trace = outcome.trace();
        let last = trace.attempts.last();
        let (text, errors) = match &outcome {
            PlanOutcome::Valid { plan, .. } => (format_plan(plan), Vec::new()),
            PlanOutcome::Fallback { .. } => (
                last.map(|a| a.plan_text.clone()).unwrap_or_default(),
                last.map(|a| a.errors.iter().map(|e| e.message.clone()).collect())
                    .unwrap_or_default(),
            ),
        };
        let stem = file_stem(&ex.question_id);
        let sidecar = PlanSidecar {
            question_id: ex.question_id.clone(),
            valid: outcome.plan().is_some(),
            attempts: trace.attempts.len(),
            errors,
        };
        valid += usize::from(sidecar.valid);
        let text = if text.ends_with('\n') { text } else { text + "\n" };
        write(&out.join(format!("{stem}.plan")), &text)?;
        write(&out.join(format!("{stem}.json")), &to_pretty(&sidecar))?;
    }
    writeln!(stdout, "{valid}/{} plans valid", examples.len()).context("writing to stdout")?;
    Ok(())
}

pub fn refine(
    cfg: &RunConfig,
    examples: &Path,
    articles: &Path,
    out: &Path,
    limit: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if out == cfg.demos_path {
        return Err(CliError::Config(vec![format!(
            "refinement would overwrite the seed demonstrations {}; pass a different --out",
            out.display()
        )]));
    }
    let registry = load_registry(cfg)?;
    let demos = load_demos(cfg, &registry)?;
    let examples = load_examples(examples, limit)?;
    let articles = load_articles(articles)?;
    let mut candidates = Vec::with_capacity(examples.len());
    for ex in examples {
        let text = articles
            .get(&ex.article_id)
            .ok_or_else(|| anyhow!("article '{}' for question '{}' not found", ex.article_id, ex.question_id))?;
        candidates.push(RefineCandidate {
            document: Document::new(&ex.article_id, text.as_str()),
            question_id: ex.question_id,
            question: ex.question,
            options: ex.options,
            gold_label: ex.gold_label,
        });
    }
    let gateway = build_gateway(cfg)?;
    let (accepted, log) = refine_demonstrations(
        &candidates,
        &registry,
        &demos,
        &gateway,
        &planner_settings(cfg),
        &exec_settings(cfg),
        cfg.parallelism,
    );
    gateway.check_leftovers();
    write(out, &to_jsonl(&accepted))?;
    write(&sibling(out, "refine-log.jsonl"), &to_jsonl(&log))?;
    writeln!(stdout, "accepted {}/{} demonstrations", accepted.len(), candidates.len())
        .context("writing to stdout")?;
    Ok(())
}

/// Contents of `stats.json` in a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub method: Method,
    pub questions: usize,
    pub fallbacks: usize,
    pub mapping_failures: usize,
    pub errors: usize,
    pub plans: PlanStats,
}

fn run_stats(method: Method, records: &[EvalRecord], traces: &[QuestionTrace]) -> RunStats {
    let plans: Vec<_> = traces
        .iter()
        .filter_map(|t| t.plan_text.as_deref())
        .filter_map(|text| parse_plan(text).ok())
        .collect();
    RunStats {
        method,
        questions: records.len(),
        fallbacks: records.iter().filter(|r| r.fallback).count(),
        mapping_failures: records.iter().filter(|r| r.mapping_failed).count(),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        plans: plan_stats(&plans),
    }
}

fn usage_from_traces(traces: &[QuestionTrace]) -> UsageReport {
    let mut report = UsageReport::default();
    for call in traces.iter().flat_map(|t| &t.calls) {
        report.record(call.tag, call.prompt_tokens, call.completion_tokens);
    }
    report
}

pub fn evaluate(
    cfg: &RunConfig,
    method: Method,
    examples: &Path,
    articles: &Path,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let (registry, demos) = if method.uses_plans() {
        let registry = load_registry(cfg)?;
        let demos = load_demos(cfg, &registry)?;
        (registry, demos)
    } else {
        (pearl_core::registry::minimal_registry(), Vec::new())
    };
    let examples = load_examples(examples, None)?;
    let articles = load_articles(articles)?;
    let gateway = build_gateway(cfg)?;
    let ctx = MethodContext {
        registry: &registry,
        demos: &demos,
        articles: &articles,
        planner: planner_settings(cfg),
        exec: exec_settings(cfg),
        label_types: cfg.label_types,
        label_max_tokens: LABEL_MAX_TOKENS,
        parallelism: cfg.parallelism,
    };
    let (records, traces): (Vec<_>, Vec<_>) = run_method(method, &examples, &ctx, &gateway).into_iter().unzip();
    gateway.check_leftovers();

    let rows = accuracy_report(&records);
    write(&out.join("records.jsonl"), &to_jsonl(&records))?;
    write(&out.join("accuracy.csv"), &accuracy_csv(&rows))?;
    write(&out.join("usage.json"), &to_pretty(&usage_from_traces(&traces)))?;
    write(&out.join("stats.json"), &to_pretty(&run_stats(method, &records, &traces)))?;
    for (record, trace) in records.iter().zip(&traces) {
        write(&out.join(&record.trace_ref), &to_pretty(trace))?;
    }
    for r in &rows {
        writeln!(stdout, "{}: {:.4} ({}/{})", r.group, r.accuracy(), r.correct, r.n).context("writing to stdout")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub group: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl From<&AccuracyRow> for AccuracyEntry {
    fn from(r: &AccuracyRow) -> Self {
        AccuracyEntry {
            group: r.group.clone(),
            n: r.n,
            correct: r.correct,
            accuracy: r.accuracy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub accuracy: Vec<AccuracyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run: RunSummary,
    pub usage: UsageReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<RunSummary>,
    /// Paired permutation p-value on per-question correctness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

fn load_run(dir: &Path) -> Result<(Vec<EvalRecord>, UsageReport), CliError> {
    let records_path = dir.join("records.jsonl");
    let mut records = Vec::new();
    for (i, line) in read(&records_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EvalRecord = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", records_path.display(), i + 1))?;
        records.push(r);
    }
    let usage_path = dir.join("usage.json");
    let usage: UsageReport =
        serde_json::from_str(&read(&usage_path)?).with_context(|| format!("parsing {}", usage_path.display()))?;
    Ok((records, usage))
}

fn summary(dir: &Path, records: &[EvalRecord]) -> RunSummary {
    RunSummary {
        dir: dir.to_path_buf(),
        accuracy: accuracy_report(records).iter().map(AccuracyEntry::from).collect(),
    }
}

pub fn report(
    cfg: &RunConfig,
    run: &Path,
    baseline: Option<&Path>,
    resamples: usize,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let (records, usage) = load_run(run)?;
    let mut report = Report {
        run: summary(run, &records),
        usage,
        baseline: None,
        p_value: None,
    };
    if let Some(dir) = baseline {
        let (base_records, base_usage) = load_run(dir)?;
        report.usage = report.usage.with_baseline(&base_usage);
        report.p_value = Some(
            significance(&records, &base_records, resamples, cfg.seed).map_err(anyhow::Error::from)?,
        );
        report.baseline = Some(summary(dir, &base_records));
    }
    let text = to_pretty(&report);
    if let Some(path) = out {
        write(path, &text)?;
    }
    stdout.write_all(text.as_bytes()).context("writing to stdout")?;
    Ok(())
}
