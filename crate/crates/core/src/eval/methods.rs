use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mapping::{label_reasoning_types, map_answer, parse_choice};
use super::{EvalRecord, Method, QaExample};
use crate::concurrency::map_ordered;
use crate::execution::{answer_without_execution, execute_plan, Document, ExecStatus, ExecutionResult, ExecutionSettings};
use crate::gateway::{GatewayError, LlmGateway, Recorder, Source, Tag};
use crate::planner::{generate_plan, CorrectionTrace, Demonstration, PlanOutcome, PlannerSettings};
use crate::prompts;
use crate::registry::ActionRegistry;

/// Everything a method run needs besides the examples and the gateway.
pub struct MethodContext<'a> {
    pub registry: &'a ActionRegistry,
    pub demos: &'a [Demonstration],
    /// Article text by article id.
    pub articles: &'a HashMap<String, String>,
    pub planner: PlannerSettings,
    pub exec: ExecutionSettings,
    /// Also label each question's reasoning types (one extra call).
    pub label_types: bool,
    pub label_max_tokens: u32,
    pub parallelism: usize,
}

/// One model call as stored in a trace file. Prompts are identified by
/// their cache key rather than stored in full.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSummary {
    pub tag: Tag,
    pub cache_key: String,
    pub source: Source,
    pub response_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

/// Audit trail for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTrace {
    pub question_id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionResult>,
    pub calls: Vec<CallSummary>,
}

struct Outcome {
    answer: String,
    fallback: bool,
    error: Option<String>,
    /// Set by methods that read a letter straight from the model.
    direct_choice: Option<Option<usize>>,
}

impl Outcome {
    fn answer(answer: String) -> Self {
        Outcome {
            answer,
            fallback: false,
            error: None,
            direct_choice: None,
        }
    }

    fn failed(error: String) -> Self {
        Outcome {
            answer: String::new(),
            fallback: false,
            error: Some(error),
            direct_choice: None,
        }
    }
}

fn zero_shot<G: LlmGateway + ?Sized>(
    doc: &Document,
    question: &str,
    cot: bool,
    gateway: &G,
    ctx: &MethodContext<'_>,
) -> Result<String, GatewayError> {
    let prompt = if cot {
        prompts::zero_shot_cot_prompt(&doc.text, question)
    } else {
        prompts::zero_shot_prompt(&doc.text, question)
    };
    Ok(gateway
        .complete(&ctx.exec.model.prompt(Tag::Baseline, prompt))?
        .response_text
        .trim_end()
        .to_string())
}

fn answer_with_plan<G: LlmGateway + ?Sized>(
    method: Method,
    ex: &QaExample,
    doc: &Document,
    gateway: &G,
    ctx: &MethodContext<'_>,
    trace: &mut QuestionTrace,
) -> Outcome {
    let outcome = match generate_plan(&ex.question, ctx.registry, ctx.demos, gateway, &ctx.planner) {
        Ok(o) => o,
        Err(e) => return Outcome::failed(format!("plan generation: {e}")),
    };
    trace.correction = Some(outcome.trace().clone());
    let plan = match outcome {
        PlanOutcome::Valid { plan, .. } => plan,
        PlanOutcome::Fallback { .. } => {
            return match zero_shot(doc, &ex.question, false, gateway, ctx) {
                Ok(answer) => Outcome {
                    fallback: true,
                    ..Outcome::answer(answer)
                },
                Err(e) => Outcome {
                    fallback: true,
                    ..Outcome::failed(format!("zero-shot fallback: {e}"))
                },
            };
        }
    };
    trace.plan_text = Some(crate::plan::format_plan(&plan));
    if method == Method::PearlNoExec {
        return match answer_without_execution(&plan, &ex.question, doc, gateway, &ctx.exec.model) {
            Ok(x) => Outcome::answer(x.response_text.trim_end().to_string()),
            Err(e) => Outcome::failed(format!("answer without execution: {e}")),
        };
    }
    let result = execute_plan(&plan, doc, ctx.registry, gateway, &ctx.exec);
    let outcome = match &result.status {
        ExecStatus::Complete => Outcome::answer(result.answer.clone()),
        ExecStatus::Failed { step_index, kind, reason } => {
            Outcome::failed(format!("execution failed at step {step_index} ({kind}): {reason}"))
        }
    };
    trace.execution = Some(result);
    outcome
}

fn run_example<G: LlmGateway + ?Sized>(
    method: Method,
    ex: &QaExample,
    ctx: &MethodContext<'_>,
    gateway: &G,
) -> (EvalRecord, QuestionTrace) {
    let recorder = Recorder::new(gateway);
    let mut trace = QuestionTrace {
        question_id: ex.question_id.clone(),
        method,
        correction: None,
        plan_text: None,
        execution: None,
        calls: Vec::new(),
    };
    let mut record = EvalRecord {
        split: ex.split(),
        gold_label: ex.gold_label,
        ..EvalRecord::empty(&ex.question_id, method)
    };

    let outcome = match ctx.articles.get(&ex.article_id) {
        None => Outcome::failed(format!("article '{}' not found", ex.article_id)),
        Some(text) => {
            let doc = Document::new(&ex.article_id, text.as_str());
            match method {
                Method::ZeroShot | Method::ZeroShotCot => {
                    match zero_shot(&doc, &ex.question, method == Method::ZeroShotCot, &recorder, ctx) {
                        Ok(a) => Outcome::answer(a),
                        Err(e) => Outcome::failed(e.to_string()),
                    }
                }
                Method::MultiChoiceDirect => {
                    let prompt = prompts::multi_choice_prompt(&doc.text, &ex.question, &ex.options);
                    match recorder.complete(&ctx.exec.model.prompt(Tag::Baseline, prompt)) {
                        Ok(x) => Outcome {
                            direct_choice: Some(parse_choice(&x.response_text)),
                            ..Outcome::answer(x.response_text.trim_end().to_string())
                        },
                        Err(e) => Outcome::failed(e.to_string()),
                    }
                }
                Method::Pearl | Method::PearlNoExec => {
                    answer_with_plan(method, ex, &doc, &recorder, ctx, &mut trace)
                }
            }
        }
    };
    record.generated_answer = outcome.answer;
    record.fallback = outcome.fallback;
    record.error = outcome.error;

    if record.error.is_none() {
        let choice = match outcome.direct_choice {
            Some(c) => Ok(c),
            None => map_answer(&record.generated_answer, &ex.question, &ex.options, &recorder, &ctx.exec.model)
                .map(|(c, _)| c),
        };
        match choice {
            Ok(Some(c)) => {
                record.mapped_choice = Some(c);
                record.correct = Some(c == ex.gold_label);
            }
            Ok(None) => record.mapping_failed = true,
            Err(e) => record.error = Some(format!("answer mapping: {e}")),
        }
    }
    if ctx.label_types {
        match label_reasoning_types(&ex.question, &recorder, &ctx.exec.model, ctx.label_max_tokens) {
            Ok((labels, _)) => record.reasoning_types = labels.into_iter().map(String::from).collect(),
            Err(e) => tracing::warn!(question_id = %ex.question_id, error = %e, "type labeling failed"),
        }
    }

    let exchanges = recorder.take();
    for x in &exchanges {
        record.usage.add(x);
    }
    trace.calls = exchanges
        .into_iter()
        .map(|x| CallSummary {
            tag: x.request.tag,
            cache_key: x.cache_key,
            source: x.source,
            response_text: x.response_text,
            prompt_tokens: x.prompt_tokens,
            completion_tokens: x.completion_tokens,
            latency_ms: x.latency_ms,
        })
        .collect();
    (record, trace)
}

/// Runs one method over every example. Each example yields exactly one
/// record; failures are written into the record instead of aborting.
pub fn run_method<G: LlmGateway + ?Sized>(
    method: Method,
    examples: &[QaExample],
    ctx: &MethodContext<'_>,
    gateway: &G,
) -> Vec<(EvalRecord, QuestionTrace)> {
    map_ordered(examples, ctx.parallelism, gateway.order_sensitive(), |ex| {
        run_example(method, ex, ctx, gateway)
    })
}
