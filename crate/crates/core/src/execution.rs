//! Step-by-step plan execution over one document.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::debug;

use crate::gateway::{estimate_tokens, GatewayError, LlmExchange, LlmGateway, ModelConfig, Tag};
use crate::plan::{format_plan, format_step_call, ActionScope, Argument, Plan, PlanStep};
use crate::prompts::{self, Assignment};
use crate::registry::{ActionRegistry, CONCAT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("step {step}: variable '{name}' is not bound")]
    UnboundVariable { step: usize, name: String },
    #[error("step {step}: {message}")]
    InvariantViolation { step: usize, message: String },
}

/// Variable bindings in the order the steps produced them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub document_id: String,
    pub bindings: Vec<(String, String)>,
}

impl Environment {
    pub fn new(document_id: impl Into<String>) -> Self {
        Environment {
            document_id: document_id.into(),
            bindings: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.bindings
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    fn bind(&mut self, step: usize, name: &str, value: String) -> Result<(), ExecError> {
        if self.get(name).is_some() {
            return Err(ExecError::InvariantViolation {
                step,
                message: format!("variable '{name}' is already bound"),
            });
        }
        self.bindings.push((name.to_string(), value));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSettings {
    pub model: ModelConfig,
    pub concat_separator: String,
    /// Context budget in estimated tokens (prompt plus reserved output).
    pub context_window: usize,
}

impl Default for ExecutionSettings {
    fn default() -> Self {
        ExecutionSettings {
            model: ModelConfig::default(),
            concat_separator: " ".to_string(),
            context_window: 8192,
        }
    }
}

/// Record of one executed step, as written to the trace file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub output: String,
    pub action: String,
    /// True for steps run without a model call (`CONCAT`).
    pub local: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub reply: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ExecStatus {
    Complete,
    Failed {
        step_index: usize,
        kind: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// Output of the last step; empty when execution failed.
    pub answer: String,
    pub environment: Environment,
    pub per_step: Vec<StepRecord>,
    pub status: ExecStatus,
}

impl ExecutionResult {
    pub fn is_complete(&self) -> bool {
        self.status == ExecStatus::Complete
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.per_step.iter().map(|s| s.prompt_tokens).sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.per_step.iter().map(|s| s.completion_tokens).sum()
    }
}

fn resolve<'e>(step: &PlanStep, arg: &'e Argument, env: &'e Environment) -> Result<&'e str, ExecError> {
    match arg {
        Argument::StringLiteral(s) => Ok(s),
        Argument::VariableRef(v) => env.get(v).ok_or_else(|| ExecError::UnboundVariable {
            step: step.index,
            name: v.clone(),
        }),
        Argument::DocumentRef => Err(ExecError::InvariantViolation {
            step: step.index,
            message: "document reference has no inline value".into(),
        }),
    }
}

/// Renders the single-step prompt: article, action definition, the step as
/// written, one assignment per non-document argument, and the step's
/// explanation (or the action definition when it has none).
pub fn fill_step_template(
    step: &PlanStep,
    scope: &ActionScope<'_>,
    env: &Environment,
    document: &str,
) -> Result<String, ExecError> {
    let action = scope.lookup(&step.action).ok_or_else(|| ExecError::InvariantViolation {
        step: step.index,
        message: format!("action '{}' is not defined", step.action),
    })?;
    let mut assignments = Vec::new();
    for (pos, arg) in step.args.iter().enumerate() {
        if matches!(arg, Argument::DocumentRef) {
            continue;
        }
        assignments.push(Assignment {
            param: action.param_name(pos),
            value: resolve(step, arg, env)?.to_string(),
        });
    }
    let instruction = if step.explanation.trim().is_empty() {
        action.definition.as_str()
    } else {
        step.explanation.as_str()
    };
    Ok(prompts::step_prompt(
        document,
        action,
        &format_step_call(step),
        &assignments,
        instruction,
    ))
}

fn concat_step(step: &PlanStep, env: &Environment, document: &str, sep: &str) -> Result<String, ExecError> {
    let mut parts = Vec::with_capacity(step.args.len());
    for arg in &step.args {
        parts.push(match arg {
            Argument::DocumentRef => document,
            other => resolve(step, other, env)?,
        });
    }
    Ok(parts.join(sep))
}

fn failed(result: &mut ExecutionResult, step_index: usize, kind: &str, reason: String) {
    debug!(step_index, kind, %reason, "execution stopped");
    result.status = ExecStatus::Failed {
        step_index,
        kind: kind.to_string(),
        reason,
    };
}

/// Runs every step in order, binding each reply to the step's output.
///
/// A failing step stops execution; the result keeps the bindings made so
/// far and records which step failed and why.
pub fn execute_plan<G: LlmGateway + ?Sized>(
    plan: &Plan,
    document: &Document,
    registry: &ActionRegistry,
    gateway: &G,
    settings: &ExecutionSettings,
) -> ExecutionResult {
    let scope = ActionScope::for_plan(registry, plan);
    let mut result = ExecutionResult {
        answer: String::new(),
        environment: Environment::new(&document.id),
        per_step: Vec::with_capacity(plan.steps.len()),
        status: ExecStatus::Complete,
    };
    let invariant = |e: ExecError| match &e {
        ExecError::UnboundVariable { .. } => ("unbound_variable", e.to_string()),
        ExecError::InvariantViolation { .. } => ("invariant_violation", e.to_string()),
    };

    for step in &plan.steps {
        let reply = if step.action == CONCAT {
            match concat_step(step, &result.environment, &document.text, &settings.concat_separator) {
                Ok(joined) => {
                    result.per_step.push(StepRecord {
                        step_index: step.index,
                        output: step.output.clone(),
                        action: step.action.clone(),
                        local: true,
                        prompt_sha256: None,
                        reply: joined.clone(),
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        duration_ms: 0,
                    });
                    joined
                }
                Err(e) => {
                    let (kind, reason) = invariant(e);
                    failed(&mut result, step.index, kind, reason);
                    return result;
                }
            }
        } else {
            let prompt = match fill_step_template(step, &scope, &result.environment, &document.text) {
                Ok(p) => p,
                Err(e) => {
                    let (kind, reason) = invariant(e);
                    failed(&mut result, step.index, kind, reason);
                    return result;
                }
            };
            let request = settings.model.prompt(Tag::Exec, prompt);
            let needed = estimate_tokens(request.prompt_chars()) + request.max_output_tokens as usize;
            if needed > settings.context_window {
                let err = GatewayError::ContextOverflow(format!(
                    "step {} needs about {needed} tokens, window is {}",
                    step.index, settings.context_window
                ));
                failed(&mut result, step.index, err.kind(), err.to_string());
                return result;
            }
            match gateway.complete(&request) {
                Ok(ex) => {
                    let text = ex.response_text.trim_end().to_string();
                    result.per_step.push(step_record(step, &ex, &text));
                    text
                }
                Err(e) => {
                    failed(&mut result, step.index, e.kind(), e.to_string());
                    return result;
                }
            }
        };
        if let Err(e) = result.environment.bind(step.index, &step.output, reply) {
            let (kind, reason) = invariant(e);
            failed(&mut result, step.index, kind, reason);
            return result;
        }
    }
    if let Some(var) = plan.answer_variable() {
        result.answer = result.environment.get(var).unwrap_or_default().to_string();
    }
    result
}

fn step_record(step: &PlanStep, ex: &LlmExchange, reply: &str) -> StepRecord {
    let prompt: String = ex.request.messages.iter().map(|m| m.content.as_str()).collect();
    StepRecord {
        step_index: step.index,
        output: step.output.clone(),
        action: step.action.clone(),
        local: false,
        prompt_sha256: Some(hex::encode(Sha256::digest(prompt.as_bytes()))),
        reply: reply.to_string(),
        prompt_tokens: ex.prompt_tokens,
        completion_tokens: ex.completion_tokens,
        duration_ms: ex.latency_ms,
    }
}

/// Answers the question in one call, showing the plan as an outline but
/// none of its execution results.
pub fn answer_without_execution<G: LlmGateway + ?Sized>(
    plan: &Plan,
    question: &str,
    document: &Document,
    gateway: &G,
    model: &ModelConfig,
) -> Result<LlmExchange, GatewayError> {
    let prompt = prompts::no_execution_prompt(&document.text, question, &format_plan(plan));
    gateway.complete(&model.prompt(Tag::Exec, prompt))
}
