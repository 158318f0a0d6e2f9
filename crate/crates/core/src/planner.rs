//! Plan generation with the self-correction loop, and self-refinement of
//! model-written demonstrations.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::concurrency::map_ordered;
use crate::eval::mapping::map_answer;
use crate::execution::{execute_plan, Document, ExecutionSettings};
use crate::gateway::{estimate_tokens, GatewayError, LlmGateway, Message, ModelConfig, Tag};
use crate::plan::{format_plan, parse_plan, validate_plan, Plan, ValidationError};
use crate::prompts::{self, PlanExample};
use crate::registry::ActionRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub model: ModelConfig,
    /// Correction rounds after the first attempt.
    pub retry_limit: u32,
    /// Most demonstrations placed in the plan prompt.
    pub demo_cap: usize,
    /// Estimated-token budget for the plan prompt; demonstrations are
    /// dropped from the end until the prompt fits.
    pub prompt_budget_tokens: usize,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        PlannerSettings {
            model: ModelConfig::default(),
            retry_limit: 3,
            demo_cap: 11,
            prompt_budget_tokens: 8192 - 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoStatus {
    HumanWritten,
    SelfRefinedAccepted,
}

/// The question and gold answer a refined demonstration was checked on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreEvidence {
    pub question_id: String,
    pub gold_label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub question: String,
    pub plan_text: String,
    pub status: DemoStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_evidence: Option<ScoreEvidence>,
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("demonstrations line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("demonstrations line {line}: plan is invalid: {errors}")]
    InvalidPlan { line: usize, errors: String },
}

/// Reads a demonstrations file and re-checks every plan against `registry`.
pub fn load_demonstrations(text: &str, registry: &ActionRegistry) -> Result<Vec<Demonstration>, DemoError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let demo: Demonstration = serde_json::from_str(line).map_err(|e| DemoError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Err(errors) = check_plan(&demo.plan_text, registry) {
            return Err(DemoError::InvalidPlan {
                line: i + 1,
                errors: render_errors(&errors),
            });
        }
        out.push(demo);
    }
    Ok(out)
}

/// Parses and validates plan text. An `Err` always holds at least one error.
pub fn check_plan(text: &str, registry: &ActionRegistry) -> Result<Plan, Vec<ValidationError>> {
    let plan = parse_plan(text).map_err(|e| vec![e])?;
    let errors = validate_plan(&plan, registry);
    if errors.is_empty() {
        Ok(plan)
    } else {
        Err(errors)
    }
}

/// Numbered error list, one per line, for the correction prompt.
pub fn render_errors(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}", i + 1, e.message))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub plan_text: String,
    pub errors: Vec<ValidationError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceOutcome {
    Valid,
    FallbackZeroShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionTrace {
    pub attempts: Vec<Attempt>,
    pub outcome: TraceOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Valid { plan: Plan, trace: CorrectionTrace },
    /// No valid plan within the retry limit; the caller answers zero-shot.
    Fallback { trace: CorrectionTrace },
}

impl PlanOutcome {
    pub fn trace(&self) -> &CorrectionTrace {
        match self {
            PlanOutcome::Valid { trace, .. } | PlanOutcome::Fallback { trace } => trace,
        }
    }

    pub fn plan(&self) -> Option<&Plan> {
        match self {
            PlanOutcome::Valid { plan, .. } => Some(plan),
            PlanOutcome::Fallback { .. } => None,
        }
    }
}

/// Builds the plan prompt, returning it with the number of demonstrations
/// that fit.
pub fn build_plan_prompt(
    question: &str,
    registry: &ActionRegistry,
    demos: &[Demonstration],
    settings: &PlannerSettings,
) -> (String, usize) {
    let examples: Vec<PlanExample<'_>> = demos
        .iter()
        .take(settings.demo_cap)
        .map(|d| PlanExample {
            question: &d.question,
            plan_text: &d.plan_text,
        })
        .collect();
    let mut used = examples.len();
    loop {
        let prompt = prompts::plan_prompt(registry.actions(), &examples[..used], question);
        if used == 0 || estimate_tokens(prompt.chars().count()) <= settings.prompt_budget_tokens {
            if used < examples.len() {
                debug!(used, available = examples.len(), "demonstrations truncated to fit the prompt");
            }
            return (prompt, used);
        }
        used -= 1;
    }
}

/// Requests a plan and re-prompts with the parser's errors until the plan
/// validates or `retry_limit` corrections have been spent.
pub fn generate_plan<G: LlmGateway + ?Sized>(
    question: &str,
    registry: &ActionRegistry,
    demos: &[Demonstration],
    gateway: &G,
    settings: &PlannerSettings,
) -> Result<PlanOutcome, GatewayError> {
    if demos.is_empty() {
        debug!("generating a plan without demonstrations");
    }
    let (prompt, _) = build_plan_prompt(question, registry, demos, settings);
    let mut attempts: Vec<Attempt> = Vec::new();
    for attempt in 0..=settings.retry_limit {
        let request = match attempts.last() {
            None => settings.model.prompt(Tag::Plan, prompt.clone()),
            Some(prev) => settings.model.request(
                Tag::Correct,
                vec![
                    Message::user(prompt.clone()),
                    Message::assistant(prev.plan_text.clone()),
                    Message::user(prompts::correction_prompt(&render_errors(&prev.errors))),
                ],
            ),
        };
        let reply = gateway.complete(&request)?.response_text;
        match check_plan(&reply, registry) {
            Ok(mut plan) => {
                plan.source_text = reply.clone();
                attempts.push(Attempt {
                    plan_text: reply,
                    errors: Vec::new(),
                });
                let trace = CorrectionTrace {
                    attempts,
                    outcome: TraceOutcome::Valid,
                };
                return Ok(PlanOutcome::Valid { plan, trace });
            }
            Err(errors) => {
                debug!(attempt, errors = errors.len(), "plan rejected");
                attempts.push(Attempt {
                    plan_text: reply,
                    errors,
                });
            }
        }
    }
    warn!(attempts = attempts.len(), "no valid plan within the retry limit");
    Ok(PlanOutcome::Fallback {
        trace: CorrectionTrace {
            attempts,
            outcome: TraceOutcome::FallbackZeroShot,
        },
    })
}

/// A training question offered as a demonstration source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineCandidate {
    pub question_id: String,
    pub question: String,
    pub options: Vec<String>,
    pub gold_label: usize,
    pub document: Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineLogEntry {
    pub question_id: String,
    pub accepted: bool,
    /// True when the accepted plan came from the refinement pass.
    pub refined: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Runs a plan and reports whether its answer maps to the gold option.
fn scores_gold<G: LlmGateway + ?Sized>(
    plan: &Plan,
    cand: &RefineCandidate,
    registry: &ActionRegistry,
    gateway: &G,
    exec: &ExecutionSettings,
) -> Result<(bool, String), String> {
    let result = execute_plan(plan, &cand.document, registry, gateway, exec);
    if !result.is_complete() {
        return Err(format!("execution failed: {:?}", result.status));
    }
    let (choice, _) = map_answer(&result.answer, &cand.question, &cand.options, gateway, &exec.model)
        .map_err(|e| format!("mapping failed: {e}"))?;
    Ok((choice == Some(cand.gold_label), result.answer))
}

fn refine_one<G: LlmGateway + ?Sized>(
    cand: &RefineCandidate,
    registry: &ActionRegistry,
    demos: &[Demonstration],
    gateway: &G,
    planner: &PlannerSettings,
    exec: &ExecutionSettings,
) -> Result<(Demonstration, bool), String> {
    let outcome = generate_plan(&cand.question, registry, demos, gateway, planner)
        .map_err(|e| format!("plan generation failed: {e}"))?;
    let PlanOutcome::Valid { plan, .. } = outcome else {
        return Err("no valid plan within the retry limit".into());
    };
    let accepted = |plan: &Plan| Demonstration {
        question: cand.question.clone(),
        plan_text: format_plan(plan),
        status: DemoStatus::SelfRefinedAccepted,
        score_evidence: Some(ScoreEvidence {
            question_id: cand.question_id.clone(),
            gold_label: cand.gold_label,
        }),
    };
    let (correct, answer) = scores_gold(&plan, cand, registry, gateway, exec)?;
    if correct {
        return Ok((accepted(&plan), false));
    }

    let (prompt, _) = build_plan_prompt(&cand.question, registry, demos, planner);
    let request = planner.model.request(
        Tag::Refine,
        vec![
            Message::user(prompt),
            Message::assistant(format_plan(&plan)),
            Message::user(prompts::refinement_prompt(&cand.question, &answer)),
        ],
    );
    let reply = gateway
        .complete(&request)
        .map_err(|e| format!("refinement failed: {e}"))?
        .response_text;
    let refined = check_plan(&reply, registry)
        .map_err(|errs| format!("refined plan is invalid: {}", render_errors(&errs)))?;
    let (correct, _) = scores_gold(&refined, cand, registry, gateway, exec)?;
    if correct {
        Ok((accepted(&refined), true))
    } else {
        Err("wrong answer before and after refinement".into())
    }
}

/// Keeps the candidates whose plan (or once-refined plan) executes to the
/// gold answer. Returns accepted demonstrations in candidate order and one
/// log entry per candidate.
pub fn refine_demonstrations<G: LlmGateway + ?Sized>(
    candidates: &[RefineCandidate],
    registry: &ActionRegistry,
    demos: &[Demonstration],
    gateway: &G,
    planner: &PlannerSettings,
    exec: &ExecutionSettings,
    parallelism: usize,
) -> (Vec<Demonstration>, Vec<RefineLogEntry>) {
    let results = map_ordered(candidates, parallelism, gateway.order_sensitive(), |c| {
        refine_one(c, registry, demos, gateway, planner, exec)
    });
    let mut accepted = Vec::new();
    let mut log = Vec::with_capacity(candidates.len());
    for (cand, res) in candidates.iter().zip(results) {
        match res {
            Ok((demo, refined)) => {
                accepted.push(demo);
                log.push(RefineLogEntry {
                    question_id: cand.question_id.clone(),
                    accepted: true,
                    refined,
                    reason: None,
                });
            }
            Err(reason) => {
                info!(question_id = %cand.question_id, %reason, "candidate rejected");
                log.push(RefineLogEntry {
                    question_id: cand.question_id.clone(),
                    accepted: false,
                    refined: false,
                    reason: Some(reason),
                });
            }
        }
    }
    (accepted, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Recorder, ReplayEntry, ReplayGateway};
    use crate::plan::ErrorCode;
    use crate::registry::{ActionDef, Origin};

    fn registry() -> ActionRegistry {
        ActionRegistry::new(vec![
            ActionDef::new("FIND_CHARACTER", &["CTX", "X"], "Find and summarize the character traits of X given the input CTX.", Origin::Reduced),
            ActionDef::new("FIND_EVENT", &["CTX", "X"], "Find the event involving X in the input CTX.", Origin::Reduced),
        ])
        .unwrap()
    }

    const VALID: &str = "1. ross = FIND_CHARACTER(CTX, \"Ross\") : Identify who Ross is";

    #[test]
    fn render_numbers_messages() {
        let text = render_errors(&[
            ValidationError::undefined_variable(2, "foo"),
            ValidationError::unknown_action(1, "FROBNICATE"),
        ]);
        assert_eq!(
            text,
            "1. Step 2: variable 'foo' is used before it is defined.\n2. Step 1: action 'FROBNICATE' is not in the action list."
        );
    }

    #[test]
    fn valid_on_first_attempt() {
        let gw = Recorder::new(ReplayGateway::new([ReplayEntry::new(Tag::Plan, VALID)]));
        let out = generate_plan("Who is Ross?", &registry(), &[], &gw, &PlannerSettings::default()).unwrap();
        assert_eq!(out.trace().attempts.len(), 1);
        assert_eq!(out.plan().unwrap().steps[0].output, "ross");
        assert_eq!(gw.exchanges().len(), 1);
    }

    #[test]
    fn corrects_after_two_failures() {
        let gw = Recorder::new(ReplayGateway::new([
            ReplayEntry::new(Tag::Plan, "I think the answer is Ross."),
            ReplayEntry::new(Tag::Correct, "1. a = FROBNICATE(CTX)"),
            ReplayEntry::new(Tag::Correct, VALID),
        ]));
        let out = generate_plan("Who is Ross?", &registry(), &[], &gw, &PlannerSettings::default()).unwrap();
        let trace = out.trace();
        assert_eq!(trace.outcome, TraceOutcome::Valid);
        assert_eq!(trace.attempts.len(), 3);
        assert_eq!(trace.attempts[0].errors[0].code, ErrorCode::EmptyPlan);
        assert_eq!(trace.attempts[1].errors[0].code, ErrorCode::UnknownAction);
        let ex = gw.exchanges();
        assert_eq!(ex.len(), 3);
        let msgs = &ex[2].request.messages;
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[1].content, "1. a = FROBNICATE(CTX)");
        assert!(msgs[2].content.contains("1. Step 1: action 'FROBNICATE' is not in the action list."));
    }

    #[test]
    fn falls_back_after_retry_limit() {
        let gw = Recorder::new(ReplayGateway::new(
            std::iter::once(ReplayEntry::new(Tag::Plan, "nope"))
                .chain((0..3).map(|_| ReplayEntry::new(Tag::Correct, "still nope"))),
        ));
        let out = generate_plan("Q", &registry(), &[], &gw, &PlannerSettings::default()).unwrap();
        assert!(matches!(out, PlanOutcome::Fallback { .. }));
        assert_eq!(out.trace().attempts.len(), 4);
        assert_eq!(gw.exchanges().len(), 4);
    }

    #[test]
    fn demos_are_capped_and_budgeted() {
        let demo = Demonstration {
            question: "Who is Ross?".into(),
            plan_text: VALID.into(),
            status: DemoStatus::HumanWritten,
            score_evidence: None,
        };
        let demos = vec![demo; 20];
        let mut s = PlannerSettings::default();
        let (_, used) = build_plan_prompt("Q", &registry(), &demos, &s);
        assert_eq!(used, 11);
        let (base, _) = build_plan_prompt("Q", &registry(), &[], &s);
        s.prompt_budget_tokens = estimate_tokens(base.chars().count()) + 40;
        let (_, used) = build_plan_prompt("Q", &registry(), &demos, &s);
        assert!(used < 11);
    }

    #[test]
    fn demonstration_file_is_checked() {
        let good = serde_json::json!({"question": "Who?", "plan_text": VALID, "status": "human-written"}).to_string();
        let bad = serde_json::json!({"question": "Who?", "plan_text": "1. a = NOPE(CTX)", "status": "human-written"}).to_string();
        assert_eq!(load_demonstrations(&good, &registry()).unwrap().len(), 1);
        let err = load_demonstrations(&format!("{good}\n{bad}"), &registry()).unwrap_err();
        assert!(matches!(err, DemoError::InvalidPlan { line: 2, .. }));
    }

    fn candidate(id: &str, gold: usize) -> RefineCandidate {
        RefineCandidate {
            question_id: id.into(),
            question: "Who is Ross?".into(),
            options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            gold_label: gold,
            document: Document::new("doc", "Ross is a publisher."),
        }
    }

    #[test]
    fn refinement_paths() {
        let gw = ReplayGateway::new([
            // candidate 1: right first time
            ReplayEntry::new(Tag::Plan, VALID),
            ReplayEntry::new(Tag::Exec, "a publisher"),
            ReplayEntry::new(Tag::Map, "B"),
            // candidate 2: wrong, then right after refinement
            ReplayEntry::new(Tag::Plan, VALID),
            ReplayEntry::new(Tag::Exec, "unclear"),
            ReplayEntry::new(Tag::Map, "A"),
            ReplayEntry::new(Tag::Refine, "1. e = FIND_EVENT(CTX, \"Ross\")"),
            ReplayEntry::new(Tag::Exec, "publisher"),
            ReplayEntry::new(Tag::Map, "B"),
            // candidate 3: wrong twice
            ReplayEntry::new(Tag::Plan, VALID),
            ReplayEntry::new(Tag::Exec, "x"),
            ReplayEntry::new(Tag::Map, "C"),
            ReplayEntry::new(Tag::Refine, VALID),
            ReplayEntry::new(Tag::Exec, "y"),
            ReplayEntry::new(Tag::Map, "D"),
        ]);
        let cands = vec![candidate("c1", 1), candidate("c2", 1), candidate("c3", 1)];
        let (demos, log) = refine_demonstrations(
            &cands,
            &registry(),
            &[],
            &gw,
            &PlannerSettings::default(),
            &ExecutionSettings::default(),
            4,
        );
        assert_eq!(demos.len(), 2);
        assert_eq!(demos[1].plan_text, "1. e = FIND_EVENT(CTX, \"Ross\")");
        assert_eq!(demos[1].status, DemoStatus::SelfRefinedAccepted);
        assert_eq!(
            log.iter().map(|l| (l.accepted, l.refined)).collect::<Vec<_>>(),
            vec![(true, false), (true, true), (false, false)]
        );
        assert!(gw.remaining().is_empty());
    }
}
