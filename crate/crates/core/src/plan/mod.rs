//! The plan language.
//!
//! A plan is a flat sequence of assignments, one per line:
//!
//! ```text
//! New actions:
//! - FIND_OPINION(CTX, X, Y) : Find the opinion of X about Y given the input CTX
//!
//! 1. ross = FIND_CHARACTER(CTX, "Ross") : Identify who Ross is in the input article
//! 2. ross_opinion = FIND_OPINION(CTX, ross, "the acquisition") : Find Ross's opinion
//! 3. ans = CONCAT(ross, ross_opinion) : Combine both into the final answer
//! ```
//!
//! Arguments are the document (`CTX`), a double-quoted string, or the output
//! variable of an earlier step. The final step's output is the answer.

mod format;
mod parser;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::registry::{ActionDef, ActionRegistry};

pub use format::{format_action_signature, format_plan, format_step_call};
pub use parser::{is_numbered_line, parse_action_line, parse_plan};
pub use validate::validate_plan;

/// Spelling of the document reference inside plans.
pub const DOCUMENT_TOKEN: &str = "CTX";

/// One argument of a plan step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Argument {
    /// The input document, written `CTX`.
    DocumentRef,
    /// A double-quoted literal, content kept verbatim.
    StringLiteral(String),
    /// The output variable of an earlier step.
    VariableRef(String),
}

impl Argument {
    pub fn literal(s: impl Into<String>) -> Self {
        Argument::StringLiteral(s.into())
    }

    pub fn var(s: impl Into<String>) -> Self {
        Argument::VariableRef(s.into())
    }

    pub fn as_variable(&self) -> Option<&str> {
        match self {
            Argument::VariableRef(name) => Some(name),
            _ => None,
        }
    }
}

/// A single `N. out = ACTION(args) : explanation` line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    /// 1-based position after renumbering.
    pub index: usize,
    pub output: String,
    pub action: String,
    pub args: Vec<Argument>,
    pub explanation: String,
    /// Raw argument text when it holds a construct outside the plan grammar
    /// (nested call, list or dict literal, comprehension). `args` is empty
    /// in that case and the validator reports `ForbiddenConstruct`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unsupported_args: Option<String>,
}

impl PlanStep {
    pub fn new(
        index: usize,
        output: impl Into<String>,
        action: impl Into<String>,
        args: Vec<Argument>,
        explanation: impl Into<String>,
    ) -> Self {
        PlanStep {
            index,
            output: output.into(),
            action: action.into(),
            args,
            explanation: explanation.into(),
            unsupported_args: None,
        }
    }

    /// Variables this step reads, in argument order.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Argument::as_variable)
    }
}

/// A parsed plan. Equality ignores `source_text`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Plan {
    pub new_actions: Vec<ActionDef>,
    pub steps: Vec<PlanStep>,
    #[serde(default)]
    pub source_text: String,
}

impl PartialEq for Plan {
    fn eq(&self, other: &Self) -> bool {
        self.new_actions == other.new_actions && self.steps == other.steps
    }
}

impl Eq for Plan {}

impl Plan {
    pub fn new(new_actions: Vec<ActionDef>, steps: Vec<PlanStep>) -> Self {
        Plan {
            new_actions,
            steps,
            source_text: String::new(),
        }
    }

    /// Output variable of the last step, which holds the answer.
    pub fn answer_variable(&self) -> Option<&str> {
        self.steps.last().map(|s| s.output.as_str())
    }
}

/// Kinds of problems the parser and validator report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCode {
    UnknownAction,
    UndefinedVariable,
    DuplicateOutput,
    ArityMismatch,
    MalformedStep,
    EmptyPlan,
    ForbiddenConstruct,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A parse or validation finding. `message` is written to be fed back to
/// the model verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidationError {
    pub code: ErrorCode,
    pub step_index: Option<usize>,
    /// The offending identifier, literal or source line.
    pub token: Option<String>,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ValidationError {}

impl ValidationError {
    fn at(code: ErrorCode, step: usize, token: &str, detail: String) -> Self {
        ValidationError {
            code,
            step_index: Some(step),
            token: Some(token.to_string()),
            message: format!("Step {step}: {detail}"),
        }
    }

    pub fn unknown_action(step: usize, action: &str) -> Self {
        Self::at(
            ErrorCode::UnknownAction,
            step,
            action,
            format!("action '{action}' is not in the action list."),
        )
    }

    pub fn undefined_variable(step: usize, name: &str) -> Self {
        Self::at(
            ErrorCode::UndefinedVariable,
            step,
            name,
            format!("variable '{name}' is used before it is defined."),
        )
    }

    pub fn duplicate_output(step: usize, name: &str) -> Self {
        Self::at(
            ErrorCode::DuplicateOutput,
            step,
            name,
            format!("output variable '{name}' is already defined by an earlier step; use a distinct name."),
        )
    }

    pub fn arity_mismatch(step: usize, action: &str, expected: &str, got: usize) -> Self {
        Self::at(
            ErrorCode::ArityMismatch,
            step,
            action,
            format!("action '{action}' expects {expected} but was given {got}."),
        )
    }

    pub fn forbidden_construct(step: usize, fragment: &str) -> Self {
        Self::at(
            ErrorCode::ForbiddenConstruct,
            step,
            fragment,
            format!(
                "arguments '{fragment}' use a forbidden construct (nested call, list, dictionary or comprehension); \
                 arguments must be CTX, a double-quoted string, or an earlier output variable."
            ),
        )
    }

    pub fn malformed_step(step: usize, line: &str, reason: &str) -> Self {
        Self::at(
            ErrorCode::MalformedStep,
            step,
            line,
            format!(
                "line \"{line}\" does not follow the format `N. output = ACTION(arguments) : explanation` ({reason})."
            ),
        )
    }

    pub fn malformed_new_action(line: &str, reason: &str) -> Self {
        ValidationError {
            code: ErrorCode::MalformedStep,
            step_index: None,
            token: Some(line.to_string()),
            message: format!(
                "New actions: line \"{line}\" does not follow the format `- ACTION(arguments) : explanation` ({reason})."
            ),
        }
    }

    pub fn empty_plan() -> Self {
        ValidationError {
            code: ErrorCode::EmptyPlan,
            step_index: None,
            token: None,
            message: "Plan: no step of the form `N. output = ACTION(arguments) : explanation` was found."
                .to_string(),
        }
    }
}

/// Actions visible to one plan: the registry plus the plan's own
/// `New actions:` declarations.
#[derive(Debug, Clone, Copy)]
pub struct ActionScope<'a> {
    pub registry: &'a ActionRegistry,
    pub declared: &'a [ActionDef],
}

impl<'a> ActionScope<'a> {
    pub fn new(registry: &'a ActionRegistry, declared: &'a [ActionDef]) -> Self {
        ActionScope { registry, declared }
    }

    pub fn for_plan(registry: &'a ActionRegistry, plan: &'a Plan) -> Self {
        Self::new(registry, &plan.new_actions)
    }

    /// Registry entries take precedence over plan declarations.
    pub fn lookup(&self, name: &str) -> Option<&'a ActionDef> {
        self.registry
            .get(name)
            .or_else(|| self.declared.iter().find(|a| a.name == name))
            .or_else(|| crate::registry::builtin(name))
    }
}

pub(crate) fn is_variable_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub(crate) fn is_action_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_classes() {
        assert!(is_variable_ident("ross_opinion2"));
        assert!(!is_variable_ident("Ross"));
        assert!(!is_variable_ident("_x"));
        assert!(!is_variable_ident(""));
        assert!(is_action_ident("FIND_X"));
        assert!(!is_action_ident("Find"));
        assert!(!is_action_ident("1ACTION"));
    }

    #[test]
    fn plan_equality_ignores_source() {
        let mut a = Plan::new(vec![], vec![PlanStep::new(1, "a", "SUMMARIZE", vec![Argument::DocumentRef], "")]);
        let b = a.clone();
        a.source_text = "whatever the model said".into();
        assert_eq!(a, b);
    }
}
