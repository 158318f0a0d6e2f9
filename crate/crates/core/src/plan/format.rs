use std::fmt::Write;

use super::{Argument, Plan, PlanStep, DOCUMENT_TOKEN};
use crate::registry::ActionDef;

/// Canonical text of a plan. Steps are numbered by position, so the output
/// is the same for any two plans that compare equal.
pub fn format_plan(plan: &Plan) -> String {
    let mut out = String::new();
    if !plan.new_actions.is_empty() {
        out.push_str("New actions:\n");
        for action in &plan.new_actions {
            out.push_str("- ");
            out.push_str(&format_action_signature(action));
            if !action.definition.is_empty() {
                let _ = write!(out, " : {}", action.definition);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    for (i, step) in plan.steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{}. {}", i + 1, format_step_call(step));
        if !step.explanation.is_empty() {
            let _ = write!(out, " : {}", step.explanation);
        }
    }
    out
}

/// `output = ACTION(args)`, the form used inside execution prompts.
pub fn format_step_call(step: &PlanStep) -> String {
    let args = match &step.unsupported_args {
        Some(raw) => raw.clone(),
        None => step
            .args
            .iter()
            .map(format_argument)
            .collect::<Vec<_>>()
            .join(", "),
    };
    format!("{} = {}({})", step.output, step.action, args)
}

/// `NAME(P1, P2, ...)`.
pub fn format_action_signature(action: &ActionDef) -> String {
    format!("{}({})", action.name, action.params.join(", "))
}

fn format_argument(arg: &Argument) -> String {
    match arg {
        Argument::DocumentRef => DOCUMENT_TOKEN.to_string(),
        Argument::StringLiteral(s) => format!("\"{}\"", s.replace('"', "\\\"")),
        Argument::VariableRef(v) => v.clone(),
    }
}
