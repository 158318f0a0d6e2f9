use std::collections::HashSet;

use super::{ActionScope, Plan, ValidationError};
use crate::registry::ActionRegistry;

/// Checks a parsed plan against the registry plus the plan's own declared
/// actions. Findings are returned in step order; an empty list means the
/// plan is executable.
///
/// Per step, checks run in this order: unknown action, forbidden construct,
/// arity, use of undefined variables, reuse of an output name.
pub fn validate_plan(plan: &Plan, registry: &ActionRegistry) -> Vec<ValidationError> {
    if plan.steps.is_empty() {
        return vec![ValidationError::empty_plan()];
    }
    let scope = ActionScope::for_plan(registry, plan);
    let mut errors = Vec::new();
    let mut defined: HashSet<&str> = HashSet::new();

    for (pos, step) in plan.steps.iter().enumerate() {
        let n = pos + 1;
        let action = scope.lookup(&step.action);
        if action.is_none() {
            errors.push(ValidationError::unknown_action(n, &step.action));
        }

        if let Some(raw) = &step.unsupported_args {
            errors.push(ValidationError::forbidden_construct(n, raw));
        } else {
            if let Some(def) = action {
                if !def.accepts_arity(step.args.len()) {
                    errors.push(ValidationError::arity_mismatch(
                        n,
                        &step.action,
                        &def.arity_description(),
                        step.args.len(),
                    ));
                }
            }
            let mut reported: HashSet<&str> = HashSet::new();
            for var in step.variables() {
                if !defined.contains(var) && reported.insert(var) {
                    errors.push(ValidationError::undefined_variable(n, var));
                }
            }
        }

        if !defined.insert(step.output.as_str()) {
            errors.push(ValidationError::duplicate_output(n, &step.output));
        }
    }
    errors
}
