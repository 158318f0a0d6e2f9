//! Prompt catalog. Every model-facing text is built here so the wording
//! lives in one place and can be pinned by golden tests.

use crate::plan::format_action_signature;
use crate::registry::{is_builtin, ActionDef};

const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

/// Bump when any template text changes; recorded in run metadata.
pub const CATALOG_VERSION: &str = "1";

const MINING_INSTRUCTIONS: &str = "Suppose you are given a question about an article as well as a list of actions that you can execute to solve the question (shown above). You can imagine the actions as functions in a program, where you have input arguments and output. The output of an action can be fed as input to another action. The output of the final action will be the answer to the given question. Suppose you haven't read the article yet, please present a sequence of actions that you would use to answer the question. ";

const MINING_EXAMPLES: &str = "Here are a few examples:

Question:
What is the \u{201c}space cafard\u{201d} that Si describes?

My new actions:
- COMPREHEND(CTX, X) : Provide a detailed comprehension of X given the input CTX.

My sequence of actions:
1. snippet = EXTRACT(CTX, \"space cafard\") : Extract the exact wording regarding \"space cafard\" from the input CTX.
2. ans = COMPREHEND(CTX, X) : Provide a detailed comprehension of the input X given the input CTX.



Question:
Why did the author write the article?

My new actions:
- None

My sequence of actions:
1. moral = FIND_MORAL(CTX) : Find the intended lesson or moral of the input CTX.


Your answer must follow the following rules: 1. The present sequence should be minimal, i.e., no unnecessary actions.  2. The sequence of actions should be specific and cover every detail about the question.  3. The sequence of actions should use as many as existing actions as possible. 4. It is fine to create new actions, however, the created new actions should be maximally reusable and generalizable to other reading comprehension questions.  5. The arguments should cover all the details of the given question.";

const MINING_ANSWER: &str = "Now please provide the plan for the above question.
Your answer should follow the format:

My new actions (if any):
- my_new_action_1(here goes the arguments) : [one-sentence explanation]
- my_new_action_2(here goes the arguments) : [one-sentence explanation]
...

My sequence of actions:
1. output_1 = action_1(here goes the arguments) : [one-sentence explanation]
2. output_2 = action_2(here goes the arguments) : [one-sentence explanation]
...";

/// Action-mining prompt for one training question.
pub fn mining_prompt(seeds: &[ActionDef], question: &str) -> String {
    let mut out = String::from("[Actions]\n");
    for a in seeds {
        out.push_str(&format!("- {} : {}\n", format_action_signature(a), a.definition));
    }
    out.push_str("\n\n[Instructions]\n");
    out.push_str(MINING_INSTRUCTIONS);
    out.push_str("\n\n");
    out.push_str(MINING_EXAMPLES);
    out.push_str("\n\n[Question]\n");
    out.push_str(question);
    out.push_str("\n\n[Answer]\n");
    out.push_str(MINING_ANSWER);
    out.push('\n');
    out
}

/// Reduction prompt for one chunk of the action list. `target` is advisory.
pub fn reduction_prompt(actions: &[ActionDef], target: usize) -> String {
    let mut out = String::from("[Actions]\n");
    for a in actions {
        out.push_str(&action_list_line(a));
        out.push('\n');
    }
    out.push_str(&format!(
        "
[Instructions]
The actions above were proposed independently for many different reading comprehension questions, so the list contains duplicates, near-duplicates and actions that are too specific to reuse. Rewrite it as a shorter list of general actions. Merge actions that do the same job, widen narrow actions so they apply to more questions, and give every action a one-sentence definition. Keep CTX as the first parameter of every action that reads the article. Aim for roughly {target} actions.

[Answer]
Reply with the rewritten list only, one action per line, in this format:
ACTION_NAME(CTX, X) # one-sentence definition
"
    ));
    out
}

/// `NAME(params) # definition`; builtins are listed by signature only.
pub fn action_list_line(a: &ActionDef) -> String {
    if is_builtin(&a.name) || a.definition.is_empty() {
        format_action_signature(a)
    } else {
        format!("{} # {}", format_action_signature(a), a.definition)
    }
}

const PLAN_INSTRUCTIONS: &str = "Suppose you are given a question about an article, as well as a list of potential actions (shown above) that you can execute to solve the question . You can imagine the actions as functions in a program, where you have input arguments and output. The output of an action can be fed as input to another action. Please present a sequence of actions that you would use to answer the question after you read the article. The sequence of actions should be specific and cover all the details about the question. Please prioritize using the actions presented in the list above. If you need to add new actions, please follow the format below. Please assign the output of each action with a distinct name, which can be passed into other actions as argument. Think twice before you provide your answer. Make sure your answer is valid, clear, and easy to understand. Keep the answer simple and remove any unnecessary steps. Do not use list comprehension or dictionary comprehension. Keep each action minimally simple. If a question is unanswerable (e.g., requires options), collect as much information as possible from the input such that it will be answerable when provided with options. Your answer should follow the format:
'''
New actions:
- new_action_1(arguments) : [one-sentence general explanation] or \"-None\" if there no need to add new actions
- new_action_2(arguments) : [one-sentence general explanation] or \"-None\" if there no need to add new actions

1. output_1 = action_1(here goes arguments) : [one-sentence explanation]
2. output_2 = action_2(here goes arguments) : [one-sentence explanation]
...
'''";

const PLAN_QUESTION_TAIL: &str = "Please provide a plan (sequence of actions) that can arrive to the answer after reading the article. As the corresponding options are not provided for the question, when the question is not answerable without the options, simply collect as much information as possible from the input such that it will be answerable with the options. Make sure the plan you generate is valid and faithful to the question.";

/// A worked example shown in the plan prompt.
#[derive(Debug, Clone, Copy)]
pub struct PlanExample<'a> {
    pub question: &'a str,
    pub plan_text: &'a str,
}

/// Plan-generation prompt. Actions are listed alphabetically.
pub fn plan_prompt(actions: &[ActionDef], examples: &[PlanExample<'_>], question: &str) -> String {
    let mut sorted: Vec<&ActionDef> = actions.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut out = String::from("[Actions]\n");
    for a in sorted {
        out.push_str(&action_list_line(a));
        out.push('\n');
    }
    out.push_str("\n[Instructions]\n");
    out.push_str(PLAN_INSTRUCTIONS);
    out.push_str("\n\n");
    if !examples.is_empty() {
        out.push_str("The following are a few examples\n\n");
        let rendered: Vec<String> = examples
            .iter()
            .map(|e| format!("Question: \"{}\"\n\nAnswer:\n{}", e.question, e.plan_text.trim_end()))
            .collect();
        out.push_str(&rendered.join("\n\n"));
        out.push_str("\n\n");
    }
    out.push_str("\n[Question]\nNow you are given a question about an article:\n    ");
    out.push_str(question);
    out.push('\n');
    out.push_str(PLAN_QUESTION_TAIL);
    out.push_str("\n\n\n[Answer]\n");
    out
}

/// Follow-up message after an invalid plan. `rendered_errors` is the
/// numbered list from the planner.
pub fn correction_prompt(rendered_errors: &str) -> String {
    format!(
        "The plan above could not be used. The plan parser reported these errors:\n{rendered_errors}\n\nPlease fix every error and reply with the corrected plan only, using the same format (the optional \"New actions:\" block followed by the numbered steps)."
    )
}

/// Follow-up message asking for a better plan after a wrong answer.
pub fn refinement_prompt(question: &str, answer: &str) -> String {
    format!(
        "The plan above was executed on the article for the question \"{question}\", and its final answer was:\n{answer}\n\nThat answer does not resolve the question correctly. Write an improved plan that gathers the information the question actually depends on. Use the actions from the list, give every output a distinct name, and reply with the plan only in the same format."
    )
}

/// One `PARAM = "value"` line of a step prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub param: String,
    pub value: String,
}

/// Single-step execution prompt. Empty sections are left out.
pub fn step_prompt(
    document: &str,
    action: &ActionDef,
    step_call: &str,
    assignments: &[Assignment],
    instruction: &str,
) -> String {
    let mut out = format!(
        "Article\n{document}\nEnd of Article\n---\nPlease read the above text first, and then follow the instructions below.\n\n[Instructions]\n\n{}\n\n{step_call}\n\n",
        action_list_line(action)
    );
    if !assignments.is_empty() {
        for a in assignments {
            out.push_str(&format!("{} = \"{}\"\n", a.param, a.value));
        }
        out.push('\n');
    }
    out.push_str(&format!("[Answer]\n({instruction})\n"));
    out
}

/// Lettered option block, `A. text` per line.
pub fn options_block(options: &[String]) -> String {
    options
        .iter()
        .zip(LETTERS)
        .map(|(o, l)| format!("{l}. {o}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Prompt that maps a free-form answer onto the lettered options.
pub fn mapping_prompt(answer: &str, question: &str, options: &[String]) -> String {
    format!(
        "Relevant information for answering the question:\n\n{answer}\n\nQuestion: {question}\n{}\n\n\nRead the relevant information about the article and answer the question by selecting the best option above. Only one of them is correct.\n\nAnswer (select from A, B, C, D):\n",
        options_block(options)
    )
}

fn article_header(document: &str) -> String {
    format!("Article\n{document}\nEnd of Article\n---\n")
}

/// Direct free-form answer without a plan.
pub fn zero_shot_prompt(document: &str, question: &str) -> String {
    format!(
        "{}Please read the above text first, and then answer the question below with a detailed free-form answer.\n\nQuestion: {question}\n\nAnswer:\n",
        article_header(document)
    )
}

/// Zero-shot prompt with the step-by-step trigger appended.
pub fn zero_shot_cot_prompt(document: &str, question: &str) -> String {
    format!("{}Let's think step-by-step.\n", zero_shot_prompt(document, question))
}

/// Free-form answer that sees the plan but none of its execution results.
pub fn no_execution_prompt(document: &str, question: &str, plan_text: &str) -> String {
    format!(
        "{}Please read the above text first, and then answer the question below with a detailed free-form answer.\n\nQuestion: {question}\n\nThe following plan outlines the reasoning steps that lead to the answer:\n{plan_text}\n\nWork through the plan yourself using the article, then give your answer.\n\nAnswer:\n",
        article_header(document)
    )
}

/// Standard multiple-choice prompt: the model picks a letter directly.
pub fn multi_choice_prompt(document: &str, question: &str, options: &[String]) -> String {
    format!(
        "{}Please read the above text first, and then answer the question below by selecting the best option. Only one of them is correct.\n\nQuestion: {question}\n{}\n\nAnswer (select from A, B, C, D):\n",
        article_header(document),
        options_block(options)
    )
}

/// Reasoning-type labeling prompt over `(name, definition)` pairs.
pub fn labeling_prompt(question: &str, types: &[(&str, &str)]) -> String {
    let mut out = String::from("Reasoning types:\n");
    for (name, def) in types {
        out.push_str(&format!("- {name}: {def}\n"));
    }
    out.push_str(&format!(
        "\nQuestion: {question}\n\nWhich of the reasoning types above are needed to answer this question? Pick at most two. Reply with the type names only, separated by commas.\n"
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{concat_action, seed_actions, Origin};

    #[test]
    fn mining_prompt_lists_seeds_and_question() {
        let p = mining_prompt(&seed_actions(), "Why is the sky blue?");
        assert!(p.starts_with("[Actions]\n- CONCAT(S1, S2, ...) : Concatenate the input S1, S2, ...\n"));
        assert!(p.contains("- FIND_MORAL(CTX) : Find the intended lesson or moral of the input CTX.\n"));
        assert!(p.contains("[Question]\nWhy is the sky blue?\n\n[Answer]\n"));
        assert!(p.contains("My new actions:"));
    }

    #[test]
    fn builtins_have_no_definition_in_lists() {
        assert_eq!(action_list_line(concat_action()), "CONCAT(S1, S2, ...)");
        let a = ActionDef::new("DEFINE", &["CTX", "X"], "Define X.", Origin::Mined);
        assert_eq!(action_list_line(&a), "DEFINE(CTX, X) # Define X.");
    }

    #[test]
    fn plan_prompt_sorts_actions_and_indents_question() {
        let actions = vec![
            ActionDef::new("ZETA", &["CTX"], "Z.", Origin::Mined),
            concat_action().clone(),
            ActionDef::new("ALPHA", &["CTX"], "A.", Origin::Mined),
        ];
        let p = plan_prompt(&actions, &[], "Who?");
        assert!(p.starts_with("[Actions]\nALPHA(CTX) # A.\nCONCAT(S1, S2, ...)\nZETA(CTX) # Z.\n"));
        assert!(p.contains("about an article:\n    Who?\nPlease provide a plan (sequence of actions)"));
        assert!(!p.contains("The following are a few examples"));
        assert!(p.ends_with("[Answer]\n"));
    }

    #[test]
    fn step_prompt_without_assignments() {
        let a = ActionDef::new("FIND_MORAL", &["CTX"], "Find the moral of CTX.", Origin::Seed);
        let p = step_prompt("doc", &a, "moral = FIND_MORAL(CTX)", &[], "Find the moral");
        assert_eq!(
            p,
            "Article\ndoc\nEnd of Article\n---\nPlease read the above text first, and then follow the instructions below.\n\n[Instructions]\n\nFIND_MORAL(CTX) # Find the moral of CTX.\n\nmoral = FIND_MORAL(CTX)\n\n[Answer]\n(Find the moral)\n"
        );
    }

    #[test]
    fn mapping_prompt_letters_options() {
        let opts: Vec<String> = ["w", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let p = mapping_prompt("ans", "q?", &opts);
        assert!(p.contains("Question: q?\nA. w\nB. x\nC. y\nD. z\n"));
        assert!(p.ends_with("Answer (select from A, B, C, D):\n"));
    }

    #[test]
    fn cot_extends_zero_shot() {
        let z = zero_shot_prompt("d", "q");
        let c = zero_shot_cot_prompt("d", "q");
        assert!(c.starts_with(&z));
        assert!(c.ends_with("Let's think step-by-step.\n"));
    }
}
