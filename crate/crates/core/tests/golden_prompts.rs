use pearl_core::execution::{fill_step_template, Environment};
use pearl_core::plan::{parse_plan, ActionScope};
use pearl_core::prompts::{mapping_prompt, mining_prompt, plan_prompt, PlanExample};
use pearl_core::registry::{seed_actions, ActionDef, ActionRegistry, Origin};

const ARTICLE: &str = "Mara had worked the harbor cranes for ten years. When the company offered her a ticket on the last ship south, she stood on the pier for an hour before tearing it in half.";

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn assert_same(actual: &str, expected: &str) {
    if actual != expected {
        let line = actual
            .lines()
            .zip(expected.lines())
            .position(|(a, b)| a != b)
            .map_or_else(|| "length".to_string(), |i| format!("line {}", i + 1));
        panic!("prompt differs from golden at {line}\n--- actual ---\n{actual}\n--- expected ---\n{expected}");
    }
}

#[test]
fn step_prompt_matches_golden() {
    let registry = ActionRegistry::new(vec![ActionDef::new(
        "FIND_EMOTION",
        &["CTX", "X", "Y"],
        "Find the emotion or feeling X feels towards Y given the input CTX.",
        Origin::Reduced,
    )])
    .unwrap();
    let plan = parse_plan(
        "1. mara = FIND_EMOTION(CTX, \"Mara\", \"anything\")\n\
         2. mara_feeling = FIND_EMOTION(CTX, mara, \"leaving the harbor\") : Find the emotion or feeling Mara has towards leaving the harbor in the input article",
    )
    .unwrap();
    let env = Environment {
        document_id: "d".into(),
        bindings: vec![(
            "mara".into(),
            "Mara is a crane operator who has spent ten years at the harbor and turns down a ticket south.".into(),
        )],
    };
    let scope = ActionScope::for_plan(&registry, &plan);
    let prompt = fill_step_template(&plan.steps[1], &scope, &env, ARTICLE).unwrap();
    assert_same(&prompt, &golden("step_prompt.txt"));
}

#[test]
fn plan_prompt_matches_golden() {
    let actions = vec![
        ActionDef::new("FIND_EVENT", &["CTX", "X"], "Find the event involving X in the input CTX.", Origin::Reduced),
        ActionDef::new(
            "FIND_CHARACTER",
            &["CTX", "X"],
            "Find and summarize the character traits, transformation, and changes of X given the input CTX.",
            Origin::Reduced,
        ),
        ActionDef::new("CONCAT", &["S1", "S2", "..."], "Concatenate the input S1, S2, ...", Origin::Seed),
        ActionDef::new("COMPARE", &["CTX", "X", "Y", "Z"], "Compare X and Y in the context of Z given the input CTX.", Origin::Reduced),
    ];
    let example = PlanExample {
        question: "How does Mara feel about the harbor?",
        plan_text: "1. mara = FIND_CHARACTER(CTX, \"Mara\") : Identify who Mara is in the input article\n\
                    2. ans = FIND_EVENT(CTX, \"Mara tears up the ticket\") : Find the event where Mara tears up the ticket\n",
    };
    let prompt = plan_prompt(&actions, &[example], "Why does the harbor master refuse the offer?");
    assert_same(&prompt, &golden("plan_prompt.txt"));
    assert!(prompt.contains("Please provide a plan (sequence of actions)"));
}

#[test]
fn mining_prompt_matches_golden() {
    let prompt = mining_prompt(&seed_actions(), "Why does the harbor master refuse the offer?");
    assert_same(&prompt, &golden("mining_prompt.txt"));
    assert!(prompt.contains("My new actions:"));
}

#[test]
fn mapping_prompt_matches_golden() {
    let options: Vec<String> = [
        "She wants a better seat",
        "The ship is cancelled",
        "She cannot bring herself to leave the harbor",
        "The company takes the offer back",
    ]
    .map(String::from)
    .to_vec();
    let prompt = mapping_prompt(
        "Mara tears up the ticket because she cannot bring herself to leave the harbor.",
        "Why does Mara tear up the ticket?",
        &options,
    );
    assert_same(&prompt, &golden("mapping_prompt.txt"));
    assert!(prompt.ends_with("Answer (select from A, B, C, D):\n"));
}
