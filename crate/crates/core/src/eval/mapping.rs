use crate::gateway::{GatewayError, LlmExchange, LlmGateway, ModelConfig, Tag};
use crate::prompts;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Index of the first standalone letter A-D (either case) in `reply`.
///
/// "Standalone" means the letter is not adjacent to another letter, digit
/// or underscore, so `B)`, `(c)` and `C.` count but the `a` in `am` does not.
pub fn parse_choice(reply: &str) -> Option<usize> {
    let chars: Vec<char> = reply.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let idx = match c {
            'A' | 'a' => 0,
            'B' | 'b' => 1,
            'C' | 'c' => 2,
            'D' | 'd' => 3,
            _ => continue,
        };
        let before_ok = i == 0 || !is_word_char(chars[i - 1]);
        let after_ok = i + 1 == chars.len() || !is_word_char(chars[i + 1]);
        if before_ok && after_ok {
            return Some(idx);
        }
    }
    None
}

pub fn choice_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Maps a free-form answer onto one of the four options with one model
/// call. `None` in the first field means no letter could be read.
pub fn map_answer<G: LlmGateway + ?Sized>(
    answer: &str,
    question: &str,
    options: &[String],
    gateway: &G,
    model: &ModelConfig,
) -> Result<(Option<usize>, LlmExchange), GatewayError> {
    let request = model.prompt(Tag::Map, prompts::mapping_prompt(answer, question, options));
    let ex = gateway.complete(&request)?;
    Ok((parse_choice(&ex.response_text), ex))
}

/// Reasoning types with short working definitions.
pub const REASONING_TYPES: [(&str, &str); 15] = [
    ("Description", "asks what a person, place, object or situation is like."),
    ("Why/reason", "asks for the cause of, or motive behind, an event or action."),
    ("Symbolism/interpretation", "asks what something means, stands for, or what the author intends."),
    ("Person", "asks who was involved in something or about the people in an event."),
    ("Event", "asks what happened, or in what order things happened."),
    ("Not/except", "asks which option does not hold, usually worded with NOT or EXCEPT."),
    ("How/method", "asks how something was done or by what means."),
    ("Relation", "asks how two people or things are connected to each other."),
    ("Entity", "asks about a named thing that is not a person, such as a group or organization."),
    ("Numeric", "asks for a number, a count or an amount."),
    ("Location", "asks where something is or takes place."),
    ("What if", "asks what would follow from a hypothetical or counterfactual change."),
    ("Object", "asks about a specific physical item."),
    ("Duration", "asks how long something lasts or took."),
    ("Finish the sentence", "asks which ending best completes a partial statement."),
];

/// Up to two known type names, in the order they appear in `reply`.
pub fn parse_reasoning_types(reply: &str) -> Vec<&'static str> {
    let lower = reply.to_lowercase();
    let mut hits: Vec<(usize, &'static str)> = Vec::new();
    for (name, _) in REASONING_TYPES {
        let needle = name.to_lowercase();
        let mut from = 0;
        while let Some(off) = lower[from..].find(&needle) {
            let start = from + off;
            let end = start + needle.len();
            let before_ok = lower[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
            let after_ok = lower[end..].chars().next().is_none_or(|c| !is_word_char(c));
            if before_ok && after_ok {
                hits.push((start, name));
                break;
            }
            from = end;
        }
    }
    hits.sort();
    hits.into_iter().map(|(_, n)| n).take(2).collect()
}

/// Labels a question with up to two reasoning types. An empty result
/// means the reply named no known type.
pub fn label_reasoning_types<G: LlmGateway + ?Sized>(
    question: &str,
    gateway: &G,
    model: &ModelConfig,
    max_output_tokens: u32,
) -> Result<(Vec<&'static str>, LlmExchange), GatewayError> {
    let request = model.request_with_limit(
        Tag::Map,
        vec![crate::gateway::Message::user(prompts::labeling_prompt(question, &REASONING_TYPES))],
        max_output_tokens,
    );
    let ex = gateway.complete(&request)?;
    Ok((parse_reasoning_types(&ex.response_text), ex))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letters() {
        assert_eq!(parse_choice("B"), Some(1));
        assert_eq!(parse_choice("The answer is C."), Some(2));
        assert_eq!(parse_choice("None of these options fit."), None);
        assert_eq!(parse_choice("(d) seems right"), Some(3));
        assert_eq!(parse_choice("Option B_2"), None);
        assert_eq!(parse_choice("Answer: a"), Some(0));
        assert_eq!(parse_choice(""), None);
        assert_eq!(parse_choice("éB"), None);
    }

    #[test]
    fn reasoning_labels() {
        assert_eq!(parse_reasoning_types("Why/reason, Person"), vec!["Why/reason", "Person"]);
        assert_eq!(parse_reasoning_types("Event, Person, Numeric"), vec!["Event", "Person"]);
        assert!(parse_reasoning_types("Banana").is_empty());
        assert_eq!(parse_reasoning_types("personal things; what if"), vec!["What if"]);
    }
}
