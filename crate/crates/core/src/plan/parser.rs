use tracing::debug;

use super::{
    is_action_ident, is_variable_ident, Argument, Plan, PlanStep, ValidationError, DOCUMENT_TOKEN,
};
use crate::registry::{ActionDef, Origin};

/// Parses model output into a [`Plan`].
///
/// Leading and trailing prose is tolerated: the plan starts at the first
/// line that parses as a step, and an optional `New actions:` block may
/// appear anywhere before it. From there on, every numbered line must be a
/// well-formed step. Steps are renumbered 1..n in textual order.
pub fn parse_plan(text: &str) -> Result<Plan, ValidationError> {
    let lines: Vec<&str> = text.lines().collect();

    let start = lines
        .iter()
        .position(|l| is_numbered_line(l) && parse_step_line(l).is_ok());
    let Some(start) = start else {
        if let Some(first) = lines.iter().find(|l| is_numbered_line(l)) {
            let reason = parse_step_line(first).err().unwrap_or_default();
            return Err(ValidationError::malformed_step(1, first.trim(), &reason));
        }
        return Err(ValidationError::empty_plan());
    };

    let new_actions = parse_new_actions(&lines[..start])?;

    let mut steps: Vec<PlanStep> = Vec::new();
    for line in &lines[start..] {
        if !is_numbered_line(line) {
            continue;
        }
        let index = steps.len() + 1;
        let raw = parse_step_line(line)
            .map_err(|reason| ValidationError::malformed_step(index, line.trim(), &reason))?;
        if raw.number.parse::<usize>().ok() != Some(index) {
            debug!(written = raw.number, index, "renumbered plan step");
        }
        let (args, unsupported_args) = match raw.args {
            ArgList::Parsed(args) => (args, None),
            ArgList::Unsupported(text) => (Vec::new(), Some(text)),
        };
        steps.push(PlanStep {
            index,
            output: raw.output.to_string(),
            action: raw.action.to_string(),
            args,
            explanation: raw.explanation.to_string(),
            unsupported_args,
        });
    }

    Ok(Plan {
        new_actions,
        steps,
        source_text: text.to_string(),
    })
}

/// True for lines that start (after indentation) with `<digits>.`, where the
/// dot is not a decimal point.
pub fn is_numbered_line(line: &str) -> bool {
    let rest = line.trim_start();
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return false;
    }
    let mut tail = rest[digits..].chars();
    tail.next() == Some('.') && !matches!(tail.next(), Some(c) if c.is_ascii_digit())
}

/// Parses `- NAME(P1, P2, ...) : definition` (also accepts `#` as the
/// separator and no leading dash). Names are upper-cased.
pub fn parse_action_line(line: &str, origin: Origin) -> Result<ActionDef, String> {
    let trimmed = line.trim().trim_start_matches(['-', '*']).trim_start();
    let mut c = Cursor::new(trimmed);
    let name = c.take_while(is_ident_char);
    if name.is_empty() {
        return Err("missing action name".into());
    }
    let name = name.to_ascii_uppercase();
    if !is_action_ident(&name) {
        return Err(format!("action name '{name}' must start with a letter"));
    }
    c.skip_ws();
    if !c.eat('(') {
        return Err("expected '(' after the action name".into());
    }
    let inner = c.take_while(|ch| ch != ')');
    if !c.eat(')') {
        return Err("missing ')'".into());
    }
    let mut params = Vec::new();
    if !inner.trim().is_empty() {
        for p in inner.split(',') {
            let p = p.trim();
            let ok = p == "..."
                || (p.starts_with(|ch: char| ch.is_ascii_alphabetic() || ch == '_')
                    && p.chars().all(is_ident_char));
            if !ok {
                return Err(format!("parameter '{p}' is not an identifier"));
            }
            params.push(p.to_string());
        }
    }
    if let Some(pos) = params.iter().position(|p| p == "...") {
        if pos + 1 != params.len() {
            return Err("'...' must be the last parameter".into());
        }
    }
    c.skip_ws();
    let definition = if c.eat(':') || c.eat('#') {
        c.rest().trim()
    } else if c.at_end() {
        ""
    } else {
        return Err("expected ':' before the definition".into());
    };
    Ok(ActionDef {
        name,
        params,
        definition: definition.to_string(),
        origin,
    })
}

fn parse_new_actions(lines: &[&str]) -> Result<Vec<ActionDef>, ValidationError> {
    let Some(header) = lines.iter().position(|l| is_new_actions_header(l)) else {
        return Ok(Vec::new());
    };
    let mut out: Vec<ActionDef> = Vec::new();
    let push = |def: ActionDef, out: &mut Vec<ActionDef>| {
        if out.iter().any(|a| a.name == def.name) {
            debug!(name = %def.name, "duplicate declared action ignored");
        } else {
            out.push(def);
        }
    };

    let header_line = lines[header];
    if let Some((_, inline)) = header_line.split_once(':') {
        let inline = inline.trim();
        if !inline.is_empty() && !is_none_marker(inline) {
            let def = parse_action_line(inline, Origin::PlanDeclared)
                .map_err(|r| ValidationError::malformed_new_action(inline, &r))?;
            push(def, &mut out);
        }
    }

    for line in &lines[header + 1..] {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if !(t.starts_with('-') || t.starts_with('*')) {
            break;
        }
        if is_none_marker(t) {
            continue;
        }
        let def = parse_action_line(t, Origin::PlanDeclared)
            .map_err(|r| ValidationError::malformed_new_action(t, &r))?;
        push(def, &mut out);
    }
    Ok(out)
}

fn is_new_actions_header(line: &str) -> bool {
    let t = line
        .trim()
        .trim_start_matches(['`', '\'', '*', '#', ' '])
        .to_ascii_lowercase();
    (t.starts_with("new actions") || t.starts_with("my new actions")) && t.contains(':')
}

fn is_none_marker(s: &str) -> bool {
    s.trim_start_matches(['-', '*'])
        .trim()
        .trim_end_matches('.')
        .eq_ignore_ascii_case("none")
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

#[derive(Debug)]
struct RawStep<'a> {
    number: &'a str,
    output: &'a str,
    action: &'a str,
    args: ArgList,
    explanation: &'a str,
}

#[derive(Debug)]
enum ArgList {
    Parsed(Vec<Argument>),
    Unsupported(String),
}

fn parse_step_line(line: &str) -> Result<RawStep<'_>, String> {
    let mut c = Cursor::new(line);
    c.skip_ws();
    let number = c.take_while(|ch| ch.is_ascii_digit());
    if number.is_empty() || !c.eat('.') {
        return Err("missing step number".into());
    }
    c.skip_ws();
    let output = c.take_while(is_ident_char);
    if output.is_empty() {
        return Err("missing output variable".into());
    }
    if !is_variable_ident(output) {
        return Err(format!(
            "output variable '{output}' must be lowercase letters, digits and underscores"
        ));
    }
    c.skip_ws();
    if !c.eat('=') {
        return Err("expected '=' after the output variable".into());
    }
    c.skip_ws();
    let action = c.take_while(is_ident_char);
    if action.is_empty() {
        return Err("missing action name".into());
    }
    if !is_action_ident(action) {
        return Err(format!(
            "action name '{action}' must be uppercase letters, digits and underscores"
        ));
    }
    c.skip_ws();
    if !c.eat('(') {
        return Err(format!("expected '(' after '{action}'"));
    }
    let args_text = scan_argument_list(&mut c)?;
    c.skip_ws();
    let explanation = if c.eat(':') {
        c.rest().trim()
    } else if c.at_end() {
        ""
    } else {
        return Err("unexpected text after the argument list".into());
    };
    Ok(RawStep {
        number,
        output,
        action,
        args: parse_args(args_text)?,
        explanation,
    })
}

/// Consumes up to and including the `)` that closes the argument list and
/// returns the text between the parentheses.
fn scan_argument_list<'a>(c: &mut Cursor<'a>) -> Result<&'a str, String> {
    let start = c.pos;
    let mut depth = 1usize;
    let mut in_string = false;
    while let Some(ch) = c.bump() {
        if in_string {
            match ch {
                '\\' if c.peek() == Some('"') => {
                    c.bump();
                }
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    if ch != ')' {
                        return Err("unbalanced brackets in the argument list".into());
                    }
                    return Ok(&c.src[start..c.pos - 1]);
                }
            }
            _ => {}
        }
    }
    if in_string {
        Err("unterminated string literal".into())
    } else {
        Err("missing ')' to close the argument list".into())
    }
}

/// Splits `text` at top-level commas, ignoring commas inside strings.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut in_string = false;
    let mut last = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if in_string {
            match ch {
                '\\' if matches!(chars.peek(), Some((_, '"'))) => {
                    chars.next();
                }
                '"' => in_string = false,
                _ => {}
            }
        } else if ch == '"' {
            in_string = true;
        } else if ch == ',' {
            pieces.push(&text[last..i]);
            last = i + 1;
        }
    }
    pieces.push(&text[last..]);
    pieces
}

/// Text outside string literals, with each literal replaced by a space.
fn strip_strings(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        if in_string {
            match ch {
                '\\' if chars.peek() == Some(&'"') => {
                    chars.next();
                }
                '"' => {
                    in_string = false;
                    out.push(' ');
                }
                _ => {}
            }
        } else if ch == '"' {
            in_string = true;
        } else {
            out.push(ch);
        }
    }
    out
}

fn has_forbidden_construct(text: &str) -> bool {
    let bare = strip_strings(text);
    if bare.contains(['(', '[', '{']) {
        return true;
    }
    let words: Vec<&str> = bare
        .split(|c: char| !is_ident_char(c))
        .filter(|w| !w.is_empty())
        .collect();
    match words.iter().position(|w| *w == "for") {
        Some(i) => words[i + 1..].contains(&"in"),
        None => false,
    }
}

fn parse_args(text: &str) -> Result<ArgList, String> {
    if has_forbidden_construct(text) {
        return Ok(ArgList::Unsupported(text.trim().to_string()));
    }
    if text.trim().is_empty() {
        return Ok(ArgList::Parsed(Vec::new()));
    }
    split_top_level(text)
        .into_iter()
        .map(|piece| parse_argument(piece.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map(ArgList::Parsed)
}

fn parse_argument(piece: &str) -> Result<Argument, String> {
    if piece.is_empty() {
        return Err("empty argument".into());
    }
    if piece == DOCUMENT_TOKEN {
        return Ok(Argument::DocumentRef);
    }
    if let Some(body) = piece.strip_prefix('"') {
        return parse_literal(body).map(Argument::StringLiteral);
    }
    if is_variable_ident(piece) {
        return Ok(Argument::VariableRef(piece.to_string()));
    }
    if is_number(piece) {
        return Ok(Argument::StringLiteral(piece.to_string()));
    }
    Err(format!(
        "argument '{piece}' must be CTX, a double-quoted string, or a lowercase output variable"
    ))
}

/// `body` is everything after the opening quote.
fn parse_literal(body: &str) -> Result<String, String> {
    let mut out = String::with_capacity(body.len());
    let mut chars = body.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        match ch {
            '\\' if matches!(chars.peek(), Some((_, '"'))) => {
                chars.next();
                out.push('"');
            }
            '"' => {
                let trailing = body[i + 1..].trim();
                if !trailing.is_empty() {
                    return Err(format!("unexpected text '{trailing}' after a string literal"));
                }
                return Ok(out);
            }
            _ => out.push(ch),
        }
    }
    Err("unterminated string literal".into())
}

fn is_number(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        && digits.chars().filter(|c| *c == '.').count() <= 1
        && digits.chars().any(|c| c.is_ascii_digit())
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.peek()?;
        self.pos += ch.len_utf8();
        Some(ch)
    }

    fn eat(&mut self, want: char) -> bool {
        if self.peek() == Some(want) {
            self.pos += want.len_utf8();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        self.take_while(char::is_whitespace);
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(ch) = self.peek() {
            if !f(ch) {
                break;
            }
            self.pos += ch.len_utf8();
        }
        &self.src[start..self.pos]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::ErrorCode;

    #[test]
    fn single_step_with_literal() {
        let plan = parse_plan(
            r#"1. ross = FIND_CHARACTER(CTX, "Ross") : Identify who Ross is in the input article"#,
        )
        .unwrap();
        assert_eq!(plan.steps.len(), 1);
        let step = &plan.steps[0];
        assert_eq!(step.output, "ross");
        assert_eq!(step.action, "FIND_CHARACTER");
        assert_eq!(
            step.args,
            vec![Argument::DocumentRef, Argument::literal("Ross")]
        );
        assert_eq!(step.explanation, "Identify who Ross is in the input article");
    }

    #[test]
    fn empty_input_is_empty_plan() {
        assert_eq!(parse_plan("").unwrap_err().code, ErrorCode::EmptyPlan);
        assert_eq!(
            parse_plan("I would first read the article.").unwrap_err().code,
            ErrorCode::EmptyPlan
        );
    }

    #[test]
    fn numbered_prose_without_steps_is_malformed() {
        let err = parse_plan("1. Read the article carefully").unwrap_err();
        assert_eq!(err.code, ErrorCode::MalformedStep);
        assert_eq!(err.step_index, Some(1));
        assert!(err.message.contains("1. Read the article carefully"));
    }

    #[test]
    fn malformed_line_after_plan_start() {
        let text = "1. a = SUMMARIZE(CTX) : x\n2. b = FIND_X(CTX, Who)\n";
        let err = parse_plan(text).unwrap_err();
        assert_eq!(err.code, ErrorCode::MalformedStep);
        assert_eq!(err.step_index, Some(2));
        assert!(err.message.contains("2. b = FIND_X(CTX, Who)"));
        assert!(err.message.contains("'Who'"));
    }

    #[test]
    fn tolerates_surrounding_prose_and_renumbers() {
        let text = "Sure! Here is the plan:\n\n```\n3. a = SUMMARIZE(CTX) : s\n7. ans = CONCAT(a, \"x\")\n```\nThis should work.";
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert_eq!(plan.steps[0].index, 1);
        assert_eq!(plan.steps[1].index, 2);
        assert_eq!(plan.answer_variable(), Some("ans"));
        assert_eq!(plan.source_text, text);
    }

    #[test]
    fn escaped_quotes_and_commas_in_literals() {
        let plan = parse_plan(r#"1. a = FIND_X(CTX, "the \"big\" one, really") : x"#).unwrap();
        assert_eq!(
            plan.steps[0].args[1],
            Argument::literal(r#"the "big" one, really"#)
        );
    }

    #[test]
    fn literal_keeps_internal_spaces() {
        let plan = parse_plan(r#"1. a = FIND_X(CTX, "  two  spaces ")"#).unwrap();
        assert_eq!(plan.steps[0].args[1], Argument::literal("  two  spaces "));
    }

    #[test]
    fn space_before_parenthesis_and_no_explanation() {
        let plan = parse_plan("1. a = FIND_ELEMENT (CTX, \"problems\", b)").unwrap();
        assert_eq!(plan.steps[0].args.len(), 3);
        assert_eq!(plan.steps[0].explanation, "");
    }

    #[test]
    fn bare_number_becomes_literal() {
        let plan = parse_plan("1. a = FIND_X(CTX, 3)").unwrap();
        assert_eq!(plan.steps[0].args[1], Argument::literal("3"));
    }

    #[test]
    fn forbidden_constructs_are_kept_for_the_validator() {
        for args in [
            "CTX, [x for x in y]",
            "CTX, {\"a\": b}",
            "CTX, SUMMARIZE(CTX)",
            "CTX, x for x in items",
        ] {
            let plan = parse_plan(&format!("1. a = FIND_X({args}) : e")).unwrap();
            assert_eq!(plan.steps[0].unsupported_args.as_deref(), Some(args));
            assert!(plan.steps[0].args.is_empty());
        }
        // brackets inside strings are fine
        let plan = parse_plan("1. a = FIND_X(CTX, \"[for x in y]\")").unwrap();
        assert!(plan.steps[0].unsupported_args.is_none());
    }

    #[test]
    fn new_actions_block() {
        let text = "New actions:\n- FIND_OPINION(CTX, X, Y) : Find the opinion of X about Y given the input CTX\n\n1. a = FIND_OPINION(CTX, \"a\", \"b\") : x";
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.new_actions.len(), 1);
        let def = &plan.new_actions[0];
        assert_eq!(def.name, "FIND_OPINION");
        assert_eq!(def.params, vec!["CTX", "X", "Y"]);
        assert_eq!(def.origin, Origin::PlanDeclared);

        let none = parse_plan("New actions:\n-None\n\n1. a = SUMMARIZE(CTX)").unwrap();
        assert!(none.new_actions.is_empty());
    }

    #[test]
    fn malformed_new_action_line() {
        let err = parse_plan("New actions:\n- find opinion of someone\n1. a = SUMMARIZE(CTX)").unwrap_err();
        assert_eq!(err.code, ErrorCode::MalformedStep);
        assert_eq!(err.step_index, None);
    }

    #[test]
    fn action_line_variants() {
        let a = parse_action_line(
            "ANALYZE(CTX, X, Y) # Analyze the relationship between X and Y",
            Origin::Mined,
        )
        .unwrap();
        assert_eq!(a.params.len(), 3);
        assert_eq!(a.definition, "Analyze the relationship between X and Y");
        let b = parse_action_line("- CONCAT(S1, S2, ...) : Concatenate", Origin::Seed).unwrap();
        assert!(b.is_variadic());
        let c = parse_action_line("- FIND_MORAL(CTX): Find the moral", Origin::Seed).unwrap();
        assert_eq!(c.definition, "Find the moral");
        assert!(parse_action_line("- F(..., X) : bad", Origin::Seed).is_err());
    }

    #[test]
    fn numbered_line_detection() {
        assert!(is_numbered_line("  12. x"));
        assert!(is_numbered_line("1."));
        assert!(!is_numbered_line("1.5 million people"));
        assert!(!is_numbered_line("- 1. x"));
        assert!(!is_numbered_line("step 1."));
    }

    #[test]
    fn unterminated_constructs() {
        for line in [
            "1. a = F(CTX, \"open",
            "1. a = F(CTX, x",
            "1. a = F(CTX]",
            "1. a = F(CTX) trailing",
            "1. A = F(CTX)",
            "1. a = f(CTX)",
            "1. a F(CTX)",
            "1. a = F(CTX,, b)",
        ] {
            assert_eq!(
                parse_plan(line).unwrap_err().code,
                ErrorCode::MalformedStep,
                "{line}"
            );
        }
    }
}
