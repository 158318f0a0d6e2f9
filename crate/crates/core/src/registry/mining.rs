use serde::{Deserialize, Serialize};
use tracing::{debug, info, warn};

use super::{is_builtin, ActionDef, ActionRegistry, Origin, RegistryError};
use crate::concurrency::map_ordered;
use crate::gateway::{GatewayError, LlmGateway, ModelConfig, Tag};
use crate::plan::parse_action_line;
use crate::prompts;

/// Upper bound on actions per reduction prompt.
pub const REDUCTION_CHUNK_SIZE: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningQuestion {
    pub question_id: String,
    pub question: String,
}

/// One line of the mining log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningLogEntry {
    pub question_id: String,
    pub new_action_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MiningOutcome {
    pub registry: ActionRegistry,
    pub log: Vec<MiningLogEntry>,
}

/// Extracts the declared actions from a mining reply.
///
/// Reads the `My new actions` block when there is one, otherwise every
/// dash line before `My sequence of actions`. `- None` declares nothing.
/// Fails when the reply has no action lines at all, or none of them parse.
pub fn parse_mined_actions(reply: &str) -> Result<Vec<ActionDef>, String> {
    let lines: Vec<&str> = reply.lines().collect();
    let header = lines.iter().position(|l| {
        let lower = l.trim().to_ascii_lowercase();
        lower.starts_with("my new actions") || lower.starts_with("new actions")
    });
    let body = match header {
        Some(h) => &lines[h + 1..],
        None => &lines[..],
    };
    let mut saw_none = false;
    let mut candidates = 0;
    let mut out = Vec::new();
    for line in body {
        let t = line.trim();
        let lower = t.to_ascii_lowercase();
        if lower.starts_with("my sequence of actions") {
            break;
        }
        if header.is_some() && t.is_empty() && (candidates > 0 || saw_none) {
            break;
        }
        let Some(item) = t.strip_prefix('-') else { continue };
        let item = item.trim();
        if item.eq_ignore_ascii_case("none") || item.eq_ignore_ascii_case("none.") {
            saw_none = true;
            continue;
        }
        candidates += 1;
        match parse_action_line(item, Origin::Mined) {
            Ok(def) if def.definition.is_empty() => {
                debug!(line = t, "skipping action without a definition")
            }
            Ok(def) => out.push(def),
            Err(e) => debug!(line = t, error = %e, "skipping unparsable action line"),
        }
    }
    if out.is_empty() && !saw_none {
        return Err(if candidates == 0 {
            "reply contains no action lines".to_string()
        } else {
            format!("none of the {candidates} action lines could be parsed")
        });
    }
    Ok(out)
}

/// Runs the mining prompt over every question and merges the proposals
/// into the seed set. Names are deduplicated first-wins in question order.
pub fn mine_actions<G: LlmGateway>(
    questions: &[MiningQuestion],
    seeds: &[ActionDef],
    gateway: &G,
    model: &ModelConfig,
    parallelism: usize,
) -> Result<MiningOutcome, RegistryError> {
    if seeds.is_empty() {
        return Err(RegistryError::NoSeeds);
    }
    let replies = map_ordered(questions, parallelism, gateway.order_sensitive(), |q| {
        let request = model.prompt(Tag::Mine, prompts::mining_prompt(seeds, &q.question));
        gateway
            .complete(&request)
            .map_err(|e: GatewayError| format!("{}: {e}", e.kind()))
            .and_then(|ex| {
                parse_mined_actions(&ex.response_text).map_err(|e| format!("malformed_response: {e}"))
            })
    });

    let mut registry = ActionRegistry::dedup_first(seeds.iter().cloned()).0;
    let mut log = Vec::with_capacity(questions.len());
    for (q, reply) in questions.iter().zip(replies) {
        match reply {
            Ok(defs) => {
                let mut added = Vec::new();
                for def in defs {
                    let name = def.name.clone();
                    if registry.insert_if_absent(def) {
                        added.push(name);
                    } else {
                        debug!(question_id = %q.question_id, action = %name, "duplicate action dropped");
                    }
                }
                log.push(MiningLogEntry {
                    question_id: q.question_id.clone(),
                    new_action_names: added,
                    skipped_reason: None,
                });
            }
            Err(reason) => {
                warn!(question_id = %q.question_id, %reason, "question skipped");
                log.push(MiningLogEntry {
                    question_id: q.question_id.clone(),
                    new_action_names: Vec::new(),
                    skipped_reason: Some(reason),
                });
            }
        }
    }
    registry.provenance.model = Some(model.model.clone());
    registry.provenance.mined_questions = questions.len();
    info!(actions = registry.len(), questions = questions.len(), "mining finished");
    Ok(MiningOutcome { registry, log })
}

/// Parses a reduction reply: one `NAME(params) # definition` per line,
/// optionally bulleted or numbered. Unparsable lines are skipped.
pub fn parse_action_list(reply: &str) -> Result<Vec<ActionDef>, String> {
    let mut out = Vec::new();
    for line in reply.lines() {
        let mut t = line.trim();
        if t.is_empty() || t.starts_with("```") {
            continue;
        }
        t = t.trim_start_matches(['-', '*']).trim_start();
        if let Some(dot) = t.find(". ") {
            if t[..dot].chars().all(|c| c.is_ascii_digit()) && dot > 0 {
                t = &t[dot + 2..];
            }
        }
        if !t.contains('(') {
            continue;
        }
        match parse_action_line(t, Origin::Reduced) {
            Ok(def) if def.definition.is_empty() && !is_builtin(&def.name) => {
                debug!(line = t, "skipping action without a definition")
            }
            Ok(def) => out.push(def),
            Err(e) => debug!(line = t, error = %e, "skipping unparsable action line"),
        }
    }
    if out.is_empty() {
        return Err("reply contains no parsable actions".to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReductionSettings {
    /// Advisory total size, mentioned in the prompt only.
    pub target_hint: usize,
    pub rounds: u32,
    pub chunk_size: usize,
    pub parallelism: usize,
}

impl Default for ReductionSettings {
    fn default() -> Self {
        ReductionSettings {
            target_hint: 80,
            rounds: 2,
            chunk_size: REDUCTION_CHUNK_SIZE,
            parallelism: 1,
        }
    }
}

fn reduce_round<G: LlmGateway>(
    registry: &ActionRegistry,
    settings: &ReductionSettings,
    gateway: &G,
    model: &ModelConfig,
) -> Result<Result<ActionRegistry, String>, GatewayError> {
    let pool: Vec<ActionDef> = registry
        .actions()
        .iter()
        .filter(|a| !is_builtin(&a.name))
        .cloned()
        .collect();
    if pool.is_empty() {
        return Ok(Ok(registry.clone()));
    }
    let chunks: Vec<&[ActionDef]> = pool.chunks(settings.chunk_size.max(1)).collect();
    let total = pool.len();
    let replies = map_ordered(&chunks, settings.parallelism, gateway.order_sensitive(), |chunk| {
        let target = (settings.target_hint * chunk.len()).div_ceil(total).max(1);
        gateway.complete(&model.prompt(Tag::Reduce, prompts::reduction_prompt(chunk, target)))
    });
    let mut returned = Vec::new();
    for reply in replies {
        match parse_action_list(&reply?.response_text) {
            Ok(defs) => returned.extend(defs),
            Err(e) => return Ok(Err(e)),
        }
    }
    let merged = returned
        .into_iter()
        .filter(|a| !is_builtin(&a.name))
        .map(|mut a| {
            if let Some(old) = registry.get(&a.name) {
                if old.params == a.params && old.definition == a.definition {
                    a.origin = old.origin;
                }
            }
            a
        });
    let (mut next, dropped) = ActionRegistry::dedup_first(merged);
    if !dropped.is_empty() {
        debug!(?dropped, "duplicate names across reduction chunks");
    }
    next.provenance = registry.provenance.clone();
    Ok(Ok(next))
}

/// Asks the model to merge and generalize the action list, `rounds` times.
///
/// A round whose reply cannot be parsed is retried once; if it fails again
/// the registry from before that round is kept and the next round runs.
pub fn reduce_actions<G: LlmGateway>(
    registry: &ActionRegistry,
    settings: &ReductionSettings,
    gateway: &G,
    model: &ModelConfig,
) -> Result<ActionRegistry, RegistryError> {
    let mut current = registry.clone();
    for round in 1..=settings.rounds {
        let mut outcome = reduce_round(&current, settings, gateway, model)?;
        if let Err(e) = &outcome {
            warn!(round, error = %e, "malformed reduction reply, retrying round");
            outcome = reduce_round(&current, settings, gateway, model)?;
        }
        match outcome {
            Ok(next) => {
                info!(round, before = current.len(), after = next.len(), "reduction round done");
                current = next;
                current.provenance.rounds += 1;
            }
            Err(e) => warn!(round, error = %e, "round failed twice, keeping previous actions"),
        }
    }
    Ok(current)
}
