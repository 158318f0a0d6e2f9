use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{GatewayError, LlmExchange, LlmGateway, LlmRequest, Source, Tag};

/// One scripted response. Transcript files hold one entry per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub tag: Tag,
    pub response_text: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

impl ReplayEntry {
    pub fn new(tag: Tag, response_text: impl Into<String>) -> Self {
        ReplayEntry {
            tag,
            response_text: response_text.into(),
            prompt_tokens: 0,
            completion_tokens: 0,
        }
    }

    pub fn with_tokens(mut self, prompt: u64, completion: u64) -> Self {
        self.prompt_tokens = prompt;
        self.completion_tokens = completion;
        self
    }
}

#[derive(Default)]
struct Queues {
    pending: HashMap<Tag, VecDeque<ReplayEntry>>,
    consumed: HashMap<Tag, usize>,
}

/// Serves transcript entries in order, separately for each tag. A request
/// whose tag has no entries left fails with `ScriptExhausted`.
pub struct ReplayGateway {
    queues: Mutex<Queues>,
}

impl ReplayGateway {
    pub fn new(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        let mut queues = Queues::default();
        for e in entries {
            queues.pending.entry(e.tag).or_default().push_back(e);
        }
        ReplayGateway {
            queues: Mutex::new(queues),
        }
    }

    /// Parses a JSON-lines transcript. Blank lines are skipped; errors name
    /// the 1-based line.
    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(line)
                .map_err(|e| format!("transcript line {}: {e}", i + 1))?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read transcript {}: {e}", path.display()))?;
        Self::from_jsonl(&text)
    }

    /// Entries not yet served, per tag.
    pub fn remaining(&self) -> HashMap<Tag, usize> {
        let q = self.queues.lock().expect("replay lock");
        q.pending
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(t, v)| (*t, v.len()))
            .collect()
    }
}

impl LlmGateway for ReplayGateway {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError> {
        request.validate()?;
        let mut q = self.queues.lock().expect("replay lock");
        let consumed = q.consumed.get(&request.tag).copied().unwrap_or(0);
        let entry = q
            .pending
            .get_mut(&request.tag)
            .and_then(VecDeque::pop_front)
            .ok_or(GatewayError::ScriptExhausted {
                tag: request.tag,
                consumed,
            })?;
        *q.consumed.entry(request.tag).or_default() += 1;
        Ok(LlmExchange {
            request: request.clone(),
            response_text: entry.response_text,
            prompt_tokens: entry.prompt_tokens,
            completion_tokens: entry.completion_tokens,
            cache_key: request.cache_key(),
            source: Source::Replay,
            latency_ms: 0,
        })
    }

    fn order_sensitive(&self) -> bool {
        true
    }
}
