use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{GatewayError, LlmExchange, LlmGateway, LlmRequest, Source};

#[derive(Serialize, Deserialize)]
struct CachedResponse {
    request: LlmRequest,
    response_text: String,
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Content-addressed response cache: one JSON file per request, named by
/// the request's cache key. Writes go to a temporary file that is renamed
/// into place, so concurrent readers never see partial entries.
pub struct CachedGateway<G> {
    inner: G,
    dir: PathBuf,
    misses: AtomicU64,
}

impl<G: LlmGateway> CachedGateway<G> {
    pub fn new(inner: G, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachedGateway {
            inner,
            dir,
            misses: AtomicU64::new(0),
        })
    }

    /// Requests forwarded to the inner gateway so far.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn read(&self, path: &Path) -> Option<CachedResponse> {
        let text = fs::read_to_string(path).ok()?;
        match serde_json::from_str(&text) {
            Ok(entry) => Some(entry),
            Err(e) => {
                warn!(path = %path.display(), error = %e, "ignoring unreadable cache entry");
                None
            }
        }
    }

    fn write(&self, path: &Path, exchange: &LlmExchange) -> std::io::Result<()> {
        let entry = CachedResponse {
            request: exchange.request.clone(),
            response_text: exchange.response_text.clone(),
            prompt_tokens: exchange.prompt_tokens,
            completion_tokens: exchange.completion_tokens,
        };
        let body = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        let tmp = path.with_extension(format!(
            "tmp.{}.{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&body)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    }
}

impl<G: LlmGateway> LlmGateway for CachedGateway<G> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError> {
        request.validate()?;
        let key = request.cache_key();
        let path = self.entry_path(&key);
        if let Some(hit) = self.read(&path) {
            return Ok(LlmExchange {
                request: request.clone(),
                response_text: hit.response_text,
                prompt_tokens: hit.prompt_tokens,
                completion_tokens: hit.completion_tokens,
                cache_key: key,
                source: Source::Cache,
                latency_ms: 0,
            });
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let exchange = self.inner.complete(request)?;
        if let Err(e) = self.write(&path, &exchange) {
            warn!(path = %path.display(), error = %e, "failed to write cache entry");
        }
        Ok(exchange)
    }

    fn order_sensitive(&self) -> bool {
        self.inner.order_sensitive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ModelConfig, ReplayEntry, ReplayGateway, Tag};

    #[test]
    fn second_identical_request_is_a_hit() {
        let dir = tempfile::tempdir().unwrap();
        let gw = CachedGateway::new(
            ReplayGateway::new([ReplayEntry::new(Tag::Exec, "reply").with_tokens(12, 3)]),
            dir.path(),
        )
        .unwrap();
        let req = ModelConfig::default().prompt(Tag::Exec, "question");
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert_eq!(first.source, Source::Replay);
        assert_eq!(second.source, Source::Cache);
        assert_eq!(first.response_text, second.response_text);
        assert_eq!(second.prompt_tokens, 12);
        assert_eq!(gw.misses(), 1);
    }

    #[test]
    fn cache_survives_a_new_gateway_instance() {
        let dir = tempfile::tempdir().unwrap();
        let req = ModelConfig::default().prompt(Tag::Plan, "p");
        {
            let gw = CachedGateway::new(
                ReplayGateway::new([ReplayEntry::new(Tag::Plan, "1. a = SUMMARIZE(CTX)")]),
                dir.path(),
            )
            .unwrap();
            gw.complete(&req).unwrap();
        }
        // empty script: any miss would fail
        let gw = CachedGateway::new(ReplayGateway::new([]), dir.path()).unwrap();
        assert_eq!(gw.complete(&req).unwrap().source, Source::Cache);
        assert_eq!(gw.misses(), 0);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let req = ModelConfig::default().prompt(Tag::Plan, "p");
        fs::write(dir.path().join(format!("{}.json", req.cache_key())), "{oops").unwrap();
        let gw = CachedGateway::new(
            ReplayGateway::new([ReplayEntry::new(Tag::Plan, "fresh")]),
            dir.path(),
        )
        .unwrap();
        assert_eq!(gw.complete(&req).unwrap().response_text, "fresh");
        assert_eq!(gw.complete(&req).unwrap().source, Source::Cache);
    }
}
