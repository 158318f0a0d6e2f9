use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;
use tracing::{debug, warn};

use super::{GatewayError, LlmExchange, LlmGateway, LlmRequest, Source, TokenBucket};

/// Environment variable holding the bearer token for live calls.
pub const API_KEY_ENV: &str = "PEARL_API_KEY";

const MAX_RETRIES: u32 = 5;

#[derive(Debug, Clone)]
pub struct OpenAiSettings {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub rpm_limit: u32,
    pub timeout: Duration,
    /// Delay before the first retry; doubled on each later one.
    pub backoff_base: Duration,
}

impl OpenAiSettings {
    pub fn new(endpoint: impl Into<String>) -> Self {
        OpenAiSettings {
            endpoint: endpoint.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            rpm_limit: 60,
            timeout: Duration::from_secs(300),
            backoff_base: Duration::from_secs(2),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Blocking client for OpenAI-compatible chat-completion endpoints.
pub struct OpenAiGateway {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    limiter: TokenBucket,
    backoff_base: Duration,
}

impl OpenAiGateway {
    pub fn new(settings: OpenAiSettings) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(settings.timeout))
            .build()
            .into();
        let url = format!("{}/chat/completions", settings.endpoint.trim_end_matches('/'));
        let rpm = settings.rpm_limit.max(1);
        OpenAiGateway {
            agent,
            url,
            api_key: settings.api_key,
            limiter: TokenBucket::new(rpm, rpm.min(10)),
            backoff_base: settings.backoff_base,
        }
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<(u16, String), GatewayError> {
        self.limiter.acquire();
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        Ok((status, text))
    }
}

fn parse_response(text: &str) -> Result<(String, u64, u64), GatewayError> {
    let parsed: ChatResponse =
        serde_json::from_str(text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| GatewayError::MalformedResponse("no message content in choices".into()))?;
    let (p, c) = parsed
        .usage
        .map(|u| (u.prompt_tokens, u.completion_tokens))
        .unwrap_or((0, 0));
    Ok((content, p, c))
}

impl LlmGateway for OpenAiGateway {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError> {
        request.validate()?;
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_output_tokens,
        });
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            let (status, text) = self.send_once(&body)?;
            match status {
                200..=299 => {
                    let (content, prompt_tokens, completion_tokens) = parse_response(&text)?;
                    return Ok(LlmExchange {
                        request: request.clone(),
                        response_text: content,
                        prompt_tokens,
                        completion_tokens,
                        cache_key: request.cache_key(),
                        source: Source::Live,
                        latency_ms: started.elapsed().as_millis() as u64,
                    });
                }
                429 => {
                    if attempt >= MAX_RETRIES {
                        return Err(GatewayError::RateLimited {
                            attempts: attempt + 1,
                        });
                    }
                    let wait = self.backoff_base * 2u32.pow(attempt);
                    warn!(attempt, ?wait, tag = %request.tag, "rate limited, backing off");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                400 if text.contains("context_length_exceeded") => {
                    return Err(GatewayError::ContextOverflow(text));
                }
                _ => {
                    debug!(status, "provider error");
                    return Err(GatewayError::HttpStatus { status, body: text });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ModelConfig, Tag};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves the given (status, body) pairs, one per connection, and keeps
    /// the request bodies it saw.
    fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = Arc::clone(&seen);
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen2.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
                stream.flush().unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    fn ok_body(text: &str) -> String {
        json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 21, "completion_tokens": 4}
        })
        .to_string()
    }

    fn gateway(endpoint: String) -> OpenAiGateway {
        let mut s = OpenAiSettings::new(endpoint);
        s.api_key = Some("test-key".into());
        s.rpm_limit = 6000;
        s.backoff_base = Duration::from_millis(5);
        s.timeout = Duration::from_secs(10);
        OpenAiGateway::new(s)
    }

    #[test]
    fn successful_call_reads_usage() {
        let (url, seen) = mock_server(vec![(200, ok_body("B"))]);
        let gw = gateway(url);
        let ex = gw.complete(&ModelConfig::default().prompt(Tag::Map, "pick")).unwrap();
        assert_eq!(ex.response_text, "B");
        assert_eq!((ex.prompt_tokens, ex.completion_tokens), (21, 4));
        assert_eq!(ex.source, Source::Live);
        let sent: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["model"], "gpt-4");
        assert_eq!(sent["max_tokens"], 8);
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], "pick");
    }

    #[test]
    fn retries_on_429_then_succeeds() {
        let (url, seen) = mock_server(vec![
            (429, "{}".into()),
            (429, "{}".into()),
            (200, ok_body("ok")),
        ]);
        let ex = gateway(url).complete(&ModelConfig::default().prompt(Tag::Exec, "x")).unwrap();
        assert_eq!(ex.response_text, "ok");
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn gives_up_after_five_retries() {
        let (url, _) = mock_server(vec![(429, "{}".into()); 6]);
        let err = gateway(url)
            .complete(&ModelConfig::default().prompt(Tag::Exec, "x"))
            .unwrap_err();
        assert_eq!(err, GatewayError::RateLimited { attempts: 6 });
    }

    #[test]
    fn status_errors_are_classified() {
        let (url, _) = mock_server(vec![
            (500, "boom".into()),
            (400, r#"{"error":{"code":"context_length_exceeded"}}"#.into()),
            (200, "not json".into()),
        ]);
        let gw = gateway(url);
        let req = ModelConfig::default().prompt(Tag::Exec, "x");
        assert!(matches!(gw.complete(&req), Err(GatewayError::HttpStatus { status: 500, .. })));
        assert!(matches!(gw.complete(&req), Err(GatewayError::ContextOverflow(_))));
        assert!(matches!(gw.complete(&req), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn connection_refused_is_network_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = gateway(format!("http://{addr}"))
            .complete(&ModelConfig::default().prompt(Tag::Exec, "x"))
            .unwrap_err();
        assert_eq!(err.kind(), "network");
    }
}
