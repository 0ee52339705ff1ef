use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, LlmError, Role};

pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
const BODY_EXCERPT: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    /// Model from `LLM_MODEL` (default "gpt-4o"), key from `LLM_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: std::env::var("LLM_MODEL").unwrap_or_else(|_| "gpt-4o".to_string()),
            temperature: 0.0,
            api_key: std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(DEFAULT_TIMEOUT_SECS),
        }
    }
}

/// Chat-completions client.
pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: Role,
    content: &'a str,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

fn excerpt(s: &str) -> String {
    s.chars().take(BODY_EXCERPT).collect()
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            cfg,
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = Request {
            model: &self.cfg.model,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role,
                    content: &m.content,
                })
                .collect(),
            temperature: self.cfg.temperature,
        };
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| LlmError::Backend(format!("request to {} failed: {e}", self.cfg.endpoint)))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Backend(format!("reading response body: {e}")))?;
        if !status.is_success() {
            return Err(LlmError::Backend(format!("HTTP {status}: {}", excerpt(&text))));
        }
        let parsed: Response = serde_json::from_str(&text)
            .map_err(|e| LlmError::Backend(format!("unexpected response ({e}): {}", excerpt(&text))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Backend(format!("response has no choices: {}", excerpt(&text))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves one HTTP response and hands back the raw request it received.
    fn stub(status: &str, body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let status = status.to_string();
        let handle = thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(sock.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut received = vec![0; len];
            reader.read_exact(&mut received).unwrap();
            write!(
                sock,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            head + &String::from_utf8(received).unwrap()
        });
        (url, handle)
    }

    fn cfg(url: String) -> HttpConfig {
        HttpConfig {
            endpoint: url,
            model: "test-model".into(),
            temperature: 0.0,
            api_key: Some("k-123".into()),
            timeout: Duration::from_secs(5),
        }
    }

    #[test]
    fn returns_first_choice_text() {
        let canned = r#"{"choices":[{"message":{"role":"assistant","content":"Action: Stop()"}}]}"#;
        let (url, h) = stub("200 OK", canned);
        let mut b = HttpBackend::new(cfg(url));
        let out = b.complete(&[ChatMessage::user("hello")]).unwrap();
        assert_eq!(out, "Action: Stop()");
        let req = h.join().unwrap();
        let (head, body) = req.split_once("\r\n\r\n").unwrap();
        assert!(head.to_ascii_lowercase().contains("authorization: bearer k-123"), "{head}");
        let sent: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(
            sent,
            serde_json::json!({
                "model": "test-model",
                "messages": [{"role": "user", "content": "hello"}],
                "temperature": 0.0
            })
        );
    }

    #[test]
    fn non_2xx_carries_body_excerpt() {
        let (url, h) = stub("429 Too Many Requests", r#"{"error":"rate limited"}"#);
        let mut b = HttpBackend::new(cfg(url));
        let err = b.complete(&[ChatMessage::user("x")]).unwrap_err();
        h.join().unwrap();
        assert_eq!(err.kind(), "BackendError");
        assert!(err.to_string().contains("rate limited"), "{err}");
    }

    #[test]
    fn connection_refused_is_a_backend_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut b = HttpBackend::new(cfg(format!("http://127.0.0.1:{port}/")));
        assert_eq!(b.complete(&[ChatMessage::user("x")]).unwrap_err().kind(), "BackendError");
    }
}
