//! Text-generation back ends for future-reasoning text.

use std::time::Duration;

use forge_core::convbuilder::{Capability, TemplateClient, TextGenClient, TextGenError};
use serde_json::{json, Value};

use crate::config::{TextGenConfig, TextGenKind};
use crate::error::{CliError, CliResult};

pub const TOKEN_ENV: &str = "FORGE_TEXTGEN_TOKEN";

/// Chat-completions client (`POST {url}` with `messages`, reply in
/// `choices[0].message.content`). Retries transport errors, 429 and 5xx.
pub struct HttpClient {
    agent: ureq::Agent,
    url: String,
    model: Option<String>,
    token: Option<String>,
    max_retries: u32,
}

impl HttpClient {
    pub fn new(cfg: &TextGenConfig, token: Option<String>) -> CliResult<Self> {
        let url = cfg.url.clone().filter(|u| !u.trim().is_empty()).ok_or_else(|| CliError::input("textgen url missing"))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { agent, url, model: cfg.model.clone(), token, max_retries: cfg.max_retries })
    }

    fn attempt(&self, prompt: &str) -> Result<String, TextGenError> {
        let mut body = json!({
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        if let Some(m) = &self.model {
            body["model"] = json!(m);
        }
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| TextGenError { message: e.to_string(), retriable: true })?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retriable = status == 429 || status >= 500;
            return Err(TextGenError { message: format!("http status {status}"), retriable });
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TextGenError { message: format!("unreadable reply: {e}"), retriable: false })?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TextGenError { message: "reply lacks choices[0].message.content".into(), retriable: false })
    }
}

impl TextGenClient for HttpClient {
    fn generate(&self, prompt: &str) -> Result<String, TextGenError> {
        let mut last = None;
        for attempt in 0..=self.max_retries {
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.retriable => {
                    log::warn!("text generation attempt {} failed: {}", attempt + 1, e.message);
                    std::thread::sleep(Duration::from_millis(200 * (1 << attempt.min(5))));
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn capability(&self) -> Capability {
        Capability::External
    }
}

pub fn make_client(cfg: &TextGenConfig) -> CliResult<Box<dyn TextGenClient>> {
    match cfg.kind {
        TextGenKind::Template => Ok(Box::new(TemplateClient)),
        TextGenKind::Http => Ok(Box::new(HttpClient::new(cfg, std::env::var(TOKEN_ENV).ok())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves the given (status, body) replies in order, one per connection.
    fn serve(replies: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
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
                let mut payload = vec![0; len];
                reader.read_exact(&mut payload).unwrap();
                seen.push(head + &String::from_utf8(payload).unwrap());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        (url, handle)
    }

    fn config(url: String) -> TextGenConfig {
        TextGenConfig { kind: TextGenKind::Http, url: Some(url), model: Some("m".into()), timeout_secs: 5, max_retries: 2 }
    }

    #[test]
    fn retries_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"It will turn left."}}]}"#;
        let (url, handle) = serve(vec![(503, "{}"), (200, ok)]);
        let client = HttpClient::new(&config(url), Some("secret".into())).unwrap();
        assert_eq!(client.generate("prompt text").unwrap(), "It will turn left.");
        let seen = handle.join().unwrap();
        assert_eq!(seen.len(), 2);
        assert!(seen[1].to_ascii_lowercase().contains("authorization: bearer secret"));
        assert!(seen[1].contains("prompt text"));
    }

    #[test]
    fn client_errors_are_final() {
        let (url, handle) = serve(vec![(400, "{}")]);
        let client = HttpClient::new(&config(url), None).unwrap();
        let err = client.generate("p").unwrap_err();
        assert!(!err.retriable);
        assert_eq!(handle.join().unwrap().len(), 1);
    }
}
