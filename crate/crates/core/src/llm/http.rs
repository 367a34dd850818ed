use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{LlmError, LlmExchange, LlmOperator, LlmSettings, RetryPolicy};
use crate::prompt::PromptBundle;

/// Chat-completions client for OpenAI-compatible servers.
pub struct HttpLlm {
    settings: LlmSettings,
    api_key: String,
    endpoint: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

enum Failure {
    Transient(String),
    Fatal(LlmError),
}

impl HttpLlm {
    /// Reads the API key from the environment variable named in `settings`.
    pub fn from_env(settings: LlmSettings) -> Result<Self, LlmError> {
        let key = std::env::var(&settings.api_key_env).map_err(|_| {
            LlmError::Auth(format!(
                "environment variable {} is not set",
                settings.api_key_env
            ))
        })?;
        Ok(Self::new(settings, key))
    }

    pub fn new(settings: LlmSettings, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(
                settings.request_timeout_secs.max(1),
            )))
            .build()
            .new_agent();
        let endpoint = format!(
            "{}/v1/chat/completions",
            settings.base_url.trim_end_matches('/')
        );
        HttpLlm {
            retry: settings.retry_policy(),
            settings,
            api_key,
            endpoint,
            agent,
        }
    }

    fn attempt(&self, body: &Value) -> Result<String, Failure> {
        let mut resp = match self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
        {
            Ok(r) => r,
            Err(e) => return Err(Failure::Transient(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Transient(format!("reading body: {e}")))?;
        match status {
            200..=299 => extract_content(&text).map_err(Failure::Fatal),
            401 | 403 => Err(Failure::Fatal(LlmError::Auth(format!(
                "HTTP {status}: {}",
                snippet(&text)
            )))),
            408 | 409 | 429 | 500..=599 => Err(Failure::Transient(format!(
                "HTTP {status}: {}",
                snippet(&text)
            ))),
            _ => Err(Failure::Fatal(LlmError::Http {
                status,
                body: snippet(&text),
            })),
        }
    }
}

fn extract_content(text: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(text).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| {
            LlmError::BadResponse(format!(
                "no choices[0].message.content in {}",
                snippet(text)
            ))
        })
}

fn snippet(text: &str) -> String {
    const MAX: usize = 300;
    match text.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &text[..i]),
        None => text.to_string(),
    }
}

impl LlmOperator for HttpLlm {
    fn chat(&self, prompt: &PromptBundle) -> Result<LlmExchange, LlmError> {
        let body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.settings.temperature.for_operator(prompt.operator),
        });
        let total = self.retry.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=total {
            let started = Instant::now();
            match self.attempt(&body) {
                Ok(content) => {
                    return Ok(LlmExchange {
                        id: 0,
                        prompt: prompt.clone(),
                        raw_response: content,
                        model: self.settings.model.clone(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => {
                    log::warn!(
                        "{} attempt {attempt}/{total} failed: {msg}",
                        prompt.operator
                    );
                    last = msg;
                    if attempt < total {
                        std::thread::sleep(self.retry.delay(attempt - 1));
                    }
                }
            }
        }
        Err(LlmError::Unavailable {
            attempts: total,
            last,
        })
    }

    fn model(&self) -> &str {
        &self.settings.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), "hi");
        assert!(matches!(
            extract_content("{}"),
            Err(LlmError::BadResponse(_))
        ));
        assert!(matches!(
            extract_content("<html>"),
            Err(LlmError::BadResponse(_))
        ));
    }

    #[test]
    fn snippet_truncates_on_char_boundary() {
        let long = "é".repeat(400);
        let s = snippet(&long);
        assert!(s.ends_with("..."));
        assert_eq!(s.chars().count(), 303);
    }
}
