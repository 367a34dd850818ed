//! Language-model access: the operator trait the engine talks to, a live
//! OpenAI-compatible transport, deterministic scripted and replay
//! operators, transcripts, and the response parser.

mod http;
mod parse;
mod program;
mod scripted;

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::HttpLlm;
pub use parse::{parse_individual, truncate_sentences, ParseError, MAX_DESCRIPTION_SENTENCES};
pub use program::{CandidateProgram, GREEDY_KEYWORD, SCORED_KEYWORD};
pub use scripted::{MockScript, ReplayLlm, ScriptedLlm};

use crate::prompt::{Operator, PromptBundle};

/// Environment variable holding the bearer token for live mode.
pub const API_KEY_ENV: &str = "AEL_API_KEY";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("model endpoint unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("endpoint answered HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("mock script exhausted after {served} response(s)")]
    ScriptExhausted { served: usize },
    #[error("replay diverged at exchange {index}: {detail}")]
    ReplayDivergence { index: usize, detail: String },
    #[error("{0}")]
    Io(String),
}

/// One prompt/response round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    /// Sequence number within a run, assigned by the engine.
    pub id: u64,
    pub prompt: PromptBundle,
    pub raw_response: String,
    pub model: String,
    pub latency_ms: u64,
    /// 1-based count of transport attempts this exchange needed.
    pub attempt: u32,
}

/// The variation operator backend.
pub trait LlmOperator: Send + Sync {
    fn chat(&self, prompt: &PromptBundle) -> Result<LlmExchange, LlmError>;

    /// Skips the next `calls` responses; used when resuming a run so that
    /// scripted backends pick up where the checkpoint left off.
    fn fast_forward(&self, calls: u64) -> Result<(), LlmError> {
        let _ = calls;
        Ok(())
    }

    fn model(&self) -> &str;
}

impl<T: LlmOperator + ?Sized> LlmOperator for Box<T> {
    fn chat(&self, prompt: &PromptBundle) -> Result<LlmExchange, LlmError> {
        (**self).chat(prompt)
    }

    fn fast_forward(&self, calls: u64) -> Result<(), LlmError> {
        (**self).fast_forward(calls)
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorTemperatures {
    pub init: f64,
    pub crossover: f64,
    pub mutation: f64,
}

impl Default for OperatorTemperatures {
    fn default() -> Self {
        OperatorTemperatures {
            init: 1.0,
            crossover: 1.0,
            mutation: 1.0,
        }
    }
}

impl OperatorTemperatures {
    pub fn for_operator(&self, op: Operator) -> f64 {
        match op {
            Operator::Init => self.init,
            Operator::Crossover => self.crossover,
            Operator::Mutation => self.mutation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub model: String,
    /// Base URL of an OpenAI-compatible server; `/v1/chat/completions` is
    /// appended.
    pub base_url: String,
    pub api_key_env: String,
    pub temperature: OperatorTemperatures,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub request_timeout_secs: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            model: "gpt-3.5-turbo".into(),
            base_url: "https://api.openai.com".into(),
            api_key_env: API_KEY_ENV.into(),
            temperature: OperatorTemperatures::default(),
            max_retries: 3,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            request_timeout_secs: 120,
        }
    }
}

impl LlmSettings {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base: Duration::from_millis(self.backoff_base_ms),
            max: Duration::from_millis(self.backoff_max_ms.max(self.backoff_base_ms)),
        }
    }
}

/// Exponential backoff: retry `k` (0-based) waits `min(base·2^k, max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub max: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.max)
    }

    pub fn delays(&self) -> impl Iterator<Item = Duration> + '_ {
        (0..self.max_retries).map(|k| self.delay(k))
    }
}

/// Append-only JSON-lines log of exchanges.
pub struct TranscriptWriter {
    out: Mutex<BufWriter<File>>,
}

impl TranscriptWriter {
    pub fn create(path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(TranscriptWriter {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn record(&self, exchange: &LlmExchange) -> Result<(), LlmError> {
        let line = serde_json::to_string(exchange).map_err(|e| LlmError::Io(e.to_string()))?;
        let mut out = self.out.lock().expect("transcript lock poisoned");
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|e| LlmError::Io(e.to_string()))
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<LlmExchange>, LlmError> {
    let file = File::open(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| LlmError::Io(format!("{}:{}: {e}", path.display(), lineno + 1)))?,
        );
    }
    Ok(records)
}
