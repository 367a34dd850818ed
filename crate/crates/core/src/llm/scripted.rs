use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{read_transcript, LlmError, LlmExchange, LlmOperator};
use crate::prompt::PromptBundle;

/// On-disk form of a mock script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default = "default_mock_model")]
    pub model: String,
    /// Start over from the first response instead of failing when the
    /// script runs out.
    #[serde(default)]
    pub cycle: bool,
    pub responses: Vec<String>,
}

fn default_mock_model() -> String {
    "mock".into()
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| LlmError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }
}

/// Answers prompts with canned responses in order, ignoring prompt content.
pub struct ScriptedLlm {
    model: String,
    responses: Vec<String>,
    cycle: bool,
    cursor: Mutex<usize>,
}

impl ScriptedLlm {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedLlm {
            model: default_mock_model(),
            responses: responses.into_iter().map(Into::into).collect(),
            cycle: false,
            cursor: Mutex::new(0),
        }
    }

    pub fn cycling(mut self) -> Self {
        self.cycle = true;
        self
    }

    pub fn from_script(script: MockScript) -> Self {
        ScriptedLlm {
            model: script.model,
            responses: script.responses,
            cycle: script.cycle,
            cursor: Mutex::new(0),
        }
    }

    /// Number of responses handed out so far.
    pub fn served(&self) -> usize {
        *self.cursor.lock().expect("script cursor poisoned")
    }
}

impl LlmOperator for ScriptedLlm {
    fn chat(&self, prompt: &PromptBundle) -> Result<LlmExchange, LlmError> {
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        let idx = *cursor;
        let response = if self.cycle && !self.responses.is_empty() {
            &self.responses[idx % self.responses.len()]
        } else {
            self.responses
                .get(idx)
                .ok_or(LlmError::ScriptExhausted { served: idx })?
        };
        *cursor += 1;
        Ok(LlmExchange {
            id: 0,
            prompt: prompt.clone(),
            raw_response: response.clone(),
            model: self.model.clone(),
            latency_ms: 0,
            attempt: 1,
        })
    }

    fn fast_forward(&self, calls: u64) -> Result<(), LlmError> {
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        *cursor += calls as usize;
        Ok(())
    }

    fn model(&self) -> &str {
        &self.model
    }
}

/// Replays a recorded transcript. Each incoming prompt must match the
/// recorded one byte for byte, otherwise the run has diverged.
pub struct ReplayLlm {
    model: String,
    records: Vec<LlmExchange>,
    cursor: Mutex<usize>,
}

impl ReplayLlm {
    pub fn new(records: Vec<LlmExchange>) -> Self {
        let model = records
            .first()
            .map(|r| r.model.clone())
            .unwrap_or_else(|| "replay".into());
        ReplayLlm {
            model,
            records,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(read_transcript(path)?))
    }
}

impl LlmOperator for ReplayLlm {
    fn chat(&self, prompt: &PromptBundle) -> Result<LlmExchange, LlmError> {
        let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
        let idx = *cursor;
        let rec = self
            .records
            .get(idx)
            .ok_or(LlmError::ScriptExhausted { served: idx })?;
        if rec.prompt != *prompt {
            return Err(LlmError::ReplayDivergence {
                index: idx,
                detail: format!(
                    "recorded {} prompt differs from the {} prompt requested",
                    rec.prompt.operator, prompt.operator
                ),
            });
        }
        *cursor += 1;
        Ok(rec.clone())
    }

    fn fast_forward(&self, calls: u64) -> Result<(), LlmError> {
        *self.cursor.lock().expect("replay cursor poisoned") += calls as usize;
        Ok(())
    }

    fn model(&self) -> &str {
        &self.model
    }
}
