use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EngineError, EvolutionConfig, EvolutionTrace, Individual, Population};

pub const CHECKPOINT_FORMAT: &str = "ael-checkpoint/1";

/// Complete engine state after a generation. Together with the config it
/// is enough to continue the run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub config: EvolutionConfig,
    pub generation: usize,
    pub population: Population,
    pub best: Individual,
    pub next_id: u64,
    pub llm_calls: u64,
    pub trace: EvolutionTrace,
}

impl Checkpoint {
    pub fn file_name(generation: usize) -> String {
        format!("checkpoint-gen{generation:04}.json")
    }

    pub fn parse_file_name(path: &Path) -> Option<usize> {
        path.file_name()?
            .to_str()?
            .strip_prefix("checkpoint-gen")?
            .strip_suffix(".json")?
            .parse()
            .ok()
    }

    /// Writes through a temporary file so a crash never leaves a truncated
    /// checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let err = |e: std::io::Error| EngineError::Checkpoint(format!("{}: {e}", path.display()));
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text + "\n").map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| EngineError::Checkpoint(format!("{}: {e}", path.display())))
    }
}
