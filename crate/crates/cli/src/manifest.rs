use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use ael_core::engine::{EvolutionConfig, Individual};
use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "ael-run/1";
pub const TRACE_CSV: &str = "trace.csv";
pub const TRACE_JSON: &str = "trace.json";
pub const TRANSCRIPT: &str = "transcript.jsonl";
pub const BEST_ALGORITHM: &str = "best_algorithm.txt";
pub const CHECKPOINTS: &str = "checkpoints";

/// Where model answers come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "path", rename_all = "snake_case")]
pub enum LlmSource {
    Live,
    Mock(PathBuf),
    Replay(PathBuf),
}

impl FromStr for LlmSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "live" => Ok(LlmSource::Live),
            Some(("mock", p)) if !p.is_empty() => Ok(LlmSource::Mock(p.into())),
            Some(("replay", p)) if !p.is_empty() => Ok(LlmSource::Replay(p.into())),
            _ => Err(format!(
                "expected live, mock:PATH or replay:PATH, got {s:?}"
            )),
        }
    }
}

impl fmt::Display for LlmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmSource::Live => f.write_str("live"),
            LlmSource::Mock(p) => write!(f, "mock:{}", p.display()),
            LlmSource::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub config: EvolutionConfig,
    pub llm: LlmSource,
    pub model: String,
    /// Relative to the run directory.
    pub transcript: PathBuf,
    pub out_dir: PathBuf,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub resumed_from_generation: Option<usize>,
    pub generations_completed: usize,
    pub llm_calls: u64,
    pub best: Option<Individual>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            manifest.format == MANIFEST_FORMAT,
            "{}: unsupported manifest format {:?}",
            path.display(),
            manifest.format
        );
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&tmp, text + "\n").with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ael_core::engine::{IndividualId, Lineage};
    use ael_core::llm::CandidateProgram;
    use ael_core::tsp::ScoredParams;

    #[test]
    fn llm_source_syntax() {
        assert_eq!("live".parse(), Ok(LlmSource::Live));
        assert_eq!(
            "mock:a/b.json".parse(),
            Ok(LlmSource::Mock("a/b.json".into()))
        );
        assert_eq!(
            "replay:t.jsonl".parse(),
            Ok(LlmSource::Replay("t.jsonl".into()))
        );
        for bad in ["", "mock", "mock:", "cache:x", "live:x"] {
            assert!(bad.parse::<LlmSource>().is_err(), "{bad}");
        }
        let s = LlmSource::Mock("x.json".into());
        assert_eq!(s.to_string().parse(), Ok(s));
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            format: MANIFEST_FORMAT.into(),
            config: EvolutionConfig::default(),
            llm: LlmSource::Replay("old/transcript.jsonl".into()),
            model: "mock".into(),
            transcript: TRANSCRIPT.into(),
            out_dir: dir.path().into(),
            started_at_unix: 1,
            finished_at_unix: Some(2),
            status: RunStatus::Completed,
            error: None,
            resumed_from_generation: Some(3),
            generations_completed: 10,
            llm_calls: 123,
            best: Some(Individual {
                id: IndividualId(7),
                description: "Tuned.".into(),
                program: CandidateProgram::NativeScored(ScoredParams {
                    c1: 1.0,
                    c2: 0.1 + 0.2,
                    c3: 1e-300,
                    c4: 0.25,
                    tau: f64::INFINITY,
                }),
                fitness: Some(ael_core::engine::Fitness::Gap(0.07123456789012345)),
                lineage: Lineage::init(),
            }),
        };
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn corrupt_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(RunManifest::load(dir.path()).is_err());
        std::fs::write(dir.path().join(MANIFEST_FILE), "{\"format\": 3").unwrap();
        assert!(RunManifest::load(dir.path()).is_err());
    }
}
