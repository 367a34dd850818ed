use std::path::{Path, PathBuf};

use ael_core::engine::{
    latest_checkpoint, Checkpoint, EngineError, Evolution, EvolutionConfig, Individual,
};
use ael_core::llm::{
    read_transcript, HttpLlm, LlmOperator, MockScript, ReplayLlm, ScriptedLlm, TranscriptWriter,
};
use anyhow::{anyhow, Context};
use clap::Args;

use crate::exit::{Exit, WithCode, CONFIG, IO, RUN_FAILED};
use crate::manifest::{
    now_unix, LlmSource, RunManifest, RunStatus, BEST_ALGORITHM, CHECKPOINTS, MANIFEST_FORMAT,
    TRACE_CSV, TRACE_JSON, TRANSCRIPT,
};

#[derive(Args)]
pub struct RunArgs {
    /// Evolution config (JSON, field names as in the config struct).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `rng_seed` from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `generations` from the config file.
    #[arg(long)]
    pub generations: Option<usize>,
    /// `live`, `mock:SCRIPT.json` or `replay:TRANSCRIPT.jsonl`.
    #[arg(long, default_value = "live")]
    pub llm: LlmSource,
    #[arg(long, default_value = "ael-run")]
    pub out: PathBuf,
    /// Candidates evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Continue from the newest checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

fn load_config(args: &RunArgs) -> Result<EvolutionConfig, Exit> {
    let mut config = EvolutionConfig::load(&args.config).code(CONFIG)?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    if let Some(g) = args.generations {
        config.generations = g;
    }
    config.validate().code(CONFIG)?;
    Ok(config)
}

fn build_llm(source: &LlmSource, config: &EvolutionConfig) -> Result<Box<dyn LlmOperator>, Exit> {
    Ok(match source {
        LlmSource::Live => Box::new(HttpLlm::from_env(config.llm.clone()).code(RUN_FAILED)?),
        LlmSource::Mock(path) => Box::new(ScriptedLlm::from_script(
            MockScript::load(path).code(CONFIG)?,
        )),
        LlmSource::Replay(path) => Box::new(ReplayLlm::from_file(path).code(CONFIG)?),
    })
}

fn engine_code(e: &EngineError) -> u8 {
    match e {
        EngineError::Config(_) | EngineError::Prompt(_) | EngineError::Checkpoint(_) => CONFIG,
        EngineError::InitializationExhausted { .. } | EngineError::Llm(_) => RUN_FAILED,
        EngineError::Evaluator(_) => IO,
    }
}

/// The best individual in the same shape a model answer has, so the file
/// can be fed back to `ael evaluate`.
pub fn algorithm_text(best: &Individual) -> String {
    format!(
        "Algorithm: {}\n\n```{}\n{}\n```\n",
        best.description,
        best.program.fence_language(),
        best.program.canonical_text().trim_end()
    )
}

/// Drops transcript lines past `keep`; they belong to work the checkpoint
/// does not cover and will be asked for again.
fn truncate_transcript(path: &Path, keep: u64) -> anyhow::Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let records = read_transcript(path)?;
    let keep = (keep as usize).min(records.len());
    let mut text = String::new();
    for r in &records[..keep] {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("rewriting {}", path.display()))
}

pub fn cmd_run(args: RunArgs) -> Result<(), Exit> {
    let config = load_config(&args)?;
    let out = &args.out;
    let checkpoints = out.join(CHECKPOINTS);
    let transcript_path = out.join(TRANSCRIPT);

    let resume_from = if args.resume {
        let path = latest_checkpoint(&checkpoints).ok_or_else(|| {
            Exit::new(
                CONFIG,
                anyhow!("no checkpoint to resume in {}", checkpoints.display()),
            )
        })?;
        Some(Checkpoint::load(&path).code(CONFIG)?)
    } else {
        if out.join(crate::manifest::MANIFEST_FILE).exists()
            || latest_checkpoint(&checkpoints).is_some()
        {
            return Err(Exit::new(
                CONFIG,
                anyhow!(
                    "{} already holds a run; pass --resume or pick another --out",
                    out.display()
                ),
            ));
        }
        None
    };

    let llm = build_llm(&args.llm, &config)?;
    let evaluator = config.build_evaluator().code(CONFIG)?;
    std::fs::create_dir_all(&checkpoints)
        .with_context(|| format!("creating {}", checkpoints.display()))
        .code(IO)?;
    if let Some(cp) = &resume_from {
        truncate_transcript(&transcript_path, cp.llm_calls).code(IO)?;
    } else if transcript_path.exists() {
        std::fs::remove_file(&transcript_path).code(IO)?;
    }

    let transcript = TranscriptWriter::create(&transcript_path).code(IO)?;

    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        config: config.clone(),
        llm: args.llm.clone(),
        model: llm.model().to_string(),
        transcript: TRANSCRIPT.into(),
        out_dir: out.clone(),
        started_at_unix: now_unix(),
        finished_at_unix: None,
        status: RunStatus::Running,
        error: None,
        resumed_from_generation: resume_from.as_ref().map(|c| c.generation),
        generations_completed: 0,
        llm_calls: 0,
        best: None,
    };
    manifest.save(out).code(IO)?;

    let evolution = match resume_from {
        Some(cp) => Evolution::resume(config.clone(), llm.as_ref(), &evaluator, cp),
        None => Evolution::new(config.clone(), llm.as_ref(), &evaluator),
    };
    let result = evolution
        .and_then(|e| e.with_threads(args.parallel))
        .map(|e| {
            e.with_transcript(&transcript)
                .with_checkpoints(&checkpoints)
        })
        .and_then(|e| e.run());

    let result = match result {
        Ok(r) => r,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.finished_at_unix = Some(now_unix());
            if let Some(path) = latest_checkpoint(&checkpoints) {
                if let Ok(cp) = Checkpoint::load(&path) {
                    manifest.generations_completed = cp.generation;
                    manifest.llm_calls = cp.llm_calls;
                    manifest.best = Some(cp.best);
                }
            }
            let _ = manifest.save(out);
            return Err(Exit::new(engine_code(&e), e));
        }
    };

    let write = |name: &str, text: String| {
        let path = out.join(name);
        std::fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .code(IO)
    };
    write(TRACE_CSV, result.trace.to_csv())?;
    write(
        TRACE_JSON,
        serde_json::to_string_pretty(&result.trace).code(IO)? + "\n",
    )?;
    write(BEST_ALGORITHM, algorithm_text(&result.best))?;

    manifest.status = RunStatus::Completed;
    manifest.finished_at_unix = Some(now_unix());
    manifest.generations_completed = result.trace.generations.len();
    manifest.llm_calls = result.llm_calls;
    manifest.best = Some(result.best.clone());
    manifest.save(out).code(IO)?;

    let gap = result
        .best
        .gap()
        .map_or("failed".into(), |g| format!("{:.2}%", 100.0 * g));
    println!(
        "best {} gap {gap} after {} generations, {} LLM calls",
        result.best.id, manifest.generations_completed, result.llm_calls
    );
    println!("  {}", result.best.description);
    println!("artifacts in {}", out.display());
    Ok(())
}
