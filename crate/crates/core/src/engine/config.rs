use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::evaluator::{
    EvaluationBatch, EvaluationLimits, EvaluatorError, GuestCommand, TspEvaluator,
};
use crate::llm::LlmSettings;
use crate::tsp::DEFAULT_RESTARTS;

/// Every knob of one evolution run. Field names double as the config-file
/// keys; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub parents_per_crossover: usize,
    pub offspring_per_crossover: usize,
    pub rng_seed: u64,
    pub evaluation_instance_count: usize,
    pub evaluation_instance_size: usize,
    /// Seed of the fitness batch; defaults to `rng_seed`.
    pub instance_seed: Option<u64>,
    pub baseline_restarts: usize,
    pub limits: EvaluationLimits,
    /// Initialization gives up on the model after this many attempts per
    /// population slot and fills the rest with greedy.
    pub init_attempts_per_slot: usize,
    pub llm: LlmSettings,
    /// Command line of the guest runtime for source candidates.
    pub guest_command: Option<Vec<String>>,
    pub templates_dir: Option<PathBuf>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 10,
            generations: 10,
            crossover_prob: 1.0,
            mutation_prob: 0.2,
            parents_per_crossover: 2,
            offspring_per_crossover: 1,
            rng_seed: 2024,
            evaluation_instance_count: 64,
            evaluation_instance_size: 50,
            instance_seed: None,
            baseline_restarts: DEFAULT_RESTARTS,
            limits: EvaluationLimits::default(),
            init_attempts_per_slot: 3,
            llm: LlmSettings::default(),
            guest_command: None,
            templates_dir: None,
        }
    }
}

impl EvolutionConfig {
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let config: EvolutionConfig = serde_json::from_str(&text)
            .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |msg: String| Err(EngineError::Config(msg));
        if self.population_size == 0 {
            return fail("population_size must be positive".into());
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.parents_per_crossover == 0 || self.parents_per_crossover > self.population_size {
            return fail(format!(
                "parents_per_crossover must be between 1 and population_size ({}), got {}",
                self.population_size, self.parents_per_crossover
            ));
        }
        if self.offspring_per_crossover == 0 {
            return fail("offspring_per_crossover must be positive".into());
        }
        if self.evaluation_instance_count == 0 {
            return fail("evaluation_instance_count must be positive".into());
        }
        if self.evaluation_instance_size < 2 {
            return fail("evaluation_instance_size must be at least 2".into());
        }
        if self.limits.start_node >= self.evaluation_instance_size {
            return fail(format!(
                "limits.start_node {} is outside instances of size {}",
                self.limits.start_node, self.evaluation_instance_size
            ));
        }
        if !(self.limits.batch_timeout_secs.is_finite() && self.limits.batch_timeout_secs > 0.0) {
            return fail("limits.batch_timeout_secs must be positive".into());
        }
        if self.baseline_restarts == 0 {
            return fail("baseline_restarts must be positive".into());
        }
        if self.init_attempts_per_slot == 0 {
            return fail("init_attempts_per_slot must be positive".into());
        }
        if let Some(argv) = &self.guest_command {
            if argv.is_empty() {
                return fail("guest_command must name a program".into());
            }
        }
        let t = &self.llm.temperature;
        if [t.init, t.crossover, t.mutation]
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
        {
            return fail("llm temperatures must be finite and nonnegative".into());
        }
        Ok(())
    }

    pub fn instance_seed(&self) -> u64 {
        self.instance_seed.unwrap_or(self.rng_seed)
    }

    /// The evaluator this run uses: one fixed batch with 2-opt baselines.
    pub fn build_evaluator(&self) -> Result<TspEvaluator, EvaluatorError> {
        let batch = EvaluationBatch::generate(
            self.evaluation_instance_size,
            self.evaluation_instance_count,
            self.instance_seed(),
            self.baseline_restarts,
        )?;
        let mut evaluator = TspEvaluator::new(batch, self.limits);
        if let Some(guest) = self
            .guest_command
            .as_deref()
            .and_then(GuestCommand::from_argv)
        {
            evaluator = evaluator.with_guest(guest);
        }
        Ok(evaluator)
    }
}

/// Hex SHA-256 of the config's canonical JSON.
pub fn config_hash(config: &EvolutionConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config always serializes");
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
