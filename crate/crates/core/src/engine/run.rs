use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    config_hash, manage_population, select_parents, Checkpoint, EngineError, EvolutionConfig,
    Fitness, Individual, IndividualId, Lineage, Population, CHECKPOINT_FORMAT,
};
use crate::evaluator::{FitnessEvaluator, FitnessReport};
use crate::llm::{parse_individual, CandidateProgram, LlmExchange, LlmOperator, TranscriptWriter};
use crate::prompt::{Operator, PromptBundle, PromptForge, TaskSpec, TemplateSet};

const GREEDY_DESCRIPTION: &str = "Always move to the nearest unvisited node.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CreationOutcome {
    Evaluated {
        id: IndividualId,
        fitness: Fitness,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure: Option<String>,
    },
    /// The model's answer could not be turned into a candidate.
    ParseFailed {
        stage: Operator,
        kind: String,
        message: String,
    },
}

/// One attempt at creating an individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreationRecord {
    /// Loop iteration within the generation; the attempt number during
    /// initialization.
    pub iteration: usize,
    pub operator: Operator,
    pub parents: Vec<IndividualId>,
    /// Ids of the LLM exchanges that went into this attempt.
    pub exchanges: Vec<u64>,
    /// Outcome of the mutation coin; absent during initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_coin: Option<bool>,
    pub outcome: CreationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// 0 for the initial population.
    pub generation: usize,
    pub best_gap: Option<f64>,
    pub mean_gap: Option<f64>,
    pub crossover_attempts: usize,
    pub mutation_attempts: usize,
    pub population: Vec<IndividualId>,
    pub created: Vec<CreationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub initial: GenerationRecord,
    pub generations: Vec<GenerationRecord>,
}

impl EvolutionTrace {
    /// `generation,best_gap,mean_gap`, one row per evolved generation.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("generation,best_gap,mean_gap\n");
        for g in &self.generations {
            out.push_str(&format!(
                "{},{},{}\n",
                g.generation,
                cell(g.best_gap),
                cell(g.mean_gap)
            ));
        }
        out
    }

    pub fn records(&self) -> impl Iterator<Item = &GenerationRecord> {
        std::iter::once(&self.initial).chain(&self.generations)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub best: Individual,
    pub population: Population,
    pub trace: EvolutionTrace,
    pub llm_calls: u64,
}

struct State {
    population: Population,
    best: Individual,
    next_id: u64,
    llm_calls: u64,
    generation: usize,
    trace: EvolutionTrace,
}

/// A run of the evolutionary loop.
///
/// Randomness comes from one ChaCha stream per generation, keyed by
/// `(rng_seed, generation)`, and is drawn up front for the whole
/// generation. LLM calls are issued sequentially in iteration order while
/// evaluations may run in parallel, so the outcome only depends on the
/// seed, the model's answers and the evaluator.
pub struct Evolution<'a> {
    config: EvolutionConfig,
    forge: PromptForge,
    llm: &'a dyn LlmOperator,
    evaluator: &'a dyn FitnessEvaluator,
    transcript: Option<&'a TranscriptWriter>,
    checkpoint_dir: Option<PathBuf>,
    threads: Option<rayon::ThreadPool>,
    state: Option<State>,
}

struct IterationPlan {
    parents: Vec<usize>,
    crossover: bool,
    mutation_coins: Vec<bool>,
}

impl<'a> Evolution<'a> {
    pub fn new(
        config: EvolutionConfig,
        llm: &'a dyn LlmOperator,
        evaluator: &'a dyn FitnessEvaluator,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let templates = match &config.templates_dir {
            Some(dir) => TemplateSet::from_dir(dir)?,
            None => TemplateSet::default(),
        };
        let forge = PromptForge::new(TaskSpec::tsp_next_node(), templates)?;
        Ok(Evolution {
            config,
            forge,
            llm,
            evaluator,
            transcript: None,
            checkpoint_dir: None,
            threads: None,
            state: None,
        })
    }

    /// Continues from a checkpoint written by a run with the same config.
    /// The LLM is fast-forwarded past the calls the checkpoint already
    /// consumed.
    pub fn resume(
        config: EvolutionConfig,
        llm: &'a dyn LlmOperator,
        evaluator: &'a dyn FitnessEvaluator,
        checkpoint: Checkpoint,
    ) -> Result<Self, EngineError> {
        if checkpoint.format != CHECKPOINT_FORMAT {
            return Err(EngineError::Checkpoint(format!(
                "unsupported format {:?}",
                checkpoint.format
            )));
        }
        let hash = config_hash(&config);
        if checkpoint.config_hash != hash || config_hash(&checkpoint.config) != hash {
            return Err(EngineError::Checkpoint(
                "checkpoint was written with a different config".into(),
            ));
        }
        let mut evo = Self::new(config, llm, evaluator)?;
        llm.fast_forward(checkpoint.llm_calls)?;
        evo.state = Some(State {
            population: checkpoint.population,
            best: checkpoint.best,
            next_id: checkpoint.next_id,
            llm_calls: checkpoint.llm_calls,
            generation: checkpoint.generation,
            trace: checkpoint.trace,
        });
        Ok(evo)
    }

    pub fn with_transcript(mut self, transcript: &'a TranscriptWriter) -> Self {
        self.transcript = Some(transcript);
        self
    }

    /// Writes a checkpoint into `dir` after initialization and after every
    /// generation.
    pub fn with_checkpoints(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    /// Evaluates up to `threads` candidates concurrently.
    pub fn with_threads(mut self, threads: usize) -> Result<Self, EngineError> {
        self.threads = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| EngineError::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn population(&self) -> Option<&Population> {
        self.state.as_ref().map(|s| &s.population)
    }

    pub fn generation(&self) -> Option<usize> {
        self.state.as_ref().map(|s| s.generation)
    }

    pub fn checkpoint(&self) -> Option<Checkpoint> {
        let s = self.state.as_ref()?;
        Some(Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config_hash: config_hash(&self.config),
            config: self.config.clone(),
            generation: s.generation,
            population: s.population.clone(),
            best: s.best.clone(),
            next_id: s.next_id,
            llm_calls: s.llm_calls,
            trace: s.trace.clone(),
        })
    }

    fn ask(&self, calls: &mut u64, bundle: &PromptBundle) -> Result<LlmExchange, EngineError> {
        let mut exchange = self.llm.chat(bundle)?;
        exchange.id = *calls;
        *calls += 1;
        if let Some(t) = self.transcript {
            t.record(&exchange)?;
        }
        Ok(exchange)
    }

    fn evaluate_all(&self, programs: &[&CandidateProgram]) -> Vec<FitnessReport> {
        match &self.threads {
            Some(pool) => pool.install(|| {
                programs
                    .par_iter()
                    .map(|p| self.evaluator.evaluate(p))
                    .collect()
            }),
            None => programs
                .iter()
                .map(|p| self.evaluator.evaluate(p))
                .collect(),
        }
    }

    fn parse(
        &self,
        exchange: &LlmExchange,
    ) -> Result<(String, CandidateProgram), crate::llm::ParseError> {
        parse_individual(&exchange.raw_response, self.forge.task())
    }

    /// Builds and evaluates the initial population.
    pub fn initialize(&mut self) -> Result<&Population, EngineError> {
        let n = self.config.population_size;
        let budget = n * self.config.init_attempts_per_slot;
        let mut calls = 0u64;
        let mut next_id = 0u64;
        let mut members: Vec<Individual> = Vec::with_capacity(n);
        let mut created = Vec::new();
        let mut warnings = Vec::new();
        let mut attempts = 0;
        while members.len() < n && attempts < budget {
            let wave = (n - members.len()).min(budget - attempts);
            let mut pending = Vec::new();
            for _ in 0..wave {
                let bundle = self.forge.render_init()?;
                let exchange = self.ask(&mut calls, &bundle)?;
                let outcome = match self.parse(&exchange) {
                    Ok((description, program)) => {
                        let id = IndividualId(next_id);
                        next_id += 1;
                        pending.push((
                            created.len(),
                            Individual {
                                id,
                                description,
                                program,
                                fitness: None,
                                lineage: Lineage::init(),
                            },
                        ));
                        CreationOutcome::Evaluated {
                            id,
                            fitness: Fitness::Failed,
                            failure: None,
                        }
                    }
                    Err(e) => parse_failed(Operator::Init, &e),
                };
                created.push(CreationRecord {
                    iteration: attempts,
                    operator: Operator::Init,
                    parents: Vec::new(),
                    exchanges: vec![exchange.id],
                    mutation_coin: None,
                    outcome,
                });
                attempts += 1;
            }
            let programs: Vec<&CandidateProgram> =
                pending.iter().map(|(_, ind)| &ind.program).collect();
            let reports = self.evaluate_all(&programs);
            for ((slot, mut ind), report) in pending.into_iter().zip(reports) {
                let (fitness, failure) = verdict(&report);
                ind.fitness = Some(fitness);
                created[slot].outcome = CreationOutcome::Evaluated {
                    id: ind.id,
                    fitness,
                    failure,
                };
                if fitness.is_valid() && members.len() < n {
                    members.push(ind);
                }
            }
        }
        if members.len() < n {
            let missing = n - members.len();
            let msg = format!(
                "only {} of {n} initial individuals after {attempts} attempts; filling {missing} slot(s) with greedy",
                members.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            let report = self.evaluator.evaluate(&CandidateProgram::NativeGreedy);
            let (fitness, _) = verdict(&report);
            if !fitness.is_valid() {
                return Err(EngineError::InitializationExhausted {
                    valid: members.len(),
                    needed: n,
                });
            }
            for _ in 0..missing {
                members.push(Individual {
                    id: IndividualId(next_id),
                    description: GREEDY_DESCRIPTION.into(),
                    program: CandidateProgram::NativeGreedy,
                    fitness: Some(fitness),
                    lineage: Lineage::init(),
                });
                next_id += 1;
            }
        }
        let population = Population::new(n, members);
        let best = population.best().expect("population is non-empty").clone();
        let record = GenerationRecord {
            generation: 0,
            best_gap: population.best_gap(),
            mean_gap: population.mean_gap(),
            crossover_attempts: 0,
            mutation_attempts: 0,
            population: population.ids(),
            created,
            warnings,
        };
        log::info!(
            "initial population: best {:?}, mean {:?}, {calls} LLM call(s)",
            record.best_gap,
            record.mean_gap
        );
        self.state = Some(State {
            population,
            best,
            next_id,
            llm_calls: calls,
            generation: 0,
            trace: EvolutionTrace {
                initial: record,
                generations: Vec::new(),
            },
        });
        self.write_checkpoint()?;
        Ok(&self.state.as_ref().expect("just set").population)
    }

    fn plan(&self, generation: usize, population_len: usize) -> Vec<IterationPlan> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
        rng.set_stream(generation as u64);
        (0..self.config.population_size)
            .map(|_| {
                let parents =
                    select_parents(population_len, self.config.parents_per_crossover, &mut rng);
                let crossover = rng.gen::<f64>() < self.config.crossover_prob;
                let mutation_coins = (0..self.config.offspring_per_crossover)
                    .map(|_| rng.gen::<f64>() < self.config.mutation_prob)
                    .collect();
                IterationPlan {
                    parents,
                    crossover,
                    mutation_coins,
                }
            })
            .collect()
    }

    /// Runs one generation: N iterations of select, crossover, maybe
    /// mutate, then evaluation of all offspring and population management.
    pub fn run_generation(&mut self) -> Result<&GenerationRecord, EngineError> {
        if self.state.is_none() {
            self.initialize()?;
        }
        let mut state = self.state.take().expect("initialized above");
        let result = self.step(&mut state);
        self.state = Some(state);
        result?;
        self.write_checkpoint()?;
        let state = self.state.as_ref().expect("restored above");
        Ok(state
            .trace
            .generations
            .last()
            .expect("a generation was recorded"))
    }

    fn step(&self, state: &mut State) -> Result<(), EngineError> {
        let generation = state.generation + 1;
        let plans = self.plan(generation, state.population.len());
        let mut created = Vec::new();
        let mut pending: Vec<(usize, Individual)> = Vec::new();
        let mut crossover_attempts = 0;
        let mut mutation_attempts = 0;
        for (iteration, plan) in plans.iter().enumerate() {
            if !plan.crossover {
                continue;
            }
            crossover_attempts += 1;
            let parents: Vec<&Individual> = plan
                .parents
                .iter()
                .map(|&k| &state.population.members[k])
                .collect();
            let parent_ids: Vec<IndividualId> = parents.iter().map(|p| p.id).collect();
            for &coin in &plan.mutation_coins {
                let bundle = self.forge.render_crossover(&parents)?;
                let exchange = self.ask(&mut state.llm_calls, &bundle)?;
                let mut record = CreationRecord {
                    iteration,
                    operator: Operator::Crossover,
                    parents: parent_ids.clone(),
                    exchanges: vec![exchange.id],
                    mutation_coin: Some(coin),
                    outcome: CreationOutcome::Evaluated {
                        id: IndividualId(0),
                        fitness: Fitness::Failed,
                        failure: None,
                    },
                };
                let mut child = match self.parse(&exchange) {
                    Ok((description, program)) => Individual {
                        id: IndividualId(state.next_id),
                        description,
                        program,
                        fitness: None,
                        lineage: Lineage {
                            operator: Operator::Crossover,
                            parents: parent_ids.clone(),
                        },
                    },
                    Err(e) => {
                        record.outcome = parse_failed(Operator::Crossover, &e);
                        created.push(record);
                        continue;
                    }
                };
                state.next_id += 1;
                if coin {
                    mutation_attempts += 1;
                    let bundle = self.forge.render_mutation(&child)?;
                    let exchange = self.ask(&mut state.llm_calls, &bundle)?;
                    record.operator = Operator::Mutation;
                    record.exchanges.push(exchange.id);
                    match self.parse(&exchange) {
                        Ok((description, program)) => {
                            child = Individual {
                                id: IndividualId(state.next_id),
                                description,
                                program,
                                fitness: None,
                                lineage: Lineage {
                                    operator: Operator::Mutation,
                                    parents: vec![child.id],
                                },
                            };
                            state.next_id += 1;
                        }
                        Err(e) => {
                            record.outcome = parse_failed(Operator::Mutation, &e);
                            created.push(record);
                            continue;
                        }
                    }
                }
                pending.push((created.len(), child));
                created.push(record);
            }
        }

        let programs: Vec<&CandidateProgram> = pending.iter().map(|(_, c)| &c.program).collect();
        let reports = self.evaluate_all(&programs);
        let mut offspring = Vec::with_capacity(pending.len());
        for ((slot, mut child), report) in pending.into_iter().zip(reports) {
            let (fitness, failure) = verdict(&report);
            child.fitness = Some(fitness);
            created[slot].outcome = CreationOutcome::Evaluated {
                id: child.id,
                fitness,
                failure,
            };
            offspring.push(child);
        }

        let n = self.config.population_size;
        let mut pool = std::mem::take(&mut state.population.members);
        pool.extend(offspring);
        state.population = Population::new(n, manage_population(pool, n));
        if let Some(best) = state.population.best() {
            if best
                .fitness
                .unwrap_or(Fitness::Failed)
                .compare(state.best.fitness.unwrap_or(Fitness::Failed))
                == std::cmp::Ordering::Less
            {
                state.best = best.clone();
            }
        }
        let record = GenerationRecord {
            generation,
            best_gap: state.population.best_gap(),
            mean_gap: state.population.mean_gap(),
            crossover_attempts,
            mutation_attempts,
            population: state.population.ids(),
            created,
            warnings: Vec::new(),
        };
        log::info!(
            "generation {generation}: best {:?}, mean {:?}, {} crossover(s), {} mutation(s)",
            record.best_gap,
            record.mean_gap,
            crossover_attempts,
            mutation_attempts
        );
        state.trace.generations.push(record);
        state.generation = generation;
        Ok(())
    }

    fn write_checkpoint(&self) -> Result<(), EngineError> {
        let (Some(dir), Some(cp)) = (&self.checkpoint_dir, self.checkpoint()) else {
            return Ok(());
        };
        cp.save(&dir.join(Checkpoint::file_name(cp.generation)))
    }

    /// Initializes if needed, then runs the remaining generations.
    pub fn run(mut self) -> Result<EvolutionResult, EngineError> {
        if self.state.is_none() {
            self.initialize()?;
        }
        while self.generation().expect("initialized") < self.config.generations {
            self.run_generation()?;
        }
        let state = self.state.expect("initialized");
        Ok(EvolutionResult {
            best: state.best,
            population: state.population,
            trace: state.trace,
            llm_calls: state.llm_calls,
        })
    }
}

fn parse_failed(stage: Operator, e: &crate::llm::ParseError) -> CreationOutcome {
    CreationOutcome::ParseFailed {
        stage,
        kind: e.kind().to_string(),
        message: e.to_string(),
    }
}

fn verdict(report: &FitnessReport) -> (Fitness, Option<String>) {
    let fitness = Fitness::from_gap(report.fitness());
    let failure = match fitness {
        Fitness::Gap(_) => None,
        Fitness::Failed => Some(match report.first_failure() {
            Some(r) => format!(
                "{} on {}: {}",
                r.status,
                r.instance_id,
                r.message.as_deref().unwrap_or("no details")
            ),
            None => "no usable gap".into(),
        }),
    };
    (fitness, failure)
}

/// Runs a complete evolution with default plumbing (no transcript, no
/// checkpoints, sequential evaluation).
pub fn run_evolution(
    config: EvolutionConfig,
    llm: &dyn LlmOperator,
    evaluator: &dyn FitnessEvaluator,
) -> Result<EvolutionResult, EngineError> {
    Evolution::new(config, llm, evaluator)?.run()
}

/// Latest checkpoint file in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| Checkpoint::parse_file_name(p).is_some())
        .collect();
    found.sort_by_key(|p| Checkpoint::parse_file_name(p));
    found.pop()
}
