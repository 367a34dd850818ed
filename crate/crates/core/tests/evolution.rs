use ael_core::engine::{
    latest_checkpoint, run_evolution, Checkpoint, CreationOutcome, EngineError, Evolution,
    EvolutionConfig, EvolutionResult, Fitness,
};
use ael_core::evaluator::{
    EvaluationBatch, EvaluationLimits, FitnessEvaluator, FitnessReport, TspEvaluator,
};
use ael_core::llm::{CandidateProgram, LlmError, ReplayLlm, ScriptedLlm, TranscriptWriter};
use ael_core::prompt::Operator;
use ael_core::tsp::ScoredParams;

fn respond(description: &str, program: &str) -> String {
    format!("Algorithm: {description}\n\n```\n{program}\n```\n")
}

/// `count` distinct scored programs, deterministic.
fn scored_pool(count: usize) -> Vec<String> {
    let steps = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut out = Vec::new();
    'outer: for c2 in steps {
        for c3 in steps {
            for c4 in steps {
                let p = ScoredParams {
                    c1: 1.0,
                    c2,
                    c3,
                    c4,
                    tau: f64::INFINITY,
                };
                out.push(respond(
                    &format!("Scored rule variant {}.", out.len()),
                    &p.to_string(),
                ));
                if out.len() == count {
                    break 'outer;
                }
            }
        }
    }
    out
}

fn tsp20() -> TspEvaluator {
    TspEvaluator::new(
        EvaluationBatch::generate(20, 16, 77, 3).unwrap(),
        EvaluationLimits::default(),
    )
}

fn tiny() -> TspEvaluator {
    TspEvaluator::new(
        EvaluationBatch::generate(6, 1, 5, 1).unwrap(),
        EvaluationLimits::default(),
    )
}

fn loop_config() -> EvolutionConfig {
    EvolutionConfig {
        evaluation_instance_size: 20,
        evaluation_instance_count: 16,
        rng_seed: 11,
        ..EvolutionConfig::default()
    }
}

fn trace_bytes(r: &EvolutionResult) -> Vec<u8> {
    serde_json::to_vec(&r.trace).unwrap()
}

#[test]
fn default_loop_settings_keep_the_invariants() {
    let ev = tsp20();
    let llm = ScriptedLlm::new(scored_pool(60)).cycling();
    let r = run_evolution(loop_config(), &llm, &ev).unwrap();
    assert_eq!(r.trace.generations.len(), 10);
    assert_eq!(r.population.len(), 10);
    let mut prev = r.trace.initial.best_gap.unwrap();
    let mut mutations = 0;
    for g in &r.trace.generations {
        assert_eq!(g.population.len(), 10);
        assert_eq!(g.crossover_attempts, 10);
        let best = g.best_gap.unwrap();
        assert!(best <= prev, "generation {}: {best} > {prev}", g.generation);
        prev = best;
        mutations += g.mutation_attempts;
        for c in &g.created {
            assert_eq!(c.parents.len(), 2);
            assert_ne!(c.parents[0], c.parents[1]);
        }
    }
    assert_eq!(r.llm_calls as usize, 10 + 100 + mutations);
    let mut ids: Vec<u64> = r
        .trace
        .records()
        .flat_map(|g| &g.created)
        .filter_map(|c| match c.outcome {
            CreationOutcome::Evaluated { id, .. } => Some(id.0),
            _ => None,
        })
        .collect();
    let total = ids.len();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), total);
    assert!(r.population.members.iter().all(|m| m.gap().is_some()));
    assert_eq!(Some(r.best.gap().unwrap()), r.population.best_gap());
}

#[test]
fn identical_seeds_give_identical_traces_even_in_parallel() {
    let ev = tsp20();
    let run = |threads| {
        let llm = ScriptedLlm::new(scored_pool(60)).cycling();
        Evolution::new(loop_config(), &llm, &ev)
            .unwrap()
            .with_threads(threads)
            .unwrap()
            .run()
            .unwrap()
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    assert_eq!(trace_bytes(&a), trace_bytes(&b));
    assert_eq!(trace_bytes(&a), trace_bytes(&c));
    assert_eq!(a.trace.to_csv(), c.trace.to_csv());
    let other_seed = {
        let llm = ScriptedLlm::new(scored_pool(60)).cycling();
        run_evolution(
            EvolutionConfig {
                rng_seed: 12,
                ..loop_config()
            },
            &llm,
            &ev,
        )
        .unwrap()
    };
    assert_ne!(trace_bytes(&a), trace_bytes(&other_seed));
}

#[test]
fn no_crossover_means_no_change() {
    let ev = tiny();
    let llm = ScriptedLlm::new(scored_pool(10));
    let config = EvolutionConfig {
        crossover_prob: 0.0,
        generations: 4,
        ..loop_config()
    };
    let mut evo = Evolution::new(config, &llm, &ev).unwrap();
    let initial = evo.initialize().unwrap().clone();
    let r = evo.run().unwrap();
    assert_eq!(r.population, initial);
    assert_eq!(r.llm_calls, 10);
    assert!(r
        .trace
        .generations
        .iter()
        .all(|g| g.crossover_attempts == 0 && g.created.is_empty()));
}

#[test]
fn mutation_coin_follows_its_probability() {
    // 100 iterations x 100 generations = 10^4 offspring.
    let ev = tiny();
    let llm = ScriptedLlm::new(scored_pool(40)).cycling();
    let config = EvolutionConfig {
        population_size: 100,
        generations: 100,
        evaluation_instance_size: 6,
        evaluation_instance_count: 1,
        ..loop_config()
    };
    let r = run_evolution(config, &llm, &ev).unwrap();
    let coins: Vec<bool> = r
        .trace
        .generations
        .iter()
        .flat_map(|g| g.created.iter().map(|c| c.mutation_coin.unwrap()))
        .collect();
    assert_eq!(coins.len(), 10_000);
    let heads = coins.iter().filter(|&&c| c).count();
    assert!((1900..=2100).contains(&heads), "{heads}");
    let mutated = r
        .trace
        .generations
        .iter()
        .map(|g| g.mutation_attempts)
        .sum::<usize>();
    assert_eq!(mutated, heads);
}

#[test]
fn malformed_init_responses_are_retried() {
    let ev = tiny();
    let mut script = vec![
        "I cannot do that.".to_string(),
        "Algorithm: x.\n```\nscored c1=1\n```".to_string(),
    ];
    script.extend(scored_pool(4));
    let llm = ScriptedLlm::new(script);
    let config = EvolutionConfig {
        population_size: 4,
        generations: 0,
        ..loop_config()
    };
    let r = run_evolution(config, &llm, &ev).unwrap();
    assert_eq!(r.population.len(), 4);
    let failures: Vec<&str> = r
        .trace
        .initial
        .created
        .iter()
        .filter_map(|c| match &c.outcome {
            CreationOutcome::ParseFailed { kind, .. } => Some(kind.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(failures, ["no_code_block", "invalid_native_program"]);
    assert_eq!(r.llm_calls, 6);
    assert!(r.trace.initial.warnings.is_empty());
}

#[test]
fn single_greedy_individual() {
    let ev = tsp20();
    let llm = ScriptedLlm::new([respond("Nearest neighbour.", "greedy")]);
    let config = EvolutionConfig {
        population_size: 1,
        parents_per_crossover: 1,
        generations: 0,
        ..loop_config()
    };
    let r = run_evolution(config, &llm, &ev).unwrap();
    let direct = ev
        .evaluate(&CandidateProgram::NativeGreedy)
        .fitness()
        .unwrap();
    assert_eq!(r.population.len(), 1);
    assert_eq!(r.best.fitness, Some(Fitness::Gap(direct)));
    assert!(direct > 0.0);
}

#[test]
fn zero_generations_returns_best_initial() {
    let ev = tsp20();
    let llm = ScriptedLlm::new(scored_pool(10));
    let config = EvolutionConfig {
        generations: 0,
        ..loop_config()
    };
    let r = run_evolution(config, &llm, &ev).unwrap();
    assert!(r.trace.generations.is_empty());
    assert_eq!(r.best.gap(), r.trace.initial.best_gap);
    let min = r
        .population
        .members
        .iter()
        .map(|m| m.gap().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r.best.gap(), Some(min));
}

#[test]
fn improving_script_lowers_the_best_curve() {
    // The initial population only knows near-greedy rules; offspring
    // unlock the tuned parameters.
    let ev = tsp20();
    let mut script: Vec<String> = (0..10)
        .map(|k| {
            let p = ScoredParams {
                c4: 0.01 * k as f64,
                ..ScoredParams::GREEDY
            };
            respond(&format!("Greedy variant {k}."), &p.to_string())
        })
        .collect();
    for step in 1..=40 {
        let t = step as f64 / 40.0;
        let p = ScoredParams {
            c1: 1.0,
            c2: 0.75 * t,
            c3: 0.75 * t,
            c4: 0.25 * t,
            tau: f64::INFINITY,
        };
        script.push(respond(&format!("Step {step}."), &p.to_string()));
    }
    let llm = ScriptedLlm::new(script).cycling();
    let r = run_evolution(loop_config(), &llm, &ev).unwrap();
    let curve: Vec<f64> = r.trace.records().map(|g| g.best_gap.unwrap()).collect();
    assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    assert!(curve.windows(2).any(|w| w[1] < w[0]), "{curve:?}");
}

#[test]
fn hostile_model_falls_back_to_greedy() {
    let ev = tiny();
    let llm = ScriptedLlm::new(["no code here"]).cycling();
    let config = EvolutionConfig {
        population_size: 3,
        generations: 1,
        ..loop_config()
    };
    let r = run_evolution(config, &llm, &ev).unwrap();
    assert_eq!(r.trace.initial.created.len(), 9);
    assert_eq!(r.trace.initial.warnings.len(), 1);
    assert_eq!(r.population.len(), 3);
    assert!(r
        .population
        .members
        .iter()
        .all(|m| m.program == CandidateProgram::NativeGreedy));
    let ids = r.population.ids();
    assert_eq!(
        ids.len(),
        ids.iter().collect::<std::collections::HashSet<_>>().len()
    );
}

struct AlwaysFails;

impl FitnessEvaluator for AlwaysFails {
    fn evaluate(&self, program: &CandidateProgram) -> FitnessReport {
        let _ = program;
        FitnessReport {
            per_instance: vec![],
            mean_gap: None,
            overall_status: ael_core::evaluator::OverallStatus::Failed,
            wall_time_secs: 0.0,
        }
    }
}

#[test]
fn initialization_exhausted_when_nothing_evaluates() {
    let llm = ScriptedLlm::new(scored_pool(10)).cycling();
    let err = run_evolution(loop_config(), &llm, &AlwaysFails).unwrap_err();
    assert_eq!(
        err,
        EngineError::InitializationExhausted {
            valid: 0,
            needed: 10
        }
    );
}

#[test]
fn exhausted_script_propagates() {
    let ev = tiny();
    let llm = ScriptedLlm::new(scored_pool(12));
    let err = run_evolution(loop_config(), &llm, &ev).unwrap_err();
    assert_eq!(
        err,
        EngineError::Llm(LlmError::ScriptExhausted { served: 12 })
    );
}

#[test]
fn failing_candidates_get_the_sentinel_and_are_dropped() {
    let ev = tsp20();
    let guest = "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    return unvisited_nodes[0]";
    let mut script = scored_pool(10);
    script.push(format!(
        "Algorithm: Source candidate.\n```python\n{guest}\n```"
    ));
    let llm = ScriptedLlm::new(script).cycling();
    let config = EvolutionConfig {
        generations: 3,
        ..loop_config()
    };
    let r = run_evolution(config, &llm, &ev).unwrap();
    let sentinels = r
        .trace
        .generations
        .iter()
        .flat_map(|g| &g.created)
        .filter(|c| {
            matches!(
                c.outcome,
                CreationOutcome::Evaluated {
                    fitness: Fitness::Failed,
                    ..
                }
            )
        })
        .count();
    assert!(sentinels > 0);
    assert!(r.population.members.iter().all(|m| m.gap().is_some()));
}

#[test]
fn lineage_and_exchange_ids_are_recorded() {
    let ev = tsp20();
    let llm = ScriptedLlm::new(scored_pool(60)).cycling();
    let config = EvolutionConfig {
        mutation_prob: 1.0,
        generations: 1,
        ..loop_config()
    };
    let r = run_evolution(config, &llm, &ev).unwrap();
    let g = &r.trace.generations[0];
    assert_eq!(g.mutation_attempts, 10);
    let mut expected_exchange = 10u64;
    for c in &g.created {
        assert_eq!(c.operator, Operator::Mutation);
        assert_eq!(c.exchanges, [expected_exchange, expected_exchange + 1]);
        expected_exchange += 2;
    }
    for m in r
        .population
        .members
        .iter()
        .filter(|m| m.lineage.operator == Operator::Mutation)
    {
        assert_eq!(m.lineage.parents.len(), 1);
    }
}

#[test]
fn resume_continues_identically() {
    let ev = tsp20();
    let dir = tempfile::tempdir().unwrap();
    let full = {
        let llm = ScriptedLlm::new(scored_pool(60)).cycling();
        Evolution::new(loop_config(), &llm, &ev)
            .unwrap()
            .with_checkpoints(dir.path())
            .run()
            .unwrap()
    };
    assert_eq!(
        latest_checkpoint(dir.path()).unwrap().file_name().unwrap(),
        Checkpoint::file_name(10).as_str()
    );
    let cp = Checkpoint::load(&dir.path().join(Checkpoint::file_name(4))).unwrap();
    assert_eq!(cp.generation, 4);
    let llm = ScriptedLlm::new(scored_pool(60)).cycling();
    let resumed = Evolution::resume(loop_config(), &llm, &ev, cp.clone())
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(trace_bytes(&full), trace_bytes(&resumed));
    assert_eq!(full.best, resumed.best);

    let other = EvolutionConfig {
        rng_seed: 99,
        ..loop_config()
    };
    let llm = ScriptedLlm::new(scored_pool(60)).cycling();
    assert!(matches!(
        Evolution::resume(other, &llm, &ev, cp),
        Err(EngineError::Checkpoint(_))
    ));
}

#[test]
fn transcript_replay_reproduces_the_run() {
    let ev = tsp20();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcript.jsonl");
    let config = EvolutionConfig {
        generations: 3,
        ..loop_config()
    };
    let live = {
        let llm = ScriptedLlm::new(scored_pool(60)).cycling();
        let t = TranscriptWriter::create(&path).unwrap();
        Evolution::new(config.clone(), &llm, &ev)
            .unwrap()
            .with_transcript(&t)
            .run()
            .unwrap()
    };
    let replay = ReplayLlm::from_file(&path).unwrap();
    let again = run_evolution(config.clone(), &replay, &ev).unwrap();
    assert_eq!(trace_bytes(&live), trace_bytes(&again));

    // A different seed asks for different prompts and the replay notices.
    let replay = ReplayLlm::from_file(&path).unwrap();
    let err = run_evolution(
        EvolutionConfig {
            rng_seed: 5,
            ..config
        },
        &replay,
        &ev,
    )
    .unwrap_err();
    assert!(
        matches!(err, EngineError::Llm(LlmError::ReplayDivergence { .. })),
        "{err:?}"
    );
}
