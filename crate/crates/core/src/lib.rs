//! Evolving constructive TSP heuristics with a language model as the
//! variation operator.
//!
//! * [`tsp`]: instances, the constructive step contract, built-in
//!   heuristics, baselines and the exact oracle.
//! * [`prompt`]: templates for the init, crossover and mutation prompts.
//! * [`llm`]: model transports (live, scripted, replay) and the response
//!   parser.
//! * [`evaluator`]: fitness of a candidate over an instance batch,
//!   in-process or through a guest process.
//! * [`engine`]: the evolutionary loop, checkpoints and traces.

pub mod engine;
pub mod evaluator;
pub mod llm;
pub mod prompt;
pub mod tsp;
