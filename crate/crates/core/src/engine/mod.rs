//! The evolutionary loop: individuals, populations, selection, elitist
//! population management, and the driver in [`run`].

mod checkpoint;
mod config;
mod run;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{config_hash, EvolutionConfig};
pub use run::{
    latest_checkpoint, run_evolution, CreationOutcome, CreationRecord, Evolution, EvolutionResult,
    EvolutionTrace, GenerationRecord,
};

use crate::evaluator::EvaluatorError;
use crate::llm::{CandidateProgram, LlmError};
use crate::prompt::{Operator, PromptError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not build an initial population: {valid} valid individual(s), {needed} needed")]
    InitializationExhausted { valid: usize, needed: usize },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Evaluator(#[from] EvaluatorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(pub u64);

impl fmt::Display for IndividualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Mean gap of an evaluated candidate, or the sentinel for candidates that
/// failed anywhere on the batch. `Failed` sorts after every gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitness {
    Gap(f64),
    Failed,
}

impl Fitness {
    pub fn gap(self) -> Option<f64> {
        match self {
            Fitness::Gap(g) => Some(g),
            Fitness::Failed => None,
        }
    }

    pub fn is_valid(self) -> bool {
        matches!(self, Fitness::Gap(_))
    }

    /// Total order, smaller is better.
    pub fn compare(self, other: Fitness) -> Ordering {
        match (self, other) {
            (Fitness::Gap(a), Fitness::Gap(b)) => a.total_cmp(&b),
            (Fitness::Gap(_), Fitness::Failed) => Ordering::Less,
            (Fitness::Failed, Fitness::Gap(_)) => Ordering::Greater,
            (Fitness::Failed, Fitness::Failed) => Ordering::Equal,
        }
    }

    /// Maps an evaluator verdict to a fitness; gaps must be finite and
    /// at least -1 to count.
    pub fn from_gap(gap: Option<f64>) -> Self {
        match gap {
            Some(g) if g.is_finite() && g >= -1.0 => Fitness::Gap(g),
            _ => Fitness::Failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub operator: Operator,
    pub parents: Vec<IndividualId>,
}

impl Lineage {
    pub fn init() -> Self {
        Lineage {
            operator: Operator::Init,
            parents: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: IndividualId,
    pub description: String,
    pub program: CandidateProgram,
    /// `None` until evaluated.
    pub fitness: Option<Fitness>,
    pub lineage: Lineage,
}

impl Individual {
    fn rank_fitness(&self) -> Fitness {
        self.fitness.unwrap_or(Fitness::Failed)
    }

    pub fn gap(&self) -> Option<f64> {
        self.fitness.and_then(Fitness::gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub capacity: usize,
    pub members: Vec<Individual>,
}

impl Population {
    pub fn new(capacity: usize, members: Vec<Individual>) -> Self {
        Population { capacity, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Lowest-fitness member; the earliest one wins ties.
    pub fn best(&self) -> Option<&Individual> {
        self.members.iter().reduce(|best, m| {
            if m.rank_fitness().compare(best.rank_fitness()) == Ordering::Less {
                m
            } else {
                best
            }
        })
    }

    pub fn best_gap(&self) -> Option<f64> {
        self.best().and_then(Individual::gap)
    }

    /// Mean over members with a valid fitness.
    pub fn mean_gap(&self) -> Option<f64> {
        let gaps: Vec<f64> = self.members.iter().filter_map(Individual::gap).collect();
        (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
    }

    pub fn ids(&self) -> Vec<IndividualId> {
        self.members.iter().map(|m| m.id).collect()
    }
}

/// Draws `l` parent indices uniformly. Without replacement when the
/// population is large enough, with replacement otherwise. The returned
/// order is the draw order.
pub fn select_parents<R: Rng + ?Sized>(population_len: usize, l: usize, rng: &mut R) -> Vec<usize> {
    assert!(
        population_len >= 1,
        "cannot select from an empty population"
    );
    if l <= population_len {
        index::sample(rng, population_len, l).into_vec()
    } else {
        (0..l).map(|_| rng.gen_range(0..population_len)).collect()
    }
}

/// Shrinks `members` to at most `n` survivors.
///
/// Exact duplicates of an earlier valid member's program are ranked after
/// all unique valid members, failed members after those; within a class
/// lower fitness wins and ties go to the earlier member. Survivors keep
/// their relative input order.
pub fn manage_population(members: Vec<Individual>, n: usize) -> Vec<Individual> {
    if members.len() <= n {
        return members;
    }
    let mut seen = HashSet::new();
    let class: Vec<u8> = members
        .iter()
        .map(|m| {
            if !m.rank_fitness().is_valid() {
                2
            } else if seen.insert(m.program.canonical_text().into_owned()) {
                0
            } else {
                1
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        class[a]
            .cmp(&class[b])
            .then_with(|| members[a].rank_fitness().compare(members[b].rank_fitness()))
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; members.len()];
    for &i in &order[..n] {
        keep[i] = true;
    }
    members
        .into_iter()
        .zip(keep)
        .filter_map(|(m, k)| k.then_some(m))
        .collect()
}
