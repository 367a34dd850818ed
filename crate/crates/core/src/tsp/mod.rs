//! Euclidean TSP toolkit: instances, the constructive step contract,
//! built-in step rules, and the reference solvers used to score them.

mod baseline;
mod construct;
mod instance;

pub use baseline::{
    gap, held_karp, two_opt, two_opt_baseline, two_opt_best_tour, DEFAULT_RESTARTS,
    HELD_KARP_MAX_NODES,
};
pub use construct::{
    construct_tour, greedy_select_next, node_score, scored_select_next, tour_length,
    NextNodeSelector, ScoredParams, SelectionContext, Tour,
};
pub use instance::{
    batch_seeds, euclidean, generate_batch, DistanceMatrix, InstanceFile, InstanceId, TspInstance,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TspError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("start node {start} out of range for n={n}")]
    InvalidStart { start: usize, n: usize },
    #[error("step {step} chose node {node}: {reason}")]
    InvalidStep {
        step: usize,
        node: usize,
        reason: String,
    },
    #[error("instance has {n} nodes; the exact solver is limited to {max}")]
    InstanceTooLarge { n: usize, max: usize },
    #[error("i/o: {0}")]
    Io(String),
}
