//! Candidate evaluation: runs a program over an instance batch and turns
//! the tours into a fitness report.
//!
//! Native candidates run in-process. Guest-source candidates are shipped to
//! an external guest process over a line-delimited JSON protocol (see
//! [`guest`]). The guest boundary exists for robustness (deadlines, crash
//! isolation, output validation). It is not a security sandbox.

pub mod guest;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::CandidateProgram;
use crate::tsp::{
    construct_tour, gap, generate_batch, greedy_select_next, tour_length, two_opt_baseline,
    InstanceId, Tour, TspError, TspInstance,
};

pub use guest::{GuestCommand, GuestReply, GuestRequest};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluatorError {
    #[error(transparent)]
    Tsp(#[from] TspError),
    #[error("baseline for {0} is missing")]
    MissingBaseline(InstanceId),
    #[error("baseline for {id} must be a positive finite length, got {length}")]
    InvalidBaseline { id: InstanceId, length: f64 },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Ok,
    InvalidTour,
    RuntimeError,
    Timeout,
    /// Never attempted because the batch deadline had already expired.
    Skipped,
}

impl fmt::Display for InstanceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceStatus::Ok => "ok",
            InstanceStatus::InvalidTour => "invalid_tour",
            InstanceStatus::RuntimeError => "runtime_error",
            InstanceStatus::Timeout => "timeout",
            InstanceStatus::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: InstanceId,
    pub tour_length: Option<f64>,
    pub gap: Option<f64>,
    pub status: InstanceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub per_instance: Vec<InstanceResult>,
    /// Mean gap over the instances that finished ok; `None` if none did.
    pub mean_gap: Option<f64>,
    pub overall_status: OverallStatus,
    pub wall_time_secs: f64,
}

impl FitnessReport {
    fn from_results(per_instance: Vec<InstanceResult>, wall_time: Duration) -> Self {
        let gaps: Vec<f64> = per_instance.iter().filter_map(|r| r.gap).collect();
        let mean_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
        let all_ok =
            !per_instance.is_empty() && per_instance.iter().all(|r| r.status == InstanceStatus::Ok);
        FitnessReport {
            per_instance,
            mean_gap,
            overall_status: if all_ok {
                OverallStatus::Ok
            } else {
                OverallStatus::Failed
            },
            wall_time_secs: wall_time.as_secs_f64(),
        }
    }

    /// The fitness the engine should use: the mean gap when every instance
    /// succeeded.
    pub fn fitness(&self) -> Option<f64> {
        match self.overall_status {
            OverallStatus::Ok => self.mean_gap,
            OverallStatus::Failed => None,
        }
    }

    /// First non-ok instance, for diagnostics.
    pub fn first_failure(&self) -> Option<&InstanceResult> {
        self.per_instance
            .iter()
            .find(|r| r.status != InstanceStatus::Ok)
    }
}

/// Checks that `order` is a permutation of `0..n`.
pub fn validate_tour(order: &[usize], n: usize) -> Result<(), String> {
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n {
            return Err(format!("node {v} out of range 0..{n}"));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(format!("duplicate node {v}"));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(format!(
            "missing node {missing} ({} of {n} visited)",
            order.len()
        ));
    }
    Ok(())
}

/// Baseline lengths keyed by instance id, as stored in an import file.
pub type BaselineTable = BTreeMap<InstanceId, f64>;

pub fn load_baselines(path: &Path) -> Result<BaselineTable, EvaluatorError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvaluatorError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| EvaluatorError::Io(format!("{}: {e}", path.display())))
}

/// Instances paired with their baseline lengths.
#[derive(Debug, Clone)]
pub struct EvaluationBatch {
    instances: Vec<TspInstance>,
    baselines: Vec<f64>,
}

impl EvaluationBatch {
    pub fn new(instances: Vec<TspInstance>, baselines: Vec<f64>) -> Result<Self, EvaluatorError> {
        if baselines.len() != instances.len() {
            let missing = instances.get(baselines.len()).map(TspInstance::id);
            return Err(EvaluatorError::MissingBaseline(
                missing.unwrap_or_else(|| InstanceId::new(0, 0)),
            ));
        }
        for (inst, &b) in instances.iter().zip(&baselines) {
            if !(b.is_finite() && b > 0.0) {
                return Err(EvaluatorError::InvalidBaseline {
                    id: inst.id(),
                    length: b,
                });
            }
        }
        Ok(EvaluationBatch {
            instances,
            baselines,
        })
    }

    /// Baselines from multistart 2-opt, computed in parallel.
    pub fn with_two_opt(
        instances: Vec<TspInstance>,
        restarts: usize,
    ) -> Result<Self, EvaluatorError> {
        let baselines = instances
            .par_iter()
            .map(|i| two_opt_baseline(i, restarts))
            .collect();
        Self::new(instances, baselines)
    }

    pub fn with_table(
        instances: Vec<TspInstance>,
        table: &BaselineTable,
    ) -> Result<Self, EvaluatorError> {
        let baselines = instances
            .iter()
            .map(|i| {
                table
                    .get(&i.id())
                    .copied()
                    .ok_or_else(|| EvaluatorError::MissingBaseline(i.id()))
            })
            .collect::<Result<_, _>>()?;
        Self::new(instances, baselines)
    }

    /// `count` fresh uniform instances of size `n` with 2-opt baselines.
    pub fn generate(
        n: usize,
        count: usize,
        seed: u64,
        restarts: usize,
    ) -> Result<Self, EvaluatorError> {
        Self::with_two_opt(generate_batch(n, count, seed)?, restarts)
    }

    pub fn instances(&self) -> &[TspInstance] {
        &self.instances
    }

    pub fn baselines(&self) -> &[f64] {
        &self.baselines
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn baseline_table(&self) -> BaselineTable {
        self.instances
            .iter()
            .map(TspInstance::id)
            .zip(self.baselines.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationLimits {
    /// Wall-clock budget for one candidate over the whole batch. Enforced
    /// for guest candidates; native ones always terminate.
    pub batch_timeout_secs: f64,
    pub start_node: usize,
}

impl Default for EvaluationLimits {
    fn default() -> Self {
        EvaluationLimits {
            batch_timeout_secs: 60.0,
            start_node: 0,
        }
    }
}

impl EvaluationLimits {
    pub fn batch_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.batch_timeout_secs.max(0.0))
    }
}

/// What came back for one instance before scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum TourOutcome {
    Tour(Vec<usize>),
    /// The program chose an invalid node mid-construction.
    InvalidStep(String),
    RuntimeError(String),
    Timeout,
    Skipped,
}

pub trait FitnessEvaluator: Sync {
    fn evaluate(&self, program: &CandidateProgram) -> FitnessReport;
}

/// Evaluates candidates on a fixed batch.
pub struct TspEvaluator {
    batch: EvaluationBatch,
    limits: EvaluationLimits,
    guest: Option<GuestCommand>,
}

impl TspEvaluator {
    pub fn new(batch: EvaluationBatch, limits: EvaluationLimits) -> Self {
        TspEvaluator {
            batch,
            limits,
            guest: None,
        }
    }

    pub fn with_guest(mut self, guest: GuestCommand) -> Self {
        self.guest = Some(guest);
        self
    }

    pub fn batch(&self) -> &EvaluationBatch {
        &self.batch
    }

    pub fn limits(&self) -> &EvaluationLimits {
        &self.limits
    }

    /// Raw per-instance tours, before validation and scoring.
    pub fn tours(&self, program: &CandidateProgram) -> Vec<TourOutcome> {
        let instances = self.batch.instances();
        let start = self.limits.start_node;
        match program {
            CandidateProgram::NativeGreedy => instances
                .iter()
                .map(|inst| native_outcome(construct_tour(&greedy_select_next, inst, start)))
                .collect(),
            CandidateProgram::NativeScored(params) => instances
                .iter()
                .map(|inst| native_outcome(construct_tour(params, inst, start)))
                .collect(),
            CandidateProgram::GuestSource(source) => match &self.guest {
                Some(cmd) => {
                    guest::run_batch(cmd, source, instances, start, self.limits.batch_timeout())
                }
                None => vec![
                    TourOutcome::RuntimeError(
                        "no guest runtime configured for source candidates".into()
                    );
                    instances.len()
                ],
            },
        }
    }
}

fn native_outcome(result: Result<Tour, TspError>) -> TourOutcome {
    match result {
        Ok(tour) => TourOutcome::Tour(tour.order),
        Err(e @ TspError::InvalidStep { .. }) => TourOutcome::InvalidStep(e.to_string()),
        Err(e) => TourOutcome::RuntimeError(e.to_string()),
    }
}

impl FitnessEvaluator for TspEvaluator {
    fn evaluate(&self, program: &CandidateProgram) -> FitnessReport {
        let started = Instant::now();
        let outcomes = self.tours(program);
        let results = self
            .batch
            .instances()
            .iter()
            .zip(self.batch.baselines())
            .zip(outcomes)
            .map(|((inst, &baseline), outcome)| score(inst, baseline, outcome))
            .collect();
        FitnessReport::from_results(results, started.elapsed())
    }
}

fn score(inst: &TspInstance, baseline: f64, outcome: TourOutcome) -> InstanceResult {
    let failed = |status, message: String| InstanceResult {
        instance_id: inst.id(),
        tour_length: None,
        gap: None,
        status,
        message: Some(message),
    };
    match outcome {
        TourOutcome::Tour(order) => match validate_tour(&order, inst.n()) {
            Ok(()) => {
                let length = tour_length(&order, inst.dist());
                InstanceResult {
                    instance_id: inst.id(),
                    tour_length: Some(length),
                    gap: Some(gap(length, baseline)),
                    status: InstanceStatus::Ok,
                    message: None,
                }
            }
            Err(v) => failed(InstanceStatus::InvalidTour, v),
        },
        TourOutcome::InvalidStep(msg) => failed(InstanceStatus::InvalidTour, msg),
        TourOutcome::RuntimeError(msg) => failed(InstanceStatus::RuntimeError, msg),
        TourOutcome::Timeout => failed(InstanceStatus::Timeout, "batch deadline exceeded".into()),
        TourOutcome::Skipped => failed(
            InstanceStatus::Skipped,
            "not attempted after the deadline".into(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::ScoredParams;

    #[test]
    fn tour_validation() {
        assert_eq!(validate_tour(&[0, 1, 2, 3], 4), Ok(()));
        assert_eq!(
            validate_tour(&[0, 1, 1, 3], 4),
            Err("duplicate node 1".into())
        );
        assert!(validate_tour(&[0, 1, 2], 4)
            .unwrap_err()
            .starts_with("missing node 3"));
        assert!(validate_tour(&[0, 1, 2, 4], 4)
            .unwrap_err()
            .contains("out of range"));
        assert_eq!(validate_tour(&[], 0), Ok(()));
    }

    fn small_evaluator() -> TspEvaluator {
        let batch = EvaluationBatch::generate(20, 8, 99, 3).unwrap();
        TspEvaluator::new(batch, EvaluationLimits::default())
    }

    #[test]
    fn native_greedy_matches_direct_construction() {
        let ev = small_evaluator();
        let report = ev.evaluate(&CandidateProgram::NativeGreedy);
        assert_eq!(report.overall_status, OverallStatus::Ok);
        for ((r, inst), &b) in report
            .per_instance
            .iter()
            .zip(ev.batch().instances())
            .zip(ev.batch().baselines())
        {
            let direct = construct_tour(&greedy_select_next, inst, 0).unwrap();
            assert_eq!(r.tour_length, Some(direct.length));
            assert_eq!(r.gap, Some((direct.length - b) / b));
        }
        let mean = report
            .per_instance
            .iter()
            .map(|r| r.gap.unwrap())
            .sum::<f64>()
            / 8.0;
        assert!((report.mean_gap.unwrap() - mean).abs() < 1e-12);
        assert!(report.fitness().unwrap() > 0.0);
    }

    #[test]
    fn scored_with_greedy_params_equals_greedy() {
        let ev = small_evaluator();
        let a = ev.evaluate(&CandidateProgram::NativeGreedy);
        let b = ev.evaluate(&CandidateProgram::NativeScored(ScoredParams::GREEDY));
        assert_eq!(a.per_instance, b.per_instance);
    }

    #[test]
    fn guest_source_without_runtime_fails_cleanly() {
        let ev = small_evaluator();
        let r = ev.evaluate(&CandidateProgram::GuestSource(
            "def select_next_node(a, b, c, d): pass".into(),
        ));
        assert_eq!(r.overall_status, OverallStatus::Failed);
        assert!(r
            .per_instance
            .iter()
            .all(|i| i.status == InstanceStatus::RuntimeError));
        assert_eq!(r.mean_gap, None);
        assert_eq!(r.fitness(), None);
    }

    #[test]
    fn one_bad_instance_fails_the_report_but_keeps_others() {
        let ev = small_evaluator();
        let inst = &ev.batch().instances()[0];
        let b = ev.batch().baselines()[0];
        let good = score(inst, b, TourOutcome::Tour((0..20).collect()));
        let bad = score(inst, b, TourOutcome::Tour(vec![0; 20]));
        assert_eq!(bad.status, InstanceStatus::InvalidTour);
        let report = FitnessReport::from_results(vec![good.clone(), bad], Duration::ZERO);
        assert_eq!(report.overall_status, OverallStatus::Failed);
        assert_eq!(report.mean_gap, good.gap);
    }

    #[test]
    fn baseline_table_round_trip() {
        let ev = small_evaluator();
        let table = ev.batch().baseline_table();
        let again = EvaluationBatch::with_table(ev.batch().instances().to_vec(), &table).unwrap();
        assert_eq!(again.baselines(), ev.batch().baselines());
        let mut short = table.clone();
        let first = ev.batch().instances()[0].id();
        short.remove(&first);
        assert_eq!(
            EvaluationBatch::with_table(ev.batch().instances().to_vec(), &short).unwrap_err(),
            EvaluatorError::MissingBaseline(first)
        );
    }

    #[test]
    fn rejects_nonpositive_baselines() {
        let inst = crate::tsp::TspInstance::generate(5, 1).unwrap();
        assert!(matches!(
            EvaluationBatch::new(vec![inst], vec![0.0]),
            Err(EvaluatorError::InvalidBaseline { .. })
        ));
    }
}
