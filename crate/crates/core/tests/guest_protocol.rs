//! Host side of the guest protocol, driven against the stub guest binary.

use std::time::{Duration, Instant};

use ael_core::evaluator::{
    EvaluationBatch, EvaluationLimits, FitnessEvaluator, GuestCommand, InstanceStatus,
    OverallStatus, TspEvaluator,
};
use ael_core::llm::CandidateProgram;
use ael_core::tsp::ScoredParams;

const SIGNATURE: &str =
    "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):";

fn stub() -> GuestCommand {
    GuestCommand::new(env!("CARGO_BIN_EXE_ael-stub-guest"))
}

fn evaluator(n: usize, count: usize, timeout_secs: f64) -> TspEvaluator {
    let batch = EvaluationBatch::generate(n, count, 31337, 2).unwrap();
    TspEvaluator::new(
        batch,
        EvaluationLimits {
            batch_timeout_secs: timeout_secs,
            start_node: 0,
        },
    )
    .with_guest(stub())
}

fn source(extra: &str) -> CandidateProgram {
    CandidateProgram::GuestSource(format!("{SIGNATURE}\n    pass\n{extra}"))
}

fn statuses(ev: &TspEvaluator, program: &CandidateProgram) -> Vec<InstanceStatus> {
    ev.evaluate(program)
        .per_instance
        .iter()
        .map(|r| r.status)
        .collect()
}

#[test]
fn guest_greedy_matches_native_greedy() {
    let ev = evaluator(50, 64, 60.0);
    let native = ev.evaluate(&CandidateProgram::NativeGreedy);
    let guest = ev.evaluate(&source(""));
    assert_eq!(guest.overall_status, OverallStatus::Ok);
    assert_eq!(guest.per_instance, native.per_instance);
    assert_eq!(guest.mean_gap, native.mean_gap);
    let tours_native = ev.tours(&CandidateProgram::NativeGreedy);
    let tours_guest = ev.tours(&source(""));
    assert_eq!(tours_native, tours_guest);
}

#[test]
fn guest_scored_matches_native_scored() {
    let params: ScoredParams = "scored c1=1 c2=0.5 c3=0.25 c4=0.25 tau=0.3"
        .parse()
        .unwrap();
    let ev = evaluator(30, 8, 60.0);
    let native = ev.evaluate(&CandidateProgram::NativeScored(params));
    let guest = ev.evaluate(&source(&format!("# {params}\n{params}")));
    assert_eq!(guest.per_instance, native.per_instance);
}

#[test]
fn load_error_fails_every_instance() {
    let ev = evaluator(10, 3, 10.0);
    let r = ev.evaluate(&CandidateProgram::GuestSource(
        "def other(a, b, c, d):\n    return 0".into(),
    ));
    assert_eq!(r.overall_status, OverallStatus::Failed);
    for i in &r.per_instance {
        assert_eq!(i.status, InstanceStatus::RuntimeError);
        assert!(i.message.as_deref().unwrap().contains("load_error"));
    }
}

#[test]
fn infinite_loop_is_killed_within_the_deadline() {
    let ev = evaluator(10, 4, 1.0);
    let started = Instant::now();
    let r = ev.evaluate(&source("# stub: loop"));
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(3), "took {elapsed:?}");
    assert_eq!(
        r.per_instance.iter().map(|i| i.status).collect::<Vec<_>>(),
        [
            InstanceStatus::Timeout,
            InstanceStatus::Skipped,
            InstanceStatus::Skipped,
            InstanceStatus::Skipped
        ]
    );
    assert_eq!(r.overall_status, OverallStatus::Failed);
    assert_eq!(r.fitness(), None);
}

#[test]
fn timeout_leaves_earlier_instances_intact() {
    let ev = evaluator(12, 6, 1.0);
    let native = ev.evaluate(&CandidateProgram::NativeGreedy);
    let r = ev.evaluate(&source("# stub: loop_after 3"));
    assert_eq!(&r.per_instance[..3], &native.per_instance[..3]);
    assert_eq!(r.per_instance[3].status, InstanceStatus::Timeout);
    assert!(r.per_instance[4..]
        .iter()
        .all(|i| i.status == InstanceStatus::Skipped));
}

#[test]
fn hanging_load_times_out() {
    let ev = evaluator(8, 2, 0.5);
    assert_eq!(
        statuses(&ev, &source("# stub: hang_load")),
        [InstanceStatus::Timeout, InstanceStatus::Skipped]
    );
}

#[test]
fn step_errors_are_runtime_errors() {
    let ev = evaluator(10, 3, 10.0);
    let r = ev.evaluate(&source("# stub: revisit"));
    assert!(r
        .per_instance
        .iter()
        .all(|i| i.status == InstanceStatus::RuntimeError
            && i.message.as_deref().unwrap().starts_with("step_error")));
}

#[test]
fn crashed_guest_is_restarted_for_the_remaining_instances() {
    let ev = evaluator(10, 8, 20.0);
    let native = ev.evaluate(&CandidateProgram::NativeGreedy);
    let r = ev.evaluate(&source("# stub: crash_odd"));
    for ((got, want), inst) in r
        .per_instance
        .iter()
        .zip(&native.per_instance)
        .zip(ev.batch().instances())
    {
        if inst.seed() % 2 == 1 {
            assert_eq!(got.status, InstanceStatus::RuntimeError);
        } else {
            assert_eq!(got, want);
        }
    }
    assert!(ev.batch().instances().iter().any(|i| i.seed() % 2 == 1));
    assert!(ev.batch().instances().iter().any(|i| i.seed() % 2 == 0));
}

#[test]
fn garbage_and_invalid_tours_are_caught() {
    let ev = evaluator(10, 2, 10.0);
    let garbage = ev.evaluate(&source("# stub: garbage"));
    assert!(garbage
        .per_instance
        .iter()
        .all(|i| i.status == InstanceStatus::RuntimeError
            && i.message.as_deref().unwrap().contains("protocol violation")));
    assert_eq!(
        statuses(&ev, &source("# stub: duplicate")),
        [InstanceStatus::InvalidTour; 2]
    );
}

#[test]
fn guest_crash_on_every_instance_is_contained() {
    let ev = evaluator(10, 3, 10.0);
    assert_eq!(
        statuses(&ev, &source("# stub: crash")),
        [InstanceStatus::RuntimeError; 3]
    );
}
