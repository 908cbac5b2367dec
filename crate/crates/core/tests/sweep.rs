use std::fs;
use std::path::Path;

use nmt_core::data::synthetic_corpus;
use nmt_core::harness::{
    execute_sweep, prepare_data, read_metrics, resume_sweep, Budget, DataOptions, Override,
    PreparedData, Registry, RunStatus, SweepControl, SweepGrid, SweepOutcome, SweepPlan,
    METRICS_FILE, REGISTRY_FILE,
};
use nmt_core::train::{StepClock, StopSignal, TrainConfig};
use nmt_core::Error;

const MAX_LEN: usize = 24;

fn data(seed: u64) -> PreparedData {
    let opts = DataOptions {
        max_len: MAX_LEN,
        seed,
        ..Default::default()
    };
    prepare_data(&synthetic_corpus(120, 5), &opts).unwrap()
}

fn plan(d_model: Vec<usize>, cap: usize) -> SweepPlan {
    let grid = SweepGrid {
        d_model,
        n_heads: vec![2],
        n_layers: vec![1],
        dropout: vec![0.1],
        overrides: vec![],
    };
    let budget = Budget {
        epoch_cap: cap,
        ..Default::default()
    };
    let train = TrainConfig {
        batch_size: 16,
        ..Default::default()
    };
    let mut p = SweepPlan::new(grid, budget, train, 11);
    p.max_len = MAX_LEN;
    p
}

fn run(plan: &SweepPlan, data: &PreparedData, out: &Path, stop: &StopSignal) -> SweepOutcome {
    let clock = StepClock::new(0.5);
    execute_sweep(plan, data, out, &SweepControl { clock: &clock, stop }).unwrap()
}

fn files(out: &Path) -> (String, String) {
    (
        fs::read_to_string(out.join(REGISTRY_FILE)).unwrap(),
        fs::read_to_string(out.join(METRICS_FILE)).unwrap(),
    )
}

#[test]
fn two_configs_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&plan(vec![8, 16], 3), &data(0), dir.path(), &StopSignal::new());
    assert!(!out.interrupted);
    assert_eq!(out.records.len(), 2);
    for r in &out.records {
        assert_eq!(r.status, RunStatus::Completed);
        assert_eq!(r.epochs_completed, 3);
        assert!(r.val_perplexity.unwrap().is_finite());
    }
    let metrics = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.len(), 6);
}

#[test]
fn forced_divergence_is_halted() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(vec![8, 16], 4);
    p.grid.overrides.push(Override {
        d_model: Some(8),
        learning_rate: Some(1e3),
        ..Default::default()
    });
    let out = run(&p, &data(0), dir.path(), &StopSignal::new());
    let bad = &out.records[0];
    assert_eq!(bad.status, RunStatus::HaltedDivergent);
    assert!(bad.halt_epoch.is_some());
    assert!(bad.halt_reason.is_some());
    assert_eq!(out.records[1].status, RunStatus::Completed);
}

#[test]
fn spent_wall_clock_halts_first_run_and_leaves_rest_pending() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(vec![8, 16, 32], 3);
    p.budget.wall_clock_cap_seconds = 1e-9;
    let out = run(&p, &data(0), dir.path(), &StopSignal::new());
    let status: Vec<_> = out.records.iter().map(|r| r.status).collect();
    assert_eq!(
        status,
        [RunStatus::HaltedBudget, RunStatus::Pending, RunStatus::Pending]
    );
}

#[test]
fn interrupted_and_resumed_sweep_matches_uninterrupted() {
    let p = plan(vec![8, 16], 4);
    let d = data(0);
    let reference = tempfile::tempdir().unwrap();
    run(&p, &d, reference.path(), &StopSignal::new());

    let dir = tempfile::tempdir().unwrap();
    let stop = StopSignal::new();
    stop.request_after(6);
    let first = run(&p, &d, dir.path(), &stop);
    assert!(first.interrupted);
    assert_eq!(first.records[0].status, RunStatus::Completed);
    assert_eq!(first.records[1].status, RunStatus::Running);
    assert_eq!(first.records[1].epochs_completed, 2);

    let clock = StepClock::new(0.5);
    let stop = StopSignal::new();
    let resumed = resume_sweep(dir.path(), &d, &SweepControl { clock: &clock, stop: &stop }).unwrap();
    assert!(!resumed.interrupted);
    assert_eq!(files(dir.path()), files(reference.path()));
}

#[test]
fn kill_after_first_run_leaves_it_untouched() {
    let p = plan(vec![8, 16, 32], 2);
    let d = data(0);
    let dir = tempfile::tempdir().unwrap();
    let stop = StopSignal::new();
    stop.request_after(2);
    let first = run(&p, &d, dir.path(), &stop);
    assert!(first.interrupted);
    let done = first.records[0].clone();
    assert_eq!(done.status, RunStatus::Completed);
    let lines_before = fs::read_to_string(dir.path().join(REGISTRY_FILE)).unwrap();

    let second = run(&p, &d, dir.path(), &StopSignal::new());
    assert_eq!(second.records[0], done);
    assert!(second.records.iter().all(|r| r.status == RunStatus::Completed));
    let lines_after = fs::read_to_string(dir.path().join(REGISTRY_FILE)).unwrap();
    assert!(lines_after.starts_with(&lines_before));
    let appended = &lines_after[lines_before.len()..];
    assert!(!appended.contains(&done.run_id));
}

#[test]
fn finished_sweep_is_a_no_op() {
    let p = plan(vec![8], 2);
    let d = data(0);
    let dir = tempfile::tempdir().unwrap();
    let a = run(&p, &d, dir.path(), &StopSignal::new());
    let before = files(dir.path());
    let b = run(&p, &d, dir.path(), &StopSignal::new());
    assert_eq!(a, b);
    assert_eq!(files(dir.path()), before);
}

#[test]
fn corrupt_registry_is_refused() {
    let p = plan(vec![8], 2);
    let d = data(0);
    let dir = tempfile::tempdir().unwrap();
    run(&p, &d, dir.path(), &StopSignal::new());
    let path = dir.path().join(REGISTRY_FILE);
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("{\"run_id\": \n");
    fs::write(&path, &text).unwrap();
    let clock = StepClock::new(0.5);
    let stop = StopSignal::new();
    let err = execute_sweep(&p, &d, dir.path(), &SweepControl { clock: &clock, stop: &stop });
    assert!(matches!(err, Err(Error::Corruption { .. })), "{err:?}");
    assert_eq!(fs::read_to_string(&path).unwrap(), text);
    assert!(Registry::new(&path).replay().is_err());
}

#[test]
fn resuming_with_different_data_is_refused() {
    let p = plan(vec![8], 2);
    let dir = tempfile::tempdir().unwrap();
    let stop = StopSignal::new();
    stop.request_after(1);
    run(&p, &data(0), dir.path(), &stop);
    let clock = StepClock::new(0.5);
    let stop = StopSignal::new();
    let err = resume_sweep(dir.path(), &data(1), &SweepControl { clock: &clock, stop: &stop });
    assert!(matches!(err, Err(Error::Integrity(_))), "{err:?}");
}

#[test]
fn parallel_workers_reach_the_same_final_records() {
    let mut p = plan(vec![8, 16], 2);
    let d = data(0);
    let seq = tempfile::tempdir().unwrap();
    let a = run(&p, &d, seq.path(), &StopSignal::new());
    p.workers = 2;
    let par = tempfile::tempdir().unwrap();
    let b = run(&p, &d, par.path(), &StopSignal::new());
    let strip = |o: &SweepOutcome| {
        o.records
            .iter()
            .map(|r| (r.run_id.clone(), r.status, r.val_loss))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}
