//! Sequential (optionally multi-worker) execution of a sweep under budgets,
//! with per-epoch checkpoints so an interrupted sweep resumes exactly.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::grid::{expand_grid, Budget, SweepGrid};
use super::prepare::PreparedData;
use super::registry::{
    append_metrics, read_metrics, MetricLine, Registry, RunRecord, RunStatus, METRICS_FILE,
    REGISTRY_FILE,
};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::train::{
    detect_divergence, eval_batches, fit_epoch, load_state, save_state, Clock, Divergence,
    StopSignal, TrainConfig, TrainState, DIVERGENCE_PATIENCE, DIVERGENCE_THRESHOLD,
};

pub const PLAN_FILE: &str = "plan.json";
pub const RUNS_DIR: &str = "runs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub grid: SweepGrid,
    pub budget: Budget,
    pub train: TrainConfig,
    pub seed: u64,
    pub max_len: usize,
    /// Runs trained concurrently. 1 reproduces the single-device protocol;
    /// with more, elapsed times are not comparable across runs.
    pub workers: usize,
    pub divergence_threshold: f64,
    pub divergence_patience: usize,
}

impl SweepPlan {
    pub fn new(grid: SweepGrid, budget: Budget, train: TrainConfig, seed: u64) -> Self {
        SweepPlan {
            grid,
            budget,
            train,
            seed,
            max_len: crate::data::DEFAULT_MAX_LEN,
            workers: 1,
            divergence_threshold: DIVERGENCE_THRESHOLD,
            divergence_patience: DIVERGENCE_PATIENCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        self.train.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.divergence_patience == 0 {
            return Err(Error::Config("divergence patience must be positive".into()));
        }
        Ok(())
    }

    /// One pending record per grid point, in grid order.
    pub fn records(&self, data: &PreparedData) -> Result<Vec<RunRecord>> {
        expand_grid(&self.grid)?
            .iter()
            .map(|p| {
                let cfg = p.config(data.src_vocab.len(), data.tgt_vocab.len(), self.seed, self.max_len);
                cfg.validate()?;
                let mut train = self.train.clone();
                train.adam.learning_rate = self.grid.learning_rate_for(p, train.adam.learning_rate);
                let cap = self.grid.epoch_cap_for(p, self.budget.epoch_cap);
                Ok(RunRecord::pending(cfg, train, &data.data_hash, cap))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PlanFile {
    plan: SweepPlan,
    data_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    /// Current record of every planned run, in grid order.
    pub records: Vec<RunRecord>,
    /// A stop request ended the sweep early; rerun with [`resume_sweep`].
    pub interrupted: bool,
}

/// Interruption and timing hooks.
pub struct SweepControl<'a> {
    pub clock: &'a dyn Clock,
    pub stop: &'a StopSignal,
}

enum RunEnd {
    Finished,
    BudgetExhausted,
    Interrupted,
}

struct Shared<'a> {
    plan: &'a SweepPlan,
    data: &'a PreparedData,
    out_dir: &'a Path,
    registry: Registry,
    write_lock: Mutex<()>,
    ctl: &'a SweepControl<'a>,
    start: f64,
}

impl Shared<'_> {
    fn record(&self, rec: &RunRecord) -> Result<()> {
        let _g = self.write_lock.lock().unwrap();
        self.registry.append(rec)
    }

    fn metrics(&self, line: &MetricLine) -> Result<()> {
        let _g = self.write_lock.lock().unwrap();
        append_metrics(&self.out_dir.join(METRICS_FILE), line)
    }

    fn global_budget_spent(&self) -> bool {
        self.ctl.clock.now_seconds() - self.start >= self.plan.budget.wall_clock_cap_seconds
    }
}

pub fn run_dir(out_dir: &Path, run_id: &str) -> PathBuf {
    out_dir.join(RUNS_DIR).join(run_id)
}

pub fn state_dir(out_dir: &Path, run_id: &str) -> PathBuf {
    run_dir(out_dir, run_id).join("state")
}

fn halted(rec: &RunRecord, state: &TrainState, status: RunStatus, epoch: usize, reason: String) -> RunRecord {
    log::warn!("{} halted at epoch {epoch}: {reason}", rec.label);
    RunRecord {
        halt_epoch: Some(epoch),
        halt_reason: Some(reason),
        ..rec.with_progress(status, &state.history)
    }
}

fn run_one(sh: &Shared, rec: &RunRecord) -> Result<RunEnd> {
    let ckpt = state_dir(sh.out_dir, &rec.run_id);
    let mut state: TrainState = if rec.status == RunStatus::Running && ckpt.exists() {
        let st: TrainState = load_state(&ckpt)?;
        if st.params.config() != &rec.config || st.train != rec.train {
            return Err(Error::Integrity(format!(
                "checkpoint of run {} does not match its registry record",
                rec.run_id
            )));
        }
        st
    } else {
        TrainState::new(&rec.config, rec.train.clone())?
    };
    if rec.status == RunStatus::Pending {
        sh.record(&rec.with_progress(RunStatus::Running, &[]))?;
    }

    // Repair the tail a crash may have left between checkpoint, metric
    // stream and registry writes.
    if state.epoch > 0 {
        let seen: Vec<usize> = read_metrics(&sh.out_dir.join(METRICS_FILE))?
            .into_iter()
            .filter(|m| m.run_id == rec.run_id)
            .map(|m| m.metrics.epoch)
            .collect();
        for m in state.history.iter().filter(|m| !seen.contains(&m.epoch)) {
            sh.metrics(&MetricLine {
                run_id: rec.run_id.clone(),
                label: rec.label.clone(),
                metrics: m.clone(),
            })?;
        }
        if rec.epochs_completed < state.epoch {
            sh.record(&rec.with_progress(RunStatus::Running, &state.history))?;
        }
    }

    let val = eval_batches(&sh.data.val, state.train.batch_size)?;
    loop {
        if let Divergence::Halt { epoch, reason } =
            detect_divergence(&state.history, sh.plan.divergence_threshold, sh.plan.divergence_patience)
        {
            sh.record(&halted(rec, &state, RunStatus::HaltedDivergent, epoch, reason))?;
            return Ok(RunEnd::Finished);
        }
        if state.epoch >= rec.epoch_cap {
            sh.record(&rec.with_progress(RunStatus::Completed, &state.history))?;
            return Ok(RunEnd::Finished);
        }
        if sh.ctl.stop.is_requested() {
            return Ok(RunEnd::Interrupted);
        }
        if sh.global_budget_spent() {
            let reason = "global wall-clock cap reached".to_string();
            sh.record(&halted(rec, &state, RunStatus::HaltedBudget, state.epoch, reason))?;
            return Ok(RunEnd::BudgetExhausted);
        }
        if let Some(cap) = sh.plan.budget.per_run_wall_cap_seconds {
            if state.history.iter().map(|m| m.wall_seconds).sum::<f64>() >= cap {
                let reason = "per-run wall-clock cap reached".to_string();
                sh.record(&halted(rec, &state, RunStatus::HaltedBudget, state.epoch, reason))?;
                return Ok(RunEnd::Finished);
            }
        }

        let metrics = fit_epoch(&mut state, &sh.data.train, &val, sh.ctl.clock)?;
        log::info!(
            "{} epoch {}/{}: train loss {:.4}, val loss {:.4}, val acc {:.4}, val ppl {:.4}",
            rec.label,
            metrics.epoch,
            rec.epoch_cap,
            metrics.train_loss,
            metrics.val_loss,
            metrics.val_acc,
            metrics.val_perplexity
        );
        save_state(&state, &ckpt)?;
        sh.metrics(&MetricLine {
            run_id: rec.run_id.clone(),
            label: rec.label.clone(),
            metrics,
        })?;
        let diverged = matches!(
            detect_divergence(&state.history, sh.plan.divergence_threshold, sh.plan.divergence_patience),
            Divergence::Halt { .. }
        );
        // Terminal transitions are written at the top of the loop.
        if !diverged && state.epoch < rec.epoch_cap {
            sh.record(&rec.with_progress(RunStatus::Running, &state.history))?;
        }
        sh.ctl.stop.epoch_done();
    }
}

fn check_plan_file(out_dir: &Path, file: &PlanFile) -> Result<()> {
    let path = out_dir.join(PLAN_FILE);
    let text = serde_json::to_string_pretty(file).map_err(|e| Error::Contract(e.to_string()))?;
    match fs::read_to_string(&path) {
        Ok(existing) => {
            let prev: PlanFile = serde_json::from_str(&existing)
                .map_err(|e| Error::corrupt("sweep plan", &path, e.to_string()))?;
            if prev.data_hash != file.data_hash {
                return Err(Error::Integrity(format!(
                    "data hash {} differs from the sweep's recorded {}",
                    file.data_hash, prev.data_hash
                )));
            }
            if prev.plan != file.plan {
                return Err(Error::Integrity(format!(
                    "{} already holds a different sweep plan",
                    out_dir.display()
                )));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => write_atomic(&path, text.as_bytes()),
        Err(e) => Err(Error::io(&path, e)),
    }
}

/// Runs every unfinished configuration of `plan` under its budgets.
/// Finished runs recorded in `out_dir` are left untouched.
pub fn execute_sweep(
    plan: &SweepPlan,
    data: &PreparedData,
    out_dir: &Path,
    ctl: &SweepControl,
) -> Result<SweepOutcome> {
    plan.validate()?;
    let registry = Registry::new(out_dir.join(REGISTRY_FILE));
    // Refuse to touch a corrupt registry before writing anything.
    let existing = registry.replay()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    check_plan_file(
        out_dir,
        &PlanFile {
            plan: plan.clone(),
            data_hash: data.data_hash.clone(),
        },
    )?;
    data.save(out_dir)?;

    let planned = plan.records(data)?;
    let mut current: HashMap<String, RunRecord> =
        existing.into_iter().map(|r| (r.run_id.clone(), r)).collect();
    if let Some(stray) = current.keys().find(|id| !planned.iter().any(|p| &p.run_id == *id)) {
        return Err(Error::Integrity(format!(
            "registry run {stray} is not part of this plan and data"
        )));
    }
    for p in &planned {
        if !current.contains_key(&p.run_id) {
            registry.append(p)?;
            current.insert(p.run_id.clone(), p.clone());
        }
    }

    let shared = Shared {
        plan,
        data,
        out_dir,
        registry: registry.clone(),
        write_lock: Mutex::new(()),
        ctl,
        start: ctl.clock.now_seconds(),
    };
    let next = AtomicUsize::new(0);
    let halt = AtomicBool::new(false);
    let interrupted = AtomicBool::new(false);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let work = || loop {
        if halt.load(Ordering::SeqCst) {
            break;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(rec) = planned.get(i).map(|p| &current[&p.run_id]) else {
            break;
        };
        if rec.status.is_terminal() {
            continue;
        }
        match run_one(&shared, rec) {
            Ok(RunEnd::Finished) => {
                if shared.global_budget_spent() {
                    halt.store(true, Ordering::SeqCst);
                }
            }
            Ok(RunEnd::BudgetExhausted) => halt.store(true, Ordering::SeqCst),
            Ok(RunEnd::Interrupted) => {
                interrupted.store(true, Ordering::SeqCst);
                halt.store(true, Ordering::SeqCst);
            }
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                halt.store(true, Ordering::SeqCst);
            }
        }
    };
    if plan.workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..plan.workers {
                s.spawn(work);
            }
        });
    }
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    let latest: HashMap<String, RunRecord> =
        registry.replay()?.into_iter().map(|r| (r.run_id.clone(), r)).collect();
    Ok(SweepOutcome {
        records: planned.iter().map(|p| latest[&p.run_id].clone()).collect(),
        interrupted: interrupted.into_inner(),
    })
}

/// Reads the plan stored in `out_dir` and continues it. `data` must
/// reproduce the recorded data hash.
pub fn resume_sweep(out_dir: &Path, data: &PreparedData, ctl: &SweepControl) -> Result<SweepOutcome> {
    let plan = load_plan(out_dir)?;
    execute_sweep(&plan, data, out_dir, ctl)
}

pub fn load_plan(out_dir: &Path) -> Result<SweepPlan> {
    let path = out_dir.join(PLAN_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: PlanFile =
        serde_json::from_str(&text).map_err(|e| Error::corrupt("sweep plan", &path, e.to_string()))?;
    Ok(file.plan)
}
