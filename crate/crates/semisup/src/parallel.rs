//! Replications in parallel on a rayon pool.
//!
//! Each replication is a pure function of the plan and its index, and the
//! records are sorted by index before aggregation, so the result does not
//! depend on the worker count.

use rayon::prelude::*;
use semisup_core::harness::{self, ExperimentPlan, HarnessError, PowerCurve, RepRecord, Runner, SummaryTable};
use semisup_core::estimators::estimate;

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

/// Available parallelism, or 1 when unknown.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn run_records(plan: &ExperimentPlan, workers: usize, runner: &Runner<'_>) -> Result<Vec<RepRecord>, HarnessError> {
    let mut records = pool(workers).install(|| {
        (0..plan.reps)
            .into_par_iter()
            .map(|rep| harness::run_replication(plan, rep, runner))
            .collect::<Result<Vec<_>, _>>()
    })?;
    records.sort_by_key(|r| r.rep);
    Ok(records)
}

pub fn run_table(plan: &ExperimentPlan, workers: usize) -> Result<SummaryTable, HarnessError> {
    run_table_with(plan, workers, &estimate)
}

pub fn run_table_with(plan: &ExperimentPlan, workers: usize, runner: &Runner<'_>) -> Result<SummaryTable, HarnessError> {
    plan.validate()?;
    harness::summarize(plan, &run_records(plan, workers, runner)?)
}

pub fn run_power(plan: &ExperimentPlan, workers: usize) -> Result<PowerCurve, HarnessError> {
    harness::validate_power_plan(plan)?;
    harness::power_curve(plan, &run_records(plan, workers, &estimate)?)
}
