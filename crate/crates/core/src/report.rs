use serde::Serialize;

use crate::runtime::CommStats;
use crate::summa::{BatchPlan, StepTimes, SummaRun};

pub const REPORT_SCHEMA: &str = "report_v1";

/// What a numeric run reports: the plan, counters, step times and peaks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub p: usize,
    pub layers: usize,
    pub batches: usize,
    pub plan: Option<BatchPlan>,
    pub budget_words: Option<u64>,
    pub comm: CommStats,
    pub times: StepTimes,
    /// Live-word high-water mark per rank, in rank order.
    pub peak_words: Vec<u64>,
    pub pile_nnz: Vec<u64>,
    pub nnz_c: Option<u64>,
    pub batches_consumed: usize,
}

impl RunReport {
    pub fn new<T>(run: &SummaRun<T>, nnz_c: Option<u64>) -> Self {
        RunReport {
            schema: REPORT_SCHEMA,
            p: run.grid.ranks(),
            layers: run.grid.layers(),
            batches: run.batches,
            plan: run.plan.clone(),
            budget_words: run.budget_words,
            comm: run.stats.clone(),
            times: run.times.clone(),
            peak_words: run.ranks.iter().map(|r| r.peak_words).collect(),
            pile_nnz: run.ranks.iter().map(|r| r.pile_nnz).collect(),
            nnz_c,
            batches_consumed: run.batches_consumed,
        }
    }
}
