//! Run reports shared by the engine, the baselines and the benchmark harness.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "QTA")]
    Qta,
    #[serde(rename = "QBSOLV_LIKE")]
    QbsolvLike,
    #[serde(rename = "EXACT")]
    Exact,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Qta => "QTA",
            Method::QbsolvLike => "QBSOLV_LIKE",
            Method::Exact => "EXACT",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    IterationLimit,
    TimeLimit,
    /// The whole instance fits in one cluster, so nothing is left to explore.
    SingleCluster,
    BackendFailures,
    /// The method ran to its own stopping rule.
    Converged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Cost of the tour evaluated at this iteration.
    pub cost: i64,
    pub best_cost: i64,
    pub budget_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub instance_name: String,
    pub method: Method,
    pub backend: String,
    pub best_cost: i64,
    pub best_tour: Vec<usize>,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub fallback_solves: usize,
    pub backend_failures: usize,
    pub seed: u64,
    pub iteration_trace: Vec<TraceEntry>,
    pub termination: Termination,
    pub notes: Vec<String>,
    /// Wall-clock time; left out of JSON so identical runs serialize identically.
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Equality ignores `elapsed`.
impl PartialEq for RunReport {
    fn eq(&self, other: &Self) -> bool {
        self.instance_name == other.instance_name
            && self.method == other.method
            && self.backend == other.backend
            && self.best_cost == other.best_cost
            && self.best_tour == other.best_tour
            && self.backend_calls == other.backend_calls
            && self.cache_hits == other.cache_hits
            && self.cache_misses == other.cache_misses
            && self.fallback_solves == other.fallback_solves
            && self.backend_failures == other.backend_failures
            && self.seed == other.seed
            && self.iteration_trace == other.iteration_trace
            && self.termination == other.termination
            && self.notes == other.notes
    }
}
