//! The decomposition loop: partition, solve each cluster through the cache
//! under a call budget, merge the loops, perturb the partition, repeat.

mod cache;
mod merge;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{
    fallback_solve, solve_cluster_cached, Budget, SolveOptions, SubSolution, TabuDictionary,
    DEFAULT_BUDGET,
};
pub use merge::{best_bridge, greedy_merge, greedy_merge_with_bridges, Bridge};

use crate::backends::exact::HELD_KARP_MAX;
use crate::backends::{Backend, BackendError, SolveError};
use crate::model::{tour_cost, AtspInstance, ModelError, Partition, Tour};
use crate::partition::{
    insertion_perturb, multiform_vns_init, random_feasible_partition, ClusterMetric,
    PartitionError, VnsConfig,
};
use crate::qubo::QuboError;
use crate::report::{Method, RunReport, Termination, TraceEntry};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("backend budget of {max_calls} calls exhausted")]
    BudgetExhausted { max_calls: usize },
    #[error("subsolutions do not cover the instance: {0}")]
    Coverage(String),
    #[error("search ended on an infeasible assignment: {0}")]
    Infeasible(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Multiform,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtaConfig {
    pub max_cluster_size: usize,
    pub budget: usize,
    pub seed: u64,
    pub init: InitMode,
    pub num_reads: usize,
    pub vns: VnsConfig,
    /// Perturbation rounds after the initial evaluation.
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    /// Consecutive failed backend calls tolerated before giving up.
    pub max_consecutive_failures: usize,
}

impl Default for QtaConfig {
    fn default() -> Self {
        Self {
            max_cluster_size: 10,
            budget: DEFAULT_BUDGET,
            seed: 0,
            init: InitMode::Multiform,
            num_reads: 100,
            vns: VnsConfig::default(),
            max_iterations: 10_000,
            time_limit: None,
            max_consecutive_failures: 3,
        }
    }
}

struct Run<'a> {
    instance: &'a AtspInstance,
    backend: &'a dyn Backend,
    options: SolveOptions,
    tabu: TabuDictionary,
    budget: Budget,
    fallback_solves: usize,
    failures: usize,
    consecutive_failures: usize,
    max_consecutive_failures: usize,
}

enum Stop {
    Budget,
    Failures,
}

impl Run<'_> {
    fn solve(&mut self, cluster: &[usize]) -> Result<SubSolution, EngineError> {
        let fallback_before = self.tabu.peek(cluster).is_none();
        match solve_cluster_cached(
            self.instance,
            cluster,
            self.backend,
            &mut self.tabu,
            &mut self.budget,
            &self.options,
        ) {
            Ok(sub) => {
                self.consecutive_failures = 0;
                if fallback_before && sub.fallback {
                    self.fallback_solves += 1;
                }
                Ok(sub)
            }
            Err(EngineError::Backend(_)) => {
                self.failures += 1;
                self.consecutive_failures += 1;
                let sub = fallback_solve(self.instance, cluster)?;
                self.fallback_solves += 1;
                self.tabu.insert(cluster, sub.clone());
                Ok(sub)
            }
            Err(e) => Err(e),
        }
    }

    /// Solves every cluster and merges; `Ok(Err(stop))` when the run must end.
    fn evaluate(&mut self, partition: &Partition) -> Result<Result<Tour, Stop>, EngineError> {
        let mut subs = Vec::with_capacity(partition.num_clusters());
        for cluster in partition.clusters() {
            match self.solve(&cluster) {
                Ok(sub) => subs.push(sub),
                Err(EngineError::BudgetExhausted { .. }) => return Ok(Err(Stop::Budget)),
                Err(e) => return Err(e),
            }
            if self.consecutive_failures >= self.max_consecutive_failures {
                return Ok(Err(Stop::Failures));
            }
        }
        Ok(Ok(greedy_merge(self.instance, &subs)?))
    }
}

fn initial_partitions(
    instance: &AtspInstance,
    config: &QtaConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Partition>, EngineError> {
    let n = instance.dimension();
    if n <= config.max_cluster_size {
        return Ok(vec![Partition::single(n)]);
    }
    match config.init {
        InitMode::Random => Ok(vec![random_feasible_partition(n, config.max_cluster_size, rng)?]),
        InitMode::Multiform => {
            let vns = VnsConfig {
                seed: config.seed,
                ..config.vns.clone()
            };
            let out = multiform_vns_init(instance, config.max_cluster_size, &vns)?;
            let mut parts: Vec<Partition> = Vec::new();
            for metric in ClusterMetric::ALL {
                let p = out.partitions[&metric].compacted();
                if !parts.contains(&p) {
                    parts.push(p);
                }
            }
            Ok(parts)
        }
    }
}

/// Runs the decomposition loop on `instance`, drawing every backend call
/// from one shared budget. Always returns a complete tour: if the budget
/// runs out before any cluster is solved, the remaining clusters are closed
/// with the classical fallback and a note says so.
pub fn run_qta(
    instance: &AtspInstance,
    config: &QtaConfig,
    backend: &dyn Backend,
) -> Result<RunReport, EngineError> {
    let started = Instant::now();
    let n = instance.dimension();
    if config.max_cluster_size < 2 || config.max_cluster_size > HELD_KARP_MAX {
        return Err(EngineError::Config(format!(
            "max_cluster_size must lie in 2..={HELD_KARP_MAX}, got {}",
            config.max_cluster_size
        )));
    }
    if config.num_reads == 0 {
        return Err(EngineError::Config("num_reads must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut run = Run {
        instance,
        backend,
        options: SolveOptions {
            num_reads: config.num_reads,
            seed: config.seed,
            max_cluster_size: config.max_cluster_size,
        },
        tabu: TabuDictionary::new(),
        budget: Budget::new(config.budget),
        fallback_solves: 0,
        failures: 0,
        consecutive_failures: 0,
        max_consecutive_failures: config.max_consecutive_failures.max(1),
    };
    let mut notes = Vec::new();
    let mut trace = Vec::new();
    let mut best: Option<(Tour, Partition)> = None;
    let mut termination = None;
    let mut iteration = 0usize;

    let candidates = initial_partitions(instance, config, &mut rng)?;
    for cand in &candidates {
        match run.evaluate(cand)? {
            Ok(tour) => {
                if best.as_ref().is_none_or(|(b, _)| tour.cost() < b.cost()) {
                    best = Some((tour.clone(), cand.clone()));
                }
                trace.push(TraceEntry {
                    iteration,
                    cost: tour.cost(),
                    best_cost: best.as_ref().map_or(tour.cost(), |(b, _)| b.cost()),
                    budget_used: run.budget.used(),
                });
            }
            Err(stop) => {
                termination = Some(stop);
                break;
            }
        }
    }

    let single = candidates.len() == 1 && candidates[0].num_clusters() == 1;
    let mut reason = match termination {
        Some(Stop::Budget) => Termination::BudgetExhausted,
        Some(Stop::Failures) => Termination::BackendFailures,
        None if single => Termination::SingleCluster,
        None => Termination::IterationLimit,
    };

    if termination.is_none() && !single {
        while iteration < config.max_iterations {
            if config.time_limit.is_some_and(|t| started.elapsed() >= t) {
                reason = Termination::TimeLimit;
                break;
            }
            iteration += 1;
            let (incumbent_tour, incumbent) = best.as_ref().expect("evaluated at least once");
            let incumbent_cost = incumbent_tour.cost();
            let next = match insertion_perturb(incumbent, config.max_cluster_size, &mut rng) {
                Ok(p) => p,
                Err(PartitionError::NoLegalMove) => {
                    random_feasible_partition(n, config.max_cluster_size, &mut rng)?
                }
                Err(e) => return Err(e.into()),
            };
            match run.evaluate(&next)? {
                Ok(tour) => {
                    let cost = tour.cost();
                    if cost < incumbent_cost {
                        best = Some((tour, next));
                    }
                    trace.push(TraceEntry {
                        iteration,
                        cost,
                        best_cost: cost.min(incumbent_cost),
                        budget_used: run.budget.used(),
                    });
                }
                Err(Stop::Budget) => {
                    reason = Termination::BudgetExhausted;
                    break;
                }
                Err(Stop::Failures) => {
                    reason = Termination::BackendFailures;
                    break;
                }
            }
        }
    }

    let best_tour = match best {
        Some((tour, _)) => tour,
        None => {
            // budget gone before a full pass: close the first candidate classically
            let mut subs = Vec::new();
            for cluster in candidates[0].clusters() {
                match run.tabu.peek(&cluster) {
                    Some(sub) => subs.push(sub.clone()),
                    None => {
                        subs.push(fallback_solve(instance, &cluster)?);
                        run.fallback_solves += 1;
                    }
                }
            }
            notes.push(format!(
                "budget of {} backend calls ran out before a complete pass; unsolved clusters were closed by the classical fallback",
                config.budget
            ));
            let tour = greedy_merge(instance, &subs)?;
            trace.push(TraceEntry {
                iteration,
                cost: tour.cost(),
                best_cost: tour.cost(),
                budget_used: run.budget.used(),
            });
            tour
        }
    };
    if run.fallback_solves > 0 {
        notes.push(format!("{} cluster(s) solved by the classical fallback", run.fallback_solves));
    }
    if run.failures > 0 {
        notes.push(format!("{} backend call(s) failed and were not charged", run.failures));
    }
    debug_assert_eq!(tour_cost(instance, best_tour.nodes()).ok(), Some(best_tour.cost()));

    Ok(RunReport {
        instance_name: instance.name().to_string(),
        method: Method::Qta,
        backend: backend.name(),
        best_cost: best_tour.cost(),
        best_tour: best_tour.nodes().to_vec(),
        backend_calls: run.budget.used(),
        cache_hits: run.tabu.hits(),
        cache_misses: run.tabu.misses(),
        fallback_solves: run.fallback_solves,
        backend_failures: run.failures,
        seed: config.seed,
        iteration_trace: trace,
        termination: reason,
        notes,
        elapsed: started.elapsed(),
    })
}
