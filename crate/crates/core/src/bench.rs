//! Repeated seeded runs per instance and method, summarised as
//! average / population standard deviation / best / mean backend calls.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::exact::HELD_KARP_MAX;
use crate::backends::{solve_exact_heldkarp, solve_qbsolv_like, Backend, QbsolvConfig};
use crate::engine::{run_qta, EngineError, QtaConfig};
use crate::model::AtspInstance;
use crate::qubo::{build_atsp_qubo, decode, Decoded};
use crate::report::{Method, RunReport, Termination, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    Qta,
    Qbsolv,
    Exact,
}

impl FromStr for BenchMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qta" => Ok(Self::Qta),
            "qbsolv" => Ok(Self::Qbsolv),
            "exact" => Ok(Self::Exact),
            other => Err(format!("unknown method `{other}` (expected qta, qbsolv or exact)")),
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Qta => "qta",
            Self::Qbsolv => "qbsolv",
            Self::Exact => "exact",
        })
    }
}

/// Full-instance QUBO solved by the decomposing baseline, started from a
/// seeded random permutation. One backend call per sub-QUBO.
pub fn run_qbsolv_method(
    instance: &AtspInstance,
    config: &QbsolvConfig,
    backend: &dyn Backend,
) -> Result<RunReport, EngineError> {
    let started = Instant::now();
    let n = instance.dimension();
    let matrix = build_atsp_qubo(instance, &(0..n).collect::<Vec<_>>(), None, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let start = matrix.encode(&order);
    let block = config.subqubo_size.min(matrix.n_vars());
    let cfg = QbsolvConfig {
        subqubo_size: block,
        ..config.clone()
    };
    let out = solve_qbsolv_like(matrix.qubo(), Some(start), &cfg, backend)?;
    let tour = match decode(&matrix, instance, &out.bits)? {
        Decoded::Feasible(t) => t,
        Decoded::Infeasible(report) => {
            return Err(EngineError::Infeasible(format!("{report:?}")));
        }
    };
    Ok(RunReport {
        instance_name: instance.name().to_string(),
        method: Method::QbsolvLike,
        backend: backend.name(),
        best_cost: tour.cost(),
        best_tour: tour.nodes().to_vec(),
        backend_calls: out.backend_calls,
        cache_hits: 0,
        cache_misses: 0,
        fallback_solves: 0,
        backend_failures: 0,
        seed: config.seed,
        iteration_trace: vec![TraceEntry {
            iteration: out.outer_iterations,
            cost: tour.cost(),
            best_cost: tour.cost(),
            budget_used: out.backend_calls,
        }],
        termination: Termination::Converged,
        notes: vec![format!(
            "{} outer passes over {} variables in blocks of {block}; one backend call per block",
            out.outer_iterations,
            matrix.n_vars()
        )],
        elapsed: started.elapsed(),
    })
}

/// Held-Karp over the whole instance.
pub fn run_exact_method(instance: &AtspInstance) -> Result<RunReport, EngineError> {
    let started = Instant::now();
    let n = instance.dimension();
    if n > HELD_KARP_MAX {
        return Err(EngineError::Config(format!(
            "exact method handles at most {HELD_KARP_MAX} nodes, instance has {n}"
        )));
    }
    let tour = solve_exact_heldkarp(instance, &(0..n).collect::<Vec<_>>())?;
    Ok(RunReport {
        instance_name: instance.name().to_string(),
        method: Method::Exact,
        backend: "held-karp".into(),
        best_cost: tour.cost(),
        best_tour: tour.nodes().to_vec(),
        backend_calls: 0,
        cache_hits: 0,
        cache_misses: 0,
        fallback_solves: 0,
        backend_failures: 0,
        seed: 0,
        iteration_trace: vec![TraceEntry {
            iteration: 0,
            cost: tour.cost(),
            best_cost: tour.cost(),
            budget_used: 0,
        }],
        termination: Termination::Converged,
        notes: Vec::new(),
        elapsed: started.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub reps: usize,
    pub base_seed: u64,
    pub methods: Vec<BenchMethod>,
    pub qta: QtaConfig,
    pub qbsolv: QbsolvConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            reps: 20,
            base_seed: 0,
            methods: vec![BenchMethod::Qta, BenchMethod::Qbsolv],
            qta: QtaConfig::default(),
            qbsolv: QbsolvConfig::default(),
        }
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub method: Method,
    pub avg: f64,
    /// Population standard deviation.
    pub std: f64,
    pub best: i64,
    pub avg_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub summary: BenchSummary,
    /// Per-run reports, grouped by instance then method, sorted by seed.
    pub runs: Vec<RunReport>,
}

/// Aggregates the reports of one instance and method.
pub fn summarize(instance: &str, method: Method, reports: &[RunReport]) -> BenchRow {
    let costs: Vec<f64> = reports.iter().map(|r| r.best_cost as f64).collect();
    let k = costs.len().max(1) as f64;
    let avg = costs.iter().sum::<f64>() / k;
    let var = costs.iter().map(|c| (c - avg).powi(2)).sum::<f64>() / k;
    BenchRow {
        instance: instance.to_string(),
        method,
        avg,
        std: var.sqrt(),
        best: reports.iter().map(|r| r.best_cost).min().unwrap_or(0),
        avg_calls: reports.iter().map(|r| r.backend_calls as f64).sum::<f64>() / k,
    }
}

pub fn run_once(
    instance: &AtspInstance,
    method: BenchMethod,
    seed: u64,
    config: &BenchConfig,
    backend: &dyn Backend,
) -> Result<RunReport, EngineError> {
    match method {
        BenchMethod::Qta => run_qta(
            instance,
            &QtaConfig {
                seed,
                ..config.qta.clone()
            },
            backend,
        ),
        BenchMethod::Qbsolv => run_qbsolv_method(
            instance,
            &QbsolvConfig {
                seed,
                ..config.qbsolv.clone()
            },
            backend,
        ),
        BenchMethod::Exact => run_exact_method(instance),
    }
}

/// Runs `reps` repetitions with seeds `base_seed + k` for every instance
/// and method.
pub fn run_bench(
    instances: &[AtspInstance],
    config: &BenchConfig,
    backend: &dyn Backend,
) -> Result<BenchOutcome, EngineError> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for instance in instances {
        for &method in &config.methods {
            let reps = if method == BenchMethod::Exact { 1 } else { config.reps };
            let mut reports = Vec::with_capacity(reps);
            for k in 0..reps {
                let seed = config.base_seed.wrapping_add(k as u64);
                reports.push(run_once(instance, method, seed, config, backend)?);
            }
            reports.sort_by_key(|r| r.seed);
            let method = reports.first().map_or(Method::Qta, |r| r.method);
            rows.push(summarize(instance.name(), method, &reports));
            runs.extend(reports);
        }
    }
    Ok(BenchOutcome {
        summary: BenchSummary { rows },
        runs,
    })
}

pub const CSV_HEADER: &str = "instance,method,avg,std,best,avg_calls";

impl BenchSummary {
    /// CSV with header `instance,method,avg,std,best,avg_calls`; `std` is
    /// the population standard deviation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.instance,
                r.method,
                json_number(r.avg),
                json_number(r.std),
                r.best,
                json_number(r.avg_calls)
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:<12} {:>12} {:>10} {:>10} {:>10}\n",
            "Instance", "Method", "Avg", "Std", "Best", "AvgCalls"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<14} {:<12} {:>12.1} {:>10.1} {:>10} {:>10.1}\n",
                r.instance, r.method, r.avg, r.std, r.best, r.avg_calls
            ));
        }
        out
    }
}

/// Same digits serde_json writes, so CSV and JSON agree textually.
fn json_number(x: f64) -> String {
    serde_json::to_string(&x).expect("finite number")
}

/// Writes `summary.csv`, `summary.json` and one `runs/<instance>-<method>-<seed>.json`
/// per repetition.
pub fn write_outputs(outcome: &BenchOutcome, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir.join("runs"))?;
    std::fs::write(dir.join("summary.csv"), outcome.summary.to_csv())?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&outcome.summary).map_err(std::io::Error::other)?,
    )?;
    for r in &outcome.runs {
        let name = format!("{}-{}-{}.json", r.instance_name, r.method.label().to_lowercase(), r.seed);
        std::fs::write(
            dir.join("runs").join(name),
            serde_json::to_string_pretty(r).map_err(std::io::Error::other)?,
        )?;
    }
    Ok(())
}
