mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use qta_core::backends::remote::TOKEN_ENV;
use qta_core::backends::{
    Backend, ExactBackend, LoopbackServer, QbsolvConfig, RemoteBackend, SimulatedAnnealing,
};
use qta_core::bench::{run_bench, write_outputs, BenchConfig, BenchMethod};
use qta_core::engine::{run_qta, EngineError, InitMode, QtaConfig};
use qta_core::partition::VnsConfig;
use qta_core::qubo::build_atsp_qubo;
use qta_core::tsplib::read_instance;
use qta_core::{AtspInstance, RunReport};

use settings::{FileSettings, SettingsError};

#[derive(Parser)]
#[command(name = "qta", version, about = "Decomposition solver for asymmetric TSP instances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Exact,
    Sa,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InitKind {
    Multiform,
    Random,
}

impl std::str::FromStr for InitKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(clap::Args)]
struct BackendArgs {
    /// Cluster sampler [default: sa]
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// URL of the sampling service (remote backend); token read from QTA_REMOTE_TOKEN
    #[arg(long)]
    endpoint: Option<String>,
    /// Annealing sweeps per read [default: 1000]
    #[arg(long)]
    sweeps: Option<usize>,
}

#[derive(clap::Args)]
struct EngineArgs {
    /// Largest cluster handed to the backend [default: 10]
    #[arg(long)]
    max_cluster_size: Option<usize>,
    /// Backend calls allowed per run [default: 40]
    #[arg(long)]
    budget: Option<usize>,
    /// Starting partitions [default: multiform]
    #[arg(long, value_enum)]
    init: Option<InitKind>,
    /// Samples requested per backend call [default: 100]
    #[arg(long)]
    num_reads: Option<usize>,
    /// Search rounds per metric in the initial partitioning [default: 200]
    #[arg(long)]
    vns_iterations: Option<usize>,
    /// Wall-clock limit per run in seconds
    #[arg(long)]
    time_limit_secs: Option<f64>,
    /// key = value file; flags take precedence over it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the run report as JSON
    Solve {
        /// TSPLIB instance file
        instance: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Random seed [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated seeded runs per instance and method
    Bench {
        /// Instance files, or directories searched for *.atsp
        #[arg(required = true)]
        instances: Vec<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Repetitions per instance and method [default: 20]
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated subset of qta, qbsolv, exact [default: qta,qbsolv]
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<BenchMethod>>,
        /// Repetition k uses seed base_seed + k [default: 0]
        #[arg(long)]
        base_seed: Option<u64>,
        /// Variables per block for the qbsolv baseline [default: 47]
        #[arg(long)]
        subqubo_size: Option<usize>,
        /// Stale passes before the qbsolv baseline stops [default: 10]
        #[arg(long)]
        max_outer_iterations: Option<usize>,
        /// Directory for summary.csv, summary.json and per-run reports
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write the QUBO of a node cluster in sparse text form
    QuboExport {
        instance: PathBuf,
        /// Comma-separated node indices
        #[arg(long, value_delimiter = ',', required_unless_present = "full", conflicts_with = "full")]
        nodes: Option<Vec<usize>>,
        /// Export the whole instance
        #[arg(long)]
        full: bool,
        /// Largest cluster accepted with --nodes
        #[arg(long, default_value_t = 10)]
        max_cluster_size: usize,
        /// Largest variable count accepted with --full
        #[arg(long, default_value_t = 2500)]
        max_vars: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the remote sampling protocol over the local annealer
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// Bearer token clients must send; defaults to QTA_REMOTE_TOKEN
        #[arg(long)]
        token: Option<String>,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[arg(long, default_value_t = 1000)]
        sweeps: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn file(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<SettingsError> for Failure {
    fn from(e: SettingsError) -> Self {
        match e {
            SettingsError::Io(m) => Failure::file(m),
            SettingsError::Invalid(m) => Failure::usage(m),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Partition(_) | EngineError::Qubo(_) => {
                Failure::usage(e.to_string())
            }
            other => Failure::file(other.to_string()),
        }
    }
}

fn load_settings(path: Option<&Path>) -> Result<FileSettings, Failure> {
    match path {
        Some(p) => Ok(FileSettings::load(p)?),
        None => Ok(FileSettings::default()),
    }
}

fn load_instance(path: &Path) -> Result<AtspInstance, Failure> {
    read_instance(path).map_err(|e| Failure::file(format!("{}: {e}", path.display())))
}

fn make_backend(args: &BackendArgs, file: &FileSettings) -> Result<Box<dyn Backend>, Failure> {
    let kind = file.pick(args.backend, "backend", BackendKind::Sa)?;
    let sweeps = file.pick(args.sweeps, "sweeps", 1000usize)?;
    Ok(match kind {
        BackendKind::Exact => Box::new(ExactBackend),
        BackendKind::Sa => Box::new(SimulatedAnnealing::with_sweeps(sweeps)),
        BackendKind::Remote => {
            let endpoint = file
                .pick_opt(args.endpoint.clone(), "endpoint")?
                .ok_or_else(|| Failure::usage("--backend remote needs --endpoint"))?;
            Box::new(RemoteBackend::from_env(endpoint))
        }
    })
}

fn qta_config(args: &EngineArgs, file: &FileSettings, seed: u64) -> Result<QtaConfig, Failure> {
    let defaults = QtaConfig::default();
    let iterations = file.pick(args.vns_iterations, "vns_iterations", defaults.vns.iterations)?;
    let migration = file.pick(None, "migration_interval", (iterations / 5).max(1))?;
    let time_limit = file
        .pick_opt(args.time_limit_secs, "time_limit_secs")?
        .map(|s: f64| {
            if s.is_finite() && s >= 0.0 {
                Ok(Duration::from_secs_f64(s))
            } else {
                Err(Failure::usage("time limit must be a non-negative number of seconds"))
            }
        })
        .transpose()?;
    Ok(QtaConfig {
        max_cluster_size: file.pick(args.max_cluster_size, "max_cluster_size", defaults.max_cluster_size)?,
        budget: file.pick(args.budget, "budget", defaults.budget)?,
        seed,
        init: match file.pick(args.init, "init", InitKind::Multiform)? {
            InitKind::Multiform => InitMode::Multiform,
            InitKind::Random => InitMode::Random,
        },
        num_reads: file.pick(args.num_reads, "num_reads", defaults.num_reads)?,
        vns: VnsConfig {
            iterations,
            migration_interval: migration,
            ..defaults.vns
        },
        max_iterations: file.pick(None, "max_iterations", defaults.max_iterations)?,
        time_limit,
        ..defaults
    })
}

fn summary_line(r: &RunReport) -> String {
    format!(
        "{} [{} / {}] best {} | backend calls {} | cache hits {} misses {} | fallback {} | {:?} | {:.2}s",
        r.instance_name,
        r.method,
        r.backend,
        r.best_cost,
        r.backend_calls,
        r.cache_hits,
        r.cache_misses,
        r.fallback_solves,
        r.termination,
        r.elapsed.as_secs_f64()
    )
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::file(format!("{}: {e}", path.display())))
}

fn cmd_solve(
    instance: &Path,
    backend: &BackendArgs,
    engine: &EngineArgs,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let file = load_settings(engine.config.as_deref())?;
    let seed = file.pick(seed, "seed", 0u64)?;
    let config = qta_config(engine, &file, seed)?;
    let sampler = make_backend(backend, &file)?;
    let inst = load_instance(instance)?;
    let report = run_qta(&inst, &config, sampler.as_ref())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = out {
        write_file(path, &json)?;
    }
    eprintln!("{}", summary_line(&report));
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn collect_instances(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| Failure::file(format!("{}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "atsp"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Failure::file("no instance files found"));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    instances: &[PathBuf],
    backend: &BackendArgs,
    engine: &EngineArgs,
    reps: Option<usize>,
    methods: Option<Vec<BenchMethod>>,
    base_seed: Option<u64>,
    subqubo_size: Option<usize>,
    max_outer_iterations: Option<usize>,
    out_dir: Option<&Path>,
) -> Result<(), Failure> {
    let file = load_settings(engine.config.as_deref())?;
    let methods = match methods {
        Some(m) => m,
        None => match file.pick_opt::<String>(None, "methods")? {
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse().map_err(Failure::usage))
                .collect::<Result<_, _>>()?,
            None => BenchConfig::default().methods,
        },
    };
    let qbsolv_defaults = QbsolvConfig::default();
    let config = BenchConfig {
        reps: file.pick(reps, "reps", 20usize)?,
        base_seed: file.pick(base_seed, "base_seed", 0u64)?,
        methods,
        qta: qta_config(engine, &file, 0)?,
        qbsolv: QbsolvConfig {
            subqubo_size: file.pick(subqubo_size, "subqubo_size", qbsolv_defaults.subqubo_size)?,
            max_outer_iterations: file.pick(
                max_outer_iterations,
                "max_outer_iterations",
                qbsolv_defaults.max_outer_iterations,
            )?,
            num_reads: file.pick(None, "qbsolv_num_reads", qbsolv_defaults.num_reads)?,
            ..qbsolv_defaults
        },
    };
    if config.reps == 0 {
        return Err(Failure::usage("--reps must be at least 1"));
    }
    let sampler = make_backend(backend, &file)?;
    let insts = collect_instances(instances)?
        .iter()
        .map(|p| load_instance(p))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = run_bench(&insts, &config, sampler.as_ref())?;
    print!("{}", outcome.summary.to_csv());
    eprint!("{}", outcome.summary.to_table());
    if let Some(dir) = out_dir {
        write_outputs(&outcome, dir).map_err(|e| Failure::file(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn cmd_qubo_export(
    instance: &Path,
    nodes: Option<&[usize]>,
    full: bool,
    max_cluster_size: usize,
    max_vars: usize,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let inst = load_instance(instance)?;
    let n = inst.dimension();
    let (cluster, cap): (Vec<usize>, usize) = if full {
        if n * n > max_vars {
            return Err(Failure::usage(format!(
                "full QUBO of {n} nodes has {} variables, above the cap of {max_vars}",
                n * n
            )));
        }
        ((0..n).collect(), n)
    } else {
        (nodes.unwrap_or_default().to_vec(), max_cluster_size)
    };
    let matrix = build_atsp_qubo(&inst, &cluster, None, cap).map_err(|e| Failure::usage(e.to_string()))?;
    let text = matrix.to_text();
    match out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    eprintln!(
        "{} variables, {} nonzero coefficients, offset {}",
        matrix.n_vars(),
        matrix.qubo().num_nonzero(),
        matrix.offset()
    );
    Ok(())
}

fn cmd_serve(addr: &str, token: Option<String>, workers: usize, sweeps: usize) -> Result<(), Failure> {
    let token = token.or_else(|| std::env::var(TOKEN_ENV).ok()).unwrap_or_default();
    let server = LoopbackServer::start(addr, &token, SimulatedAnnealing::with_sweeps(sweeps), workers)
        .map_err(|e| Failure::file(format!("cannot listen on {addr}: {e}")))?;
    eprintln!("listening on {}", server.url());
    server.wait();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { instance, backend, engine, seed, out } => {
            cmd_solve(instance, backend, engine, *seed, out.as_deref())
        }
        Command::Bench {
            instances,
            backend,
            engine,
            reps,
            methods,
            base_seed,
            subqubo_size,
            max_outer_iterations,
            out_dir,
        } => cmd_bench(
            instances,
            backend,
            engine,
            *reps,
            methods.clone(),
            *base_seed,
            *subqubo_size,
            *max_outer_iterations,
            out_dir.as_deref(),
        ),
        Command::QuboExport { instance, nodes, full, max_cluster_size, max_vars, out } => cmd_qubo_export(
            instance,
            nodes.as_deref(),
            *full,
            *max_cluster_size,
            *max_vars,
            out.as_deref(),
        ),
        Command::Serve { addr, token, workers, sweeps } => cmd_serve(addr, token.clone(), *workers, *sweeps),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
