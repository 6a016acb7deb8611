//! Subcommand implementations. Each command returns the list of files it
//! wrote so the caller can re-validate them.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use tvconsensus_core::ergodicity::{
    identity_approach_diagnostics, estimate_pi, gamma_bound, pi_uniform_gap, verify_deviation_bound,
    ErgodicityError,
};
use tvconsensus_core::objectives::{aggregate, make_objective, Dataset};
use tvconsensus_core::optimizer::{run, Method, OptimizerConfig, OptimizerError, Trajectory};
use tvconsensus_core::product::{backward_product, extend_backward_product};
use tvconsensus_core::topology::{beta_schedule_check, GeneratedSequence};
use tvconsensus_core::{MaterializedSequence, MatrixSequence, StochasticMatrix};

use crate::config::ExperimentConfig;
use crate::io;

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration: exit code 2.
    Config(String),
    /// A runtime assumption violation (zero diagonal, non-convergent
    /// bound evaluation): exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<io::ParseError> for CliError {
    fn from(e: io::ParseError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io error: {e}"))
    }
}

fn from_ergodicity(e: ErgodicityError) -> CliError {
    match e {
        ErgodicityError::NonConvergent { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

fn from_optimizer(e: OptimizerError) -> CliError {
    match e {
        OptimizerError::ZeroDiagonal { .. } => CliError::Runtime(e.to_string()),
        OptimizerError::Ergodicity(inner) => from_ergodicity(inner),
        OptimizerError::Mismatch { .. } => CliError::Config(e.to_string()),
    }
}

/// Order-preserving parallel map over owned items with a shared work queue.
pub fn parallel_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 {
        return items.into_iter().map(f).collect();
    }
    let queue: Mutex<Vec<(usize, T)>> = Mutex::new(items.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop();
                let Some((idx, item)) = job else { break };
                let r = f(item);
                results.lock().unwrap().push((idx, r));
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by_key(|(idx, _)| *idx);
    out.into_iter().map(|(_, r)| r).collect()
}

#[derive(Debug, Serialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub stochastic: bool,
    pub positive_diagonal: bool,
    pub connectivity: bool,
    pub sarymsakov: bool,
    pub scrambling: bool,
    pub positive_column: Option<(usize, f64)>,
    pub min_positive_entry: Option<f64>,
}

pub fn cmd_check(matrix_path: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let (n, raw) = io::read_square_csv(matrix_path)?;
    let report = match StochasticMatrix::new(n, raw.clone(), tvconsensus_core::matrix::DEFAULT_ZERO_TOL) {
        Ok(m) => ClassificationReport {
            n,
            stochastic: true,
            positive_diagonal: m.positive_diagonal(),
            connectivity: m
                .satisfies_connectivity_condition()
                .unwrap_or_else(|_| m.support_strongly_connected()),
            sarymsakov: m.is_sarymsakov().unwrap_or(false),
            scrambling: m.is_scrambling(),
            positive_column: m.positive_column_index(),
            min_positive_entry: m.min_positive_entry().ok(),
        },
        Err(_) => ClassificationReport {
            n,
            stochastic: false,
            positive_diagonal: false,
            connectivity: false,
            sarymsakov: false,
            scrambling: false,
            positive_column: None,
            min_positive_entry: None,
        },
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    let mut written = Vec::new();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let path = dir.join("check_report.json");
        io::write_json(&path, &report)?;
        written.push(path);
    }
    Ok(written)
}

fn prepare_out(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out)?;
    let cfg_path = out.join("config.json");
    io::write_json(&cfg_path, cfg)?;
    Ok(vec![cfg_path])
}

#[derive(Serialize)]
struct UniformGapEntry {
    s: usize,
    horizon: usize,
    gap: f64,
    spread_at_horizon: f64,
}

#[derive(Serialize)]
struct SpreadDecayEntry {
    block: usize,
    k: i64,
    row_spread: f64,
}

pub fn cmd_ergodicity(
    cfg: &ExperimentConfig,
    out: &Path,
    threads: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = prepare_out(cfg, out)?;
    let params = cfg.topology.assumption_params()?;
    let b = params.b();
    let horizon = cfg.ergodicity.horizon.expect("materialized");
    let top = cfg.topology.topology_config()?;
    let max_index = horizon
        .max(cfg.ergodicity.s_list.iter().copied().max().unwrap_or(0) + horizon)
        .max(cfg.ergodicity.spread_max_blocks * b)
        + 1;
    let gen = GeneratedSequence::new(top).map_err(from_ergodicity)?;
    let seq = MaterializedSequence::new(&gen, max_index.min(1_000_000));

    // Bound grid over the configured (s, k) pairs.
    let grid: Vec<(usize, usize)> = cfg
        .ergodicity
        .s_list
        .iter()
        .flat_map(|&s| cfg.ergodicity.k_list.iter().map(move |&k| (s, k)))
        .collect();
    let gamma_results = parallel_map(grid.clone(), threads, |(s, k)| {
        gamma_bound(&params, s, k, 1e-10).map_err(from_ergodicity)
    });
    let gamma_grid: Vec<_> = gamma_results.into_iter().collect::<Result<_, _>>()?;
    let path = out.join("gamma_grid.json");
    io::write_json(&path, &gamma_grid)?;
    written.push(path);

    // Realized-product comparisons against the bound.
    let deviation_cells: Vec<(usize, usize)> =
        grid.into_iter().filter(|&(s, k)| s <= k && k <= s + horizon).collect();
    let deviation_results = parallel_map(deviation_cells, threads, |(s, k)| {
        verify_deviation_bound(&seq, &params, s, k, s + horizon).map_err(from_ergodicity)
    });
    let deviation_reports: Vec<_> = deviation_results.into_iter().collect::<Result<_, _>>()?;
    let path = out.join("deviation_check.json");
    io::write_json(&path, &deviation_reports)?;
    written.push(path);

    // Row-spread decay of Phi(0, mB).
    let mut spread = Vec::new();
    let mut prod = backward_product(&seq, 0, -1);
    spread.push(SpreadDecayEntry { block: 0, k: -1, row_spread: prod.value.row_spread() });
    for m in 1..=cfg.ergodicity.spread_max_blocks {
        while prod.k < (m * b) as i64 - 1 {
            extend_backward_product(&seq, &mut prod);
        }
        let rs = prod.value.row_spread();
        spread.push(SpreadDecayEntry { block: m, k: prod.k, row_spread: rs });
        if rs < 1e-14 {
            break;
        }
    }
    let path = out.join("spread_decay.json");
    io::write_json(&path, &spread)?;
    written.push(path);

    // Weight estimates and their distance from uniform.
    let mut estimates = Vec::new();
    let mut gaps = Vec::new();
    for &s in &cfg.ergodicity.s_list {
        let est = estimate_pi(&seq, s, s + horizon).map_err(from_ergodicity)?;
        gaps.push(UniformGapEntry {
            s,
            horizon: s + horizon,
            gap: pi_uniform_gap(&est),
            spread_at_horizon: est.spread_at_horizon,
        });
        estimates.push(est);
    }
    let path = out.join("pi_estimates.json");
    io::write_json(&path, &estimates)?;
    written.push(path);
    let path = out.join("uniform_gap.json");
    io::write_json(&path, &gaps)?;
    written.push(path);

    // Assumption diagnostics.
    let schedule = beta_schedule_check(&seq, &params, horizon).map_err(from_ergodicity)?;
    let window = cfg.ergodicity.window.expect("materialized");
    let identity = identity_approach_diagnostics(&seq, window, horizon).map_err(from_ergodicity)?;
    #[derive(Serialize)]
    struct Assumptions<'a> {
        beta_schedule: &'a tvconsensus_core::topology::BetaScheduleReport,
        identity_approach: &'a tvconsensus_core::ergodicity::IdentityApproachReport,
    }
    let path = out.join("assumptions.json");
    io::write_json(&path, &Assumptions { beta_schedule: &schedule, identity_approach: &identity })?;
    written.push(path);

    for &t in &cfg.ergodicity.snapshots {
        let path = out.join(format!("A_{t}.csv"));
        io::write_matrix_csv(&path, &seq.matrix(t))?;
        written.push(path);
    }
    Ok(written)
}

fn build_aggregate(
    cfg: &ExperimentConfig,
) -> Result<tvconsensus_core::objectives::AggregateObjective, CliError> {
    let family = cfg.objective.family()?;
    let dim = cfg.objective.dim()?;
    let ds = Dataset::sample(family, dim, cfg.topology.n, cfg.objective.dataset_seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let objs = ds
        .entries
        .iter()
        .map(|e| make_objective(family, e, dim))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    aggregate(objs).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
pub struct RunSummary {
    pub method: String,
    pub state_seed: u64,
    pub iterations: usize,
    pub terminal_consensus_error: f64,
    pub terminal_f_mean: f64,
    pub terminal_f_y: f64,
    pub known_minimum: Option<f64>,
    /// `f(y_K) - f*` when the minimum is known.
    pub optimality_gap: Option<f64>,
    /// Mean step-to-step displacement over the last decade of iterations.
    pub last_decade_movement: f64,
    pub terminal_pi_spread: f64,
}

fn summarize(t: &Trajectory, known_minimum: Option<f64>) -> RunSummary {
    let term = t.terminal();
    let k = t.records.len() - 1;
    let tail_start = (k - k / 10).max(1).min(t.records.len() - 1);
    let tail = &t.records[tail_start..];
    let last_decade_movement = if tail.is_empty() {
        0.0
    } else {
        tail.iter().map(|r| r.movement).sum::<f64>() / tail.len() as f64
    };
    RunSummary {
        method: t.method.name().to_string(),
        state_seed: t.state_seed,
        iterations: k,
        terminal_consensus_error: term.consensus_error,
        terminal_f_mean: term.f_mean,
        terminal_f_y: term.f_y,
        known_minimum,
        optimality_gap: known_minimum.map(|f| term.f_y - f),
        last_decade_movement,
        terminal_pi_spread: term.pi_spread,
    }
}

type RunCell = (Method, u64);

fn run_cells(
    cfg: &ExperimentConfig,
    cells: Vec<RunCell>,
    threads: usize,
) -> Result<Vec<Trajectory>, CliError> {
    let params = cfg.topology.assumption_params()?;
    let top = cfg.topology.topology_config()?;
    let gen = GeneratedSequence::new(top).map_err(from_ergodicity)?;
    let seq = MaterializedSequence::new(&gen, cfg.optimizer.iterations + 40 * params.b() + 1);
    let agg = build_aggregate(cfg)?;
    let fbox = cfg.feasible_box()?;
    let results = parallel_map(cells, threads, |(method, state_seed)| {
        let rc = OptimizerConfig {
            method,
            iterations: cfg.optimizer.iterations,
            step_scale: cfg.optimizer.step_scale,
            state_seed,
        };
        run(&rc, &seq, &agg, &fbox, &params).map_err(from_optimizer)
    });
    results.into_iter().collect()
}

pub fn cmd_optimize(
    cfg: &ExperimentConfig,
    out: &Path,
    threads: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = prepare_out(cfg, out)?;
    let methods = cfg.optimizer.methods()?;
    let agg = build_aggregate(cfg)?;
    let cells: Vec<RunCell> = methods
        .iter()
        .flat_map(|&m| cfg.optimizer.state_seeds.iter().map(move |&s| (m, s)))
        .collect();
    let trajectories = run_cells(cfg, cells, threads)?;
    let mut summaries = Vec::new();
    for t in &trajectories {
        let path = out.join(format!("trajectory_{}_{}.csv", t.method.name(), t.state_seed));
        io::write_trajectory_csv(&path, t)?;
        written.push(path);
        summaries.push(summarize(t, agg.known_minimum));
    }
    let path = out.join("summary.json");
    io::write_json(&path, &summaries)?;
    written.push(path);
    Ok(written)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in metrics"));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Serialize)]
struct MethodSummary {
    method: String,
    median_terminal_consensus_error: f64,
    median_terminal_f_mean: f64,
    /// Per-seed consensus decrease factor from k=10 to k=K.
    consensus_decrease_factors: Vec<f64>,
}

#[derive(Serialize)]
struct CompareSummary {
    runs: Vec<RunSummary>,
    methods: Vec<MethodSummary>,
    /// Methods ordered by median terminal objective, best first.
    ranking_by_f: Vec<String>,
    /// Present when both methods ran: whether the stretched projected
    /// method's median terminal consensus error is no worse.
    udpsg_consensus_not_worse_than_spsg: Option<bool>,
}

pub fn cmd_compare(
    cfg: &ExperimentConfig,
    out: &Path,
    threads: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let methods = cfg.optimizer.methods()?;
    if methods.len() < 2 {
        return Err(CliError::Config("compare requires at least two methods".into()));
    }
    let mut written = prepare_out(cfg, out)?;
    let agg = build_aggregate(cfg)?;
    let cells: Vec<RunCell> = methods
        .iter()
        .flat_map(|&m| cfg.optimizer.state_seeds.iter().map(move |&s| (m, s)))
        .collect();
    let trajectories = run_cells(cfg, cells, threads)?;
    let mut runs = Vec::new();
    for t in &trajectories {
        let path = out.join(format!("trajectory_{}_{}.csv", t.method.name(), t.state_seed));
        io::write_trajectory_csv(&path, t)?;
        written.push(path);
        runs.push(summarize(t, agg.known_minimum));
    }
    let mut method_summaries = Vec::new();
    for &m in &methods {
        let of_method: Vec<&Trajectory> =
            trajectories.iter().filter(|t| t.method == m).collect();
        let consensus: Vec<f64> =
            of_method.iter().map(|t| t.terminal().consensus_error).collect();
        let f_mean: Vec<f64> = of_method.iter().map(|t| t.terminal().f_mean).collect();
        let factors: Vec<f64> = of_method
            .iter()
            .map(|t| {
                let early = t.records.get(10).unwrap_or(t.terminal()).consensus_error;
                let late = t.terminal().consensus_error;
                if late > 0.0 {
                    early / late
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        method_summaries.push(MethodSummary {
            method: m.name().to_string(),
            median_terminal_consensus_error: median(consensus),
            median_terminal_f_mean: median(f_mean),
            consensus_decrease_factors: factors,
        });
    }
    let mut ranking: Vec<(String, f64)> = method_summaries
        .iter()
        .map(|s| (s.method.clone(), s.median_terminal_f_mean))
        .collect();
    ranking.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN in metrics"));
    let med = |name: &str| -> Option<f64> {
        method_summaries
            .iter()
            .find(|s| s.method == name)
            .map(|s| s.median_terminal_consensus_error)
    };
    let udpsg_consensus_not_worse_than_spsg = match (med("UDPSG"), med("SPSG")) {
        (Some(u), Some(s)) => Some(u <= s),
        _ => None,
    };
    let summary = CompareSummary {
        runs,
        methods: method_summaries,
        ranking_by_f: ranking.into_iter().map(|(n, _)| n).collect(),
        udpsg_consensus_not_worse_than_spsg,
    };
    let path = out.join("summary.json");
    io::write_json(&path, &summary)?;
    written.push(path);
    Ok(written)
}
