//! Command-line driver for the pipeline: parse a case, sample and reduce
//! load scenarios, solve (centralized or consensus ADMM, deterministic or
//! stochastic), evaluate reliability, and leave a reproducible trail of
//! artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gridopt::acopf::{
    build_standard, build_stochastic, extract_solution, evaluate_stochastic_cost, OpfSolution,
    ShedPenalty,
};
use gridopt::admm::{run_consensus, AdmmError};
use gridopt::case::{build_partition, load_partition_spec, parse_case, NetworkCase};
use gridopt::nlp::{NlpOptions, NlpStatus};
use gridopt::reliability::{evaluate_losp, LospReport};
use gridopt::scenarios::{kantorovich_distance, reduce, sample_gaussian, ScenarioSet};

const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_NONCONVERGENCE: u8 = 5;

const AFTER_HELP: &str = "Exit codes:
  0  success
  2  invalid usage or configuration
  3  input file failed to parse
  4  the optimization problem is infeasible
  5  the iteration budget ran out before convergence";

/// Distributed stochastic AC optimal power flow toolkit.
#[derive(Parser)]
#[command(name = "gridopt", version, about, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an optimal power flow and write its artifacts.
    Solve {
        /// Formulation to solve.
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sample, reduce, or inspect load scenario sets.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosAction,
    },
}

#[derive(Subcommand)]
enum ScenariosAction {
    /// Sample Gaussian load scenarios from a case's forecast loads.
    Sample {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Reduce a sampled scenario set by clustering plus backward reduction.
    Reduce {
        /// Scenario set JSON produced by `scenarios sample`.
        set: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print summary statistics of a scenario set.
    Inspect {
        /// Scenario set JSON to summarize.
        set: PathBuf,
    },
}

/// The four solve formulations, named after the columns they fill in the
/// comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Centralized deterministic ACOPF on forecast loads.
    Baseline,
    /// Consensus-ADMM deterministic ACOPF over the region partition.
    Admm,
    /// Centralized stochastic ACOPF over a reduced scenario set.
    BaselineStochastic,
    /// Consensus-ADMM stochastic ACOPF over the region partition.
    AdmmStochastic,
}

impl Mode {
    const ALL: [Mode; 4] =
        [Mode::Baseline, Mode::Admm, Mode::BaselineStochastic, Mode::AdmmStochastic];

    /// File-name fragment for this mode's artifacts.
    fn slug(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Admm => "admm",
            Mode::BaselineStochastic => "baseline_stochastic",
            Mode::AdmmStochastic => "admm_stochastic",
        }
    }

    /// Column header in the comparison table.
    fn label(self) -> &'static str {
        match self {
            Mode::Baseline => "Baseline",
            Mode::Admm => "ADMM",
            Mode::BaselineStochastic => "Baseline (Stochastic)",
            Mode::AdmmStochastic => "ADMM (Stochastic)",
        }
    }

    fn is_stochastic(self) -> bool {
        matches!(self, Mode::BaselineStochastic | Mode::AdmmStochastic)
    }

    fn is_distributed(self) -> bool {
        matches!(self, Mode::Admm | Mode::AdmmStochastic)
    }
}

/// Command-line overrides: every field beats the config file when given.
#[derive(Args, Clone, Debug, Default)]
struct Overrides {
    /// JSON run-configuration file; explicit flags override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Network case file (MATPOWER subset).
    #[arg(long, value_name = "FILE")]
    case: Option<PathBuf>,
    /// Region partition JSON mapping region names to bus ids.
    #[arg(long, value_name = "FILE")]
    partition: Option<PathBuf>,
    /// Seed for scenario sampling and reduction.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of scenarios to sample.
    #[arg(long = "scenarios", value_name = "COUNT")]
    num_scenarios: Option<usize>,
    /// Load standard deviation as a fraction of the forecast.
    #[arg(long, value_name = "FRAC")]
    sigma: Option<f64>,
    /// Cluster count for scenario reduction.
    #[arg(long, value_name = "K")]
    clusters: Option<usize>,
    /// Scenarios kept per cluster during reduction.
    #[arg(long = "per-cluster", value_name = "COUNT")]
    per_cluster: Option<usize>,
    /// Consensus penalty weight ρ, $/p.u.².
    #[arg(long)]
    rho: Option<f64>,
    /// Consensus tolerance on ‖z⁺ − z‖₂.
    #[arg(long)]
    tol: Option<f64>,
    /// Consensus iteration cap.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Output directory (also settable via GRIDOPT_OUT).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Load-shed penalty: derived from the case or fixed in $/MWh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ShedPenaltyMode {
    Auto(AutoTag),
    PerMwh(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

impl ShedPenaltyMode {
    fn resolve(self, case: &NetworkCase) -> Result<ShedPenalty, CliError> {
        match self {
            ShedPenaltyMode::Auto(_) => Ok(ShedPenalty::auto(case)),
            ShedPenaltyMode::PerMwh(c) => ShedPenalty::explicit(c)
                .map_err(|e| CliError::Usage(format!("shed penalty: {e}"))),
        }
    }
}

/// One run's full parameterization; the manifest echoes it verbatim.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    case_path: Option<PathBuf>,
    partition_path: Option<PathBuf>,
    seed: u64,
    num_scenarios: usize,
    sigma_frac: f64,
    k_clusters: usize,
    per_cluster_target: usize,
    rho: f64,
    admm_tolerance: f64,
    max_iter: usize,
    shed_penalty_mode: ShedPenaltyMode,
    output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case_path: None,
            partition_path: None,
            seed: 42,
            num_scenarios: 100,
            sigma_frac: 0.1,
            k_clusters: 5,
            per_cluster_target: 2,
            rho: 1e5,
            admm_tolerance: 1e-4,
            max_iter: 500,
            shed_penalty_mode: ShedPenaltyMode::Auto(AutoTag::Auto),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Config-file values, then the environment, then explicit flags.
    fn resolve(overrides: &Overrides) -> Result<RunConfig, CliError> {
        let mut cfg = match &overrides.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Parse(format!("config {}: {e}", path.display()))
                })?
            }
            None => RunConfig::default(),
        };
        if let Ok(dir) = std::env::var("GRIDOPT_OUT") {
            if !dir.is_empty() {
                cfg.output_dir = PathBuf::from(dir);
            }
        }
        if let Some(v) = &overrides.case {
            cfg.case_path = Some(v.clone());
        }
        if let Some(v) = &overrides.partition {
            cfg.partition_path = Some(v.clone());
        }
        if let Some(v) = overrides.seed {
            cfg.seed = v;
        }
        if let Some(v) = overrides.num_scenarios {
            cfg.num_scenarios = v;
        }
        if let Some(v) = overrides.sigma {
            cfg.sigma_frac = v;
        }
        if let Some(v) = overrides.clusters {
            cfg.k_clusters = v;
        }
        if let Some(v) = overrides.per_cluster {
            cfg.per_cluster_target = v;
        }
        if let Some(v) = overrides.rho {
            cfg.rho = v;
        }
        if let Some(v) = overrides.tol {
            cfg.admm_tolerance = v;
        }
        if let Some(v) = overrides.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = &overrides.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let mut complaints = Vec::new();
        if self.num_scenarios == 0 {
            complaints.push("num_scenarios must be at least 1");
        }
        if !(self.sigma_frac >= 0.0) || !self.sigma_frac.is_finite() {
            complaints.push("sigma_frac must be a nonnegative number");
        }
        if self.k_clusters == 0 {
            complaints.push("k_clusters must be at least 1");
        }
        if self.per_cluster_target == 0 {
            complaints.push("per_cluster_target must be at least 1");
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            complaints.push("rho must be a positive number");
        }
        if !(self.admm_tolerance > 0.0) {
            complaints.push("admm_tolerance must be positive");
        }
        if self.max_iter == 0 {
            complaints.push("max_iter must be at least 1");
        }
        if let ShedPenaltyMode::PerMwh(c) = self.shed_penalty_mode {
            if !(c > 0.0) || !c.is_finite() {
                complaints.push("shed_penalty_mode must be \"auto\" or a positive $/MWh");
            }
        }
        if complaints.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(complaints.join("; ")))
        }
    }

    fn case(&self) -> Result<NetworkCase, CliError> {
        let path = self
            .case_path
            .as_ref()
            .ok_or_else(|| CliError::Usage("no case file: pass --case or set case_path".into()))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read case {}: {e}", path.display())))?;
        parse_case(&text).map_err(|e| CliError::Parse(format!("case {}: {e}", path.display())))
    }
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
enum CliError {
    /// Bad flags, missing files, inconsistent configuration.
    Usage(String),
    /// An input file does not parse.
    Parse(String),
    /// The optimization problem has no feasible point.
    Infeasible(String),
    /// An iteration budget ran out before convergence.
    Nonconvergence(String),
    /// Anything else: I/O, internal errors.
    Other(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Parse(m)
            | CliError::Infeasible(m)
            | CliError::Nonconvergence(m)
            | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Nonconvergence(_) => EXIT_NONCONVERGENCE,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<AdmmError> for CliError {
    fn from(e: AdmmError) -> Self {
        match &e {
            AdmmError::Partition(_) => CliError::Usage(e.to_string()),
            AdmmError::RegionSolve { .. } => CliError::Infeasible(e.to_string()),
            AdmmError::Nonconvergence { iterations, last, .. } => CliError::Nonconvergence(
                format!("no consensus after {iterations} iterations (last error {last:.3e})"),
            ),
            AdmmError::Build(_) => CliError::Parse(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

/// Units of every field in a solution file, written alongside the values.
fn solution_units() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("v", "p.u."),
        ("theta", "rad"),
        ("gen_p", "MW"),
        ("gen_q", "MVar"),
        ("load_shed", "MW"),
        ("objective_value", "$/h"),
    ])
}

/// A solution JSON artifact: a units header plus the solution fields.
#[derive(Serialize, Deserialize)]
struct SolutionFile {
    units: BTreeMap<String, String>,
    #[serde(flatten)]
    solution: OpfSolution,
}

/// Reproduction record written at the end of every artifact-producing run.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    mode: Option<&'a str>,
    config: &'a RunConfig,
    versions: BTreeMap<&'a str, &'a str>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_manifest(
    dir: &Path,
    command: &str,
    mode: Option<&str>,
    config: &RunConfig,
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        mode,
        config,
        versions: BTreeMap::from([("gridopt", env!("CARGO_PKG_VERSION"))]),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn main() -> ExitCode {
    // Die quietly when stdout is a closed pipe (`gridopt ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { mode, overrides } => {
            RunConfig::resolve(&overrides).and_then(|cfg| cmd_solve(mode, &cfg))
        }
        Command::Scenarios { action } => match action {
            ScenariosAction::Sample { overrides } => {
                RunConfig::resolve(&overrides).and_then(|cfg| cmd_sample(&cfg))
            }
            ScenariosAction::Reduce { set, overrides } => {
                RunConfig::resolve(&overrides).and_then(|cfg| cmd_reduce(&set, &cfg))
            }
            ScenariosAction::Inspect { set } => cmd_inspect(&set),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Solves one mode, writes its artifacts, and refreshes the comparison table.
fn cmd_solve(mode: Mode, cfg: &RunConfig) -> Result<(), CliError> {
    let case = cfg.case()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;

    // The distributed modes need the partition up front.
    let partition = match (mode.is_distributed(), &cfg.partition_path) {
        (false, _) => None,
        (true, None) => {
            return Err(CliError::Usage(
                "distributed modes need a region partition: pass --partition".into(),
            ))
        }
        (true, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read partition {}: {e}", path.display()))
            })?;
            let spec = load_partition_spec(&text)
                .map_err(|e| CliError::Parse(format!("partition {}: {e}", path.display())))?;
            Some(
                build_partition(&case, &spec).map_err(|e| {
                    CliError::Parse(format!("partition {}: {e}", path.display()))
                })?,
            )
        }
    };

    // Stochastic modes sample, reduce, and keep both sets as artifacts.
    let scenario_sets = if mode.is_stochastic() {
        let full = sample_gaussian(&case, cfg.num_scenarios, cfg.sigma_frac, cfg.seed);
        let reduced = reduce(&full, cfg.k_clusters, cfg.per_cluster_target, cfg.seed)
            .map_err(|e| CliError::Usage(format!("scenario reduction: {e}")))?;
        std::fs::write(out.join("scenarios_full.json"), full.to_json())?;
        std::fs::write(out.join("scenarios_full.csv"), full.to_csv())?;
        std::fs::write(out.join("scenarios_reduced.json"), reduced.to_json())?;
        std::fs::write(out.join("scenarios_reduced.csv"), reduced.to_csv())?;
        println!(
            "scenarios: {} sampled (seed {}, sigma {}), {} kept after reduction",
            full.len(),
            cfg.seed,
            cfg.sigma_frac,
            reduced.len()
        );
        Some((full, reduced))
    } else {
        None
    };
    let penalty = cfg.shed_penalty_mode.resolve(&case)?;

    let started = std::time::Instant::now();
    let solution = match mode {
        Mode::Baseline => central_solve(&case, build_standard(&case))?,
        Mode::BaselineStochastic => {
            let (_, reduced) = scenario_sets.as_ref().expect("stochastic mode sampled");
            central_solve(&case, build_stochastic(&case, reduced, penalty))?
        }
        Mode::Admm | Mode::AdmmStochastic => {
            let partition = partition.as_ref().expect("distributed mode loaded a partition");
            let stochastic = scenario_sets
                .as_ref()
                .map(|(_, reduced)| (reduced, penalty));
            let (solution, state) = run_consensus(
                &case,
                partition,
                stochastic.map(|(r, p)| (r, p)),
                cfg.rho,
                cfg.admm_tolerance,
                cfg.max_iter,
                Some(out),
            )?;
            println!(
                "consensus: {} iterations to ‖z⁺−z‖₂ = {:.3e} (tolerance {:.1e})",
                state.iteration,
                state.error_history.last().copied().unwrap_or(f64::NAN),
                cfg.admm_tolerance,
            );
            solution
        }
    };
    println!(
        "{}: objective {:.2} $/h in {:.2?}",
        mode.label(),
        solution.objective_value,
        started.elapsed()
    );

    let file = SolutionFile {
        units: solution_units()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        solution,
    };
    write_json(&out.join(format!("solution_{}.json", mode.slug())), &file)?;

    // Reliability audit of the dispatch against the full sampled set.
    if let Some((full, reduced)) = &scenario_sets {
        let report = evaluate_losp(&case, &file.solution, full)
            .map_err(|e| CliError::Other(e.to_string()))?;
        let expected = evaluate_stochastic_cost(&case, &file.solution, reduced, penalty)
            .map_err(|e| CliError::Other(e.to_string()))?;
        println!(
            "reliability: LOSP {:.1}% over {} scenarios; expected cost {:.2} $/h",
            100.0 * report.losp,
            full.len(),
            expected
        );
        write_json(&out.join(format!("losp_{}.json", mode.slug())), &report)?;
    }

    write_manifest(out, "solve", Some(mode.slug()), cfg)?;

    let table = write_comparison(&case, out)?;
    print!("{table}");
    Ok(())
}

/// Runs a centralized build to optimality or reports why it could not.
fn central_solve(
    case: &NetworkCase,
    built: Result<gridopt::acopf::BuiltProblem, gridopt::acopf::AcopfError>,
) -> Result<OpfSolution, CliError> {
    let built = built.map_err(|e| CliError::Parse(e.to_string()))?;
    let solved = built
        .solve(&NlpOptions::default())
        .map_err(|e| CliError::Other(e.to_string()))?;
    match solved.status {
        NlpStatus::Optimal => {}
        NlpStatus::InfeasibleDetected => {
            return Err(CliError::Infeasible(format!(
                "the problem appears infeasible (constraint violation {:.3e})",
                solved.eq_violation.max(solved.ineq_violation)
            )))
        }
        NlpStatus::MaxIter => {
            return Err(CliError::Nonconvergence(format!(
                "interior-point budget exhausted (KKT residual {:.3e})",
                solved.kkt_residual
            )))
        }
    }
    Ok(extract_solution(case, &built.layout, &solved))
}

/// Renders the cross-mode comparison table from the artifacts on disk and
/// writes it to `comparison.txt`.
fn write_comparison(case: &NetworkCase, out: &Path) -> Result<String, CliError> {
    let mut columns: Vec<(Mode, OpfSolution, Option<LospReport>)> = Vec::new();
    for mode in Mode::ALL {
        let path = out.join(format!("solution_{}.json", mode.slug()));
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        let file: SolutionFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let losp = match std::fs::read_to_string(out.join(format!("losp_{}.json", mode.slug()))) {
            Ok(text) => Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Parse(format!("losp_{}.json: {e}", mode.slug())))?,
            ),
            Err(_) => None,
        };
        columns.push((mode, file.solution, losp));
    }

    let label_width = 18;
    let col_width = 23;
    let mut table = String::new();
    write!(table, "{:<label_width$}", "").unwrap();
    for (mode, _, _) in &columns {
        write!(table, "{:>col_width$}", mode.label()).unwrap();
    }
    table.push('\n');
    for g in 0..case.generators.len() {
        write!(table, "{:<label_width$}", format!("P{} (MW)", g + 1)).unwrap();
        for (_, solution, _) in &columns {
            match solution.gen_p.get(g) {
                Some(p) => write!(table, "{:>col_width$.2}", p).unwrap(),
                None => write!(table, "{:>col_width$}", "-").unwrap(),
            }
        }
        table.push('\n');
    }
    write!(table, "{:<label_width$}", "Total cost ($/h)").unwrap();
    for (_, solution, _) in &columns {
        write!(table, "{:>col_width$.2}", solution.objective_value).unwrap();
    }
    table.push('\n');
    write!(table, "{:<label_width$}", "LOSP (%)").unwrap();
    for (_, _, losp) in &columns {
        match losp {
            Some(report) => write!(table, "{:>col_width$.1}", 100.0 * report.losp).unwrap(),
            None => write!(table, "{:>col_width$}", "-").unwrap(),
        }
    }
    table.push('\n');

    std::fs::write(out.join("comparison.txt"), &table)?;
    Ok(table)
}

/// Samples a scenario set and writes it with its manifest.
fn cmd_sample(cfg: &RunConfig) -> Result<(), CliError> {
    let case = cfg.case()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let set = sample_gaussian(&case, cfg.num_scenarios, cfg.sigma_frac, cfg.seed);
    std::fs::write(out.join("scenarios_full.json"), set.to_json())?;
    std::fs::write(out.join("scenarios_full.csv"), set.to_csv())?;
    write_manifest(out, "scenarios sample", None, cfg)?;
    println!(
        "sampled {} scenarios over {} buses (seed {}, sigma {}) into {}",
        set.len(),
        set.n_buses(),
        cfg.seed,
        cfg.sigma_frac,
        out.display()
    );
    Ok(())
}

/// Report written next to a reduced scenario set.
#[derive(Serialize, Deserialize)]
struct ReductionReport {
    original_count: usize,
    reduced_count: usize,
    k_clusters: usize,
    per_cluster_target: usize,
    /// Kantorovich distance between the original and reduced sets.
    kantorovich_distance: f64,
}

/// Reduces an existing sampled set and writes the outcome and its report.
fn cmd_reduce(set_path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let text = std::fs::read_to_string(set_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", set_path.display())))?;
    let full = ScenarioSet::from_json(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", set_path.display())))?;
    let reduced = reduce(&full, cfg.k_clusters, cfg.per_cluster_target, cfg.seed)
        .map_err(|e| CliError::Usage(format!("scenario reduction: {e}")))?;
    let distance = kantorovich_distance(&full, &reduced)
        .map_err(|e| CliError::Other(e.to_string()))?;

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("scenarios_reduced.json"), reduced.to_json())?;
    std::fs::write(out.join("scenarios_reduced.csv"), reduced.to_csv())?;
    let report = ReductionReport {
        original_count: full.len(),
        reduced_count: reduced.len(),
        k_clusters: cfg.k_clusters,
        per_cluster_target: cfg.per_cluster_target,
        kantorovich_distance: distance,
    };
    write_json(&out.join("reduction_report.json"), &report)?;
    write_manifest(out, "scenarios reduce", None, cfg)?;
    println!(
        "reduced {} -> {} scenarios (Kantorovich distance {:.4}) into {}",
        full.len(),
        reduced.len(),
        distance,
        out.display()
    );
    Ok(())
}

/// Prints summary statistics of a stored scenario set.
fn cmd_inspect(set_path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(set_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", set_path.display())))?;
    let set = ScenarioSet::from_json(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", set_path.display())))?;

    println!("scenarios: {}", set.len());
    println!("buses:     {}", set.n_buses());
    match set.source_seed {
        Some(seed) => println!("seed:      {seed}"),
        None => println!("seed:      (not recorded)"),
    }
    let mass: f64 = set.probabilities.iter().sum();
    println!("probability mass: {mass:.12}");

    // Probability-weighted per-bus moments.
    println!("{:>6} {:>12} {:>12}", "bus", "mean MW", "stddev MW");
    let mut total_mean = 0.0;
    for b in 0..set.n_buses() {
        let mean: f64 = set
            .loads
            .iter()
            .zip(&set.probabilities)
            .map(|(row, p)| p * row[b])
            .sum();
        let var: f64 = set
            .loads
            .iter()
            .zip(&set.probabilities)
            .map(|(row, p)| p * (row[b] - mean) * (row[b] - mean))
            .sum();
        total_mean += mean;
        println!("{:>6} {:>12.3} {:>12.3}", b + 1, mean, var.sqrt());
    }
    println!("total mean load: {total_mean:.3} MW");
    Ok(())
}
