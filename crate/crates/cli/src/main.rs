//! `cems`: validate community data, solve the scheduling scenarios, settle
//! trades, benchmark scaling and export models.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 I/O error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cems_core::domain::{heating_day_config, load_path, replication_config, validate_config};
use cems_core::milp::{build_home_model, build_system_centric_model, lp_format};
use cems_core::scenarios::{bench_scaling, compare, run_scenarios, ScenarioError, ScenarioResult};
use cems_core::solve::{write_schedule_csv, CommunitySchedule, HighsSolver};
use cems_core::trading::{settle_day, settle_day_direct, write_settlement_csv};
use cems_core::{BigMPolicy, CommunityConfig, ConfigError, MidPricePolicy, ScenarioKind, SolverOptions};

#[derive(Parser)]
#[command(name = "cems", version, about = "Day-ahead community energy scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a community config and report every problem found.
    Validate(ConfigArgs),
    /// Solve one scenario and write the schedule, settlement and check report.
    Solve(SolveArgs),
    /// Solve all three scenarios and write comparison tables.
    Compare(RunArgs),
    /// Settle an existing schedule (from `solve`) at mid-market rates.
    Settle(SettleArgs),
    /// Time model build and solve on synthetic communities of several sizes.
    Bench(BenchArgs),
    /// Write the community model, or one home's model, in CPLEX LP format.
    ExportLp(ExportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Community config: a JSON file or a CSV bundle directory. Defaults to
    /// the bundled replication dataset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Selling price ratio to the provider, in (0, 1].
    #[arg(long, value_name = "F")]
    alpha: Option<f64>,
    /// Mid-market price rule.
    #[arg(long, value_enum, value_name = "CASE")]
    pmid: Option<PmidCase>,
    /// Big-M policy: `derived` or `fixed:V`.
    #[arg(long, value_name = "POLICY")]
    bigm: Option<BigMPolicy>,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative MIP gap.
    #[arg(long, value_name = "F", default_value_t = 1e-6)]
    gap: f64,
    /// Solver time limit in seconds.
    #[arg(long = "time-limit", value_name = "S")]
    time_limit: Option<f64>,
    /// Solver threads (solver default when omitted).
    #[arg(long, value_name = "N")]
    threads: Option<u32>,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            relative_mip_gap: self.gap,
            time_limit: self.time_limit,
            threads: self.threads,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Scenario to solve.
    #[arg(long, value_enum, default_value_t = ScenarioArg::System)]
    scenario: ScenarioArg,
}

#[derive(Args)]
struct SettleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Schedule JSON written by `solve`.
    #[arg(long, value_name = "PATH")]
    schedule: PathBuf,
    /// Settle every home directly with the provider instead.
    #[arg(long)]
    direct: bool,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Template community for the synthetic generator. Defaults to the
    /// bundled heating-day dataset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Comma-separated community sizes.
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "10,50,100")]
    sizes: Vec<usize>,
    /// Seed of the synthetic load perturbation.
    #[arg(long, value_name = "N", default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Export this home's own model instead of the community model.
    #[arg(long, value_name = "ID")]
    home: Option<String>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PmidCase {
    Case1,
    Case2,
    Case3,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    System,
    Prosumer,
    None,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::System => ScenarioKind::SystemCentric,
            ScenarioArg::Prosumer => ScenarioKind::ProsumerCentric,
            ScenarioArg::None => ScenarioKind::NoCems,
        }
    }
}

enum Failure {
    Invalid(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Solver(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Model(_) | ScenarioError::Invalid(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Writes through a temporary file in the same directory, then renames it
/// into place, so readers never see a partial report.
fn write_atomic(dir: &Path, name: &str, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(dir, e))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(|e| io_failure(&path, e))?;
        w.flush().map_err(|e| io_failure(&path, e))?;
    }
    tmp.persist(&path).map_err(|e| io_failure(&path, e.error))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    write_atomic(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn write_csv(
    dir: &Path,
    name: &str,
    fill: impl FnOnce(&mut dyn Write) -> csv::Result<()>,
) -> Result<PathBuf, Failure> {
    write_atomic(dir, name, |w| fill(w).map_err(io::Error::other))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn load(args: &ConfigArgs) -> Result<CommunityConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => load_path(path)?,
        None => replication_config(),
    };
    if let Some(alpha) = args.alpha {
        config.alpha = alpha;
    }
    if let Some(case) = args.pmid {
        config.mid_price_policy = match case {
            PmidCase::Case1 => MidPricePolicy::Case1,
            PmidCase::Case2 => MidPricePolicy::Case2,
            PmidCase::Case3 => MidPricePolicy::Case3,
        };
    }
    if let Some(policy) = args.bigm {
        config.big_m_policy = policy;
    }
    let report = validate_config(&config);
    for w in &report.warnings {
        eprintln!("warning: {}: {}", w.path, w.message);
    }
    if !report.is_ok() {
        let lines: Vec<String> = report
            .errors
            .iter()
            .map(|e| format!("  {}: {}", e.path, e.message))
            .collect();
        return Err(Failure::Invalid(format!(
            "invalid config ({} problem{}):\n{}",
            lines.len(),
            if lines.len() == 1 { "" } else { "s" },
            lines.join("\n")
        )));
    }
    Ok(config)
}

#[derive(Serialize)]
struct Timing {
    scenario: ScenarioKind,
    build_time_s: f64,
    solve_time_s: f64,
}

fn timings(results: &[ScenarioResult]) -> Vec<Timing> {
    results
        .iter()
        .map(|r| Timing {
            scenario: r.kind,
            build_time_s: r.build_time,
            solve_time_s: r.solve_time,
        })
        .collect()
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    scenario: ScenarioKind,
    status: &'a str,
    community_cost: f64,
    home_ids: &'a [String],
    home_cost: &'a [f64],
    budget_residual: f64,
    max_violation: f64,
    peak_warnings: usize,
}

fn cmd_validate(args: &ConfigArgs) -> Result<(), Failure> {
    let config = load(args)?;
    println!(
        "ok: {} homes, {} slots, big-M {}",
        config.n_homes(),
        config.horizon_slots,
        config.big_m_policy
    );
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let config = load(&args.run.config)?;
    let options = args.run.solver.options();
    prepare_out(&args.run.out)?;
    let kind = ScenarioKind::from(args.scenario);
    let result = run_scenarios(&config, &options, &[kind], &HighsSolver::default(), None)?
        .pop()
        .expect("one scenario requested");
    let out = &args.run.out;
    write_json(out, "schedule.json", &result.schedule)?;
    write_csv(out, "schedule.csv", |w| write_schedule_csv(&result.schedule, w).map_err(csv::Error::from))?;
    write_csv(out, "settlement.csv", |w| write_settlement_csv(&result.settlement, w))?;
    write_json(out, "feasibility.json", &result.feasibility)?;
    write_json(
        out,
        "summary.json",
        &SolveSummary {
            scenario: kind,
            status: result.status.token(),
            community_cost: result.community_cost,
            home_ids: &result.settlement.home_ids,
            home_cost: &result.settlement.per_home_daily_cost,
            budget_residual: result.settlement.budget_residual,
            max_violation: result.feasibility.max_violation,
            peak_warnings: result.feasibility.warnings.len(),
        },
    )?;
    write_json(out, "timings.json", &timings(std::slice::from_ref(&result)))?;
    println!(
        "{kind}: {} , community cost {:.4} cents, max violation {:.2e}",
        result.status, result.community_cost, result.feasibility.max_violation
    );
    for w in &result.feasibility.warnings {
        eprintln!(
            "warning: community peak exceeded at slot {} by {:.4} kWh",
            w.slot, w.magnitude
        );
    }
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<(), Failure> {
    let config = load(&args.config)?;
    prepare_out(&args.out)?;
    let results = run_scenarios(
        &config,
        &args.solver.options(),
        &ScenarioKind::ALL,
        &HighsSolver::default(),
        None,
    )?;
    let report = compare(&results)?;
    let out = &args.out;
    write_csv(out, "comparison.csv", |w| report.write_csv(w))?;
    write_csv(out, "home_costs.csv", |w| report.write_home_costs_csv(w))?;
    write_csv(out, "provider_flows.csv", |w| report.write_provider_flows_csv(w))?;
    write_json(out, "comparison.json", &report)?;
    write_json(out, "timings.json", &timings(&results))?;
    for s in &report.scenarios {
        println!("{:<17} {:>12.4} cents  ({})", s.kind.token(), s.community_cost, s.status);
    }
    Ok(())
}

fn cmd_settle(args: &SettleArgs) -> Result<(), Failure> {
    let config = load(&args.config)?;
    let text = fs::read_to_string(&args.schedule).map_err(|e| io_failure(&args.schedule, e))?;
    let schedule: CommunitySchedule = serde_json::from_str(&text)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", args.schedule.display())))?;
    let settle = if args.direct { settle_day_direct } else { settle_day };
    let report = settle(&schedule, &config).map_err(|e| Failure::Invalid(e.to_string()))?;
    prepare_out(&args.out)?;
    write_csv(&args.out, "settlement.csv", |w| write_settlement_csv(&report, w))?;
    write_json(&args.out, "settlement.json", &report)?;
    println!(
        "settled {} slots: community {:.4} cents, budget residual {:.2e}",
        report.slots.len(),
        report.community_daily_cost,
        report.budget_residual
    );
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let template = match &args.config {
        Some(path) => load_path(path)?,
        None => heating_day_config(),
    };
    prepare_out(&args.out)?;
    let report = bench_scaling(&args.sizes, args.seed, &template, &args.solver.options())?;
    write_csv(&args.out, "bench.csv", |w| report.write_csv(w))?;
    write_csv(&args.out, "timings.csv", |w| report.write_timings_csv(w))?;
    for r in &report.rows {
        println!(
            "{:>5} homes  {:>7} vars  {:>7} rows  build {:>8.3}s  solve {:>8.3}s  {}",
            r.n_homes, r.variables, r.constraints, r.build_time, r.solve_time, r.status
        );
    }
    match report.rows.iter().find(|r| r.error.is_some()) {
        Some(r) => Err(Failure::Solver(format!(
            "{} homes: {}",
            r.n_homes,
            r.error.as_deref().unwrap_or_default()
        ))),
        None => Ok(()),
    }
}

fn cmd_export(args: &ExportArgs) -> Result<(), Failure> {
    let config = load(&args.config)?;
    let model = match &args.home {
        None => build_system_centric_model(&config),
        Some(id) => {
            let i = config
                .home_index(id)
                .ok_or_else(|| Failure::Invalid(format!("no home with id `{id}`")))?;
            build_home_model(i, &config)
        }
    }
    .map_err(|e| Failure::Invalid(e.to_string()))?;
    prepare_out(&args.out)?;
    let path = write_atomic(&args.out, "model.lp", |w| lp_format::write_lp(&model, w))?;
    let stats = model.stats();
    println!(
        "wrote {} ({} variables, {} binaries, {} constraints)",
        path.display(),
        stats.variables,
        stats.binaries,
        stats.constraints
    );
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors share the invalid-input code so that 2 always means a solver failure.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Settle(a) => cmd_settle(a),
        Command::Bench(a) => cmd_bench(a),
        Command::ExportLp(a) => cmd_export(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
