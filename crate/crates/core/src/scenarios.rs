//! The three community operating modes, their comparison, and the scaling
//! benchmark.
//!
//! * system-centric: one model for the whole community, settled at
//!   mid-market rates;
//! * prosumer-centric: every home optimizes alone against provider prices,
//!   then the fixed schedules are settled at mid-market rates;
//! * no CEMS: the same per-home schedules, but every home trades with the
//!   provider directly.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{generate_synthetic_community, to_json_string, validate_config, CommunityConfig};
use crate::milp::{build_home_model, build_system_centric_model, ModelError};
use crate::solve::{
    check_schedule_feasibility_with, community_cost, extract_home_schedule, extract_schedule,
    CheckOptions, CommunitySchedule, FeasibilityReport, HighsSolver, HomeSchedule, MilpSolver,
    ScheduleError, SolveError, SolveStatus, SolverOptions,
};
use crate::trading::{settle_day, settle_day_direct, SettlementReport, TradingError};

/// Absolute tolerance used when scenario schedules are re-checked.
pub const SCENARIO_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SystemCentric,
    ProsumerCentric,
    NoCems,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::SystemCentric,
        ScenarioKind::ProsumerCentric,
        ScenarioKind::NoCems,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ScenarioKind::SystemCentric => "system_centric",
            ScenarioKind::ProsumerCentric => "prosumer_centric",
            ScenarioKind::NoCems => "no_cems",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "system_centric" | "system" => Ok(ScenarioKind::SystemCentric),
            "prosumer_centric" | "prosumer" => Ok(ScenarioKind::ProsumerCentric),
            "no_cems" | "none" => Ok(ScenarioKind::NoCems),
            other => Err(format!(
                "unknown scenario `{other}` (expected system_centric, prosumer_centric or no_cems)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Trading(#[from] TradingError),
    #[error("{scope}: solver finished with status `{status}`{hint}")]
    NotSolved {
        scope: String,
        status: SolveStatus,
        hint: String,
    },
    #[error("{kind} schedule fails re-validation: {summary}")]
    CheckFailed {
        kind: ScenarioKind,
        summary: String,
        report: Box<FeasibilityReport>,
    },
    #[error("cannot compare: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub kind: ScenarioKind,
    /// SHA-256 of the canonical JSON form of the config.
    pub config_digest: String,
    /// Worst status over the solves involved.
    pub status: SolveStatus,
    pub schedule: CommunitySchedule,
    pub settlement: SettlementReport<f64>,
    /// Cents per day.
    pub community_cost: f64,
    /// Seconds spent building models.
    pub build_time: f64,
    /// Seconds spent in the solver, summed over solves.
    pub solve_time: f64,
    pub feasibility: FeasibilityReport,
}

pub fn config_digest(config: &CommunityConfig) -> String {
    Sha256::digest(to_json_string(config).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn not_solved_hint(config: &CommunityConfig, status: SolveStatus) -> String {
    if status != SolveStatus::Infeasible {
        return String::new();
    }
    let warnings: Vec<String> = validate_config(config)
        .warnings
        .iter()
        .map(|w| format!("{}: {}", w.path, w.message))
        .collect();
    if warnings.is_empty() {
        " (check comfort bands against outdoor temperature and HVAC rating, and peak limits against fixed loads)".into()
    } else {
        format!(" (config warnings: {})", warnings.join("; "))
    }
}

fn checked(
    kind: ScenarioKind,
    schedule: &CommunitySchedule,
    config: &CommunityConfig,
    options: &CheckOptions,
) -> Result<FeasibilityReport, ScenarioError> {
    let report = check_schedule_feasibility_with(schedule, config, options)?;
    if !report.is_feasible() || !report.cost_matches_solver {
        let mut parts: Vec<String> = report
            .violations
            .iter()
            .take(5)
            .map(|v| {
                format!(
                    "{} at {} slot {} by {:.3e}",
                    v.family,
                    v.home.as_deref().unwrap_or("community"),
                    v.slot,
                    v.magnitude
                )
            })
            .collect();
        if !report.cost_matches_solver {
            parts.push(format!(
                "recomputed cost {} differs from solver objective {:?}",
                report.cost_recomputed, report.solver_objective
            ));
        }
        return Err(ScenarioError::CheckFailed {
            kind,
            summary: parts.join("; "),
            report: Box::new(report),
        });
    }
    Ok(report)
}

fn worse(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    match (a, b) {
        (SolveStatus::Optimal, other) | (other, SolveStatus::Optimal) => other,
        (SolveStatus::Feasible { gap: x }, SolveStatus::Feasible { gap: y }) => {
            SolveStatus::Feasible { gap: x.max(y) }
        }
        (SolveStatus::Feasible { .. }, other) | (other, SolveStatus::Feasible { .. }) => other,
        (a, _) => a,
    }
}

pub fn run_system_centric(
    config: &CommunityConfig,
    options: &SolverOptions,
) -> Result<ScenarioResult, ScenarioError> {
    run_system_centric_with(config, options, &HighsSolver::default())
}

pub fn run_system_centric_with(
    config: &CommunityConfig,
    options: &SolverOptions,
    solver: &dyn MilpSolver,
) -> Result<ScenarioResult, ScenarioError> {
    let start = Instant::now();
    let model = build_system_centric_model(config)?;
    let build_time = start.elapsed().as_secs_f64();
    let solution = solver.solve(&model, options)?;
    if !solution.status.has_solution() {
        return Err(ScenarioError::NotSolved {
            scope: "system-centric model".into(),
            status: solution.status,
            hint: not_solved_hint(config, solution.status),
        });
    }
    let schedule = extract_schedule(&solution, &model, config)?;
    let feasibility = checked(
        ScenarioKind::SystemCentric,
        &schedule,
        config,
        &CheckOptions::system(SCENARIO_TOLERANCE),
    )?;
    let settlement = settle_day(&schedule, config)?;
    Ok(ScenarioResult {
        kind: ScenarioKind::SystemCentric,
        config_digest: config_digest(config),
        status: solution.status,
        community_cost: community_cost(&schedule, config),
        schedule,
        settlement,
        build_time,
        solve_time: solution.solve_time,
        feasibility,
    })
}

/// Independently solved per-home schedules, in config order.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeSolves {
    pub schedules: Vec<HomeSchedule>,
    pub status: SolveStatus,
    pub build_time: f64,
    pub solve_time: f64,
}

fn default_parallelism(n: usize) -> usize {
    std::thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(n.max(1))
}

/// Solves every home's own model, using up to `parallelism` worker threads.
/// The merge is by home index, so the result does not depend on scheduling.
pub fn solve_homes(
    config: &CommunityConfig,
    options: &SolverOptions,
    solver: &dyn MilpSolver,
    parallelism: usize,
) -> Result<HomeSolves, ScenarioError> {
    config.ensure_valid().map_err(ModelError::from)?;
    let n = config.n_homes();
    let workers = parallelism.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    type Outcome = Result<(HomeSchedule, SolveStatus, f64, f64), ScenarioError>;
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..n).map(|_| None).collect());

    let solve_one = |i: usize| -> Outcome {
        let start = Instant::now();
        let model = build_home_model(i, config)?;
        let build = start.elapsed().as_secs_f64();
        let solution = solver.solve(&model, options)?;
        if !solution.status.has_solution() {
            return Err(ScenarioError::NotSolved {
                scope: format!("home `{}`", config.homes[i].id),
                status: solution.status,
                hint: not_solved_hint(config, solution.status),
            });
        }
        let schedule = extract_home_schedule(&solution, &model, config, i)?;
        Ok((schedule, solution.status, build, solution.solve_time))
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let outcome = solve_one(i);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });

    let mut out = HomeSolves {
        schedules: Vec::with_capacity(n),
        status: SolveStatus::Optimal,
        build_time: 0.0,
        solve_time: 0.0,
    };
    for outcome in slots.into_inner().expect("workers finished") {
        let (schedule, status, build, solve) = outcome.expect("every home index was claimed")?;
        out.schedules.push(schedule);
        out.status = worse(out.status, status);
        out.build_time += build;
        out.solve_time += solve;
    }
    Ok(out)
}

fn from_home_solves(
    kind: ScenarioKind,
    config: &CommunityConfig,
    solves: HomeSolves,
) -> Result<ScenarioResult, ScenarioError> {
    let schedule = CommunitySchedule::from_home_schedules(solves.schedules)?;
    let feasibility = checked(kind, &schedule, config, &CheckOptions::per_home(SCENARIO_TOLERANCE))?;
    let (settlement, community_cost) = match kind {
        ScenarioKind::NoCems => {
            let s = settle_day_direct(&schedule, config)?;
            let cost = s.per_home_daily_cost.iter().sum();
            (s, cost)
        }
        _ => (settle_day(&schedule, config)?, community_cost(&schedule, config)),
    };
    Ok(ScenarioResult {
        kind,
        config_digest: config_digest(config),
        status: solves.status,
        schedule,
        settlement,
        community_cost,
        build_time: solves.build_time,
        solve_time: solves.solve_time,
        feasibility,
    })
}

pub fn run_prosumer_centric(
    config: &CommunityConfig,
    options: &SolverOptions,
) -> Result<ScenarioResult, ScenarioError> {
    let solves = solve_homes(config, options, &HighsSolver::default(), default_parallelism(config.n_homes()))?;
    from_home_solves(ScenarioKind::ProsumerCentric, config, solves)
}

pub fn run_no_cems(config: &CommunityConfig, options: &SolverOptions) -> Result<ScenarioResult, ScenarioError> {
    let solves = solve_homes(config, options, &HighsSolver::default(), default_parallelism(config.n_homes()))?;
    from_home_solves(ScenarioKind::NoCems, config, solves)
}

/// Runs the requested scenarios, solving the per-home models once and
/// sharing them between the prosumer-centric and no-CEMS results.
pub fn run_scenarios(
    config: &CommunityConfig,
    options: &SolverOptions,
    kinds: &[ScenarioKind],
    solver: &dyn MilpSolver,
    parallelism: Option<usize>,
) -> Result<Vec<ScenarioResult>, ScenarioError> {
    let mut home_solves: Option<HomeSolves> = None;
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let result = match kind {
            ScenarioKind::SystemCentric => run_system_centric_with(config, options, solver)?,
            _ => {
                if home_solves.is_none() {
                    let p = parallelism.unwrap_or_else(|| default_parallelism(config.n_homes()));
                    home_solves = Some(solve_homes(config, options, solver, p)?);
                }
                let solves = home_solves.clone().expect("just filled");
                from_home_solves(kind, config, solves)?
            }
        };
        out.push(result);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub kind: ScenarioKind,
    pub status: SolveStatus,
    pub community_cost: f64,
    /// `community_cost` minus that of the first scenario compared.
    pub cost_delta: f64,
    pub max_violation: f64,
    pub peak_warnings: usize,
    /// Cost per home, aligned with [`ComparisonReport::home_ids`].
    pub home_cost: Vec<f64>,
    /// Energy bought from the provider per slot.
    pub provider_demand: Vec<f64>,
    /// Energy sold to the provider per slot.
    pub provider_sales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_digest: String,
    pub home_ids: Vec<String>,
    pub scenarios: Vec<ScenarioSummary>,
}

/// Energy exchanged with the provider per slot as (bought, sold). Without a
/// CEMS every home meets the provider on its own, so homes are not netted.
fn provider_flows(result: &ScenarioResult) -> (Vec<f64>, Vec<f64>) {
    let t = result.schedule.horizon();
    match result.kind {
        ScenarioKind::NoCems => (0..t)
            .map(|k| {
                result.schedule.homes.iter().fold((0.0, 0.0), |(b, s), h| {
                    let n = h.slots[k].net;
                    (b + n.max(0.0), s + (-n).max(0.0))
                })
            })
            .unzip(),
        _ => result
            .schedule
            .community
            .iter()
            .map(|c| (c.net.max(0.0), (-c.net).max(0.0)))
            .unzip(),
    }
}

pub fn compare(results: &[ScenarioResult]) -> Result<ComparisonReport, ScenarioError> {
    let first = results
        .first()
        .ok_or_else(|| ScenarioError::Mismatch("no results given".into()))?;
    if let Some(r) = results.iter().find(|r| r.config_digest != first.config_digest) {
        return Err(ScenarioError::Mismatch(format!(
            "{} ran on a different config than {}",
            r.kind, first.kind
        )));
    }
    let scenarios = results
        .iter()
        .map(|r| {
            let (provider_demand, provider_sales) = provider_flows(r);
            ScenarioSummary {
                kind: r.kind,
                status: r.status,
                community_cost: r.community_cost,
                cost_delta: r.community_cost - first.community_cost,
                max_violation: r.feasibility.max_violation,
                peak_warnings: r.feasibility.warnings.len(),
                home_cost: r.settlement.per_home_daily_cost.clone(),
                provider_demand,
                provider_sales,
            }
        })
        .collect();
    Ok(ComparisonReport {
        config_digest: first.config_digest.clone(),
        home_ids: first.settlement.home_ids.clone(),
        scenarios,
    })
}

impl ComparisonReport {
    pub fn summary(&self, kind: ScenarioKind) -> Option<&ScenarioSummary> {
        self.scenarios.iter().find(|s| s.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per scenario:
    /// `scenario,status,community_cost,cost_delta,max_violation,peak_warnings`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "scenario",
            "status",
            "community_cost",
            "cost_delta",
            "max_violation",
            "peak_warnings",
        ])?;
        for s in &self.scenarios {
            out.write_record([
                s.kind.token().to_string(),
                s.status.token().to_string(),
                s.community_cost.to_string(),
                s.cost_delta.to_string(),
                s.max_violation.to_string(),
                s.peak_warnings.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `scenario,home,cost`, one row per scenario and home.
    pub fn write_home_costs_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "home", "cost"])?;
        for s in &self.scenarios {
            for (id, c) in self.home_ids.iter().zip(&s.home_cost) {
                out.write_record([s.kind.token(), id, &c.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `scenario,slot,provider_demand,provider_sales`, one row per scenario
    /// and slot.
    pub fn write_provider_flows_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "slot", "provider_demand", "provider_sales"])?;
        for s in &self.scenarios {
            for (k, (d, e)) in s.provider_demand.iter().zip(&s.provider_sales).enumerate() {
                out.write_record([
                    s.kind.token().to_string(),
                    (k + 1).to_string(),
                    d.to_string(),
                    e.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_homes: usize,
    pub variables: usize,
    pub binaries: usize,
    pub constraints: usize,
    pub build_time: f64,
    pub solve_time: f64,
    /// Solver status token, or `error` when the row failed.
    pub status: String,
    pub objective: Option<f64>,
    pub gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub relative_mip_gap: f64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns: `n_homes,variables,binaries,constraints,status,objective,gap,error`.
    /// Timings go to [`BenchReport::write_timings_csv`] so this file is
    /// reproducible.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "n_homes",
            "variables",
            "binaries",
            "constraints",
            "status",
            "objective",
            "gap",
            "error",
        ])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.n_homes.to_string(),
                r.variables.to_string(),
                r.binaries.to_string(),
                r.constraints.to_string(),
                r.status.clone(),
                opt(r.objective),
                opt(r.gap),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Columns: `n_homes,build_time_s,solve_time_s`.
    pub fn write_timings_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n_homes", "build_time_s", "solve_time_s"])?;
        for r in &self.rows {
            out.write_record([
                r.n_homes.to_string(),
                format!("{:.6}", r.build_time),
                format!("{:.6}", r.solve_time),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn bench_row(n: usize, seed: u64, template: &CommunityConfig, options: &SolverOptions, solver: &dyn MilpSolver) -> BenchRow {
    let mut row = BenchRow {
        n_homes: n,
        variables: 0,
        binaries: 0,
        constraints: 0,
        build_time: 0.0,
        solve_time: 0.0,
        status: "error".into(),
        objective: None,
        gap: None,
        error: None,
    };
    let config = match generate_synthetic_community(n, seed, template) {
        Ok(c) => c,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let start = Instant::now();
    let model = match build_system_centric_model(&config) {
        Ok(m) => m,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.build_time = start.elapsed().as_secs_f64();
    let stats = model.stats();
    row.variables = stats.variables;
    row.binaries = stats.binaries;
    row.constraints = stats.constraints;
    match solver.solve(&model, options) {
        Ok(sol) => {
            row.solve_time = sol.solve_time;
            row.status = sol.status.token().into();
            row.objective = sol.objective;
            if let SolveStatus::Feasible { gap } = sol.status {
                row.gap = Some(gap);
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Builds and solves the community model for synthetic communities of each
/// size. Failures are recorded in the row and the run continues.
pub fn bench_scaling(
    sizes: &[usize],
    seed: u64,
    template: &CommunityConfig,
    options: &SolverOptions,
) -> Result<BenchReport, ScenarioError> {
    bench_scaling_with(sizes, seed, template, options, &HighsSolver::default())
}

pub fn bench_scaling_with(
    sizes: &[usize],
    seed: u64,
    template: &CommunityConfig,
    options: &SolverOptions,
    solver: &dyn MilpSolver,
) -> Result<BenchReport, ScenarioError> {
    if sizes.is_empty() {
        return Err(ScenarioError::Invalid("at least one community size is required".into()));
    }
    options.validate()?;
    template.ensure_valid().map_err(ModelError::from)?;
    Ok(BenchReport {
        seed,
        relative_mip_gap: options.relative_mip_gap,
        rows: sizes
            .iter()
            .map(|&n| bench_row(n, seed, template, options, solver))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_tokens_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.token().parse::<ScenarioKind>().unwrap(), k);
        }
        assert_eq!("no-cems".parse::<ScenarioKind>().unwrap(), ScenarioKind::NoCems);
        assert!("both".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn status_ordering() {
        let f = |g| SolveStatus::Feasible { gap: g };
        assert_eq!(worse(SolveStatus::Optimal, SolveStatus::Optimal), SolveStatus::Optimal);
        assert_eq!(worse(SolveStatus::Optimal, f(0.1)), f(0.1));
        assert_eq!(worse(f(0.2), f(0.1)), f(0.2));
    }
}
