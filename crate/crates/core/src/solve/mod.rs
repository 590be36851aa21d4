//! Solver boundary, schedule extraction and the independent checker.

mod check;
mod highs_backend;
mod schedule;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::MilpModel;

pub use check::{
    check_schedule_feasibility, check_schedule_feasibility_with, community_cost,
    community_cost_series, CheckOptions, ConstraintFamily, FeasibilityReport, PeakCheck,
    Violation, BINARY_TOLERANCE,
};
pub use highs_backend::HighsSolver;
pub use schedule::{
    extract_home_schedule, extract_schedule, write_schedule_csv, CommunitySchedule,
    CommunitySlot, HomeSchedule, HomeSlot, ScheduleError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub relative_mip_gap: f64,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub threads: Option<u32>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            relative_mip_gap: 1e-6,
            time_limit: None,
            threads: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.relative_mip_gap >= 0.0) {
            return Err(SolveError::InvalidOptions(format!(
                "relative_mip_gap must be non-negative, got {}",
                self.relative_mip_gap
            )));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(SolveError::InvalidOptions(format!(
                    "time_limit must be positive, got {t}"
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(SolveError::InvalidOptions("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Incumbent found but optimality not proven; `gap` is the final relative gap.
    Feasible { gap: f64 },
    Infeasible,
    Unbounded,
    TimeLimit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible { .. })
    }

    pub fn token(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible { .. } => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::TimeLimit => "time_limit",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Feasible { gap } => write!(f, "feasible (gap {gap:.3e})"),
            other => f.write_str(other.token()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    /// Present iff `status` carries a solution.
    pub objective: Option<f64>,
    /// Variable name to value; empty unless `status` carries a solution.
    pub values: BTreeMap<String, f64>,
    /// Wall-clock seconds spent in the solver.
    pub solve_time: f64,
}

impl Solution {
    pub fn without_values(status: SolveStatus, solve_time: f64) -> Self {
        Solution {
            status,
            objective: None,
            values: BTreeMap::new(),
            solve_time,
        }
    }

    /// Values in the model's declaration order.
    pub fn ordered_values(&self, model: &MilpModel) -> Result<Vec<f64>, ScheduleError> {
        model
            .variables()
            .iter()
            .map(|v| {
                self.values
                    .get(&v.name)
                    .copied()
                    .ok_or_else(|| ScheduleError::MissingVariable(v.name.clone()))
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("solver unavailable: {0}")]
    Unavailable(String),
    #[error("solver failed: {0}")]
    Numerical(String),
    #[error("malformed solution file at line {line}: {message}")]
    SolutionFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait MilpSolver: Send + Sync {
    fn name(&self) -> &str;

    fn solve(&self, model: &MilpModel, options: &SolverOptions) -> Result<Solution, SolveError>;
}

/// Solves with the bundled HiGHS backend.
pub fn solve_model(model: &MilpModel, options: &SolverOptions) -> Result<Solution, SolveError> {
    HighsSolver::default().solve(model, options)
}

/// Writes `objective`, `status` (and `gap` when feasible) headers followed by
/// one `<name> <value>` line per variable.
pub fn write_solution<W: Write>(solution: &Solution, mut w: W) -> io::Result<()> {
    if let Some(obj) = solution.objective {
        writeln!(w, "objective {obj:?}")?;
    }
    writeln!(w, "status {}", solution.status.token())?;
    if let SolveStatus::Feasible { gap } = solution.status {
        writeln!(w, "gap {gap:?}")?;
    }
    for (name, v) in &solution.values {
        writeln!(w, "{name} {v:?}")?;
    }
    w.flush()
}

/// Reads the format produced by [`write_solution`] or by an external solver
/// emitting the same layout. Blank lines and `#` comments are skipped.
pub fn read_solution<R: BufRead>(reader: R) -> Result<Solution, SolveError> {
    let mut objective = None;
    let mut status = None;
    let mut gap = None;
    let mut values = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let err = |message: String| SolveError::SolutionFormat {
            line: line_no,
            message,
        };
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut parts = text.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let value = parts
            .next()
            .ok_or_else(|| err(format!("expected `<name> <value>`, got `{text}`")))?;
        if parts.next().is_some() {
            return Err(err(format!("trailing tokens in `{text}`")));
        }
        let number = || f64::from_str(value).map_err(|e| err(format!("bad number `{value}`: {e}")));
        match key {
            "objective" => objective = Some(number()?),
            "gap" => gap = Some(number()?),
            "status" => {
                status = Some(match value {
                    "optimal" => SolveStatus::Optimal,
                    "feasible" => SolveStatus::Feasible { gap: f64::NAN },
                    "infeasible" => SolveStatus::Infeasible,
                    "unbounded" => SolveStatus::Unbounded,
                    "time_limit" => SolveStatus::TimeLimit,
                    other => return Err(err(format!("unknown status `{other}`"))),
                })
            }
            name => {
                if values.insert(name.to_string(), number()?).is_some() {
                    return Err(err(format!("duplicate variable `{name}`")));
                }
            }
        }
    }
    let mut status = status.ok_or(SolveError::SolutionFormat {
        line: 0,
        message: "missing `status` header".into(),
    })?;
    if let SolveStatus::Feasible { gap: g } = &mut status {
        *g = gap.unwrap_or(f64::NAN);
    }
    if status.has_solution() && objective.is_none() {
        return Err(SolveError::SolutionFormat {
            line: 0,
            message: "missing `objective` header".into(),
        });
    }
    if !status.has_solution() && !values.is_empty() {
        return Err(SolveError::SolutionFormat {
            line: 0,
            message: format!("status `{}` must not carry values", status.token()),
        });
    }
    Ok(Solution {
        status,
        objective: if status.has_solution() { objective } else { None },
        values,
        solve_time: 0.0,
    })
}
