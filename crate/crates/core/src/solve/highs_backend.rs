//! HiGHS backend.

use std::collections::BTreeMap;
use std::num::NonZeroU32;
use std::time::Instant;

use highs::{Col, HighsModelStatus, HighsOptionValue, HighsSolutionStatus, RowProblem};

use super::{MilpSolver, Solution, SolveError, SolveStatus, SolverOptions};
use crate::milp::{MilpModel, Sense, VarId, VarKind};

/// Feasibility tolerance for the polishing LP.
const POLISH_TOLERANCE: f64 = 1e-9;

/// HiGHS branch-and-cut.
///
/// With `polish` set (the default), the binaries of the incumbent are
/// rounded and fixed and the remaining LP is re-solved at a tight
/// feasibility tolerance, so continuous values are accurate to about 1e-9
/// instead of the MIP tolerance.
#[derive(Debug, Clone, Copy)]
pub struct HighsSolver {
    pub polish: bool,
}

impl Default for HighsSolver {
    fn default() -> Self {
        HighsSolver { polish: true }
    }
}

struct RawOutcome {
    status: HighsModelStatus,
    has_primal: bool,
    gap: f64,
    columns: Vec<f64>,
}

fn merged(terms: &[(VarId, f64)]) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for &(id, c) in terms {
        *out.entry(id.0).or_insert(0.0) += c;
    }
    out
}

fn set_option<V: HighsOptionValue>(
    highs: &mut highs::Model,
    name: &str,
    value: V,
) -> Result<(), SolveError> {
    highs
        .try_set_option(name, value)
        .map_err(|e| SolveError::InvalidOptions(format!("HiGHS option `{name}`: {e}")))
}

fn run(
    model: &MilpModel,
    options: &SolverOptions,
    presolve: bool,
    tolerance: Option<f64>,
) -> Result<RawOutcome, SolveError> {
    let mut problem = RowProblem::default();
    let objective = merged(&model.objective().terms);
    let cols: Vec<Col> = model
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let cost = objective.get(&i).copied().unwrap_or(0.0);
            problem.add_column_with_integrality(cost, v.lower..=v.upper, v.kind == VarKind::Binary)
        })
        .collect();
    for c in model.constraints() {
        let terms: Vec<(Col, f64)> = merged(&c.terms)
            .into_iter()
            .map(|(i, a)| (cols[i], a))
            .collect();
        match c.sense {
            Sense::Le => problem.add_row(..=c.rhs, terms),
            Sense::Ge => problem.add_row(c.rhs.., terms),
            Sense::Eq => problem.add_row(c.rhs..=c.rhs, terms),
        }
    }

    let mut highs = problem
        .try_optimise(highs::Sense::Minimise)
        .map_err(|s| SolveError::Unavailable(format!("HiGHS rejected the model: {s:?}")))?;
    set_option(&mut highs, "output_flag", false)?;
    set_option(&mut highs, "mip_rel_gap", options.relative_mip_gap)?;
    if let Some(t) = options.time_limit {
        set_option(&mut highs, "time_limit", t)?;
    }
    if let Some(n) = options.threads.and_then(NonZeroU32::new) {
        highs.set_threads(n);
    }
    if !presolve {
        set_option(&mut highs, "presolve", "off")?;
    }
    if let Some(tol) = tolerance {
        set_option(&mut highs, "primal_feasibility_tolerance", tol)?;
        set_option(&mut highs, "dual_feasibility_tolerance", tol)?;
    }

    let solved = highs
        .try_solve()
        .map_err(|s| SolveError::Numerical(format!("HiGHS run failed: {s:?}")))?;
    let status = solved.status();
    let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
    let gap = if model.stats().binaries > 0 {
        solved.mip_gap()
    } else {
        0.0
    };
    let columns = if has_primal {
        solved.get_solution().columns().to_vec()
    } else {
        Vec::new()
    };
    Ok(RawOutcome {
        status,
        has_primal,
        gap,
        columns,
    })
}

impl HighsSolver {
    fn polish(&self, model: &MilpModel, options: &SolverOptions, columns: &[f64]) -> Option<Vec<f64>> {
        let fixed = model.with_binaries_fixed(columns);
        let lp_options = SolverOptions {
            relative_mip_gap: 0.0,
            ..options.clone()
        };
        let raw = run(&fixed, &lp_options, true, Some(POLISH_TOLERANCE)).ok()?;
        (raw.status == HighsModelStatus::Optimal && raw.has_primal).then_some(raw.columns)
    }
}

impl MilpSolver for HighsSolver {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, options: &SolverOptions) -> Result<Solution, SolveError> {
        options.validate()?;
        let start = Instant::now();
        if model.variables().is_empty() {
            return Ok(Solution {
                status: SolveStatus::Optimal,
                objective: Some(model.objective().constant),
                values: BTreeMap::new(),
                solve_time: start.elapsed().as_secs_f64(),
            });
        }

        let mut raw = run(model, options, true, None)?;
        if raw.status == HighsModelStatus::UnboundedOrInfeasible {
            // Presolve cannot always tell these apart; the simplex can.
            raw = run(model, options, false, None)?;
        }

        let status = match raw.status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt => {
                if raw.has_primal {
                    SolveStatus::Feasible { gap: raw.gap }
                } else {
                    SolveStatus::TimeLimit
                }
            }
            HighsModelStatus::UnboundedOrInfeasible => {
                return Err(SolveError::Numerical(
                    "HiGHS could not decide between infeasible and unbounded".into(),
                ))
            }
            other => return Err(SolveError::Numerical(format!("HiGHS returned {other:?}"))),
        };

        if !status.has_solution() || !raw.has_primal {
            return Ok(Solution::without_values(status, start.elapsed().as_secs_f64()));
        }

        let mut columns = raw.columns;
        if self.polish {
            if let Some(polished) = self.polish(model, options, &columns) {
                columns = polished;
            }
        }
        for (x, v) in columns.iter_mut().zip(model.variables()) {
            if v.kind == VarKind::Binary {
                *x = x.round();
            }
        }
        let objective = model.evaluate_objective(&columns);
        let values = model
            .variables()
            .iter()
            .zip(&columns)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect();
        Ok(Solution {
            status,
            objective: Some(objective),
            values,
            solve_time: start.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Objective;

    fn knapsack() -> MilpModel {
        // min -x - 2y  s.t.  x + y <= 1.5, y binary, 0 <= x <= 1
        let mut m = MilpModel::new();
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Continuous, None).unwrap();
        let y = m.add_variable("y", 0.0, 1.0, VarKind::Binary, None).unwrap();
        m.add_constraint("cap", vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.5).unwrap();
        m.set_objective(Objective {
            terms: vec![(x, -1.0), (y, -2.0)],
            constant: 3.0,
        })
        .unwrap();
        m
    }

    #[test]
    fn small_milp_optimum_with_constant() {
        let sol = HighsSolver::default().solve(&knapsack(), &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective.unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(sol.values["y"], 1.0);
        assert!((sol.values["x"] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn unpolished_agrees() {
        let sol = HighsSolver { polish: false }
            .solve(&knapsack(), &SolverOptions::default())
            .unwrap();
        assert!((sol.objective.unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut m = MilpModel::new();
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Continuous, None).unwrap();
        m.add_constraint("c", vec![(x, 1.0)], Sense::Ge, 2.0).unwrap();
        let sol = solve_model_default(&m);
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.values.is_empty() && sol.objective.is_none());

        let mut m = MilpModel::new();
        let x = m
            .add_variable("x", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, None)
            .unwrap();
        let b = m.add_variable("b", 0.0, 1.0, VarKind::Binary, None).unwrap();
        m.add_constraint("c", vec![(x, 1.0), (b, 1.0)], Sense::Le, 2.0).unwrap();
        m.set_objective(Objective {
            terms: vec![(x, 1.0)],
            constant: 0.0,
        })
        .unwrap();
        assert_eq!(solve_model_default(&m).status, SolveStatus::Unbounded);
    }

    fn solve_model_default(m: &MilpModel) -> Solution {
        HighsSolver::default().solve(m, &SolverOptions::default()).unwrap()
    }
}
