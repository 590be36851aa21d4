//! Solver-neutral mixed-integer linear models.
//!
//! [`MilpModel`] holds variables, linear rows and a linear objective. The
//! community builders in [`build`] fill it; [`lp_format`] writes it in the
//! CPLEX LP text format for out-of-process solvers.

mod build;
pub mod lp_format;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ConfigError;

pub use build::{
    big_m_value, build_home_model, build_system_centric_model, derived_big_m, home_flow_bound,
    BigM, BigMProvenance,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("row `{row}` references unknown variable #{index}")]
    UnknownVariable { row: String, index: usize },
    #[error("binary variable `{0}` must have bounds [0, 1]")]
    BinaryBounds(String),
    #[error("variable `{name}` has empty bounds [{lower}, {upper}]")]
    EmptyBounds { name: String, lower: f64, upper: f64 },
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("home index {0} out of range")]
    NoSuchHome(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Linear objective, always minimized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

/// Physical meaning of a model variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRole {
    HvacPower,
    HvacEnergy,
    IndoorTemp,
    EssLevel,
    EssLoad,
    EssSell,
    ResCharge,
    ComCharge,
    ResLoad,
    ResSell,
    ComLoad,
    ComBuy,
    ComSell,
    ModeEss,
    ModeHome,
    BuyStatus,
    SlotCost,
}

impl VarRole {
    /// Name prefix used in `<role>_<home>_<slot>` variable names.
    pub fn prefix(self) -> &'static str {
        match self {
            VarRole::HvacPower => "p",
            VarRole::HvacEnergy => "ehvac",
            VarRole::IndoorTemp => "tin",
            VarRole::EssLevel => "esslevel",
            VarRole::EssLoad => "essload",
            VarRole::EssSell => "esssell",
            VarRole::ResCharge => "rescharge",
            VarRole::ComCharge => "comcharge",
            VarRole::ResLoad => "resload",
            VarRole::ResSell => "ressell",
            VarRole::ComLoad => "comload",
            VarRole::ComBuy => "buy",
            VarRole::ComSell => "sell",
            VarRole::ModeEss => "modeess",
            VarRole::ModeHome => "modehome",
            VarRole::BuyStatus => "s",
            VarRole::SlotCost => "ccom",
        }
    }

    pub fn is_community(self) -> bool {
        matches!(self, VarRole::BuyStatus | VarRole::SlotCost)
    }
}

/// Where a variable lives: home index (`None` for community variables),
/// 1-based slot, and role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarMeta {
    pub home: Option<usize>,
    pub slot: usize,
    pub role: VarRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub variables: usize,
    pub binaries: usize,
    pub constraints: usize,
    pub nonzeros: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    variables: Vec<Variable>,
    metadata: Vec<Option<VarMeta>>,
    constraints: Vec<Constraint>,
    objective: Objective,
    index: HashMap<String, VarId>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        meta: Option<VarMeta>,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if kind == VarKind::Binary && (lower < 0.0 || upper > 1.0) {
            return Err(ModelError::BinaryBounds(name));
        }
        if lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(ModelError::EmptyBounds { name, lower, upper });
        }
        if self.index.contains_key(&name) {
            return Err(ModelError::DuplicateVariable(name));
        }
        let id = VarId(self.variables.len());
        self.index.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            lower,
            upper,
            kind,
        });
        self.metadata.push(meta);
        Ok(id)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<(), ModelError> {
        let name = name.into();
        if let Some((id, _)) = terms.iter().find(|(id, _)| id.0 >= self.variables.len()) {
            return Err(ModelError::UnknownVariable {
                row: name,
                index: id.0,
            });
        }
        self.constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
        });
        Ok(())
    }

    pub fn set_objective(&mut self, objective: Objective) -> Result<(), ModelError> {
        if let Some((id, _)) = objective.terms.iter().find(|(id, _)| id.0 >= self.variables.len()) {
            return Err(ModelError::UnknownVariable {
                row: "objective".into(),
                index: id.0,
            });
        }
        self.objective = objective;
        Ok(())
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn meta(&self, id: VarId) -> Option<VarMeta> {
        self.metadata[id.0]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    /// Variables carrying metadata, in declaration order.
    pub fn metadata(&self) -> impl Iterator<Item = (VarId, &str, VarMeta)> + '_ {
        self.variables
            .iter()
            .zip(&self.metadata)
            .enumerate()
            .filter_map(|(i, (v, m))| m.map(|m| (VarId(i), v.name.as_str(), m)))
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            variables: self.variables.len(),
            binaries: self.variables.iter().filter(|v| v.kind == VarKind::Binary).count(),
            constraints: self.constraints.len(),
            nonzeros: self.constraints.iter().map(|c| c.terms.len()).sum(),
        }
    }

    /// Same model with every binary relaxed to a continuous `[0, 1]`.
    pub fn lp_relaxation(&self) -> MilpModel {
        let mut relaxed = self.clone();
        for v in &mut relaxed.variables {
            v.kind = VarKind::Continuous;
        }
        relaxed
    }

    /// Returns a copy with each binary fixed to the given value.
    pub fn with_binaries_fixed(&self, values: &[f64]) -> MilpModel {
        let mut fixed = self.clone();
        for (v, &x) in fixed.variables.iter_mut().zip(values) {
            if v.kind == VarKind::Binary {
                let b = if x >= 0.5 { 1.0 } else { 0.0 };
                v.lower = b;
                v.upper = b;
                v.kind = VarKind::Continuous;
            }
        }
        fixed
    }

    /// Objective value at a full assignment in declaration order.
    pub fn evaluate_objective(&self, values: &[f64]) -> f64 {
        self.objective.constant
            + self
                .objective
                .terms
                .iter()
                .map(|&(id, c)| c * values[id.0])
                .sum::<f64>()
    }

    /// Largest row or bound violation of an assignment.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        let rows = self.constraints.iter().map(|c| {
            let lhs: f64 = c.terms.iter().map(|&(id, a)| a * values[id.0]).sum();
            match c.sense {
                Sense::Le => (lhs - c.rhs).max(0.0),
                Sense::Ge => (c.rhs - lhs).max(0.0),
                Sense::Eq => (lhs - c.rhs).abs(),
            }
        });
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Checks the structural invariants: every term references a declared
    /// variable, binaries live in [0, 1], names are unique.
    pub fn check_invariants(&self) -> Result<(), ModelError> {
        let n = self.variables.len();
        let rows = self
            .constraints
            .iter()
            .map(|c| (c.name.as_str(), &c.terms))
            .chain(std::iter::once(("objective", &self.objective.terms)));
        for (row, terms) in rows {
            if let Some((id, _)) = terms.iter().find(|(id, _)| id.0 >= n) {
                return Err(ModelError::UnknownVariable {
                    row: row.to_string(),
                    index: id.0,
                });
            }
        }
        for v in &self.variables {
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryBounds(v.name.clone()));
            }
        }
        if self.index.len() != n {
            return Err(ModelError::DuplicateVariable("<index out of sync>".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_bad_binaries() {
        let mut m = MilpModel::new();
        m.add_variable("x", 0.0, 1.0, VarKind::Continuous, None).unwrap();
        assert!(matches!(
            m.add_variable("x", 0.0, 1.0, VarKind::Continuous, None),
            Err(ModelError::DuplicateVariable(_))
        ));
        assert!(matches!(
            m.add_variable("b", 0.0, 2.0, VarKind::Binary, None),
            Err(ModelError::BinaryBounds(_))
        ));
        assert!(m.add_variable("e", 2.0, 1.0, VarKind::Continuous, None).is_err());
    }

    #[test]
    fn rejects_unknown_variable_in_row() {
        let mut m = MilpModel::new();
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Continuous, None).unwrap();
        assert!(m.add_constraint("r", vec![(x, 1.0), (VarId(7), 1.0)], Sense::Le, 1.0).is_err());
        assert!(m
            .set_objective(Objective {
                terms: vec![(VarId(3), 1.0)],
                constant: 0.0
            })
            .is_err());
    }

    #[test]
    fn relaxation_and_fixing() {
        let mut m = MilpModel::new();
        m.add_variable("b", 0.0, 1.0, VarKind::Binary, None).unwrap();
        m.add_variable("x", 0.0, 5.0, VarKind::Continuous, None).unwrap();
        assert_eq!(m.stats().binaries, 1);
        assert_eq!(m.lp_relaxation().stats().binaries, 0);
        let fixed = m.with_binaries_fixed(&[0.9999, 3.0]);
        assert_eq!(fixed.variables()[0].lower, 1.0);
        assert_eq!(fixed.variables()[0].upper, 1.0);
        assert_eq!(fixed.variables()[1].upper, 5.0);
    }

    #[test]
    fn violation_measure() {
        let mut m = MilpModel::new();
        let x = m.add_variable("x", 0.0, 5.0, VarKind::Continuous, None).unwrap();
        let y = m.add_variable("y", 0.0, 5.0, VarKind::Continuous, None).unwrap();
        m.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 4.0).unwrap();
        assert_eq!(m.max_violation(&[1.0, 3.0]), 0.0);
        assert_eq!(m.max_violation(&[1.0, 1.5]), 1.5);
        assert_eq!(m.max_violation(&[6.0, -2.0]), 2.0);
    }
}
