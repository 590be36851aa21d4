//! Day-ahead scheduling for an energy community of homes with HVAC loads,
//! rooftop PV and batteries.
//!
//! The crate builds the community-wide mixed-integer model (and the per-home
//! model used by the prosumer-centric baseline), solves it through a
//! pluggable solver boundary, re-checks every schedule against the raw
//! physics, and settles local trades with mid-market-rate pricing.
//!
//! Physics ([`thermal`]), settlement ([`trading`]) and cost evaluation are
//! generic over [`Scalar`], so the same code runs in `f64` and in exact
//! rational arithmetic ([`Exact`]). Model construction and the solver
//! boundary work in `f64`.

pub mod domain;
pub mod milp;
pub mod scalar;
pub mod scenarios;
pub mod solve;
pub mod thermal;
pub mod trading;

pub use scalar::Scalar;

pub use domain::{
    BigMPolicy, CommunityConfig, ConfigError, EssParams, HomeConfig, HvacParams, PvParams,
    ValidationReport,
};
pub use milp::{BigM, MilpModel};
pub use scenarios::{BenchReport, ComparisonReport, ScenarioKind, ScenarioResult};
pub use solve::{
    CommunitySchedule, FeasibilityReport, HighsSolver, MilpSolver, Solution, SolveStatus,
    SolverOptions,
};
pub use trading::MidPricePolicy;

/// Exact rational scalar used to verify identities without round-off.
pub type Exact = num_rational::Rational64;

/// Floating-point thermal trajectory.
pub type Trajectory = thermal::ThermalTrajectory<f64>;
/// Thermal trajectory in exact arithmetic.
pub type ExactTrajectory = thermal::ThermalTrajectory<Exact>;

/// Floating-point settlement of one slot.
pub type SlotSettlement = trading::SlotSettlement<f64>;
/// One slot settled in exact arithmetic.
pub type ExactSlotSettlement = trading::SlotSettlement<Exact>;

/// Floating-point daily settlement.
pub type SettlementReport = trading::SettlementReport<f64>;
/// Daily settlement in exact arithmetic.
pub type ExactSettlementReport = trading::SettlementReport<Exact>;
