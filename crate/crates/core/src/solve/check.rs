//! Re-validation of schedules against the raw physics and price rules.
//!
//! Nothing here looks at model rows: temperatures are re-simulated with
//! [`crate::thermal`], battery levels are re-accumulated from the flows, PV
//! output is recomputed from irradiance, and the community cost uses the
//! sign of the net exchange directly instead of the big-M encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::schedule::{CommunitySchedule, HomeSlot, ScheduleError};
use crate::domain::CommunityConfig;
use crate::thermal::{indoor_step, pv_output_energy};
use crate::trading::provider_cost;
use crate::Scalar;

/// Mode values farther than this from {0, 1} count as violations whatever
/// the continuous tolerance.
pub const BINARY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    HvacPower,
    HvacEnergy,
    ThermalRecursion,
    Comfort,
    EssLevel,
    EssBounds,
    EssRate,
    EssExclusivity,
    EssTerminal,
    ResSplit,
    Balance,
    BuySell,
    HomeExclusivity,
    NetDefinition,
    CommunityPeak,
    HomePeak,
    NonNegative,
    Integrality,
    AbsentDer,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    /// Home id, or `None` for community-level rows.
    pub home: Option<String>,
    /// 1-based slot.
    pub slot: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakCheck {
    Enforce,
    /// Reported under `warnings` only.
    Warn,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub tolerance: f64,
    pub community_peak: PeakCheck,
    pub home_peak: PeakCheck,
}

impl CheckOptions {
    /// Checks for a community-wide schedule: the community peak binds, home
    /// peaks do not.
    pub fn system(tolerance: f64) -> Self {
        CheckOptions {
            tolerance,
            community_peak: PeakCheck::Enforce,
            home_peak: PeakCheck::Skip,
        }
    }

    /// Checks for independently scheduled homes: each home's peak binds and
    /// the community peak, which nobody enforced, is only reported.
    pub fn per_home(tolerance: f64) -> Self {
        CheckOptions {
            tolerance,
            community_peak: PeakCheck::Warn,
            home_peak: PeakCheck::Enforce,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
    /// Largest residual over every enforced check.
    pub max_violation: f64,
    pub tolerance: f64,
    /// Community cost from the net exchange and the two provider prices.
    pub cost_recomputed: f64,
    pub solver_objective: Option<f64>,
    /// `|cost_recomputed - objective| <= 1e-6·(1 + |objective|)`; true when
    /// there is no solver objective to compare with.
    pub cost_matches_solver: bool,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `Σ_t price(t)·net(t)`, buying at `p(t)` when `net(t) > 0` and selling at
/// `alpha·p(t)` otherwise.
pub fn community_cost_series<S: Scalar>(net: &[S], price: &[S], alpha: S) -> S {
    net.iter()
        .zip(price)
        .map(|(&n, &p)| provider_cost(n, p, alpha))
        .sum()
}

pub fn community_cost(schedule: &CommunitySchedule, config: &CommunityConfig) -> f64 {
    community_cost_series(&schedule.community_net(), &config.buy_price, config.alpha)
}

struct Collector {
    tolerance: f64,
    max: f64,
    violations: Vec<Violation>,
    warnings: Vec<Violation>,
}

impl Collector {
    fn record(&mut self, family: ConstraintFamily, home: Option<&str>, slot: usize, residual: f64) {
        let residual = if residual.is_nan() { f64::INFINITY } else { residual.max(0.0) };
        self.max = self.max.max(residual);
        if residual > self.tolerance {
            self.violations.push(Violation {
                family,
                home: home.map(str::to_string),
                slot,
                magnitude: residual,
            });
        }
    }

    fn peak(&mut self, mode: PeakCheck, family: ConstraintFamily, home: Option<&str>, slot: usize, residual: f64) {
        match mode {
            PeakCheck::Enforce => self.record(family, home, slot, residual),
            PeakCheck::Warn if residual > self.tolerance => self.warnings.push(Violation {
                family,
                home: home.map(str::to_string),
                slot,
                magnitude: residual,
            }),
            _ => {}
        }
    }
}

fn binary_residual(x: f64) -> f64 {
    let d = x.abs().min((x - 1.0).abs());
    if d > BINARY_TOLERANCE {
        d
    } else {
        0.0
    }
}

fn energies(s: &HomeSlot) -> [f64; 12] {
    [
        s.hvac_energy,
        s.ess_level,
        s.ess_load,
        s.ess_sell,
        s.res_charge,
        s.com_charge,
        s.res_load,
        s.res_sell,
        s.com_load,
        s.com_buy,
        s.com_sell,
        s.hvac_power,
    ]
}

pub fn check_schedule_feasibility(
    schedule: &CommunitySchedule,
    config: &CommunityConfig,
    tolerance: f64,
) -> Result<FeasibilityReport, ScheduleError> {
    check_schedule_feasibility_with(schedule, config, &CheckOptions::system(tolerance))
}

pub fn check_schedule_feasibility_with(
    schedule: &CommunitySchedule,
    config: &CommunityConfig,
    options: &CheckOptions,
) -> Result<FeasibilityReport, ScheduleError> {
    use ConstraintFamily::*;

    let t = config.horizon_slots;
    if schedule.homes.len() != config.n_homes() || schedule.community.len() != t {
        return Err(ScheduleError::Dimension(format!(
            "schedule has {} homes and {} slots, config has {} and {t}",
            schedule.homes.len(),
            schedule.community.len(),
            config.n_homes()
        )));
    }
    let dt = config.slot_hours;
    let mut c = Collector {
        tolerance: options.tolerance,
        max: 0.0,
        violations: Vec::new(),
        warnings: Vec::new(),
    };

    for (home, hs) in config.homes.iter().zip(&schedule.homes) {
        if hs.id != home.id || hs.slots.len() != t {
            return Err(ScheduleError::Dimension(format!(
                "schedule home `{}` with {} slots does not match config home `{}`",
                hs.id,
                hs.slots.len(),
                home.id
            )));
        }
        let id = Some(home.id.as_str());
        let hv = &home.hvac;
        let mut temp = hv.t_in_initial;
        let mut level = home.ess.as_ref().map(|e| e.level_initial);

        for (k, s) in hs.slots.iter().enumerate() {
            let slot = k + 1;

            c.record(HvacPower, id, slot, (-s.hvac_power).max(s.hvac_power - hv.p_max));
            c.record(HvacEnergy, id, slot, (s.hvac_energy - s.hvac_power * dt).abs());
            temp = indoor_step(temp, config.t_out[k], s.hvac_power, hv);
            c.record(ThermalRecursion, id, slot, (temp - s.indoor_temp).abs());
            c.record(Comfort, id, slot, (hv.t_min - temp).max(temp - hv.t_max));

            let most_negative = energies(s).iter().fold(0.0f64, |m, &x| m.max(-x));
            c.record(NonNegative, id, slot, most_negative);

            match (&home.ess, level.as_mut()) {
                (Some(e), Some(level)) => {
                    *level = *level - s.discharge() / e.efficiency + s.charge() * e.efficiency;
                    c.record(EssLevel, id, slot, (*level - s.ess_level).abs());
                    c.record(EssBounds, id, slot, (e.level_min - *level).max(*level - e.level_max));
                    c.record(
                        EssRate,
                        id,
                        slot,
                        (s.charge() - e.charge_rate_max * dt).max(s.discharge() - e.discharge_rate_max * dt),
                    );
                    c.record(EssExclusivity, id, slot, s.charge().min(s.discharge()));
                    if slot == t {
                        c.record(EssTerminal, id, slot, (*level - e.level_initial).abs());
                    }
                    if let Some(m) = s.mode_ess {
                        c.record(Integrality, id, slot, binary_residual(m));
                    }
                }
                _ => {
                    let stray = [s.ess_level, s.ess_load, s.ess_sell, s.res_charge, s.com_charge]
                        .iter()
                        .fold(0.0f64, |m, x| m.max(x.abs()));
                    c.record(AbsentDer, id, slot, stray);
                }
            }

            match &home.pv {
                Some(pv) => {
                    let ghi = config.ghi[k];
                    let e_res = pv_output_energy(ghi, pv.panel_area, pv.efficiency, dt)
                        .map_err(|e| ScheduleError::Dimension(e.to_string()))?;
                    c.record(ResSplit, id, slot, (s.res_load + s.res_charge + s.res_sell - e_res).abs());
                }
                None => {
                    let stray = [s.res_load, s.res_sell, s.res_charge]
                        .iter()
                        .fold(0.0f64, |m, x| m.max(x.abs()));
                    c.record(AbsentDer, id, slot, stray);
                }
            }

            let demand = home.fixed_load[k] + s.hvac_energy;
            c.record(Balance, id, slot, (demand - (s.com_load + s.ess_load + s.res_load)).abs());
            c.record(
                BuySell,
                id,
                slot,
                (s.com_buy - s.com_load - s.com_charge)
                    .abs()
                    .max((s.com_sell - s.res_sell - s.ess_sell).abs()),
            );
            c.record(HomeExclusivity, id, slot, s.com_buy.min(s.com_sell));
            c.record(Integrality, id, slot, binary_residual(s.mode_home));
            c.record(NetDefinition, id, slot, (s.net - (s.com_buy - s.com_sell)).abs());
            c.peak(options.home_peak, HomePeak, id, slot, s.net.abs() - home.peak_limit);
        }
    }

    for (k, cs) in schedule.community.iter().enumerate() {
        let slot = k + 1;
        let summed: f64 = schedule.homes.iter().map(|h| h.slots[k].net).sum();
        c.record(NetDefinition, None, slot, (cs.net - summed).abs());
        c.peak(
            options.community_peak,
            CommunityPeak,
            None,
            slot,
            cs.net.abs() - config.community_peak,
        );
    }

    let cost_recomputed = community_cost(schedule, config);
    let cost_matches_solver = schedule
        .solver_objective
        .map_or(true, |obj| (cost_recomputed - obj).abs() <= 1e-6 * (1.0 + obj.abs()));

    Ok(FeasibilityReport {
        violations: c.violations,
        warnings: c.warnings,
        max_violation: c.max,
        tolerance: options.tolerance,
        cost_recomputed,
        solver_objective: schedule.solver_objective,
        cost_matches_solver,
    })
}
