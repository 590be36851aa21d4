//! Day-ahead schedules read back from solver output.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Solution;
use crate::domain::CommunityConfig;
use crate::milp::{MilpModel, VarRole};

/// Mode values this close to 0 or 1 are snapped; others are kept so the
/// checker can flag them.
const SNAP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("solution has no value for variable `{0}`")]
    MissingVariable(String),
    #[error("solution carries no values (status {0})")]
    NoValues(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Every decision quantity of one home in one slot, in kWh unless noted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HomeSlot {
    /// kW.
    pub hvac_power: f64,
    pub hvac_energy: f64,
    /// Indoor temperature at the end of the slot, °F.
    pub indoor_temp: f64,
    pub ess_level: f64,
    pub ess_load: f64,
    pub ess_sell: f64,
    pub res_charge: f64,
    pub com_charge: f64,
    pub res_load: f64,
    pub res_sell: f64,
    pub com_load: f64,
    pub com_buy: f64,
    pub com_sell: f64,
    /// `None` for homes without a battery.
    pub mode_ess: Option<f64>,
    pub mode_home: f64,
    /// `com_buy - com_sell`.
    pub net: f64,
}

impl HomeSlot {
    pub fn charge(&self) -> f64 {
        self.res_charge + self.com_charge
    }

    pub fn discharge(&self) -> f64 {
        self.ess_load + self.ess_sell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeSchedule {
    pub id: String,
    pub slots: Vec<HomeSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySlot {
    /// Community net exchange with the provider, `Σ_i net_i`.
    pub net: f64,
    /// Binary buy status, present for system-centric schedules.
    pub buy_status: Option<f64>,
    /// Linearized slot cost as solved, present for system-centric schedules.
    pub slot_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySchedule {
    pub homes: Vec<HomeSchedule>,
    pub community: Vec<CommunitySlot>,
    /// Objective reported by the solver when the schedule came from a
    /// single community-wide model.
    pub solver_objective: Option<f64>,
}

impl CommunitySchedule {
    /// Assembles independently solved home schedules. Community nets are
    /// summed in home order; no solver objective is attached.
    pub fn from_home_schedules(homes: Vec<HomeSchedule>) -> Result<Self, ScheduleError> {
        let horizon = homes.first().map_or(0, |h| h.slots.len());
        if let Some(h) = homes.iter().find(|h| h.slots.len() != horizon) {
            return Err(ScheduleError::Dimension(format!(
                "home `{}` has {} slots, expected {horizon}",
                h.id,
                h.slots.len()
            )));
        }
        let community = (0..horizon)
            .map(|k| CommunitySlot {
                net: homes.iter().map(|h| h.slots[k].net).sum(),
                buy_status: None,
                slot_cost: None,
            })
            .collect();
        Ok(CommunitySchedule {
            homes,
            community,
            solver_objective: None,
        })
    }

    pub fn horizon(&self) -> usize {
        self.community.len()
    }

    pub fn community_net(&self) -> Vec<f64> {
        self.community.iter().map(|c| c.net).collect()
    }

    pub fn total_bought(&self, slot: usize) -> f64 {
        self.homes.iter().map(|h| h.slots[slot].com_buy).sum()
    }

    pub fn total_sold(&self, slot: usize) -> f64 {
        self.homes.iter().map(|h| h.slots[slot].com_sell).sum()
    }
}

fn snap_mode(x: f64) -> f64 {
    if x.abs() <= SNAP {
        0.0
    } else if (x - 1.0).abs() <= SNAP {
        1.0
    } else {
        x
    }
}

fn require_values(solution: &Solution) -> Result<(), ScheduleError> {
    if solution.status.has_solution() {
        Ok(())
    } else {
        Err(ScheduleError::NoValues(solution.status.token().into()))
    }
}

fn fill_slot(slot: &mut HomeSlot, role: VarRole, x: f64) {
    match role {
        VarRole::HvacPower => slot.hvac_power = x,
        VarRole::HvacEnergy => slot.hvac_energy = x,
        VarRole::IndoorTemp => slot.indoor_temp = x,
        VarRole::EssLevel => slot.ess_level = x,
        VarRole::EssLoad => slot.ess_load = x,
        VarRole::EssSell => slot.ess_sell = x,
        VarRole::ResCharge => slot.res_charge = x,
        VarRole::ComCharge => slot.com_charge = x,
        VarRole::ResLoad => slot.res_load = x,
        VarRole::ResSell => slot.res_sell = x,
        VarRole::ComLoad => slot.com_load = x,
        VarRole::ComBuy => slot.com_buy = x,
        VarRole::ComSell => slot.com_sell = x,
        VarRole::ModeEss => slot.mode_ess = Some(snap_mode(x)),
        VarRole::ModeHome => slot.mode_home = snap_mode(x),
        VarRole::BuyStatus | VarRole::SlotCost => {}
    }
}

/// Materializes every variable of `model` that carries metadata into
/// per-home, per-slot records. Homes are the model's homes in config order.
fn materialize(
    solution: &Solution,
    model: &MilpModel,
    config: &CommunityConfig,
) -> Result<(Vec<Option<HomeSchedule>>, Vec<CommunitySlot>), ScheduleError> {
    require_values(solution)?;
    let t = config.horizon_slots;
    let mut homes: Vec<Option<HomeSchedule>> = vec![None; config.n_homes()];
    let mut community: Vec<CommunitySlot> = (0..t)
        .map(|_| CommunitySlot {
            net: 0.0,
            buy_status: None,
            slot_cost: None,
        })
        .collect();
    for (_, name, meta) in model.metadata() {
        let x = *solution
            .values
            .get(name)
            .ok_or_else(|| ScheduleError::MissingVariable(name.to_string()))?;
        if meta.slot == 0 || meta.slot > t {
            return Err(ScheduleError::Dimension(format!(
                "variable `{name}` has slot {} outside 1..={t}",
                meta.slot
            )));
        }
        let k = meta.slot - 1;
        match meta.home {
            Some(i) => {
                let home = config.homes.get(i).ok_or_else(|| {
                    ScheduleError::Dimension(format!("variable `{name}` refers to home #{i}"))
                })?;
                let entry = homes[i].get_or_insert_with(|| HomeSchedule {
                    id: home.id.clone(),
                    slots: vec![HomeSlot::default(); t],
                });
                fill_slot(&mut entry.slots[k], meta.role, x);
            }
            None => match meta.role {
                VarRole::BuyStatus => community[k].buy_status = Some(snap_mode(x)),
                VarRole::SlotCost => community[k].slot_cost = Some(x),
                _ => {}
            },
        }
    }
    for home in homes.iter_mut().flatten() {
        for s in &mut home.slots {
            s.net = s.com_buy - s.com_sell;
        }
    }
    Ok((homes, community))
}

/// Reads a system-centric solution back into a community schedule.
pub fn extract_schedule(
    solution: &Solution,
    model: &MilpModel,
    config: &CommunityConfig,
) -> Result<CommunitySchedule, ScheduleError> {
    let (homes, mut community) = materialize(solution, model, config)?;
    let homes: Vec<HomeSchedule> = homes
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            h.ok_or_else(|| {
                ScheduleError::MissingVariable(format!("home `{}` absent from model", config.homes[i].id))
            })
        })
        .collect::<Result<_, _>>()?;
    for (k, c) in community.iter_mut().enumerate() {
        c.net = homes.iter().map(|h| h.slots[k].net).sum();
    }
    Ok(CommunitySchedule {
        homes,
        community,
        solver_objective: solution.objective,
    })
}

/// Reads the solution of a single-home model for home `home`.
pub fn extract_home_schedule(
    solution: &Solution,
    model: &MilpModel,
    config: &CommunityConfig,
    home: usize,
) -> Result<HomeSchedule, ScheduleError> {
    let (mut homes, _) = materialize(solution, model, config)?;
    homes
        .get_mut(home)
        .and_then(Option::take)
        .ok_or_else(|| ScheduleError::MissingVariable(format!("home #{home} absent from model")))
}

/// One row per (home, slot) with every decision quantity, then one row per
/// slot for the community under the reserved id `com`.
pub fn write_schedule_csv<W: Write>(schedule: &CommunitySchedule, w: W) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let header = [
        "home", "slot", "hvac_power", "hvac_energy", "indoor_temp", "ess_level", "ess_load",
        "ess_sell", "res_charge", "com_charge", "res_load", "res_sell", "com_load", "com_buy",
        "com_sell", "mode_ess", "mode_home", "net",
    ];
    out.write_record(header)?;
    let f = |x: f64| format!("{x:?}");
    for h in &schedule.homes {
        for (k, s) in h.slots.iter().enumerate() {
            out.write_record([
                h.id.clone(),
                (k + 1).to_string(),
                f(s.hvac_power),
                f(s.hvac_energy),
                f(s.indoor_temp),
                f(s.ess_level),
                f(s.ess_load),
                f(s.ess_sell),
                f(s.res_charge),
                f(s.com_charge),
                f(s.res_load),
                f(s.res_sell),
                f(s.com_load),
                f(s.com_buy),
                f(s.com_sell),
                s.mode_ess.map(f).unwrap_or_default(),
                f(s.mode_home),
                f(s.net),
            ])?;
        }
    }
    for (k, c) in schedule.community.iter().enumerate() {
        let mut row = vec![String::new(); header.len()];
        row[0] = "com".into();
        row[1] = (k + 1).to_string();
        row[header.len() - 1] = f(c.net);
        out.write_record(&row)?;
    }
    out.flush()
}
