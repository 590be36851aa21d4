//! Community and per-home model builders.

use serde::{Deserialize, Serialize};

use super::{MilpModel, ModelError, Objective, Sense, VarId, VarKind, VarMeta, VarRole};
use crate::domain::{BigMPolicy, CommunityConfig};

const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BigMProvenance {
    Fixed,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    pub value: f64,
    pub provenance: BigMProvenance,
}

/// `2·max P_MG·(Σ peak_limit + community_peak)`, floored at one price unit
/// so it still covers the community energy gap when prices are below 0.5.
pub fn derived_big_m(config: &CommunityConfig) -> f64 {
    let peaks: f64 = config.homes.iter().map(|h| h.peak_limit).sum();
    (2.0 * config.max_buy_price()).max(1.0) * (peaks + config.community_peak)
}

pub fn big_m_value(config: &CommunityConfig) -> BigM {
    match config.big_m_policy {
        BigMPolicy::Fixed(value) => BigM {
            value,
            provenance: BigMProvenance::Fixed,
        },
        BigMPolicy::Derived => BigM {
            value: derived_big_m(config),
            provenance: BigMProvenance::Derived,
        },
    }
}

/// Upper bound on a home's buying or selling energy in any slot.
pub fn home_flow_bound(config: &CommunityConfig, home: usize) -> f64 {
    let h = &config.homes[home];
    let dt = config.slot_hours;
    let max_fixed = h.fixed_load.iter().copied().fold(0.0, f64::max);
    let max_res = config.res_output(home).into_iter().fold(0.0, f64::max);
    let (charge, discharge) = h
        .ess
        .as_ref()
        .map_or((0.0, 0.0), |e| (e.charge_rate_max * dt, e.discharge_rate_max * dt));
    (max_fixed + h.hvac.p_max * dt + charge).max(max_res + discharge)
}

struct HomeFlows {
    buy: Vec<VarId>,
    sell: Vec<VarId>,
}

struct HomeBlock<'a> {
    model: &'a mut MilpModel,
    config: &'a CommunityConfig,
    home: usize,
}

impl HomeBlock<'_> {
    fn var(&mut self, role: VarRole, slot: usize, lower: f64, upper: f64) -> Result<VarId, ModelError> {
        let kind = if matches!(role, VarRole::ModeEss | VarRole::ModeHome) {
            VarKind::Binary
        } else {
            VarKind::Continuous
        };
        let name = format!("{}_{}_{}", role.prefix(), self.config.homes[self.home].id, slot);
        self.model.add_variable(
            name,
            lower,
            upper,
            kind,
            Some(VarMeta {
                home: Some(self.home),
                slot,
                role,
            }),
        )
    }

    fn row(&mut self, family: &str, slot: usize, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Result<(), ModelError> {
        let name = format!("{family}_{}_{slot}", self.config.homes[self.home].id);
        self.model.add_constraint(name, terms, sense, rhs)
    }

    /// Adds every per-home variable and constraint except peak limits.
    fn add(mut self, exclusivity_m: f64) -> Result<HomeFlows, ModelError> {
        let config = self.config;
        let h = &config.homes[self.home];
        let dt = config.slot_hours;
        let hv = &h.hvac;
        let res = config.res_output(self.home);
        let has_pv = h.pv.is_some();
        let ess = h.ess.as_ref();
        let pv_cap = if has_pv { INF } else { 0.0 };
        let ess_cap = if ess.is_some() { INF } else { 0.0 };
        let res_charge_cap = if has_pv && ess.is_some() { INF } else { 0.0 };
        let (level_lo, level_hi) = ess.map_or((0.0, 0.0), |e| (e.level_min, e.level_max));

        let thermal_gain = (1.0 - hv.epsilon) * hv.eta_hvac / hv.conductivity_a;
        let mut flows = HomeFlows {
            buy: Vec::with_capacity(config.horizon_slots),
            sell: Vec::with_capacity(config.horizon_slots),
        };
        let mut prev_temp: Option<VarId> = None;
        let mut prev_level: Option<VarId> = None;

        for k in 0..config.horizon_slots {
            let slot = k + 1;
            let p = self.var(VarRole::HvacPower, slot, 0.0, hv.p_max)?;
            let e_hvac = self.var(VarRole::HvacEnergy, slot, 0.0, INF)?;
            let temp = self.var(VarRole::IndoorTemp, slot, hv.t_min, hv.t_max)?;
            let level = self.var(VarRole::EssLevel, slot, level_lo, level_hi)?;
            let ess_load = self.var(VarRole::EssLoad, slot, 0.0, ess_cap)?;
            let ess_sell = self.var(VarRole::EssSell, slot, 0.0, ess_cap)?;
            let res_charge = self.var(VarRole::ResCharge, slot, 0.0, res_charge_cap)?;
            let com_charge = self.var(VarRole::ComCharge, slot, 0.0, ess_cap)?;
            let res_load = self.var(VarRole::ResLoad, slot, 0.0, pv_cap)?;
            let res_sell = self.var(VarRole::ResSell, slot, 0.0, pv_cap)?;
            let com_load = self.var(VarRole::ComLoad, slot, 0.0, INF)?;
            let buy = self.var(VarRole::ComBuy, slot, 0.0, INF)?;
            let sell = self.var(VarRole::ComSell, slot, 0.0, INF)?;
            let mode_ess = match ess {
                Some(_) => Some(self.var(VarRole::ModeEss, slot, 0.0, 1.0)?),
                None => None,
            };
            let mode_home = self.var(VarRole::ModeHome, slot, 0.0, 1.0)?;

            self.row("hvacenergy", slot, vec![(e_hvac, 1.0), (p, -dt)], Sense::Eq, 0.0)?;

            // T(t) - ε·T(t-1) - (1-ε)·η/A·p(t) = (1-ε)·T_out(t)
            let mut terms = vec![(temp, 1.0), (p, -thermal_gain)];
            let mut rhs = (1.0 - hv.epsilon) * config.t_out[k];
            match prev_temp {
                Some(prev) => terms.push((prev, -hv.epsilon)),
                None => rhs += hv.epsilon * hv.t_in_initial,
            }
            self.row("thermal", slot, terms, Sense::Eq, rhs)?;
            prev_temp = Some(temp);

            if let (Some(e), Some(mode)) = (ess, mode_ess) {
                let eta = e.efficiency;
                let mut terms = vec![
                    (level, 1.0),
                    (ess_load, 1.0 / eta),
                    (ess_sell, 1.0 / eta),
                    (res_charge, -eta),
                    (com_charge, -eta),
                ];
                let mut rhs = 0.0;
                match prev_level {
                    Some(prev) => terms.push((prev, -1.0)),
                    None => rhs = e.level_initial,
                }
                self.row("esslevel", slot, terms, Sense::Eq, rhs)?;
                prev_level = Some(level);

                let ch = e.charge_rate_max * dt;
                let dh = e.discharge_rate_max * dt;
                self.row(
                    "charge",
                    slot,
                    vec![(res_charge, 1.0), (com_charge, 1.0), (mode, -ch)],
                    Sense::Le,
                    0.0,
                )?;
                self.row(
                    "discharge",
                    slot,
                    vec![(ess_load, 1.0), (ess_sell, 1.0), (mode, dh)],
                    Sense::Le,
                    dh,
                )?;
                if slot == config.horizon_slots {
                    self.row("terminal", slot, vec![(level, 1.0)], Sense::Eq, e.level_initial)?;
                }
            }

            if has_pv {
                self.row(
                    "ressplit",
                    slot,
                    vec![(res_load, 1.0), (res_charge, 1.0), (res_sell, 1.0)],
                    Sense::Eq,
                    res[k],
                )?;
            }

            self.row(
                "balance",
                slot,
                vec![(com_load, 1.0), (ess_load, 1.0), (res_load, 1.0), (e_hvac, -1.0)],
                Sense::Eq,
                h.fixed_load[k],
            )?;
            self.row(
                "buydef",
                slot,
                vec![(buy, 1.0), (com_load, -1.0), (com_charge, -1.0)],
                Sense::Eq,
                0.0,
            )?;
            self.row(
                "selldef",
                slot,
                vec![(sell, 1.0), (res_sell, -1.0), (ess_sell, -1.0)],
                Sense::Eq,
                0.0,
            )?;
            self.row(
                "buyexcl",
                slot,
                vec![(buy, 1.0), (mode_home, -exclusivity_m)],
                Sense::Le,
                0.0,
            )?;
            self.row(
                "sellexcl",
                slot,
                vec![(sell, 1.0), (mode_home, exclusivity_m)],
                Sense::Le,
                exclusivity_m,
            )?;

            flows.buy.push(buy);
            flows.sell.push(sell);
        }
        Ok(flows)
    }
}

/// The linearized community model: minimize the sum of per-slot community
/// costs subject to every home's physics, buy/sell exclusivity, the
/// community peak band, and the big-M envelope that pins each slot cost to
/// the buying or selling price depending on the sign of the net exchange.
pub fn build_system_centric_model(config: &CommunityConfig) -> Result<MilpModel, ModelError> {
    config.ensure_valid()?;
    let big_m = big_m_value(config);
    let m = big_m.value;
    let mut model = MilpModel::new();

    let mut homes = Vec::with_capacity(config.n_homes());
    for i in 0..config.n_homes() {
        let excl = match big_m.provenance {
            BigMProvenance::Fixed => m,
            BigMProvenance::Derived => home_flow_bound(config, i),
        };
        homes.push(
            HomeBlock {
                model: &mut model,
                config,
                home: i,
            }
            .add(excl)?,
        );
    }

    let mut objective = Objective::default();
    for k in 0..config.horizon_slots {
        let slot = k + 1;
        let p_mg = config.buy_price[k];
        let sell_p = config.alpha * p_mg;
        let s = model.add_variable(
            format!("{}_com_{slot}", VarRole::BuyStatus.prefix()),
            0.0,
            1.0,
            VarKind::Binary,
            Some(VarMeta {
                home: None,
                slot,
                role: VarRole::BuyStatus,
            }),
        )?;
        let cost = model.add_variable(
            format!("{}_com_{slot}", VarRole::SlotCost.prefix()),
            -INF,
            INF,
            VarKind::Continuous,
            Some(VarMeta {
                home: None,
                slot,
                role: VarRole::SlotCost,
            }),
        )?;

        // gap(t) = Σ buy - Σ sell, scaled by `coef`.
        let gap = |coef: f64| -> Vec<(VarId, f64)> {
            homes
                .iter()
                .flat_map(|f| [(f.buy[k], coef), (f.sell[k], -coef)])
                .collect()
        };
        let with = |mut base: Vec<(VarId, f64)>, extra: &[(VarId, f64)]| {
            base.extend_from_slice(extra);
            base
        };
        let row = |model: &mut MilpModel, family: &str, terms, sense, rhs| {
            model.add_constraint(format!("{family}_com_{slot}"), terms, sense, rhs)
        };

        row(&mut model, "peakhi", gap(1.0), Sense::Le, config.community_peak)?;
        row(&mut model, "peaklo", gap(1.0), Sense::Ge, -config.community_peak)?;
        // gap ≥ -M(1-s) and gap ≤ M·s
        row(&mut model, "statuslo", with(gap(1.0), &[(s, -m)]), Sense::Ge, -m)?;
        row(&mut model, "statushi", with(gap(1.0), &[(s, -m)]), Sense::Le, 0.0)?;
        // C ≥ P·gap - M(1-s), C ≤ P·gap + M(1-s)
        row(&mut model, "costbuylo", with(gap(-p_mg), &[(cost, 1.0), (s, -m)]), Sense::Ge, -m)?;
        row(&mut model, "costbuyhi", with(gap(-p_mg), &[(cost, 1.0), (s, m)]), Sense::Le, m)?;
        // C ≥ αP·gap - M·s, C ≤ αP·gap + M·s
        row(&mut model, "costsello", with(gap(-sell_p), &[(cost, 1.0), (s, m)]), Sense::Ge, 0.0)?;
        row(&mut model, "costselhi", with(gap(-sell_p), &[(cost, 1.0), (s, -m)]), Sense::Le, 0.0)?;

        objective.terms.push((cost, 1.0));
    }
    model.set_objective(objective)?;
    Ok(model)
}

/// Per-home model used by the prosumer-centric and no-CEMS baselines: the
/// same physics for one home, its own peak band, and the cost of trading
/// directly at the provider's prices.
pub fn build_home_model(home: usize, config: &CommunityConfig) -> Result<MilpModel, ModelError> {
    config.ensure_valid()?;
    let h = config.homes.get(home).ok_or(ModelError::NoSuchHome(home))?;
    let excl = match config.big_m_policy {
        BigMPolicy::Fixed(v) => v,
        BigMPolicy::Derived => h.peak_limit,
    };
    let mut model = MilpModel::new();
    let flows = HomeBlock {
        model: &mut model,
        config,
        home,
    }
    .add(excl)?;

    let mut objective = Objective::default();
    for k in 0..config.horizon_slots {
        let slot = k + 1;
        let net = vec![(flows.buy[k], 1.0), (flows.sell[k], -1.0)];
        model.add_constraint(format!("peakhi_{}_{slot}", h.id), net.clone(), Sense::Le, h.peak_limit)?;
        model.add_constraint(format!("peaklo_{}_{slot}", h.id), net, Sense::Ge, -h.peak_limit)?;
        objective.terms.push((flows.buy[k], config.buy_price[k]));
        objective.terms.push((flows.sell[k], -config.sell_price(k)));
    }
    model.set_objective(objective)?;
    Ok(model)
}
