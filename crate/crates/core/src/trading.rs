//! Mid-market-rate settlement of local trades.
//!
//! Inside a slot, homes trade at local prices derived from a mid price
//! between the provider's selling and buying prices. Whatever the community
//! still needs (or has left over) is exchanged with the provider, and that
//! cost (or revenue) is shared pro rata among the homes on the long side, so
//! the per-home costs always add up to the community's provider bill.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::CommunityConfig;
use crate::solve::CommunitySchedule;
use crate::Scalar;

/// Net community positions within this many kWh of zero settle at the mid
/// price on both sides.
pub const ZERO_NET_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TradingError {
    #[error("mid price {value} at slot {slot} outside [{low}, {high}]")]
    MidPriceOutOfBand {
        slot: usize,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("explicit mid-price series has {found} entries, expected {expected}")]
    MidPriceLength { expected: usize, found: usize },
    #[error("schedule dimension mismatch: {0}")]
    Dimension(String),
}

/// Rule for the mid price `P_mid(t)` as a function of the buying price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MidPricePolicy {
    /// `(1 + 3α)/4 · P_MG`
    Case1,
    /// `(1 + α)/2 · P_MG`
    #[default]
    Case2,
    /// `(3 + α)/4 · P_MG`
    Case3,
    Explicit(Vec<f64>),
}

impl MidPricePolicy {
    /// Mid price at 0-based `slot`.
    pub fn mid_price<S: Scalar>(&self, slot: usize, p_mg: S, alpha: S) -> Result<S, TradingError> {
        let one = S::one();
        let two = one + one;
        let three = two + one;
        let four = two + two;
        let value = match self {
            MidPricePolicy::Case1 => (one + three * alpha) * p_mg / four,
            MidPricePolicy::Case2 => (one + alpha) * p_mg / two,
            MidPricePolicy::Case3 => (three + alpha) * p_mg / four,
            MidPricePolicy::Explicit(series) => {
                let v = *series.get(slot).ok_or(TradingError::MidPriceLength {
                    expected: slot + 1,
                    found: series.len(),
                })?;
                S::from_real(v)
            }
        };
        let (low, high) = (alpha * p_mg, p_mg);
        if value < low || value > high {
            return Err(TradingError::MidPriceOutOfBand {
                slot: slot + 1,
                value: value.to_real(),
                low: low.to_real(),
                high: high.to_real(),
            });
        }
        Ok(value)
    }
}

impl fmt::Display for MidPricePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MidPricePolicy::Case1 => f.write_str("case1"),
            MidPricePolicy::Case2 => f.write_str("case2"),
            MidPricePolicy::Case3 => f.write_str("case3"),
            MidPricePolicy::Explicit(_) => f.write_str("explicit"),
        }
    }
}

impl FromStr for MidPricePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "case1" => Ok(MidPricePolicy::Case1),
            "case2" => Ok(MidPricePolicy::Case2),
            "case3" => Ok(MidPricePolicy::Case3),
            other => Err(format!("expected case1, case2 or case3, got `{other}`")),
        }
    }
}

/// Scalar form of the mid price rule at slot 0.
pub fn mid_price<S: Scalar>(p_mg: S, alpha: S, policy: &MidPricePolicy) -> Result<S, TradingError> {
    policy.mid_price(0, p_mg, alpha)
}

/// Which side of the slot is settled against the provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotBranch {
    Balanced,
    Importing,
    Exporting,
    /// Every home trades with the provider directly (no local market).
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSettlement<S> {
    /// 1-based slot index.
    pub slot: usize,
    pub branch: SlotBranch,
    pub p_local_buy: S,
    pub p_local_sell: S,
    pub net_community: S,
    /// What the community pays the provider for this slot.
    pub provider_cost: S,
    /// Aligned with the community's home order.
    pub per_home_cost: Vec<S>,
}

impl<S: Scalar> SlotSettlement<S> {
    pub fn has_buyers_and_sellers(&self, net_by_home: &[S]) -> bool {
        net_by_home.iter().any(|&n| n > S::zero()) && net_by_home.iter().any(|&n| n < S::zero())
    }

    pub fn budget_gap(&self) -> S {
        self.per_home_cost.iter().copied().sum::<S>() - self.provider_cost
    }
}

/// Provider-facing cost of a net position: buying price when importing,
/// selling price when exporting.
pub fn provider_cost<S: Scalar>(net: S, p_mg: S, alpha: S) -> S {
    if net > S::zero() {
        p_mg * net
    } else {
        alpha * p_mg * net
    }
}

/// Settles one slot from the homes' net positions (positive = buying).
pub fn settle_timeslot<S: Scalar>(
    slot: usize,
    net_by_home: &[S],
    p_mg: S,
    alpha: S,
    p_mid: S,
) -> SlotSettlement<S> {
    let zero = S::zero();
    let bought: S = net_by_home.iter().filter(|&&n| n > zero).copied().sum();
    let sold: S = net_by_home.iter().filter(|&&n| n < zero).map(|&n| -n).sum();
    let net = bought - sold;
    let threshold = S::from_real(ZERO_NET_THRESHOLD);

    // The weighted averages are written as the provider price moved toward
    // `p_mid` by a non-negative amount, so they never cross the provider
    // prices through rounding.
    let (branch, p_buy, p_sell) = if net.abs() <= threshold {
        (SlotBranch::Balanced, p_mid, p_mid)
    } else if net > zero {
        let p_buy = p_mg - (p_mg - p_mid) * (sold / bought);
        (SlotBranch::Importing, p_buy, p_mid)
    } else {
        let p_ls = alpha * p_mg;
        let p_sell = p_ls + (p_mid - p_ls) * (bought / sold);
        (SlotBranch::Exporting, p_mid, p_sell)
    };

    let per_home_cost = net_by_home
        .iter()
        .map(|&n| {
            if n > zero {
                p_buy * n
            } else if n < zero {
                p_sell * n
            } else {
                zero
            }
        })
        .collect();

    SlotSettlement {
        slot,
        branch,
        p_local_buy: p_buy,
        p_local_sell: p_sell,
        net_community: net,
        provider_cost: provider_cost(net, p_mg, alpha),
        per_home_cost,
    }
}

/// Settlement without a local market: every home buys at `P_MG` and sells at
/// `α·P_MG`.
pub fn settle_timeslot_direct<S: Scalar>(
    slot: usize,
    net_by_home: &[S],
    p_mg: S,
    alpha: S,
) -> SlotSettlement<S> {
    let per_home_cost: Vec<S> = net_by_home.iter().map(|&n| provider_cost(n, p_mg, alpha)).collect();
    SlotSettlement {
        slot,
        branch: SlotBranch::Direct,
        p_local_buy: p_mg,
        p_local_sell: alpha * p_mg,
        net_community: net_by_home.iter().copied().sum(),
        provider_cost: per_home_cost.iter().copied().sum(),
        per_home_cost,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettlementMode {
    MidMarket,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport<S> {
    pub mode: SettlementMode,
    pub home_ids: Vec<String>,
    pub slots: Vec<SlotSettlement<S>>,
    /// Daily cost per home, aligned with `home_ids`.
    pub per_home_daily_cost: Vec<S>,
    pub community_daily_cost: S,
    /// `community_daily_cost - Σ per_home_daily_cost`.
    pub budget_residual: S,
}

fn check_dims<S>(home_ids: &[String], nets: &[Vec<S>], t: usize) -> Result<(), TradingError> {
    if nets.len() != home_ids.len() {
        return Err(TradingError::Dimension(format!(
            "{} net series for {} homes",
            nets.len(),
            home_ids.len()
        )));
    }
    if let Some((i, n)) = nets.iter().enumerate().find(|(_, n)| n.len() != t) {
        return Err(TradingError::Dimension(format!(
            "home {} has {} slots, expected {t}",
            home_ids[i],
            n.len()
        )));
    }
    Ok(())
}

fn aggregate<S: Scalar>(
    mode: SettlementMode,
    home_ids: &[String],
    slots: Vec<SlotSettlement<S>>,
) -> SettlementReport<S> {
    let per_home_daily_cost: Vec<S> = (0..home_ids.len())
        .map(|i| slots.iter().map(|s| s.per_home_cost[i]).sum())
        .collect();
    let community_daily_cost: S = slots.iter().map(|s| s.provider_cost).sum();
    let budget_residual = community_daily_cost - per_home_daily_cost.iter().copied().sum::<S>();
    SettlementReport {
        mode,
        home_ids: home_ids.to_vec(),
        slots,
        per_home_daily_cost,
        community_daily_cost,
        budget_residual,
    }
}

/// Mid-market settlement of a whole day. `nets[i][t]` is home `i`'s net
/// position in slot `t`.
pub fn settle_series<S: Scalar>(
    home_ids: &[String],
    nets: &[Vec<S>],
    buy_price: &[S],
    alpha: S,
    policy: &MidPricePolicy,
) -> Result<SettlementReport<S>, TradingError> {
    let t = buy_price.len();
    check_dims(home_ids, nets, t)?;
    let mut slots = Vec::with_capacity(t);
    for (k, &p_mg) in buy_price.iter().enumerate() {
        let p_mid = policy.mid_price(k, p_mg, alpha)?;
        let column: Vec<S> = nets.iter().map(|n| n[k]).collect();
        slots.push(settle_timeslot(k + 1, &column, p_mg, alpha, p_mid));
    }
    Ok(aggregate(SettlementMode::MidMarket, home_ids, slots))
}

/// Provider-direct settlement of a whole day.
pub fn settle_series_direct<S: Scalar>(
    home_ids: &[String],
    nets: &[Vec<S>],
    buy_price: &[S],
    alpha: S,
) -> Result<SettlementReport<S>, TradingError> {
    let t = buy_price.len();
    check_dims(home_ids, nets, t)?;
    let slots = buy_price
        .iter()
        .enumerate()
        .map(|(k, &p_mg)| {
            let column: Vec<S> = nets.iter().map(|n| n[k]).collect();
            settle_timeslot_direct(k + 1, &column, p_mg, alpha)
        })
        .collect();
    Ok(aggregate(SettlementMode::Direct, home_ids, slots))
}

fn schedule_nets(
    schedule: &CommunitySchedule,
    config: &CommunityConfig,
) -> Result<(Vec<String>, Vec<Vec<f64>>), TradingError> {
    if schedule.homes.len() != config.n_homes() {
        return Err(TradingError::Dimension(format!(
            "schedule has {} homes, config has {}",
            schedule.homes.len(),
            config.n_homes()
        )));
    }
    let ids = schedule.homes.iter().map(|h| h.id.clone()).collect();
    let nets = schedule.homes.iter().map(|h| h.slots.iter().map(|s| s.net).collect()).collect();
    Ok((ids, nets))
}

/// Mid-market settlement of a schedule using the config's prices and mid
/// price policy.
pub fn settle_day(
    schedule: &CommunitySchedule,
    config: &CommunityConfig,
) -> Result<SettlementReport<f64>, TradingError> {
    let (ids, nets) = schedule_nets(schedule, config)?;
    settle_series(&ids, &nets, &config.buy_price, config.alpha, &config.mid_price_policy)
}

/// Settlement of a schedule when each home trades with the provider alone.
pub fn settle_day_direct(
    schedule: &CommunitySchedule,
    config: &CommunityConfig,
) -> Result<SettlementReport<f64>, TradingError> {
    let (ids, nets) = schedule_nets(schedule, config)?;
    settle_series_direct(&ids, &nets, &config.buy_price, config.alpha)
}

/// Writes `slot,p_local_buy,p_local_sell,home,cost`, one row per home and slot.
pub fn write_settlement_csv<S: Scalar>(
    report: &SettlementReport<S>,
    writer: impl Write,
) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["slot", "p_local_buy", "p_local_sell", "home", "cost"])?;
    for s in &report.slots {
        for (id, cost) in report.home_ids.iter().zip(&s.per_home_cost) {
            wtr.write_record([
                s.slot.to_string(),
                s.p_local_buy.to_real().to_string(),
                s.p_local_sell.to_real().to_string(),
                id.clone(),
                cost.to_real().to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
