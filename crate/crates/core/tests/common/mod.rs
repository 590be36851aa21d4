//! Config builders shared by the integration tests.

#![allow(dead_code)]

use cems_core::{
    BigMPolicy, CommunityConfig, EssParams, HomeConfig, HvacParams, MidPricePolicy, PvParams,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn hvac() -> HvacParams {
    HvacParams {
        p_max: 15.0,
        epsilon: 0.7,
        eta_hvac: 2.5,
        conductivity_a: 0.14,
        t_min: 66.2,
        t_max: 75.2,
        t_in_initial: 70.7,
    }
}

pub fn ess(level_max: f64) -> EssParams {
    EssParams {
        level_min: 0.5,
        level_max,
        level_initial: 0.5,
        charge_rate_max: 2.0,
        discharge_rate_max: 2.0,
        efficiency: 0.9,
    }
}

pub fn pv(panel_area: f64) -> PvParams {
    PvParams {
        panel_area,
        efficiency: 0.9,
    }
}

pub fn home(id: &str, hvac: HvacParams, ess: Option<EssParams>, pv: Option<PvParams>, load: Vec<f64>) -> HomeConfig {
    let peak_limit = HomeConfig::default_peak_limit(&hvac, ess.as_ref(), &load, 1.0);
    HomeConfig {
        id: id.into(),
        hvac,
        ess,
        pv,
        fixed_load: load,
        peak_limit,
    }
}

pub fn community(homes: Vec<HomeConfig>, price: Vec<f64>, t_out: Vec<f64>, ghi: Vec<f64>) -> CommunityConfig {
    CommunityConfig {
        horizon_slots: price.len(),
        slot_hours: 1.0,
        homes,
        buy_price: price,
        alpha: 0.8,
        community_peak: 1000.0,
        ghi,
        t_out,
        mid_price_policy: MidPricePolicy::Case2,
        big_m_policy: BigMPolicy::Derived,
    }
}

/// A random valid community with `n` homes and `t` hourly slots. Outdoor
/// temperatures stay below the comfort band so heating alone keeps every
/// instance feasible.
pub fn random_config(rng: &mut ChaCha8Rng, n: usize, t: usize) -> CommunityConfig {
    let homes = (0..n)
        .map(|i| {
            let battery = rng.random_bool(0.5).then(|| {
                let mut e = ess(rng.random_range(2.0..10.0));
                e.level_initial = rng.random_range(e.level_min..e.level_max);
                e
            });
            let panels = rng.random_bool(0.5).then(|| pv(rng.random_range(2.0..12.0)));
            let load = (0..t).map(|_| rng.random_range(0.1..1.5)).collect();
            home(&format!("h{}", i + 1), hvac(), battery, panels, load)
        })
        .collect();
    let price = (0..t).map(|_| rng.random_range(4.0..14.0)).collect();
    let t_out = (0..t).map(|_| rng.random_range(35.0..65.0)).collect();
    let ghi = (0..t)
        .map(|_| if rng.random_bool(0.6) { rng.random_range(0.0..0.9) } else { 0.0 })
        .collect();
    let mut c = community(homes, price, t_out, ghi);
    c.alpha = rng.random_range(0.5..=1.0);
    c
}
