//! Synthetic communities for scaling runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CommunityConfig, ConfigError, HomeConfig};

/// Half-width of the multiplicative load factor, i.e. factors in [0.8, 1.2].
pub const DEFAULT_LOAD_PERTURBATION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    PvEss,
    PvOnly,
    EssOnly,
    Bare,
}

impl Archetype {
    pub fn of(has_pv: bool, has_ess: bool) -> Self {
        match (has_pv, has_ess) {
            (true, true) => Archetype::PvEss,
            (true, false) => Archetype::PvOnly,
            (false, true) => Archetype::EssOnly,
            (false, false) => Archetype::Bare,
        }
    }
}

/// Counts of (PV+ESS, PV only, ESS only, bare) homes.
pub fn archetype_counts(config: &CommunityConfig) -> [usize; 4] {
    let mut counts = [0; 4];
    for h in &config.homes {
        counts[h.archetype() as usize] += 1;
    }
    counts
}

/// [`generate_synthetic_community_with`] using the default ±20% load factor.
pub fn generate_synthetic_community(
    n_homes: usize,
    seed: u64,
    template: &CommunityConfig,
) -> Result<CommunityConfig, ConfigError> {
    generate_synthetic_community_with(n_homes, seed, template, DEFAULT_LOAD_PERTURBATION)
}

/// Builds an `n_homes` community by cycling through the template's homes.
///
/// Home `k` copies template home `k mod len`, is renamed `home{k+1}`, and has
/// its fixed load scaled by a factor drawn uniformly from
/// `[1 - perturbation, 1 + perturbation]` with a ChaCha8 stream seeded by
/// `seed`. Peak limits that were at their default are recomputed for the new
/// load; the community peak scales with `n_homes / len`.
pub fn generate_synthetic_community_with(
    n_homes: usize,
    seed: u64,
    template: &CommunityConfig,
    perturbation: f64,
) -> Result<CommunityConfig, ConfigError> {
    if n_homes == 0 {
        return Err(ConfigError::Domain {
            path: "n_homes".into(),
            message: "at least one home is required".into(),
            total: 1,
        });
    }
    if !(0.0..1.0).contains(&perturbation) {
        return Err(ConfigError::Domain {
            path: "perturbation".into(),
            message: format!("must lie in [0, 1), got {perturbation}"),
            total: 1,
        });
    }
    template.ensure_valid()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = template.homes.len();
    let dt = template.slot_hours;
    let homes = (0..n_homes)
        .map(|k| {
            let proto = &template.homes[k % len];
            let u: f64 = rng.random_range(-1.0..=1.0);
            let factor = 1.0 + perturbation * u;
            let fixed_load: Vec<f64> = proto.fixed_load.iter().map(|l| l * factor).collect();
            let proto_default =
                HomeConfig::default_peak_limit(&proto.hvac, proto.ess.as_ref(), &proto.fixed_load, dt);
            let peak_limit = if (proto.peak_limit - proto_default).abs() <= 1e-12 * proto_default {
                HomeConfig::default_peak_limit(&proto.hvac, proto.ess.as_ref(), &fixed_load, dt)
            } else {
                proto.peak_limit
            };
            HomeConfig {
                id: format!("home{}", k + 1),
                hvac: proto.hvac.clone(),
                ess: proto.ess.clone(),
                pv: proto.pv.clone(),
                fixed_load,
                peak_limit,
            }
        })
        .collect();

    Ok(CommunityConfig {
        homes,
        community_peak: template.community_peak * n_homes as f64 / len as f64,
        ..template.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;
    use crate::domain::{EssParams, PvParams};

    fn four_type_template() -> CommunityConfig {
        let mut homes: Vec<HomeConfig> = (1..=10)
            .map(|k| bare_home(&format!("home{k}"), vec![1.0, 0.8], 1.0))
            .collect();
        let ess = |cap: f64| EssParams {
            level_min: 0.5,
            level_max: cap,
            level_initial: 0.5,
            charge_rate_max: 2.0,
            discharge_rate_max: 2.0,
            efficiency: 0.9,
        };
        for h in homes.iter_mut().take(3) {
            h.pv = Some(PvParams { panel_area: 10.0, efficiency: 0.9 });
            h.ess = Some(ess(10.0));
        }
        for h in homes.iter_mut().skip(3).take(2) {
            h.pv = Some(PvParams { panel_area: 5.0, efficiency: 0.9 });
        }
        for h in homes.iter_mut().skip(5).take(2) {
            h.ess = Some(ess(5.0));
        }
        for h in homes.iter_mut() {
            h.peak_limit = HomeConfig::default_peak_limit(&h.hvac, h.ess.as_ref(), &h.fixed_load, 1.0);
        }
        community(homes, vec![10.0, 12.0], vec![60.0, 60.0])
    }

    #[test]
    fn zero_perturbation_reproduces_template() {
        let t = four_type_template();
        let g = generate_synthetic_community_with(10, 99, &t, 0.0).unwrap();
        assert_eq!(g, t);
    }

    #[test]
    fn five_hundred_homes_cycle_archetypes() {
        let t = four_type_template();
        let g = generate_synthetic_community(500, 1, &t).unwrap();
        assert_eq!(g.n_homes(), 500);
        // 50 full cycles of the 3/2/2/3 template.
        assert_eq!(archetype_counts(&g), [150, 100, 100, 150]);
        assert!((g.community_peak - 50.0 * t.community_peak).abs() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let t = four_type_template();
        let a = generate_synthetic_community(37, 7, &t).unwrap();
        let b = generate_synthetic_community(37, 7, &t).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_community(37, 8, &t).unwrap();
        assert_ne!(a, c);
        for (k, h) in a.homes.iter().enumerate() {
            let proto = &t.homes[k % 10];
            let f = h.fixed_load[0] / proto.fixed_load[0];
            assert!((0.8..=1.2).contains(&f));
            assert!((h.fixed_load[1] / proto.fixed_load[1] - f).abs() < 1e-12);
        }
        assert!(a.ensure_valid().is_ok());
    }

    #[test]
    fn zero_homes_rejected() {
        assert!(generate_synthetic_community(0, 1, &four_type_template()).is_err());
    }
}
