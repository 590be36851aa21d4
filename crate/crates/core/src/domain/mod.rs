//! Community data model, validation, file ingestion and synthetic
//! community generation.
//!
//! Units throughout: energy kWh, power kW, temperature °F, prices
//! cents/kWh, irradiation kW/m².

mod io;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trading::MidPricePolicy;

pub use io::{
    heating_day_config, load_community_config, load_csv_bundle, load_path, parse_series_csv, replication_config,
    to_json_string, write_csv_bundle, ConfigDocument, ConfigFormat, HEATING_DAY_JSON, REPLICATION_JSON,
};
pub use synthetic::{
    archetype_counts, generate_synthetic_community, generate_synthetic_community_with,
    Archetype, DEFAULT_LOAD_PERTURBATION,
};

/// HVAC (heating mode) parameters of one home.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvacParams {
    /// Rated input power, kW.
    pub p_max: f64,
    /// Thermal inertia, strictly between 0 and 1.
    pub epsilon: f64,
    /// Thermal conversion efficiency.
    pub eta_hvac: f64,
    /// Overall thermal conductivity, kW/°F.
    pub conductivity_a: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Indoor temperature at the start of the horizon.
    pub t_in_initial: f64,
}

impl HvacParams {
    pub fn comfort_midpoint(&self) -> f64 {
        0.5 * (self.t_min + self.t_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssParams {
    pub level_min: f64,
    pub level_max: f64,
    pub level_initial: f64,
    /// kW
    pub charge_rate_max: f64,
    /// kW
    pub discharge_rate_max: f64,
    /// Applied once on the way in and once on the way out.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvParams {
    /// m²
    pub panel_area: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeConfig {
    pub id: String,
    pub hvac: HvacParams,
    pub ess: Option<EssParams>,
    pub pv: Option<PvParams>,
    /// kWh per slot.
    pub fixed_load: Vec<f64>,
    /// Largest net exchange with the community in one slot, kWh.
    pub peak_limit: f64,
}

impl HomeConfig {
    /// Peak that never binds: full HVAC power plus the largest fixed load
    /// plus a full-rate battery charge.
    pub fn default_peak_limit(
        hvac: &HvacParams,
        ess: Option<&EssParams>,
        fixed_load: &[f64],
        slot_hours: f64,
    ) -> f64 {
        let max_fixed = fixed_load.iter().copied().fold(0.0, f64::max);
        let charge = ess.map_or(0.0, |e| e.charge_rate_max * slot_hours);
        hvac.p_max * slot_hours + max_fixed + charge
    }

    pub fn archetype(&self) -> Archetype {
        Archetype::of(self.pv.is_some(), self.ess.is_some())
    }
}

/// How the big-M constant of the linearized model is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BigMPolicy {
    #[default]
    Derived,
    Fixed(f64),
}

impl fmt::Display for BigMPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BigMPolicy::Derived => f.write_str("derived"),
            BigMPolicy::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for BigMPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "derived" => Ok(BigMPolicy::Derived),
            _ => {
                let value = s
                    .strip_prefix("fixed:")
                    .ok_or_else(|| format!("expected `derived` or `fixed:VALUE`, got `{s}`"))?;
                let value: f64 = value
                    .parse()
                    .map_err(|e| format!("bad big-M value `{value}`: {e}"))?;
                if !(value.is_finite() && value > 0.0) {
                    return Err(format!("big-M must be positive and finite, got {value}"));
                }
                Ok(BigMPolicy::Fixed(value))
            }
        }
    }
}

/// Complete static description of a community for one scheduling day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityConfig {
    pub homes: Vec<HomeConfig>,
    pub horizon_slots: usize,
    /// Slot length Δt in hours.
    pub slot_hours: f64,
    /// Day-ahead buying price from the provider, cents/kWh.
    pub buy_price: Vec<f64>,
    /// Selling price as a fraction of the buying price.
    pub alpha: f64,
    /// Largest net community exchange in one slot, kWh.
    pub community_peak: f64,
    pub ghi: Vec<f64>,
    pub t_out: Vec<f64>,
    pub mid_price_policy: MidPricePolicy,
    pub big_m_policy: BigMPolicy,
}

impl CommunityConfig {
    pub fn n_homes(&self) -> usize {
        self.homes.len()
    }

    pub fn sell_price(&self, slot: usize) -> f64 {
        self.alpha * self.buy_price[slot]
    }

    pub fn max_buy_price(&self) -> f64 {
        self.buy_price.iter().copied().fold(0.0, f64::max)
    }

    /// PV output of `home` over the horizon; all zeros without PV.
    pub fn res_output(&self, home: usize) -> Vec<f64> {
        let h = &self.homes[home];
        match &h.pv {
            Some(pv) => self
                .ghi
                .iter()
                .map(|&g| g * pv.panel_area * pv.efficiency * self.slot_hours)
                .collect(),
            None => vec![0.0; self.horizon_slots],
        }
    }

    pub fn home_index(&self, id: &str) -> Option<usize> {
        self.homes.iter().position(|h| h.id == id)
    }

    /// Runs [`validate_config`] and turns the first error into a
    /// [`ConfigError::Domain`].
    pub fn ensure_valid(&self) -> Result<(), ConfigError> {
        let report = validate_config(self);
        match report.errors.first() {
            None => Ok(()),
            Some(first) => Err(ConfigError::Domain {
                path: first.path.clone(),
                message: first.message.clone(),
                total: report.errors.len(),
            }),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid value at `{path}`: {message} ({total} error(s) in total)")]
    Domain {
        path: String,
        message: String,
        total: usize,
    },
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn path(&self) -> &str {
        match self {
            ConfigError::Parse { path, .. }
            | ConfigError::Schema { path, .. }
            | ConfigError::Domain { path, .. }
            | ConfigError::Io { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Collects issues keyed by home index; community-level issues sort first.
#[derive(Default)]
struct IssueSink {
    errors: Vec<(Option<usize>, Issue)>,
    warnings: Vec<(Option<usize>, Issue)>,
}

impl IssueSink {
    fn error(&mut self, home: Option<usize>, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push((
            home,
            Issue {
                path: path.into(),
                message: message.into(),
            },
        ));
    }

    fn warn(&mut self, home: Option<usize>, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push((
            home,
            Issue {
                path: path.into(),
                message: message.into(),
            },
        ));
    }

    fn finish(mut self) -> ValidationReport {
        // Stable sort keeps traversal (field) order within each home.
        self.errors.sort_by_key(|(h, _)| h.map_or(0, |i| i + 1));
        self.warnings.sort_by_key(|(h, _)| h.map_or(0, |i| i + 1));
        ValidationReport {
            errors: self.errors.into_iter().map(|(_, i)| i).collect(),
            warnings: self.warnings.into_iter().map(|(_, i)| i).collect(),
        }
    }
}

fn check_series(
    sink: &mut IssueSink,
    home: Option<usize>,
    path: &str,
    series: &[f64],
    len: usize,
    rule: SeriesRule,
) {
    if series.len() != len {
        sink.error(
            home,
            path,
            format!("expected {len} entries, found {}", series.len()),
        );
        return;
    }
    for (k, &v) in series.iter().enumerate() {
        let bad = match rule {
            SeriesRule::Finite => !v.is_finite(),
            SeriesRule::NonNegative => !(v.is_finite() && v >= 0.0),
            SeriesRule::Positive => !(v.is_finite() && v > 0.0),
        };
        if bad {
            let what = match rule {
                SeriesRule::Finite => "must be finite",
                SeriesRule::NonNegative => "must be non-negative",
                SeriesRule::Positive => "must be positive",
            };
            sink.error(home, format!("{path}[{k}]"), format!("slot {} {what}, got {v}", k + 1));
        }
    }
}

#[derive(Clone, Copy)]
enum SeriesRule {
    Finite,
    NonNegative,
    Positive,
}

fn positive(sink: &mut IssueSink, home: Option<usize>, path: String, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        sink.error(home, path, format!("must be positive, got {v}"));
    }
}

fn unit_interval(sink: &mut IssueSink, home: Option<usize>, path: String, v: f64, closed: bool) {
    let ok = v.is_finite() && v > 0.0 && if closed { v <= 1.0 } else { v < 1.0 };
    if !ok {
        let band = if closed { "(0, 1]" } else { "(0, 1)" };
        sink.error(home, path, format!("must lie in {band}, got {v}"));
    }
}

fn is_valid_home_id(id: &str) -> bool {
    !id.is_empty() && id != "com" && id.chars().all(|c| c.is_ascii_alphanumeric())
}

/// Lists every invariant violation of `config`.
///
/// Errors are ordered community-level first, then by home index, and by
/// field within each home.
pub fn validate_config(config: &CommunityConfig) -> ValidationReport {
    let mut sink = IssueSink::default();
    let t = config.horizon_slots;

    if t == 0 {
        sink.error(None, "community.horizon_slots", "must be at least 1");
    }
    positive(&mut sink, None, "community.slot_hours".into(), config.slot_hours);
    unit_interval(&mut sink, None, "community.alpha".into(), config.alpha, false);
    positive(&mut sink, None, "community.community_peak".into(), config.community_peak);
    if config.homes.is_empty() {
        sink.error(None, "homes", "community needs at least one home");
    }

    check_series(&mut sink, None, "series.buy_price", &config.buy_price, t, SeriesRule::Positive);
    check_series(&mut sink, None, "series.ghi", &config.ghi, t, SeriesRule::NonNegative);
    check_series(&mut sink, None, "series.t_out", &config.t_out, t, SeriesRule::Finite);

    if let MidPricePolicy::Explicit(series) = &config.mid_price_policy {
        let path = "community.mid_price_policy.explicit";
        if series.len() != t {
            sink.error(None, path, format!("expected {t} entries, found {}", series.len()));
        } else if config.buy_price.len() == t {
            for (k, (&mid, &p)) in series.iter().zip(&config.buy_price).enumerate() {
                let lo = config.alpha * p;
                if !(mid.is_finite() && mid >= lo && mid <= p) {
                    sink.error(
                        None,
                        format!("{path}[{k}]"),
                        format!("mid price {mid} outside [{lo}, {p}] at slot {}", k + 1),
                    );
                }
            }
        }
    }

    if let BigMPolicy::Fixed(m) = config.big_m_policy {
        if !(m.is_finite() && m > 0.0) {
            sink.error(None, "community.big_m_policy.fixed", format!("must be positive, got {m}"));
        }
    }

    let mut seen = HashSet::new();
    for (i, home) in config.homes.iter().enumerate() {
        let h = Some(i);
        let base = format!("homes[{i}]");
        if !is_valid_home_id(&home.id) {
            sink.error(
                h,
                format!("{base}.id"),
                format!("`{}` must be non-empty ASCII alphanumeric and not `com`", home.id),
            );
        } else if !seen.insert(home.id.as_str()) {
            sink.error(h, format!("{base}.id"), format!("duplicate home id `{}`", home.id));
        }

        let hv = &home.hvac;
        positive(&mut sink, h, format!("{base}.hvac.p_max"), hv.p_max);
        unit_interval(&mut sink, h, format!("{base}.hvac.epsilon"), hv.epsilon, false);
        positive(&mut sink, h, format!("{base}.hvac.eta_hvac"), hv.eta_hvac);
        positive(&mut sink, h, format!("{base}.hvac.conductivity_a"), hv.conductivity_a);
        if !(hv.t_min.is_finite() && hv.t_max.is_finite() && hv.t_min < hv.t_max) {
            sink.error(
                h,
                format!("{base}.hvac.t_min"),
                format!("comfort band [{}, {}] is empty", hv.t_min, hv.t_max),
            );
        } else if !(hv.t_in_initial >= hv.t_min && hv.t_in_initial <= hv.t_max) {
            sink.error(
                h,
                format!("{base}.hvac.t_in_initial"),
                format!(
                    "initial temperature {} outside comfort band [{}, {}]",
                    hv.t_in_initial, hv.t_min, hv.t_max
                ),
            );
        }

        if let Some(ess) = &home.ess {
            let p = format!("{base}.ess");
            if !(ess.level_min.is_finite() && ess.level_min >= 0.0) {
                sink.error(h, format!("{p}.level_min"), format!("must be non-negative, got {}", ess.level_min));
            }
            if !(ess.level_initial >= ess.level_min) {
                sink.error(
                    h,
                    format!("{p}.level_initial"),
                    format!("{} is below level_min {}", ess.level_initial, ess.level_min),
                );
            }
            if !(ess.level_initial <= ess.level_max) {
                sink.error(
                    h,
                    format!("{p}.level_initial"),
                    format!("{} exceeds level_max {}", ess.level_initial, ess.level_max),
                );
            }
            positive(&mut sink, h, format!("{p}.charge_rate_max"), ess.charge_rate_max);
            positive(&mut sink, h, format!("{p}.discharge_rate_max"), ess.discharge_rate_max);
            unit_interval(&mut sink, h, format!("{p}.efficiency"), ess.efficiency, true);
        }
        if let Some(pv) = &home.pv {
            positive(&mut sink, h, format!("{base}.pv.panel_area"), pv.panel_area);
            unit_interval(&mut sink, h, format!("{base}.pv.efficiency"), pv.efficiency, true);
        }

        check_series(
            &mut sink,
            h,
            &format!("{base}.fixed_load"),
            &home.fixed_load,
            t,
            SeriesRule::NonNegative,
        );
        positive(&mut sink, h, format!("{base}.peak_limit"), home.peak_limit);
    }

    let report_so_far = sink.errors.is_empty();
    if report_so_far {
        if let BigMPolicy::Fixed(m) = config.big_m_policy {
            let derived = crate::milp::derived_big_m(config);
            if m < derived {
                sink.warn(
                    None,
                    "community.big_m_policy.fixed",
                    format!("{m} is below the derived safe bound {derived}; the model may cut off feasible schedules"),
                );
            }
        }
        for k in 0..t {
            let floor: f64 = config.homes.iter().map(|h| h.fixed_load[k]).sum::<f64>()
                - config
                    .homes
                    .iter()
                    .enumerate()
                    .map(|(i, h)| {
                        config.res_output(i)[k]
                            + h.ess.as_ref().map_or(0.0, |e| e.discharge_rate_max * config.slot_hours)
                    })
                    .sum::<f64>();
            if floor > config.community_peak {
                sink.warn(
                    None,
                    format!("community.community_peak@{}", k + 1),
                    format!("fixed demand net of all local supply ({floor:.3}) exceeds the community peak"),
                );
            }
        }
    }

    sink.finish()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn reference_hvac() -> HvacParams {
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

    pub fn bare_home(id: &str, load: Vec<f64>, slot_hours: f64) -> HomeConfig {
        let hvac = reference_hvac();
        let peak = HomeConfig::default_peak_limit(&hvac, None, &load, slot_hours);
        HomeConfig {
            id: id.into(),
            hvac,
            ess: None,
            pv: None,
            fixed_load: load,
            peak_limit: peak,
        }
    }

    pub fn community(homes: Vec<HomeConfig>, price: Vec<f64>, t_out: Vec<f64>) -> CommunityConfig {
        let t = price.len();
        CommunityConfig {
            homes,
            horizon_slots: t,
            slot_hours: 1.0,
            buy_price: price,
            alpha: 0.8,
            community_peak: 1000.0,
            ghi: vec![0.0; t],
            t_out,
            mid_price_policy: MidPricePolicy::Case2,
            big_m_policy: BigMPolicy::Derived,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn sample() -> CommunityConfig {
        community(
            vec![bare_home("h1", vec![1.0, 2.0], 1.0), bare_home("h2", vec![0.5, 0.5], 1.0)],
            vec![10.0, 12.0],
            vec![60.0, 62.0],
        )
    }

    #[test]
    fn clean_config_has_no_errors() {
        let report = validate_config(&sample());
        assert!(report.errors.is_empty(), "{:?}", report.errors);
    }

    #[test]
    fn negative_fixed_load_names_home_and_slot() {
        let mut c = sample();
        c.homes[1].fixed_load[1] = -0.1;
        let report = validate_config(&c);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].path, "homes[1].fixed_load[1]");
        assert!(report.errors[0].message.contains("slot 2"));
    }

    #[test]
    fn initial_level_above_capacity_is_one_error() {
        let mut c = sample();
        c.homes[0].ess = Some(EssParams {
            level_min: 0.5,
            level_max: 5.0,
            level_initial: 6.0,
            charge_rate_max: 2.0,
            discharge_rate_max: 2.0,
            efficiency: 0.9,
        });
        let report = validate_config(&c);
        assert_eq!(report.errors.len(), 1, "{:?}", report.errors);
        assert_eq!(report.errors[0].path, "homes[0].ess.level_initial");
    }

    #[test]
    fn empty_comfort_band_is_rejected_at_t_min() {
        let mut c = sample();
        c.homes[0].hvac.t_max = c.homes[0].hvac.t_min;
        c.homes[0].hvac.t_in_initial = c.homes[0].hvac.t_min;
        let err = c.ensure_valid().unwrap_err();
        assert_eq!(err.path(), "homes[0].hvac.t_min");
    }

    #[test]
    fn errors_sorted_by_home_then_field() {
        let mut c = sample();
        c.homes[1].peak_limit = 0.0;
        c.homes[0].fixed_load[0] = -1.0;
        c.alpha = 1.5;
        let paths: Vec<_> = validate_config(&c).errors.into_iter().map(|e| e.path).collect();
        assert_eq!(
            paths,
            ["community.alpha", "homes[0].fixed_load[0]", "homes[1].peak_limit"]
        );
    }

    #[test]
    fn series_length_mismatch_reported() {
        let mut c = sample();
        c.ghi.push(0.0);
        let report = validate_config(&c);
        assert_eq!(report.errors[0].path, "series.ghi");
    }

    #[test]
    fn duplicate_and_malformed_ids() {
        let mut c = sample();
        c.homes[1].id = "h1".into();
        assert!(validate_config(&c).errors[0].message.contains("duplicate"));
        c.homes[1].id = "home_2".into();
        assert!(validate_config(&c).errors[0].message.contains("alphanumeric"));
    }

    #[test]
    fn explicit_mid_price_must_stay_in_band() {
        let mut c = sample();
        c.mid_price_policy = MidPricePolicy::Explicit(vec![9.0, 12.5]);
        let report = validate_config(&c);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].path, "community.mid_price_policy.explicit[1]");
    }

    #[test]
    fn small_fixed_big_m_is_a_warning() {
        let mut c = sample();
        c.big_m_policy = BigMPolicy::Fixed(1.0);
        let report = validate_config(&c);
        assert!(report.errors.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn big_m_policy_parses() {
        assert_eq!("derived".parse::<BigMPolicy>().unwrap(), BigMPolicy::Derived);
        assert_eq!("fixed:1e9".parse::<BigMPolicy>().unwrap(), BigMPolicy::Fixed(1e9));
        assert!("fixed:-3".parse::<BigMPolicy>().is_err());
        assert!("tight".parse::<BigMPolicy>().is_err());
    }

    #[test]
    fn default_peak_covers_full_draw() {
        let hvac = reference_hvac();
        let ess = EssParams {
            level_min: 0.5,
            level_max: 10.0,
            level_initial: 0.5,
            charge_rate_max: 2.0,
            discharge_rate_max: 2.0,
            efficiency: 0.9,
        };
        let peak = HomeConfig::default_peak_limit(&hvac, Some(&ess), &[0.3, 1.2], 1.0);
        assert!((peak - (15.0 + 1.2 + 2.0)).abs() < 1e-12);
    }
}
