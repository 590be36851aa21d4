//! JSON documents and CSV bundles.
//!
//! A JSON config is one document with `community`, `homes[]` and
//! `series{buy_price, ghi, t_out}`. A CSV bundle is a directory holding a
//! `community.json` (same layout, `series` omitted, `fixed_load` optional per
//! home) plus `buy_price.csv`, `ghi.csv`, `t_out.csv` and one
//! `load_<home id>.csv` for every home without an inline `fixed_load`.
//! Every CSV has the header `slot,value` with slots numbered `1..=T`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BigMPolicy, CommunityConfig, ConfigError, EssParams, HomeConfig, HvacParams, PvParams,
};
use crate::trading::MidPricePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Json,
    CsvBundle,
}

impl ConfigFormat {
    /// Directories are bundles, anything else is JSON.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            ConfigFormat::CsvBundle
        } else {
            ConfigFormat::Json
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub community: CommunitySection,
    pub homes: Vec<HomeDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitySection {
    pub horizon_slots: usize,
    pub slot_hours: f64,
    pub alpha: f64,
    pub community_peak: f64,
    #[serde(default)]
    pub mid_price_policy: MidPricePolicy,
    #[serde(default)]
    pub big_m_policy: BigMPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub buy_price: Vec<f64>,
    pub ghi: Vec<f64>,
    pub t_out: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomeDocument {
    pub id: String,
    pub hvac: HvacDocument,
    #[serde(default)]
    pub ess: Option<EssParams>,
    #[serde(default)]
    pub pv: Option<PvParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_load: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_limit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HvacDocument {
    pub p_max: f64,
    pub epsilon: f64,
    pub eta_hvac: f64,
    pub conductivity_a: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Defaults to the middle of the comfort band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_in_initial: Option<f64>,
}

impl From<&HvacParams> for HvacDocument {
    fn from(h: &HvacParams) -> Self {
        HvacDocument {
            p_max: h.p_max,
            epsilon: h.epsilon,
            eta_hvac: h.eta_hvac,
            conductivity_a: h.conductivity_a,
            t_min: h.t_min,
            t_max: h.t_max,
            t_in_initial: Some(h.t_in_initial),
        }
    }
}

impl From<HvacDocument> for HvacParams {
    fn from(d: HvacDocument) -> Self {
        let t_in_initial = d.t_in_initial.unwrap_or(0.5 * (d.t_min + d.t_max));
        HvacParams {
            p_max: d.p_max,
            epsilon: d.epsilon,
            eta_hvac: d.eta_hvac,
            conductivity_a: d.conductivity_a,
            t_min: d.t_min,
            t_max: d.t_max,
            t_in_initial,
        }
    }
}

impl From<&CommunityConfig> for ConfigDocument {
    fn from(c: &CommunityConfig) -> Self {
        ConfigDocument {
            community: CommunitySection {
                horizon_slots: c.horizon_slots,
                slot_hours: c.slot_hours,
                alpha: c.alpha,
                community_peak: c.community_peak,
                mid_price_policy: c.mid_price_policy.clone(),
                big_m_policy: c.big_m_policy,
            },
            homes: c
                .homes
                .iter()
                .map(|h| HomeDocument {
                    id: h.id.clone(),
                    hvac: HvacDocument::from(&h.hvac),
                    ess: h.ess.clone(),
                    pv: h.pv.clone(),
                    fixed_load: Some(h.fixed_load.clone()),
                    peak_limit: Some(h.peak_limit),
                })
                .collect(),
            series: Some(SeriesSection {
                buy_price: c.buy_price.clone(),
                ghi: c.ghi.clone(),
                t_out: c.t_out.clone(),
            }),
        }
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn expect_len(path: &str, series: &[f64], len: usize) -> Result<(), ConfigError> {
    if series.len() == len {
        Ok(())
    } else {
        Err(schema(
            path,
            format!("expected {len} entries, found {}", series.len()),
        ))
    }
}

impl ConfigDocument {
    /// Resolves defaults and checks arity; invariant checks are left to
    /// [`super::validate_config`].
    pub fn into_config(self) -> Result<CommunityConfig, ConfigError> {
        let t = self.community.horizon_slots;
        let series = self
            .series
            .ok_or_else(|| schema("series", "missing field `series`"))?;
        expect_len("series.buy_price", &series.buy_price, t)?;
        expect_len("series.ghi", &series.ghi, t)?;
        expect_len("series.t_out", &series.t_out, t)?;
        let slot_hours = self.community.slot_hours;

        let mut homes = Vec::with_capacity(self.homes.len());
        for (i, h) in self.homes.into_iter().enumerate() {
            let fixed_load = h
                .fixed_load
                .ok_or_else(|| schema(format!("homes[{i}].fixed_load"), "missing field `fixed_load`"))?;
            expect_len(&format!("homes[{i}].fixed_load"), &fixed_load, t)?;
            let hvac = HvacParams::from(h.hvac);
            let peak_limit = h.peak_limit.unwrap_or_else(|| {
                HomeConfig::default_peak_limit(&hvac, h.ess.as_ref(), &fixed_load, slot_hours)
            });
            homes.push(HomeConfig {
                id: h.id,
                hvac,
                ess: h.ess,
                pv: h.pv,
                fixed_load,
                peak_limit,
            });
        }

        Ok(CommunityConfig {
            homes,
            horizon_slots: t,
            slot_hours,
            buy_price: series.buy_price,
            alpha: self.community.alpha,
            community_peak: self.community.community_peak,
            ghi: series.ghi,
            t_out: series.t_out,
            mid_price_policy: self.community.mid_price_policy,
            big_m_policy: self.community.big_m_policy,
        })
    }
}

fn parse_document(reader: impl Read) -> Result<ConfigDocument, ConfigError> {
    let mut de = serde_json::Deserializer::from_reader(reader);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        if inner.is_data() {
            ConfigError::Schema { path, message }
        } else {
            ConfigError::Parse { path, message }
        }
    })
}

/// Parses and validates a JSON community document.
pub fn load_community_config(reader: impl Read) -> Result<CommunityConfig, ConfigError> {
    let config = parse_document(reader)?.into_config()?;
    config.ensure_valid()?;
    Ok(config)
}

/// Bundled ten-home Detroit community. PV areas, battery sizes and HVAC
/// parameters are the published ones; loads, weather and prices are
/// approximate shapes scaled to a nearly energy-neutral day, so only
/// orderings and structure are meaningful.
pub const REPLICATION_JSON: &str = include_str!("../../data/replication.json");

pub fn replication_config() -> CommunityConfig {
    load_community_config(REPLICATION_JSON.as_bytes()).expect("bundled dataset is valid")
}

/// The same ten homes on a colder day with heavier loads. The community
/// buys most of its energy and its daily cost is far from zero, so a
/// relative MIP gap is a meaningful stopping rule; the scaling benchmark
/// uses it as its template.
pub const HEATING_DAY_JSON: &str = include_str!("../../data/heating_day.json");

pub fn heating_day_config() -> CommunityConfig {
    load_community_config(HEATING_DAY_JSON.as_bytes()).expect("bundled dataset is valid")
}

/// Loads either format from disk, chosen by [`ConfigFormat::detect`].
pub fn load_path(path: &Path) -> Result<CommunityConfig, ConfigError> {
    match ConfigFormat::detect(path) {
        ConfigFormat::CsvBundle => load_csv_bundle(path),
        ConfigFormat::Json => {
            let file = fs::File::open(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            load_community_config(std::io::BufReader::new(file))
        }
    }
}

/// Reads a `slot,value` series with slots numbered from 1.
pub fn parse_series_csv(reader: impl Read, name: &str) -> Result<Vec<f64>, ConfigError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ConfigError::Parse {
            path: name.to_string(),
            message: e.to_string(),
        })?
        .clone();
    if headers.len() != 2 || &headers[0] != "slot" || &headers[1] != "value" {
        return Err(schema(name, format!("header must be `slot,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let path = format!("{name}[{row}]");
        let record = record.map_err(|e| ConfigError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(schema(path, format!("expected 2 columns, found {}", record.len())));
        }
        let slot: usize = record[0].parse().map_err(|e| ConfigError::Parse {
            path: path.clone(),
            message: format!("bad slot `{}`: {e}", &record[0]),
        })?;
        if slot != row + 1 {
            return Err(schema(path, format!("expected slot {}, found {slot}", row + 1)));
        }
        let value: f64 = record[1].parse().map_err(|e| ConfigError::Parse {
            path: path.clone(),
            message: format!("bad value `{}`: {e}", &record[1]),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn read_series_file(dir: &Path, file: &str) -> Result<Vec<f64>, ConfigError> {
    let path = dir.join(file);
    let f = fs::File::open(&path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_series_csv(f, file)
}

/// Loads a CSV bundle directory (see the module docs for its layout).
pub fn load_csv_bundle(dir: &Path) -> Result<CommunityConfig, ConfigError> {
    let doc_path = dir.join("community.json");
    let file = fs::File::open(&doc_path).map_err(|source| ConfigError::Io {
        path: doc_path.display().to_string(),
        source,
    })?;
    let mut doc = parse_document(std::io::BufReader::new(file))?;
    if doc.series.is_some() {
        return Err(schema("series", "a CSV bundle carries its series in CSV files"));
    }
    doc.series = Some(SeriesSection {
        buy_price: read_series_file(dir, "buy_price.csv")?,
        ghi: read_series_file(dir, "ghi.csv")?,
        t_out: read_series_file(dir, "t_out.csv")?,
    });
    for home in &mut doc.homes {
        if home.fixed_load.is_none() {
            home.fixed_load = Some(read_series_file(dir, &format!("load_{}.csv", home.id))?);
        }
    }
    let config = doc.into_config()?;
    config.ensure_valid()?;
    Ok(config)
}

pub fn to_json_string(config: &CommunityConfig) -> String {
    serde_json::to_string_pretty(&ConfigDocument::from(config)).expect("config serializes")
}

fn write_series(w: impl Write, series: &[f64]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["slot", "value"])?;
    for (k, v) in series.iter().enumerate() {
        wtr.write_record([(k + 1).to_string(), v.to_string()])?;
    }
    wtr.flush()
}

/// Writes `config` as a CSV bundle; every home's load goes to its own file.
pub fn write_csv_bundle(config: &CommunityConfig, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut doc = ConfigDocument::from(config);
    doc.series = None;
    for home in &mut doc.homes {
        home.fixed_load = None;
    }
    fs::write(
        dir.join("community.json"),
        serde_json::to_string_pretty(&doc).expect("document serializes"),
    )?;
    write_series(fs::File::create(dir.join("buy_price.csv"))?, &config.buy_price)?;
    write_series(fs::File::create(dir.join("ghi.csv"))?, &config.ghi)?;
    write_series(fs::File::create(dir.join("t_out.csv"))?, &config.t_out)?;
    for home in &config.homes {
        write_series(
            fs::File::create(dir.join(format!("load_{}.csv", home.id)))?,
            &home.fixed_load,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
      "community": {"horizon_slots": 2, "slot_hours": 1.0, "alpha": 0.8, "community_peak": 50.0},
      "homes": [{
        "id": "h1",
        "hvac": {"p_max": 15, "epsilon": 0.7, "eta_hvac": 2.5, "conductivity_a": 0.14, "t_min": 66.2, "t_max": 75.2},
        "pv": {"panel_area": 5, "efficiency": 0.9},
        "fixed_load": [1.0, 0.5]
      }],
      "series": {"buy_price": [10, 12], "ghi": [0, 0.4], "t_out": [55, 60]}
    }"#;

    #[test]
    fn defaults_are_resolved() {
        let c = load_community_config(MINIMAL.as_bytes()).unwrap();
        let h = &c.homes[0];
        assert!((h.hvac.t_in_initial - 70.7).abs() < 1e-12);
        assert!((h.peak_limit - 16.0).abs() < 1e-12);
        assert!(h.ess.is_none());
        assert_eq!(c.mid_price_policy, MidPricePolicy::Case2);
        assert_eq!(c.big_m_policy, BigMPolicy::Derived);
    }

    #[test]
    fn alpha_point_eight_is_accepted() {
        let c = load_community_config(MINIMAL.as_bytes()).unwrap();
        assert_eq!(c.alpha, 0.8);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = load_community_config(&b"{\"community\": "[..]).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err}");
    }

    #[test]
    fn missing_field_is_a_schema_error_with_path() {
        let text = MINIMAL.replace("\"p_max\": 15, ", "");
        let err = load_community_config(text.as_bytes()).unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }), "{err}");
        assert_eq!(err.path(), "homes[0].hvac");
        assert!(err.to_string().contains("p_max"));
    }

    #[test]
    fn wrong_arity_is_a_schema_error() {
        let text = MINIMAL.replace("[1.0, 0.5]", "[1.0]");
        let err = load_community_config(text.as_bytes()).unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }));
        assert_eq!(err.path(), "homes[0].fixed_load");
    }

    #[test]
    fn violated_invariant_is_a_domain_error() {
        let text = MINIMAL.replace("\"t_max\": 75.2", "\"t_max\": 66.2");
        let err = load_community_config(text.as_bytes()).unwrap_err();
        assert!(matches!(err, ConfigError::Domain { .. }));
        assert_eq!(err.path(), "homes[0].hvac.t_min");
    }

    #[test]
    fn series_csv_checks_header_and_numbering() {
        let ok = parse_series_csv("slot,value\n1,0.5\n2,0.7\n".as_bytes(), "x").unwrap();
        assert_eq!(ok, vec![0.5, 0.7]);
        assert!(matches!(
            parse_series_csv("t,v\n1,0.5\n".as_bytes(), "x"),
            Err(ConfigError::Schema { .. })
        ));
        assert!(matches!(
            parse_series_csv("slot,value\n2,0.5\n".as_bytes(), "x"),
            Err(ConfigError::Schema { .. })
        ));
        assert!(matches!(
            parse_series_csv("slot,value\n1,abc\n".as_bytes(), "x"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn csv_bundle_round_trips() {
        let c = load_community_config(MINIMAL.as_bytes()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_csv_bundle(&c, dir.path()).unwrap();
        let back = load_path(dir.path()).unwrap();
        assert_eq!(back, c);
    }
}
