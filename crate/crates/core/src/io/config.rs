//! Pipeline configuration files.
//!
//! A config file is TOML with the sections `[denoise]`, `[lms]`,
//! `[estimator]`, `[fusion]` and `[ground_truth]`. Every key is optional and
//! falls back to its default; unknown keys are rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::session::PipelineConfig;

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

pub fn parse_config_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(config_err)
}

pub fn config_from_table(table: toml::Table) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    config_from_table(parse_config_table(text)?)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn config_to_table(cfg: &PipelineConfig) -> Result<toml::Table> {
    toml::Table::try_from(cfg).map_err(config_err)
}

/// Full config with every key spelled out.
pub fn config_to_toml(cfg: &PipelineConfig) -> Result<String> {
    toml::to_string(cfg).map_err(config_err)
}

/// Recursively overlays `over` onto `base`; scalars and arrays in `over` win.
pub fn merge_tables(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// `base` with `overrides` applied, validated.
pub fn apply_overrides(base: &PipelineConfig, overrides: &toml::Table) -> Result<PipelineConfig> {
    let mut t = config_to_table(base)?;
    merge_tables(&mut t, overrides);
    config_from_table(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::LmsMode;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(parse_config("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = PipelineConfig::default();
        let text = config_to_toml(&cfg).unwrap();
        for section in [
            "[denoise]",
            "[lms]",
            "[estimator]",
            "[fusion]",
            "[ground_truth]",
        ] {
            assert!(text.contains(section), "{section}");
        }
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = parse_config(
            "[lms]\nmode = \"nlms\"\nstep_size = 0.01\n\n[fusion]\ntau_cpm = 1.5\n\n[estimator]\nsearch_band_cpm = [6.0, 40.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.lms.mode, LmsMode::Nlms);
        assert_eq!(cfg.lms.step_size, 0.01);
        assert_eq!(cfg.lms.taps, 256);
        assert_eq!(cfg.fusion.tau_cpm, 1.5);
        assert_eq!(cfg.estimator.search_band_cpm, (6.0, 40.0));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(
            parse_config("[lms]\ntapz = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("[bogus]\nx = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("[lms]\ntaps = 0\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(parse_config("[lms\n"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_merge_deeply() {
        let base = parse_config("[fusion]\ntau_cpm = 2.0\n[lms]\nstep_size = 0.02\n").unwrap();
        let over = parse_config_table("[lms]\ntaps = 128\n").unwrap();
        let cfg = apply_overrides(&base, &over).unwrap();
        assert_eq!(cfg.lms.taps, 128);
        assert_eq!(cfg.lms.step_size, 0.02);
        assert_eq!(cfg.fusion.tau_cpm, 2.0);
    }
}
