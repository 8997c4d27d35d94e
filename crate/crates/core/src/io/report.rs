//! Key-value reports. The output is valid TOML: reals carry four decimals,
//! a missing value is written as `nan`, pairs as two-element arrays and the
//! per-group breakdowns as tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{EvalReport, GroupSummary};
use crate::io::records::fmt4;

/// Ordered `key = value` lines under optional table headers.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    text: String,
}

fn real(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_nan() => "nan".into(),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.into(),
        Some(x) => fmt4(x),
        None => "nan".into(),
    }
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn real(&mut self, key: &str, v: Option<f64>) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {}", real(v));
        self
    }

    pub fn pair(&mut self, key: &str, v: Option<(f64, f64)>) -> &mut Self {
        let (a, b) = match v {
            Some((a, b)) => (Some(a), Some(b)),
            None => (None, None),
        };
        let _ = writeln!(self.text, "{key} = [{}, {}]", real(a), real(b));
        self
    }

    pub fn int(&mut self, key: &str, v: usize) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {v}");
        self
    }

    pub fn string(&mut self, key: &str, v: &str) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {}", quote(v));
        self
    }

    /// Starts a table; `path` segments are quoted as needed.
    pub fn table(&mut self, path: &[&str]) -> &mut Self {
        let name: Vec<String> = path
            .iter()
            .map(|p| {
                if !p.is_empty()
                    && p.chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                {
                    p.to_string()
                } else {
                    quote(p)
                }
            })
            .collect();
        let _ = writeln!(self.text, "\n[{}]", name.join("."));
        self
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, &self.text)?;
        Ok(())
    }
}

fn group(kv: &mut KeyValues, section: &str, groups: &BTreeMap<String, GroupSummary>) {
    kv.table(&[section]);
    for (name, g) in groups {
        kv.table(&[section, name])
            .int("n_windows", g.n_windows)
            .int("n_scored", g.n_scored)
            .real("mae_cpm", g.mae_cpm)
            .real("rmse_cpm", g.rmse_cpm)
            .real("retained_fraction", g.retained_fraction);
    }
}

pub fn report_text(r: &EvalReport) -> String {
    let mut kv = KeyValues::new();
    kv.real("tau_cpm", Some(r.tau_cpm))
        .int("n_windows", r.n_windows)
        .int("n_scored", r.n_scored)
        .real("mae_cpm", r.mae_cpm)
        .real("rmse_cpm", r.rmse_cpm)
        .real("bias_cpm", r.bias_cpm)
        .pair("loa_cpm", r.loa_cpm)
        .real("nr_db", r.nr_db)
        .real("ri", r.ri)
        .real("mad_sigma", r.mad_sigma)
        .pair("mad_interval_cpm", r.mad_interval_cpm)
        .real("mad_inlier_mae_cpm", r.mad_inlier_mae_cpm)
        .real("g_ratio", r.g_ratio)
        .real("retained_fraction", r.retained_fraction);
    group(&mut kv, "per_condition", &r.per_condition);
    group(&mut kv, "per_subject", &r.per_subject);
    kv.text
}

pub fn write_report(r: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report_text(r))?;
    Ok(())
}

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        offset: 0,
        message: message.into(),
    }
}

fn get_real(t: &toml::Table, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        Some(toml::Value::Float(f)) if f.is_nan() => Ok(None),
        Some(toml::Value::Float(f)) => Ok(Some(*f)),
        Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
        _ => Err(format_err(format!(
            "report key {key:?} missing or not a number"
        ))),
    }
}

fn get_int(t: &toml::Table, key: &str) -> Result<usize> {
    t.get(key)
        .and_then(toml::Value::as_integer)
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| format_err(format!("report key {key:?} missing or not a count")))
}

fn get_pair(t: &toml::Table, key: &str) -> Result<Option<(f64, f64)>> {
    let arr = t
        .get(key)
        .and_then(toml::Value::as_array)
        .filter(|a| a.len() == 2)
        .ok_or_else(|| format_err(format!("report key {key:?} is not a pair")))?;
    let v: Vec<Option<f64>> = arr
        .iter()
        .map(|x| x.as_float().filter(|f| !f.is_nan()))
        .collect();
    Ok(v[0].zip(v[1]))
}

fn get_groups(t: &toml::Table, key: &str) -> Result<BTreeMap<String, GroupSummary>> {
    let Some(tab) = t.get(key).and_then(toml::Value::as_table) else {
        return Err(format_err(format!("report table {key:?} missing")));
    };
    tab.iter()
        .map(|(name, v)| {
            let g = v
                .as_table()
                .ok_or_else(|| format_err(format!("{key}.{name} is not a table")))?;
            Ok((
                name.clone(),
                GroupSummary {
                    n_windows: get_int(g, "n_windows")?,
                    n_scored: get_int(g, "n_scored")?,
                    mae_cpm: get_real(g, "mae_cpm")?,
                    rmse_cpm: get_real(g, "rmse_cpm")?,
                    retained_fraction: get_real(g, "retained_fraction")?,
                },
            ))
        })
        .collect()
}

pub fn parse_report(text: &str) -> Result<EvalReport> {
    let t: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| format_err(e.to_string()))?;
    Ok(EvalReport {
        tau_cpm: get_real(&t, "tau_cpm")?.unwrap_or(f64::NAN),
        n_windows: get_int(&t, "n_windows")?,
        n_scored: get_int(&t, "n_scored")?,
        mae_cpm: get_real(&t, "mae_cpm")?,
        rmse_cpm: get_real(&t, "rmse_cpm")?,
        bias_cpm: get_real(&t, "bias_cpm")?,
        loa_cpm: get_pair(&t, "loa_cpm")?,
        nr_db: get_real(&t, "nr_db")?,
        ri: get_real(&t, "ri")?,
        mad_sigma: get_real(&t, "mad_sigma")?,
        mad_interval_cpm: get_pair(&t, "mad_interval_cpm")?,
        mad_inlier_mae_cpm: get_real(&t, "mad_inlier_mae_cpm")?,
        g_ratio: get_real(&t, "g_ratio")?,
        retained_fraction: get_real(&t, "retained_fraction")?,
        per_condition: get_groups(&t, "per_condition")?,
        per_subject: get_groups(&t, "per_subject")?,
    })
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    parse_report(&fs::read_to_string(path)?)
}
