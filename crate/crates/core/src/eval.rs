//! Error metrics, signal-quality metrics and threshold sweeps.
//!
//! Everything here is a pure function of its inputs. Rate errors are signed
//! `estimate - truth` in CPM.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fusion::{reject_outliers, WindowRecord};
use crate::signal::{energy, mean, SampleBlock};

/// Scale factor turning a median absolute deviation into a normal-consistent sigma.
pub const MAD_SCALE: f64 = 1.4826;
/// Half-width of the robust inlier interval, in robust sigmas.
pub const MAD_INTERVAL_SIGMAS: f64 = 3.0;
pub const LOA_Z: f64 = 1.96;
/// Default secant span on the belt timeline (0.25 s at 400 Hz).
pub const DEFAULT_RI_SPAN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

pub fn error_metrics(estimates: &[f64], truth: &[f64]) -> Result<ErrorMetrics> {
    if estimates.len() != truth.len() {
        return param(format!(
            "{} estimates vs {} truth values",
            estimates.len(),
            truth.len()
        ));
    }
    if estimates.is_empty() {
        return Err(Error::UndefinedMetric(
            "error metrics of an empty set".into(),
        ));
    }
    let n = estimates.len();
    let (mut abs, mut sq) = (0.0, 0.0);
    for (e, g) in estimates.iter().zip(truth) {
        let d = e - g;
        abs += d.abs();
        sq += d * d;
    }
    Ok(ErrorMetrics {
        mae: abs / n as f64,
        rmse: (sq / n as f64).sqrt(),
        n,
    })
}

/// `10·log10(Σ cleaned² / Σ original²)`. Negative means suppression.
pub fn noise_reduction_db(cleaned: &SampleBlock, original: &SampleBlock) -> Result<f64> {
    if cleaned.sample_rate_hz() != original.sample_rate_hz() {
        return Err(Error::Alignment(format!(
            "cleaned at {} Hz vs original at {} Hz",
            cleaned.sample_rate_hz(),
            original.sample_rate_hz()
        )));
    }
    noise_reduction_db_slices(cleaned.samples(), original.samples())
}

pub fn noise_reduction_db_slices(cleaned: &[f64], original: &[f64]) -> Result<f64> {
    if cleaned.len() != original.len() {
        return Err(Error::Alignment(format!(
            "cleaned has {} samples, original {}",
            cleaned.len(),
            original.len()
        )));
    }
    let eo = energy(original);
    if eo <= 0.0 {
        return Err(Error::UndefinedMetric(
            "noise reduction with zero original energy".into(),
        ));
    }
    Ok(10.0 * (energy(cleaned) / eo).log10())
}

/// Moving mean of `y²` over the last `span` samples. Entry `i` corresponds to
/// input sample `i + span - 1`.
pub fn energy_envelope(y: &[f64], span: usize) -> Vec<f64> {
    if span == 0 || y.len() < span {
        return Vec::new();
    }
    let mut prefix = Vec::with_capacity(y.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in y {
        acc += v * v;
        prefix.push(acc);
    }
    (span..=y.len())
        .map(|t| (prefix[t] - prefix[t - span]) / span as f64)
        .collect()
}

/// `|g(t) - g(t-span)| / span`. Entry `i` corresponds to sample `i + span`.
pub fn secant_slope(g: &[f64], span: usize) -> Vec<f64> {
    if span == 0 || g.len() <= span {
        return Vec::new();
    }
    g.windows(span + 1)
        .map(|w| (w[span] - w[0]).abs() / span as f64)
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return param(format!("series lengths differ: {} vs {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedMetric(
            "correlation needs two samples".into(),
        ));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::UndefinedMetric(
            "zero variance in a correlated series".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Paired envelope and slope series on the belt timeline. Both use the same
/// `span` in their own samples: the envelope averages `span` audio samples
/// and is then read at the audio sample nearest to each belt sample.
pub fn ri_series(
    audio: &SampleBlock,
    belt: &SampleBlock,
    span: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if span == 0 {
        return param("RI span must be positive");
    }
    let ratio = audio.sample_rate_hz() / belt.sample_rate_hz();
    let env = energy_envelope(audio.samples(), span);
    let slope = secant_slope(belt.samples(), span);
    let mut e = Vec::with_capacity(slope.len());
    let mut s = Vec::with_capacity(slope.len());
    for (i, &sv) in slope.iter().enumerate() {
        let t_a = ((i + span) as f64 * ratio).round() as usize;
        if t_a + 1 < span {
            continue;
        }
        match env.get(t_a + 1 - span) {
            Some(&ev) => {
                e.push(ev);
                s.push(sv);
            }
            None => break,
        }
    }
    Ok((e, s))
}

/// Respiratory information index: Pearson correlation between the audio
/// energy envelope and the absolute belt slope.
pub fn ri_index(audio: &SampleBlock, belt: &SampleBlock, span: usize) -> Result<f64> {
    let (e, s) = ri_series(audio, belt, span)?;
    if e.len() < 2 {
        return Err(Error::UndefinedMetric(
            "audio and belt overlap by fewer than two RI samples".into(),
        ));
    }
    pearson(&e, &s)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        v[n / 2 - 1] / 2.0 + v[n / 2] / 2.0
    }
}

pub fn median(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    Some(median_sorted(&v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MadInterval {
    pub median: f64,
    pub mad: f64,
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
    pub n_inliers: usize,
    pub inlier_fraction: f64,
    /// Mean |error| over values inside the closed interval.
    pub inlier_mae: f64,
}

/// Robust three-sigma interval around the median.
///
/// At least half of the values lie within one MAD of the median, so the
/// inlier set is never empty.
pub fn mad_interval(errors: &[f64]) -> Result<MadInterval> {
    let Some(med) = median(errors) else {
        return Err(Error::UndefinedMetric(
            "MAD interval of an empty set".into(),
        ));
    };
    let dev: Vec<f64> = errors.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&dev).unwrap_or(0.0);
    let sigma = MAD_SCALE * mad;
    let low = med - MAD_INTERVAL_SIGMAS * sigma;
    let high = med + MAD_INTERVAL_SIGMAS * sigma;
    let inliers: Vec<f64> = errors
        .iter()
        .copied()
        .filter(|x| (low..=high).contains(x))
        .collect();
    let n_inliers = inliers.len();
    Ok(MadInterval {
        median: med,
        mad,
        sigma,
        low,
        high,
        n_inliers,
        inlier_fraction: n_inliers as f64 / errors.len() as f64,
        inlier_mae: inliers.iter().map(|x| x.abs()).sum::<f64>() / n_inliers as f64,
    })
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generalizability {
    /// Sample variance of the per-subject mean errors.
    pub between: f64,
    /// Unweighted mean of the per-subject sample variances.
    pub within: f64,
    pub ratio: f64,
}

pub fn g_from_components(between: f64, within: f64) -> Result<f64> {
    if !(between >= 0.0 && within >= 0.0 && between.is_finite() && within.is_finite()) {
        return param(format!("variance components ({between}, {within}) invalid"));
    }
    if between + within == 0.0 {
        return Err(Error::UndefinedMetric("zero total error variance".into()));
    }
    Ok(between / (between + within))
}

pub fn generalizability<S, V>(errors_by_subject: &BTreeMap<S, V>) -> Result<Generalizability>
where
    V: AsRef<[f64]>,
{
    if errors_by_subject.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "generalizability needs two subjects, got {}",
            errors_by_subject.len()
        )));
    }
    let mut means = Vec::with_capacity(errors_by_subject.len());
    let mut vars = Vec::with_capacity(errors_by_subject.len());
    for v in errors_by_subject.values() {
        let v = v.as_ref();
        if v.len() < 2 {
            return Err(Error::UndefinedMetric(
                "every subject needs at least two errors".into(),
            ));
        }
        means.push(mean(v));
        vars.push(sample_variance(v));
    }
    let between = sample_variance(&means);
    let within = mean(&vars);
    Ok(Generalizability {
        between,
        within,
        ratio: g_from_components(between, within)?,
    })
}

pub fn generalizability_ratio<S, V>(errors_by_subject: &BTreeMap<S, V>) -> Result<f64>
where
    V: AsRef<[f64]>,
{
    generalizability(errors_by_subject).map(|g| g.ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    /// Sample standard deviation (n − 1) of the differences.
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

pub fn bland_altman(estimates: &[f64], truth: &[f64]) -> Result<BlandAltman> {
    if estimates.len() != truth.len() {
        return param(format!(
            "{} estimates vs {} truth values",
            estimates.len(),
            truth.len()
        ));
    }
    if estimates.len() < 2 {
        return Err(Error::UndefinedMetric(
            "Bland-Altman needs at least two pairs".into(),
        ));
    }
    let d: Vec<f64> = estimates.iter().zip(truth).map(|(e, g)| e - g).collect();
    let bias = mean(&d);
    let sd = sample_variance(&d).sqrt();
    Ok(BlandAltman {
        bias,
        sd,
        loa_low: bias - LOA_Z * sd,
        loa_high: bias + LOA_Z * sd,
    })
}

/// Records that can be scored: valid ground truth and a fused estimate.
fn scorable(r: &WindowRecord) -> Option<(f64, f64)> {
    match (r.gt_valid, r.rr_fused, r.gt_cpm) {
        (true, Some(e), Some(g)) => Some((e, g)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_cpm: f64,
    /// `None` when no scorable window survives.
    pub mae_cpm: Option<f64>,
    pub rmse_cpm: Option<f64>,
    pub n_retained: usize,
    pub retained_fraction: f64,
}

/// Metrics of the scorable windows whose discrepancy is below each τ.
/// The retained fraction is taken over scorable windows only.
pub fn threshold_sweep(records: &[WindowRecord], tau_grid: &[f64]) -> Vec<SweepRow> {
    let pool: Vec<(f64, f64, f64)> = records
        .iter()
        .filter_map(|r| {
            let (e, g) = scorable(r)?;
            Some((r.discrepancy_cpm?, e, g))
        })
        .collect();
    tau_grid
        .iter()
        .map(|&tau| {
            let (est, gt): (Vec<f64>, Vec<f64>) = pool
                .iter()
                .filter(|(d, _, _)| *d < tau)
                .map(|&(_, e, g)| (e, g))
                .unzip();
            let m = error_metrics(&est, &gt).ok();
            SweepRow {
                tau_cpm: tau,
                mae_cpm: m.map(|m| m.mae),
                rmse_cpm: m.map(|m| m.rmse),
                n_retained: est.len(),
                retained_fraction: if pool.is_empty() {
                    0.0
                } else {
                    est.len() as f64 / pool.len() as f64
                },
            }
        })
        .collect()
}

/// `start:step:stop` inclusive grid, e.g. `0:0.1:3`.
pub fn parse_tau_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Parameter(format!("bad number {s:?} in tau grid {spec:?}")))
    };
    match parts.as_slice() {
        [single] => Ok(vec![num(single)?]),
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0 && a <= b && a.is_finite() && b.is_finite()) {
                return param(format!(
                    "tau grid {spec:?} must have start <= stop and step > 0"
                ));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * step).collect())
        }
        _ => param(format!("tau grid {spec:?} is not start:step:stop")),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n_windows: usize,
    pub n_scored: usize,
    pub mae_cpm: Option<f64>,
    pub rmse_cpm: Option<f64>,
    pub retained_fraction: Option<f64>,
}

/// Every metric for one evaluation run. Fields that need data the run did
/// not have (audio for NR and RI, two subjects for G) are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau_cpm: f64,
    pub n_windows: usize,
    pub n_scored: usize,
    pub mae_cpm: Option<f64>,
    pub rmse_cpm: Option<f64>,
    pub bias_cpm: Option<f64>,
    pub loa_cpm: Option<(f64, f64)>,
    pub nr_db: Option<f64>,
    pub ri: Option<f64>,
    pub mad_sigma: Option<f64>,
    pub mad_interval_cpm: Option<(f64, f64)>,
    pub mad_inlier_mae_cpm: Option<f64>,
    pub g_ratio: Option<f64>,
    pub retained_fraction: Option<f64>,
    pub per_condition: BTreeMap<String, GroupSummary>,
    pub per_subject: BTreeMap<String, GroupSummary>,
}

/// Records of one session with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecords {
    pub subject: String,
    pub condition: String,
    pub records: Vec<WindowRecord>,
}

fn summarize(records: &[&WindowRecord]) -> GroupSummary {
    let eligible: Vec<_> = records.iter().filter(|r| scorable(r).is_some()).collect();
    let (est, gt): (Vec<f64>, Vec<f64>) = eligible
        .iter()
        .filter(|r| r.accepted)
        .filter_map(|r| scorable(r))
        .unzip();
    let m = error_metrics(&est, &gt).ok();
    GroupSummary {
        n_windows: records.len(),
        n_scored: est.len(),
        mae_cpm: m.map(|m| m.mae),
        rmse_cpm: m.map(|m| m.rmse),
        retained_fraction: (!eligible.is_empty()).then(|| est.len() as f64 / eligible.len() as f64),
    }
}

/// Applies the discrepancy threshold to every session and scores the
/// accepted windows that have valid ground truth.
pub fn evaluate(sessions: &[LabeledRecords], tau_cpm: f64) -> EvalReport {
    let flagged: Vec<(&LabeledRecords, Vec<WindowRecord>)> = sessions
        .iter()
        .map(|s| (s, reject_outliers(&s.records, tau_cpm)))
        .collect();
    let all: Vec<&WindowRecord> = flagged.iter().flat_map(|(_, r)| r.iter()).collect();
    let overall = summarize(&all);

    let mut by_cond: BTreeMap<String, Vec<&WindowRecord>> = BTreeMap::new();
    let mut by_subj: BTreeMap<String, Vec<&WindowRecord>> = BTreeMap::new();
    for (s, recs) in &flagged {
        by_cond
            .entry(s.condition.clone())
            .or_default()
            .extend(recs.iter());
        by_subj
            .entry(s.subject.clone())
            .or_default()
            .extend(recs.iter());
    }

    let (est, gt): (Vec<f64>, Vec<f64>) = all
        .iter()
        .filter(|r| r.accepted)
        .filter_map(|r| scorable(r))
        .unzip();
    let errors: Vec<f64> = est.iter().zip(&gt).map(|(e, g)| e - g).collect();
    let ba = bland_altman(&est, &gt).ok();
    let mad = mad_interval(&errors).ok();

    let subject_errors: BTreeMap<&str, Vec<f64>> = by_subj
        .iter()
        .map(|(k, recs)| {
            let e = recs
                .iter()
                .filter(|r| r.accepted)
                .filter_map(|r| scorable(r))
                .map(|(e, g)| e - g)
                .collect();
            (k.as_str(), e)
        })
        .collect();

    EvalReport {
        tau_cpm,
        n_windows: overall.n_windows,
        n_scored: overall.n_scored,
        mae_cpm: overall.mae_cpm,
        rmse_cpm: overall.rmse_cpm,
        bias_cpm: ba.map(|b| b.bias),
        loa_cpm: ba.map(|b| (b.loa_low, b.loa_high)),
        nr_db: None,
        ri: None,
        mad_sigma: mad.map(|m| m.sigma),
        mad_interval_cpm: mad.map(|m| (m.low, m.high)),
        mad_inlier_mae_cpm: mad.map(|m| m.inlier_mae),
        g_ratio: generalizability_ratio(&subject_errors).ok(),
        retained_fraction: overall.retained_fraction,
        per_condition: by_cond
            .into_iter()
            .map(|(k, v)| (k, summarize(&v)))
            .collect(),
        per_subject: by_subj
            .into_iter()
            .map(|(k, v)| (k, summarize(&v)))
            .collect(),
    }
}
