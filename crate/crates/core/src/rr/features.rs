//! Per-frame breath features computed over one analysis window.
//!
//! `p(t)` tracks log spectral energy. `d(t)` measures how far each
//! p-norm-normalized frame is from the average spectrum of the loudest
//! frames, so it dips whenever a breath sound is present. The two are
//! combined with a sign flip on `d` into a single feature whose periodicity
//! is the respiration rate.

use serde::{Deserialize, Serialize};

use super::stft::Spectrogram;
use crate::dsp::biquad::{design_highpass, design_lowpass};
use crate::error::{param, Error, Result};

/// Floor applied inside both logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub values: Vec<f64>,
    pub rate_hz: f64,
    /// Nominal duration of the analysis window the series belongs to.
    pub window_span_s: f64,
}

impl FeatureSeries {
    pub fn new(values: Vec<f64>, rate_hz: f64, window_span_s: f64) -> Self {
        Self {
            values,
            rate_hz,
            window_span_s,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn span(spec: &Spectrogram) -> f64 {
    spec.len() as f64 / spec.frame_rate_hz
}

/// `p(t) = log(max(sum_f |Y(t,f)|^2, floor)) / F`, with `F` the bin count.
pub fn log_spectral_energy(spec: &Spectrogram, floor: f64) -> Result<FeatureSeries> {
    if spec.is_empty() {
        return param("spectrogram has no frames");
    }
    let f = spec.num_bins() as f64;
    let values = spec
        .frames
        .iter()
        .map(|frame| {
            let e: f64 = frame.iter().map(|m| m * m).sum();
            e.max(floor).ln() / f
        })
        .collect();
    Ok(FeatureSeries::new(values, spec.frame_rate_hz, span(spec)))
}

/// Threshold of the empirical `q`-quantile: the order statistic at zero-based
/// rank `ceil(q N)`, clamped to the largest element.
pub fn quantile_threshold(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).min(n - 1);
    sorted[rank]
}

/// Indices of frames whose value reaches the `q`-quantile. Never empty for a
/// non-empty series.
pub fn quantile_mask(p: &FeatureSeries, q: f64) -> Result<Vec<usize>> {
    if p.is_empty() {
        return param("cannot mask an empty series");
    }
    if !(q > 0.0 && q < 1.0) {
        return param(format!("quantile must lie in (0, 1), got {q}"));
    }
    let thr = quantile_threshold(&p.values, q);
    Ok(p.values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= thr)
        .map(|(i, _)| i)
        .collect())
}

/// `(sum_f |x_f|^p)^(1/p)`, scaled by the max to stay clear of under/overflow.
pub fn p_norm(x: &[f64], p: f64) -> f64 {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return peak;
    }
    if p.is_infinite() {
        return peak;
    }
    peak * x
        .iter()
        .map(|v| (v.abs() / peak).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Mean of the masked frames after normalizing each by its p-norm. Frames
/// with zero norm are skipped and do not count towards the mean.
pub fn average_breath_spectrum(spec: &Spectrogram, mask: &[usize], p: f64) -> Result<Vec<f64>> {
    if mask.is_empty() {
        return param("mask must select at least one frame");
    }
    let bins = spec.num_bins();
    let mut acc = vec![0.0; bins];
    let mut used = 0usize;
    for &t in mask {
        let frame = spec
            .frames
            .get(t)
            .ok_or_else(|| Error::Parameter(format!("mask index {t} out of range")))?;
        let norm = p_norm(frame, p);
        if norm == 0.0 {
            continue;
        }
        for (a, &m) in acc.iter_mut().zip(frame) {
            *a += m / norm;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateWindow(
            "every masked frame has zero energy".into(),
        ));
    }
    acc.iter_mut().for_each(|a| *a /= used as f64);
    Ok(acc)
}

/// `d(t) = log(max(sum_f (Y(t,f)/||Y(t)||_p - avg(f))^2, floor)) / F`.
/// A silent frame normalizes to the zero vector.
pub fn spectral_dissimilarity(
    spec: &Spectrogram,
    avg: &[f64],
    p: f64,
    floor: f64,
) -> Result<FeatureSeries> {
    let bins = spec.num_bins();
    if avg.len() != bins {
        return param(format!(
            "average spectrum has {} bins, spectrogram has {bins}",
            avg.len()
        ));
    }
    let f = bins as f64;
    let values = spec
        .frames
        .iter()
        .map(|frame| {
            let norm = p_norm(frame, p);
            // divide rather than multiply by 1/norm: a subnormal norm would
            // overflow the reciprocal
            let r: f64 = frame
                .iter()
                .zip(avg)
                .map(|(&m, &a)| {
                    let diff = if norm > 0.0 { m / norm - a } else { -a };
                    diff * diff
                })
                .sum();
            r.max(floor).ln() / f
        })
        .collect();
    Ok(FeatureSeries::new(values, spec.frame_rate_hz, span(spec)))
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `c(t) = a_p p(t)/||p|| - a_d d(t)/||d||`.
pub fn combine_features(
    p: &FeatureSeries,
    d: &FeatureSeries,
    a_p: f64,
    a_d: f64,
) -> Result<FeatureSeries> {
    if p.len() != d.len() {
        return param(format!(
            "feature lengths differ: {} vs {}",
            p.len(),
            d.len()
        ));
    }
    let (np, nd) = (l2(&p.values), l2(&d.values));
    if np == 0.0 || nd == 0.0 {
        return Err(Error::DegenerateWindow(
            "feature series with zero L2 norm".into(),
        ));
    }
    let values = p
        .values
        .iter()
        .zip(&d.values)
        .map(|(&pv, &dv)| a_p * pv / np - a_d * dv / nd)
        .collect();
    Ok(FeatureSeries::new(values, p.rate_hz, p.window_span_s))
}

/// Respiration-band conditioning of the combined feature before rate search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureBand {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub decimation: usize,
}

impl Default for FeatureBand {
    fn default() -> Self {
        Self {
            low_hz: 0.05,
            high_hz: 1.9,
            order: 2,
            decimation: 32,
        }
    }
}

fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Removes the mean, band-passes (high-pass and low-pass of `band.order`
/// each), keeps every `band.decimation`-th sample and removes the mean again.
pub fn prepare_feature(c: &FeatureSeries, band: &FeatureBand) -> Result<FeatureSeries> {
    if band.decimation == 0 {
        return param("feature decimation must be at least 1");
    }
    let out_rate = c.rate_hz / band.decimation as f64;
    if band.high_hz >= out_rate / 2.0 {
        return param(format!(
            "feature low-pass {} Hz does not protect the {out_rate} Hz output rate",
            band.high_hz
        ));
    }
    let mut hp = design_highpass(band.low_hz, c.rate_hz, band.order)?;
    let mut lp = design_lowpass(band.high_hz, c.rate_hz, band.order)?;
    let mut x = c.values.clone();
    remove_mean(&mut x);
    hp.process_in_place(&mut x);
    lp.process_in_place(&mut x);
    let mut y: Vec<f64> = x.into_iter().step_by(band.decimation).collect();
    remove_mean(&mut y);
    Ok(FeatureSeries::new(y, out_rate, c.window_span_s))
}
