use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::features::FeatureSeries;
use super::stft::hamming;
use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Left,
    Right,
    Fused,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::Left => "left",
            Channel::Right => "right",
            Channel::Fused => "fused",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrEstimate {
    pub rate_cpm: f64,
    pub channel: Channel,
    pub window_index: usize,
    pub peak_magnitude: f64,
}

/// Location and height of the harmonic-spectrum maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePeak {
    pub rate_cpm: f64,
    pub peak_magnitude: f64,
    /// Spacing of the padded spectrum in cycles per minute.
    pub bin_spacing_cpm: f64,
}

impl RatePeak {
    pub fn into_estimate(self, channel: Channel, window_index: usize) -> RrEstimate {
        RrEstimate {
            rate_cpm: self.rate_cpm,
            channel,
            window_index,
            peak_magnitude: self.peak_magnitude,
        }
    }
}

/// Padded FFT length: next power of two at or above `pad_factor * len`.
pub fn padded_len(len: usize, pad_factor: usize) -> usize {
    (len * pad_factor.max(1)).next_power_of_two()
}

/// Shortest series that holds one full cycle of the slowest searched rate.
pub fn min_series_len(rate_hz: f64, band_cpm: (f64, f64)) -> usize {
    (rate_hz * 60.0 / band_cpm.0).ceil() as usize
}

/// A bin only counts as a candidate fundamental when its own magnitude is at
/// least this fraction of the magnitude at its double. Hamming sidelobes sit
/// near 0.008, so a pure tone at `f` no longer lets the empty bin at `f/2`
/// borrow `|C(f)|` and win.
pub const SUBHARMONIC_FLOOR: f64 = 0.05;

/// Half-width, in padded bins, of the neighbourhood searched when moving the
/// reported rate from the `C*` maximum onto the peak of its dominant term.
/// When one term is small it only adds a sloped sidelobe to the other, which
/// can pull the `C*` maximum off by about three bins.
pub const REFINE_HALF_WIDTH: usize = 4;

/// Padded magnitude spectrum `|C(k)|` for `k <= N/2` and the bin spacing in Hz.
pub fn feature_spectrum(c: &FeatureSeries, pad_factor: usize) -> (Vec<f64>, f64) {
    let n = padded_len(c.len(), pad_factor);
    let w = hamming(c.len());
    let mut buf: Vec<Complex64> = c
        .values
        .iter()
        .zip(&w)
        .map(|(&v, &h)| Complex64::new(v * h, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(n)
        .collect();
    crate::signal::fft_forward(&mut buf);
    let mag = buf[..=n / 2].iter().map(|z| z.norm()).collect();
    (mag, c.rate_hz / n as f64)
}

/// Harmonic spectrum `C*(k) = |C(k)| + |C(2k)|` for `k <= N/4`, together
/// with the padded bin spacing in Hz.
pub fn harmonic_spectrum(c: &FeatureSeries, pad_factor: usize) -> (Vec<f64>, f64) {
    let (mag, df) = feature_spectrum(c, pad_factor);
    (harmonic_of(&mag), df)
}

fn harmonic_of(mag: &[f64]) -> Vec<f64> {
    (0..=(mag.len() - 1) / 2)
        .map(|k| mag[k] + mag[2 * k])
        .collect()
}

/// Picks the respiration rate as the harmonic-spectrum argmax inside
/// `band_cpm`, skipping bins below [`SUBHARMONIC_FLOOR`]. Exact ties go to
/// the lower frequency.
pub fn estimate_rr(c: &FeatureSeries, band_cpm: (f64, f64), pad_factor: usize) -> Result<RatePeak> {
    let (lo, hi) = band_cpm;
    if !(lo > 0.0 && lo < hi) {
        return param(format!("search band ({lo}, {hi}) CPM is empty"));
    }
    let needed = min_series_len(c.rate_hz, band_cpm);
    if c.len() < needed.max(2) {
        return Err(Error::InsufficientData {
            needed: needed.max(2),
            got: c.len(),
        });
    }
    if hi / 60.0 > c.rate_hz / 4.0 {
        return param(format!(
            "search band upper edge {hi} CPM needs its harmonic below Nyquist at {} Hz",
            c.rate_hz
        ));
    }
    let (mag, df) = feature_spectrum(c, pad_factor);
    let cs = harmonic_of(&mag);
    let df_cpm = df * 60.0;
    let k_lo = (lo / df_cpm).ceil() as usize;
    let k_hi = ((hi / df_cpm).floor() as usize).min(cs.len() - 1);
    let mut best = (k_lo, f64::NEG_INFINITY);
    let mut any = false;
    for (k, &v) in cs.iter().enumerate().take(k_hi + 1).skip(k_lo) {
        any |= v > 0.0;
        if mag[k] < SUBHARMONIC_FLOOR * mag[2 * k] {
            continue;
        }
        if v > best.1 {
            best = (k, v);
        }
    }
    if !any {
        return Err(Error::DegenerateWindow(
            "feature spectrum is zero inside the search band".into(),
        ));
    }
    if !(best.1 > 0.0) {
        return Err(Error::DegenerateWindow(
            "no in-band bin carries energy of its own, only harmonics".into(),
        ));
    }
    let k = refine_peak(&mag, best.0, k_lo, k_hi);
    Ok(RatePeak {
        rate_cpm: k as f64 * df_cpm,
        peak_magnitude: best.1,
        bin_spacing_cpm: df_cpm,
    })
}

/// Moves `k` to the nearby maximum of whichever of `|C(k)|` and `|C(2k)|`
/// dominates at `k`, staying within [`REFINE_HALF_WIDTH`] and the band.
/// Ties keep the lower bin.
fn refine_peak(mag: &[f64], k: usize, k_lo: usize, k_hi: usize) -> usize {
    let stride = if mag[k] >= mag[2 * k] { 1 } else { 2 };
    let lo = k.saturating_sub(REFINE_HALF_WIDTH).max(k_lo);
    let hi = (k + REFINE_HALF_WIDTH).min(k_hi);
    let mut best = lo;
    for j in lo..=hi {
        if mag[stride * j] > mag[stride * best] {
            best = j;
        }
    }
    best
}
