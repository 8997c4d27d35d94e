//! Reference respiration rates from a respiration-belt trace.
//!
//! Each window is mean-removed, Hamming-windowed and zero-padded before an
//! FFT. The dominant in-band peak gives the rate; windows without a clear
//! peak, or with a rate outside the plausible range, are flagged invalid.

use std::ops::Range;

use log::warn;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::rr::stft::hamming;
use crate::signal::SampleBlock;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtConfig {
    pub window_s: f64,
    pub overlap: f64,
    /// FFT length is exactly `pad_factor` times the window length.
    pub pad_factor: usize,
    pub band_cpm: (f64, f64),
    /// Peak must reach this multiple of the median in-band magnitude.
    pub min_prominence: f64,
}

impl Default for GtConfig {
    fn default() -> Self {
        Self {
            window_s: 20.0,
            overlap: 0.5,
            pad_factor: 32,
            band_cpm: (7.5, 30.0),
            min_prominence: 3.0,
        }
    }
}

/// Sample ranges of full windows, aligned to the start of the signal. A
/// trailing partial window is dropped.
pub fn segment_windows(
    len: usize,
    sample_rate_hz: f64,
    window_s: f64,
    overlap: f64,
) -> Result<Vec<Range<usize>>> {
    if !(window_s > 0.0) || !(0.0..1.0).contains(&overlap) || !(sample_rate_hz > 0.0) {
        return param(format!(
            "cannot segment with window {window_s} s, overlap {overlap}, rate {sample_rate_hz} Hz"
        ));
    }
    let w = (window_s * sample_rate_hz).round() as usize;
    let stride = ((window_s * (1.0 - overlap)) * sample_rate_hz).round() as usize;
    if w == 0 || stride == 0 {
        return param("window or stride rounds to zero samples");
    }
    if len < w {
        warn!(
            "signal of {:.2} s is shorter than one {window_s} s window",
            len as f64 / sample_rate_hz
        );
        return Ok(Vec::new());
    }
    Ok((0..=(len - w) / stride)
        .map(|k| k * stride..k * stride + w)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtPeak {
    pub rate_cpm: f64,
    /// Peak magnitude over the median in-band magnitude.
    pub prominence: f64,
    pub bin_spacing_cpm: f64,
}

/// Dominant in-band spectral peak of one belt window. `None` when the
/// window carries no in-band peak at all: a flat (constant) window, or a
/// maximum sitting on a band edge that is not a local maximum.
pub fn gt_peak(
    window: &[f64],
    sample_rate_hz: f64,
    pad_factor: usize,
    band_cpm: (f64, f64),
) -> Result<Option<GtPeak>> {
    if window.len() < 2 || pad_factor == 0 {
        return param("ground-truth window needs two samples and a positive pad factor");
    }
    let (lo, hi) = band_cpm;
    if !(lo > 0.0 && lo < hi && hi / 60.0 < sample_rate_hz / 2.0) {
        return param(format!(
            "ground-truth band ({lo}, {hi}) CPM invalid at {sample_rate_hz} Hz"
        ));
    }
    let n = window.len() * pad_factor;
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let w = hamming(window.len());
    let mut buf: Vec<Complex64> = window
        .iter()
        .zip(&w)
        .map(|(&v, &h)| Complex64::new((v - mean) * h, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(n)
        .collect();
    crate::signal::fft_forward(&mut buf);

    let df_cpm = sample_rate_hz / n as f64 * 60.0;
    let k_lo = (lo / df_cpm).ceil() as usize;
    let k_hi = (hi / df_cpm).floor() as usize;
    let mag: Vec<f64> = buf[..=(k_hi + 1).min(n / 2)]
        .iter()
        .map(|z| z.norm())
        .collect();
    let band = &mag[k_lo..=k_hi];
    let (off, &peak) = band
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("band holds at least one bin");
    if !(peak > 0.0) {
        return Ok(None);
    }
    let k = k_lo + off;
    let local_max = mag[k] >= mag[k - 1] && mag.get(k + 1).is_none_or(|&m| mag[k] >= m);
    if !local_max {
        return Ok(None);
    }
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    Ok(Some(GtPeak {
        rate_cpm: k as f64 * df_cpm,
        prominence: if median > 0.0 {
            peak / median
        } else {
            f64::INFINITY
        },
        bin_spacing_cpm: df_cpm,
    }))
}

/// Reference rate of one window, or `None` when the window is invalid.
pub fn gt_rr(window: &[f64], sample_rate_hz: f64, cfg: &GtConfig) -> Result<Option<GtPeak>> {
    Ok(
        gt_peak(window, sample_rate_hz, cfg.pad_factor, cfg.band_cpm)?
            .filter(|p| is_valid(p.rate_cpm, p.prominence, cfg)),
    )
}

pub fn is_valid(rate_cpm: f64, prominence: f64, cfg: &GtConfig) -> bool {
    rate_cpm >= cfg.band_cpm.0 && rate_cpm <= cfg.band_cpm.1 && prominence >= cfg.min_prominence
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtWindow {
    pub window_index: usize,
    pub start_s: f64,
    pub rate_cpm: Option<f64>,
    pub prominence: Option<f64>,
    pub valid: bool,
}

/// Flags windows whose rate or prominence fails the validity rule.
pub fn validity_filter(windows: &[GtWindow], cfg: &GtConfig) -> Vec<GtWindow> {
    windows
        .iter()
        .map(|w| GtWindow {
            valid: match (w.rate_cpm, w.prominence) {
                (Some(r), Some(p)) => is_valid(r, p, cfg),
                _ => false,
            },
            ..w.clone()
        })
        .collect()
}

pub fn excluded_fraction(windows: &[GtWindow]) -> Option<f64> {
    if windows.is_empty() {
        return None;
    }
    Some(windows.iter().filter(|w| !w.valid).count() as f64 / windows.len() as f64)
}

/// Per-window reference rates for a whole belt recording.
pub fn ground_truth(belt: &SampleBlock, cfg: &GtConfig) -> Result<Vec<GtWindow>> {
    let fs = belt.sample_rate_hz();
    let ranges = segment_windows(belt.len(), fs, cfg.window_s, cfg.overlap)?;
    let windows = ranges
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let start_s = r.start as f64 / fs;
            let peak = gt_peak(&belt.samples()[r], fs, cfg.pad_factor, cfg.band_cpm)?;
            Ok(GtWindow {
                window_index: i,
                start_s,
                rate_cpm: peak.map(|p| p.rate_cpm),
                prominence: peak.map(|p| p.prominence),
                valid: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(validity_filter(&windows, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    const FS: f64 = 400.0;

    fn sine(hz: f64, phase: f64) -> Vec<f64> {
        (0..8000)
            .map(|i| (2.0 * PI * hz * i as f64 / FS + phase).sin())
            .collect()
    }

    #[test]
    fn segmentation_examples() {
        let w = segment_windows(60 * 400, FS, 20.0, 0.5).unwrap();
        let starts: Vec<f64> = w.iter().map(|r| r.start as f64 / FS).collect();
        assert_eq!(starts, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
        assert!(w.iter().all(|r| r.len() == 8000));
        assert_eq!(segment_windows(8000, FS, 20.0, 0.5).unwrap().len(), 1);
        assert!(segment_windows(7960, FS, 20.0, 0.5).unwrap().is_empty());
        assert!(segment_windows(8000, FS, 20.0, 1.0).is_err());
    }

    #[test]
    fn eighteen_cpm_sine() {
        let cfg = GtConfig::default();
        let p = gt_rr(&sine(0.3, 0.0), FS, &cfg).unwrap().unwrap();
        assert!((p.rate_cpm - 18.0).abs() <= 0.1, "{}", p.rate_cpm);
        assert!((p.bin_spacing_cpm - 3.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn no_padding_quantizes_to_three_cpm() {
        let p = gt_peak(&sine(0.3, 0.0), FS, 1, (7.5, 30.0))
            .unwrap()
            .unwrap();
        assert_eq!(p.bin_spacing_cpm, 3.0);
        assert!((p.rate_cpm - 18.0).abs() <= 3.0);
    }

    #[test]
    fn dc_is_invalid() {
        let cfg = GtConfig::default();
        assert_eq!(gt_rr(&vec![2.5; 8000], FS, &cfg).unwrap(), None);
    }

    // The band holds only about 7.5 independent bins, so the largest of them
    // occasionally clears 3x the median by chance: 3.1% of 1000 seeds.
    #[test]
    fn white_noise_is_almost_always_invalid() {
        let cfg = GtConfig::default();
        let n = 400;
        let mut proms = Vec::with_capacity(n);
        let mut valid = 0;
        for seed in 0..n as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..8000).map(|_| StandardNormal.sample(&mut rng)).collect();
            proms.push(
                gt_peak(&x, FS, 32, cfg.band_cpm)
                    .unwrap()
                    .map_or(0.0, |p| p.prominence),
            );
            valid += gt_rr(&x, FS, &cfg).unwrap().is_some() as usize;
        }
        proms.sort_by(f64::total_cmp);
        assert!(proms[n / 2] < 2.0, "median prominence {}", proms[n / 2]);
        assert!(proms[n * 9 / 10] < cfg.min_prominence);
        assert!(valid * 20 <= n, "{valid} of {n} noise windows accepted");
    }

    #[test]
    fn validity_examples() {
        let cfg = GtConfig::default();
        assert!(!is_valid(6.9, 10.0, &cfg));
        assert!(is_valid(18.0, 10.0, &cfg));
        assert!(!is_valid(31.0, 10.0, &cfg));
        assert!(!is_valid(18.0, 2.0, &cfg));
        let ws = vec![
            GtWindow {
                window_index: 0,
                start_s: 0.0,
                rate_cpm: Some(6.9),
                prominence: Some(9.0),
                valid: true,
            },
            GtWindow {
                window_index: 1,
                start_s: 10.0,
                rate_cpm: Some(18.0),
                prominence: Some(9.0),
                valid: false,
            },
            GtWindow {
                window_index: 2,
                start_s: 20.0,
                rate_cpm: None,
                prominence: None,
                valid: true,
            },
            GtWindow {
                window_index: 3,
                start_s: 30.0,
                rate_cpm: Some(31.0),
                prominence: Some(9.0),
                valid: true,
            },
        ];
        let out = validity_filter(&ws, &cfg);
        assert_eq!(
            out.iter().map(|w| w.valid).collect::<Vec<_>>(),
            vec![false, true, false, false]
        );
        assert_eq!(excluded_fraction(&out), Some(0.75));
    }

    #[test]
    fn whole_recording() {
        let x: Vec<f64> = (0..60 * 400)
            .map(|i| 3.0 - (2.0 * PI * 0.25 * i as f64 / FS).cos())
            .collect();
        let gt = ground_truth(&SampleBlock::new(x, FS).unwrap(), &GtConfig::default()).unwrap();
        assert_eq!(gt.len(), 5);
        for w in &gt {
            assert!(w.valid);
            assert!((w.rate_cpm.unwrap() - 15.0).abs() <= 0.1);
        }
    }

    proptest! {
        #[test]
        fn scaling_does_not_change_rate(hz in 0.15f64..0.45, phase in 0.0f64..6.28, g in 0.01f64..100.0) {
            let x = sine(hz, phase);
            let y: Vec<f64> = x.iter().map(|v| v * g).collect();
            let a = gt_peak(&x, FS, 32, (7.5, 30.0)).unwrap().unwrap();
            let b = gt_peak(&y, FS, 32, (7.5, 30.0)).unwrap().unwrap();
            prop_assert_eq!(a.rate_cpm, b.rate_cpm);
            prop_assert!((a.prominence - b.prominence).abs() <= 1e-9 * a.prominence);
        }

        #[test]
        fn padding_keeps_peak_within_one_bin(hz in 0.127f64..0.5, phase in 0.0f64..6.28) {
            let p = gt_peak(&sine(hz, phase), FS, 32, (7.5, 30.0)).unwrap().unwrap();
            prop_assert!((p.rate_cpm - 60.0 * hz).abs() <= p.bin_spacing_cpm, "{} vs {}", p.rate_cpm, 60.0 * hz);
        }

        #[test]
        fn segmentation_reconstructible(len in 0usize..100_000, ws in 1.0f64..40.0, ov in 0.0f64..0.9) {
            let w = segment_windows(len, FS, ws, ov).unwrap();
            let wl = (ws * FS).round() as usize;
            let stride = (ws * (1.0 - ov) * FS).round() as usize;
            let expect = if len < wl { 0 } else { (len - wl) / stride + 1 };
            prop_assert_eq!(w.len(), expect);
            for (k, r) in w.iter().enumerate() {
                prop_assert_eq!(r.start, k * stride);
                prop_assert!(r.end <= len);
            }
        }
    }
}
