//! Windowed respiration-rate tracking over a stream of cleaned audio.
//!
//! Audio is decimated to the STFT rate, framed, and buffered until a full
//! analysis window of frames is available. Each window then runs the
//! feature chain and the harmonic-spectrum search independently.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::estimate::{estimate_rr, RatePeak};
use super::features::{
    average_breath_spectrum, combine_features, log_spectral_energy, prepare_feature, quantile_mask,
    spectral_dissimilarity, FeatureBand, LOG_FLOOR,
};
use super::stft::{Spectrogram, StftStream};
use crate::dsp::decimate::Decimator;
use crate::error::{param, Error, Result};
use crate::signal::SampleBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrConfig {
    /// Rate of the audio handed to the tracker.
    pub input_rate_hz: f64,
    /// Rate the STFT runs at; must divide `input_rate_hz`.
    pub stft_rate_hz: f64,
    pub window_size: usize,
    pub hop: usize,
    pub quantile: f64,
    pub p_norm: f64,
    pub a_p: f64,
    pub a_d: f64,
    pub log_floor: f64,
    pub feature_band: FeatureBand,
    pub pad_factor: usize,
    pub search_band_cpm: (f64, f64),
    pub window_s: f64,
    pub overlap: f64,
}

impl Default for RrConfig {
    fn default() -> Self {
        Self {
            input_rate_hz: 8000.0,
            stft_rate_hz: 2000.0,
            window_size: 128,
            hop: 16,
            quantile: 0.85,
            p_norm: 8.0,
            a_p: 0.5,
            a_d: 0.5,
            log_floor: LOG_FLOOR,
            feature_band: FeatureBand::default(),
            pad_factor: 32,
            search_band_cpm: (7.5, 30.0),
            window_s: 20.0,
            overlap: 0.5,
        }
    }
}

impl RrConfig {
    /// STFT straight on 8 kHz audio with a 512-sample window and hop 64.
    /// Same 125 Hz frame rate as the default.
    pub fn offline() -> Self {
        Self {
            stft_rate_hz: 8000.0,
            window_size: 512,
            hop: 64,
            ..Self::default()
        }
    }

    pub fn decimation(&self) -> Result<usize> {
        let r = self.input_rate_hz / self.stft_rate_hz;
        if !(r >= 1.0) || (r - r.round()).abs() > 1e-9 {
            return param(format!(
                "STFT rate {} Hz must divide the input rate {} Hz",
                self.stft_rate_hz, self.input_rate_hz
            ));
        }
        Ok(r.round() as usize)
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.stft_rate_hz / self.hop as f64
    }

    pub fn stride_s(&self) -> f64 {
        self.window_s * (1.0 - self.overlap)
    }

    /// STFT-rate samples per analysis window.
    pub fn window_samples(&self) -> usize {
        (self.window_s * self.stft_rate_hz).round() as usize
    }

    /// Frames lying entirely inside one analysis window.
    pub fn frames_per_window(&self) -> usize {
        let n = self.window_samples();
        if n < self.window_size {
            0
        } else {
            (n - self.window_size) / self.hop + 1
        }
    }

    /// First frame of window `w`.
    pub fn window_start_frame(&self, w: usize) -> usize {
        let start = (w as f64 * self.stride_s() * self.stft_rate_hz).round() as usize;
        start.div_ceil(self.hop)
    }

    /// Input samples needed before the first window can be analysed.
    pub fn min_input_samples(&self) -> usize {
        (self.window_s * self.input_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.decimation()?;
        if self.hop == 0 || self.window_size < 2 {
            return param(format!(
                "invalid STFT geometry: window {}, hop {}",
                self.window_size, self.hop
            ));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return param(format!("quantile {} outside (0, 1)", self.quantile));
        }
        if !(self.p_norm >= 1.0) {
            return param(format!("p-norm order {} must be at least 1", self.p_norm));
        }
        if !(self.window_s > 0.0) || !(0.0..1.0).contains(&self.overlap) {
            return param(format!(
                "window {} s with overlap {} is not a valid segmentation",
                self.window_s, self.overlap
            ));
        }
        if self.frames_per_window() == 0 {
            return param(format!(
                "{} s window holds no {}-sample STFT frame",
                self.window_s, self.window_size
            ));
        }
        if self.window_start_frame(1) == 0 {
            return param("window stride rounds to zero frames");
        }
        let (lo, hi) = self.search_band_cpm;
        if !(lo > 0.0 && lo < hi) {
            return param(format!("search band ({lo}, {hi}) CPM is empty"));
        }
        Ok(())
    }
}

/// Runs the feature chain and the rate search on one window of frames.
pub fn analyze_window(spec: &Spectrogram, cfg: &RrConfig) -> Result<RatePeak> {
    let p = log_spectral_energy(spec, cfg.log_floor)?;
    let mask = quantile_mask(&p, cfg.quantile)?;
    let avg = average_breath_spectrum(spec, &mask, cfg.p_norm)?;
    let d = spectral_dissimilarity(spec, &avg, cfg.p_norm, cfg.log_floor)?;
    let c = combine_features(&p, &d, cfg.a_p, cfg.a_d)?;
    let c = prepare_feature(&c, &cfg.feature_band)?;
    estimate_rr(&c, cfg.search_band_cpm, cfg.pad_factor)
}

/// Result for one analysis window. Failures are kept per window so one
/// silent or degenerate window does not stop the stream.
#[derive(Debug)]
pub struct WindowOutcome {
    pub window_index: usize,
    pub start_s: f64,
    pub result: Result<RatePeak>,
}

/// Streaming per-window rate estimation.
#[derive(Debug)]
pub struct RrTracker {
    cfg: RrConfig,
    decimator: Decimator,
    stft: StftStream,
    frames: VecDeque<Vec<f64>>,
    /// Absolute index of `frames[0]`.
    first_frame: usize,
    next_window: usize,
    scratch: Vec<f64>,
}

impl RrTracker {
    pub fn new(cfg: RrConfig) -> Result<Self> {
        cfg.validate()?;
        let decimator = Decimator::new(cfg.input_rate_hz, cfg.decimation()?)?;
        let stft = StftStream::new(cfg.window_size, cfg.hop, cfg.stft_rate_hz)?;
        Ok(Self {
            cfg,
            decimator,
            stft,
            frames: VecDeque::new(),
            first_frame: 0,
            next_window: 0,
            scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &RrConfig {
        &self.cfg
    }

    /// Feeds input-rate samples; returns every window completed by them.
    pub fn push(&mut self, samples: &[f64]) -> Vec<WindowOutcome> {
        self.scratch.clear();
        self.decimator.process(samples, &mut self.scratch);
        self.frames.extend(self.stft.push(&self.scratch));

        let per_window = self.cfg.frames_per_window();
        let mut out = Vec::new();
        loop {
            let start = self.cfg.window_start_frame(self.next_window);
            let end = start + per_window;
            if self.first_frame + self.frames.len() < end {
                break;
            }
            let from = start - self.first_frame;
            let spec = Spectrogram {
                frames: self
                    .frames
                    .range(from..from + per_window)
                    .cloned()
                    .collect(),
                frame_rate_hz: self.cfg.frame_rate_hz(),
                bin_spacing_hz: self.cfg.stft_rate_hz / self.cfg.window_size as f64,
                window_size: self.cfg.window_size,
                hop: self.cfg.hop,
            };
            out.push(WindowOutcome {
                window_index: self.next_window,
                start_s: self.next_window as f64 * self.cfg.stride_s(),
                result: analyze_window(&spec, &self.cfg),
            });
            self.next_window += 1;
            let keep = self.cfg.window_start_frame(self.next_window);
            while self.first_frame < keep && !self.frames.is_empty() {
                self.frames.pop_front();
                self.first_frame += 1;
            }
        }
        out
    }

    pub fn windows_emitted(&self) -> usize {
        self.next_window
    }
}

/// Batch tracking over a whole recording. Errors when the recording is
/// shorter than one analysis window.
pub fn track(audio: &SampleBlock, cfg: &RrConfig) -> Result<Vec<WindowOutcome>> {
    if (audio.sample_rate_hz() - cfg.input_rate_hz).abs() > 1e-9 {
        return param(format!(
            "audio at {} Hz but the estimator expects {} Hz",
            audio.sample_rate_hz(),
            cfg.input_rate_hz
        ));
    }
    let needed = cfg.min_input_samples();
    if audio.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: audio.len(),
        });
    }
    let mut t = RrTracker::new(cfg.clone())?;
    Ok(t.push(audio.samples()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_breathing;

    #[test]
    fn default_geometry() {
        let c = RrConfig::default();
        assert_eq!(c.decimation().unwrap(), 4);
        assert_eq!(c.frame_rate_hz(), 125.0);
        assert_eq!(c.frames_per_window(), 2493);
        assert_eq!(c.window_start_frame(1), 1250);
        let o = RrConfig::offline();
        assert_eq!(o.decimation().unwrap(), 1);
        assert_eq!(o.frame_rate_hz(), 125.0);
        assert_eq!(o.frames_per_window(), 2493);
    }

    #[test]
    fn non_integer_decimation_rejected() {
        let c = RrConfig {
            stft_rate_hz: 3000.0,
            ..RrConfig::default()
        };
        assert!(matches!(RrTracker::new(c), Err(Error::Parameter(_))));
    }

    fn breathy(rate_cpm: f64, secs: f64, seed: u64) -> SampleBlock {
        gen_breathing(rate_cpm, secs, 8000.0, seed)
            .unwrap()
            .audio_block()
            .unwrap()
    }

    #[test]
    fn recovers_rate_of_clean_breathing() {
        let cfg = RrConfig::default();
        let out = track(&breathy(18.0, 60.0, 3), &cfg).unwrap();
        assert_eq!(out.len(), 5);
        for w in &out {
            let r = w.result.as_ref().unwrap();
            assert!(
                (r.rate_cpm - 18.0).abs() < 0.1,
                "window {}: {}",
                w.window_index,
                r.rate_cpm
            );
        }
        assert_eq!(out[2].start_s, 20.0);
    }

    #[test]
    fn offline_configuration_agrees() {
        let b = breathy(12.0, 40.0, 5);
        let a = track(&b, &RrConfig::default()).unwrap();
        let o = track(&b, &RrConfig::offline()).unwrap();
        assert_eq!(a.len(), o.len());
        for (a, o) in a.iter().zip(&o) {
            let (a, o) = (a.result.as_ref().unwrap(), o.result.as_ref().unwrap());
            assert!((a.rate_cpm - 12.0).abs() < 0.1 && (o.rate_cpm - 12.0).abs() < 0.1);
        }
    }

    #[test]
    fn chunking_does_not_change_estimates() {
        let x = breathy(24.0, 45.0, 9);
        let cfg = RrConfig::default();
        let batch = track(&x, &cfg).unwrap();
        let mut t = RrTracker::new(cfg).unwrap();
        let mut stream = Vec::new();
        for c in x.samples().chunks(24) {
            stream.extend(t.push(c));
        }
        assert_eq!(batch.len(), stream.len());
        for (b, s) in batch.iter().zip(&stream) {
            assert_eq!(b.result.as_ref().unwrap(), s.result.as_ref().unwrap());
        }
    }

    #[test]
    fn silence_is_degenerate_not_a_rate() {
        let b = SampleBlock::new(vec![0.0; 8000 * 20], 8000.0).unwrap();
        let out = track(&b, &RrConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].result.is_err());
    }

    #[test]
    fn short_audio_names_minimum() {
        let b = SampleBlock::new(vec![0.1; 8000 * 19], 8000.0).unwrap();
        match track(&b, &RrConfig::default()) {
            Err(Error::InsufficientData { needed, .. }) => assert_eq!(needed, 160_000),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gain_leaves_rate_unchanged() {
        let x = breathy(15.0, 20.0, 11);
        let cfg = RrConfig::default();
        let a = track(&x, &cfg).unwrap();
        let y: Vec<f64> = x.samples().iter().map(|v| v * 7.5).collect();
        let b = track(&SampleBlock::new(y, 8000.0).unwrap(), &cfg).unwrap();
        let (a, b) = (a[0].result.as_ref().unwrap(), b[0].result.as_ref().unwrap());
        assert_eq!(a.rate_cpm, b.rate_cpm);
    }
}
