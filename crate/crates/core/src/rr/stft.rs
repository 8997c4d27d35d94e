use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param, Error, Result};
use crate::signal::SampleBlock;

/// Magnitude spectrogram, one row per frame, `window_size / 2 + 1` bins per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f64>>,
    pub frame_rate_hz: f64,
    pub bin_spacing_hz: f64,
    pub window_size: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn num_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let d = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / d).cos())
        .collect()
}

/// Incremental STFT. Frame `t` covers input samples `[t*hop, t*hop + window)`
/// counted from the first sample ever pushed.
pub struct StftStream {
    window: Vec<f64>,
    hop: usize,
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    frame_buf: Vec<Complex64>,
    pending: Vec<f64>,
    /// Absolute index of `pending[0]`.
    pending_start: usize,
    next_frame: usize,
    sample_rate_hz: f64,
}

impl std::fmt::Debug for StftStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftStream")
            .field("window", &self.window.len())
            .field("hop", &self.hop)
            .field("next_frame", &self.next_frame)
            .finish()
    }
}

impl StftStream {
    pub fn new(window_size: usize, hop: usize, sample_rate_hz: f64) -> Result<Self> {
        if window_size < 2 || hop == 0 {
            return param(format!(
                "invalid STFT geometry: window {window_size}, hop {hop}"
            ));
        }
        let fft = FftPlanner::new().plan_fft_forward(window_size);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            window: hamming(window_size),
            hop,
            fft,
            scratch,
            frame_buf: vec![Complex64::default(); window_size],
            pending: Vec::new(),
            pending_start: 0,
            next_frame: 0,
            sample_rate_hz,
        })
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.sample_rate_hz / self.hop as f64
    }

    pub fn bin_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.window.len() as f64
    }

    pub fn frames_emitted(&self) -> usize {
        self.next_frame
    }

    /// Appends samples and returns every frame that became complete.
    pub fn push(&mut self, samples: &[f64]) -> Vec<Vec<f64>> {
        self.pending.extend_from_slice(samples);
        let n = self.window.len();
        let bins = n / 2 + 1;
        let mut out = Vec::new();
        loop {
            let start = self.next_frame * self.hop;
            let local = start - self.pending_start;
            if local + n > self.pending.len() {
                break;
            }
            for ((dst, &x), &w) in self
                .frame_buf
                .iter_mut()
                .zip(&self.pending[local..local + n])
                .zip(&self.window)
            {
                *dst = Complex64::new(x * w, 0.0);
            }
            self.fft
                .process_with_scratch(&mut self.frame_buf, &mut self.scratch);
            out.push(self.frame_buf[..bins].iter().map(|c| c.norm()).collect());
            self.next_frame += 1;
        }
        // Drop samples no future frame needs.
        let keep_from = self.next_frame * self.hop;
        if keep_from > self.pending_start {
            let drop = (keep_from - self.pending_start).min(self.pending.len());
            self.pending.drain(..drop);
            self.pending_start += drop;
        }
        out
    }
}

/// Batch STFT with a Hamming window.
pub fn stft(signal: &SampleBlock, window_size: usize, hop: usize) -> Result<Spectrogram> {
    if signal.len() < window_size {
        return Err(Error::InsufficientData {
            needed: window_size,
            got: signal.len(),
        });
    }
    let mut s = StftStream::new(window_size, hop, signal.sample_rate_hz())?;
    let frames = s.push(signal.samples());
    Ok(Spectrogram {
        frames,
        frame_rate_hz: s.frame_rate_hz(),
        bin_spacing_hz: s.bin_spacing_hz(),
        window_size,
        hop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal_zero_spectrum() {
        let b = SampleBlock::new(vec![0.0; 1000], 2000.0).unwrap();
        let s = stft(&b, 128, 16).unwrap();
        assert_eq!(s.num_bins(), 65);
        assert_eq!(s.len(), (1000 - 128) / 16 + 1);
        assert!(s.frames.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn bin_centred_tone_peaks_at_bin_16() {
        let fs = 2000.0;
        let x: Vec<f64> = (0..4000)
            .map(|i| (2.0 * PI * 250.0 * i as f64 / fs).sin())
            .collect();
        let s = stft(&SampleBlock::new(x, fs).unwrap(), 128, 16).unwrap();
        assert_eq!(s.bin_spacing_hz, 15.625);
        assert_eq!(s.frame_rate_hz, 125.0);
        for f in &s.frames {
            let arg = f
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(arg, 16);
        }
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut x = vec![0.0; 128];
        x[50] = 1.0;
        let s = stft(&SampleBlock::new(x, 2000.0).unwrap(), 128, 16).unwrap();
        let w = hamming(128)[50];
        assert_eq!(s.len(), 1);
        for &m in &s.frames[0] {
            assert!((m - w).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_is_an_error() {
        let b = SampleBlock::new(vec![0.0; 100], 2000.0).unwrap();
        assert!(matches!(
            stft(&b, 128, 16),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn streaming_matches_batch() {
        let x: Vec<f64> = (0..3001)
            .map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5)
            .collect();
        let batch = stft(&SampleBlock::new(x.clone(), 2000.0).unwrap(), 128, 16).unwrap();
        let mut s = StftStream::new(128, 16, 2000.0).unwrap();
        let mut frames = Vec::new();
        for c in x.chunks(37) {
            frames.extend(s.push(c));
        }
        assert_eq!(frames, batch.frames);
    }
}
