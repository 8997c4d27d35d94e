//! Staged integer-factor decimation with Butterworth anti-alias filters.

use super::biquad::{design_lowpass, BiquadCascade};
use crate::error::{param, Result};
use crate::signal::SampleBlock;

/// Anti-alias cutoff as a fraction of each stage's output Nyquist frequency.
pub const ANTI_ALIAS_FRACTION: f64 = 0.45;
/// Order of the per-stage anti-alias low-pass.
pub const ANTI_ALIAS_ORDER: usize = 4;

#[derive(Debug, Clone)]
struct Stage {
    filter: BiquadCascade,
    factor: usize,
    phase: usize,
}

/// Streaming decimator. A composite factor is split into prime stages, each
/// preceded by its own low-pass, so block boundaries never affect the output.
#[derive(Debug, Clone)]
pub struct Decimator {
    stages: Vec<Stage>,
    input_rate_hz: f64,
    factor: usize,
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl Decimator {
    pub fn new(input_rate_hz: f64, factor: usize) -> Result<Self> {
        if factor == 0 {
            return param("decimation factor must be at least 1");
        }
        if !(input_rate_hz.is_finite() && input_rate_hz > 0.0) {
            return param(format!("sample rate must be positive, got {input_rate_hz}"));
        }
        let mut rate = input_rate_hz;
        let mut stages = Vec::new();
        for f in prime_factors(factor) {
            let out_rate = rate / f as f64;
            let cutoff = ANTI_ALIAS_FRACTION * out_rate / 2.0;
            stages.push(Stage {
                filter: design_lowpass(cutoff, rate, ANTI_ALIAS_ORDER)?,
                factor: f,
                phase: 0,
            });
            rate = out_rate;
        }
        Ok(Self {
            stages,
            input_rate_hz,
            factor,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn output_rate_hz(&self) -> f64 {
        self.input_rate_hz / self.factor as f64
    }

    /// Per-stage anti-alias filters, in processing order.
    pub fn stage_filters(&self) -> impl Iterator<Item = &BiquadCascade> {
        self.stages.iter().map(|s| &s.filter)
    }

    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>) {
        if self.stages.is_empty() {
            out.extend_from_slice(input);
            return;
        }
        let mut buf = input.to_vec();
        for stage in &mut self.stages {
            let mut next = Vec::with_capacity(buf.len() / stage.factor + 1);
            for &x in &buf {
                let y = stage.filter.process_sample(x);
                if stage.phase == 0 {
                    next.push(y);
                }
                stage.phase = (stage.phase + 1) % stage.factor;
            }
            buf = next;
        }
        out.extend_from_slice(&buf);
    }

    pub fn reset(&mut self) {
        for s in &mut self.stages {
            s.filter.reset();
            s.phase = 0;
        }
    }
}

/// One-shot decimation of a block. `factor == 1` returns the input unchanged.
pub fn decimate(input: &SampleBlock, factor: usize) -> Result<SampleBlock> {
    let mut d = Decimator::new(input.sample_rate_hz(), factor)?;
    let mut out = Vec::with_capacity(input.len() / factor + 1);
    d.process(input.samples(), &mut out);
    SampleBlock::new(out, d.output_rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn factor_one_is_identity() {
        let b = SampleBlock::new(tone(100.0, 8000.0, 500), 8000.0).unwrap();
        assert_eq!(decimate(&b, 1).unwrap(), b);
    }

    #[test]
    fn factor_zero_is_rejected() {
        let b = SampleBlock::new(vec![0.0; 10], 8000.0).unwrap();
        assert!(decimate(&b, 0).is_err());
    }

    #[test]
    fn in_band_tone_survives() {
        let b = SampleBlock::new(tone(100.0, 8000.0, 32000), 8000.0).unwrap();
        let out = decimate(&b, 4).unwrap();
        assert_eq!(out.sample_rate_hz(), 2000.0);
        assert_eq!(out.len(), 8000);
        let direct = tone(100.0, 2000.0, 8000);
        let db = 20.0 * (rms(&out.samples()[2000..]) / rms(&direct[2000..])).log10();
        assert!(db.abs() <= 1.0, "gain {db} dB");
    }

    #[test]
    fn near_nyquist_tone_is_suppressed() {
        // Oracle: the composite anti-alias response at 900 Hz.
        let d = Decimator::new(8000.0, 4).unwrap();
        let analytic: f64 = d.stage_filters().map(|f| f.magnitude_db(900.0)).sum();
        assert!(analytic <= -20.0, "analytic {analytic} dB");

        let b = SampleBlock::new(tone(900.0, 8000.0, 32000), 8000.0).unwrap();
        let out = decimate(&b, 4).unwrap();
        let db = 20.0 * (rms(&out.samples()[2000..]) / (0.5f64).sqrt()).log10();
        assert!(db <= -20.0, "residual {db} dB");
    }

    #[test]
    fn staged_48k_to_8k() {
        let d = Decimator::new(48000.0, 6).unwrap();
        assert_eq!(d.stage_filters().count(), 2);
        assert_eq!(d.output_rate_hz(), 8000.0);
    }

    #[test]
    fn streaming_matches_one_shot() {
        let x = tone(333.0, 8000.0, 10_001);
        let mut whole = Vec::new();
        Decimator::new(8000.0, 4).unwrap().process(&x, &mut whole);
        let mut d = Decimator::new(8000.0, 4).unwrap();
        let mut pieces = Vec::new();
        for c in x.chunks(24) {
            d.process(c, &mut pieces);
        }
        assert_eq!(whole, pieces);
    }
}
