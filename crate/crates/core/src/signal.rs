use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{param, Result};

/// A mono buffer of full-scale normalized samples with its sample rate.
///
/// This is the unit the streaming stages exchange. Construction checks that
/// the block is non-empty, finite, and carries a positive rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl SampleBlock {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return param(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            ));
        }
        if samples.is_empty() {
            return param("sample block must not be empty");
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return param(format!("non-finite sample at index {i}"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed block; present for clippy's sake.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Splits into consecutive blocks of `block_len` samples; the last one may be shorter.
    pub fn split_blocks(&self, block_len: usize) -> Result<Vec<SampleBlock>> {
        if block_len == 0 {
            return param("block length must be positive");
        }
        Ok(self
            .samples
            .chunks(block_len)
            .map(|c| SampleBlock {
                samples: c.to_vec(),
                sample_rate_hz: self.sample_rate_hz,
            })
            .collect())
    }

    /// Concatenates blocks that share a sample rate.
    pub fn concat(blocks: &[SampleBlock]) -> Result<SampleBlock> {
        let Some(first) = blocks.first() else {
            return param("cannot concatenate zero blocks");
        };
        let rate = first.sample_rate_hz;
        if blocks.iter().any(|b| b.sample_rate_hz != rate) {
            return param("blocks disagree on sample rate");
        }
        let samples = blocks
            .iter()
            .flat_map(|b| b.samples.iter().copied())
            .collect();
        Ok(SampleBlock {
            samples,
            sample_rate_hz: rate,
        })
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward FFT. Plans are cached per thread, which matters for the
/// large non-power-of-two lengths used by the ground-truth path.
pub(crate) fn fft_forward(buf: &mut [Complex64]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

pub(crate) fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
