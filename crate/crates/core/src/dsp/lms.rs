//! LMS-family adaptive FIR filters.
//!
//! Three update rules share one state layout:
//!
//! * `Plain`: `h += mu e x` with `e = d(n) - h'x`.
//! * `Nlms`: `h += mu e x / (eps + x'x)`.
//! * `DelayedLeakyClipped`: the desired signal is delayed by `K` samples,
//!   weights leak by `nu = gamma * mu`, and the step is scaled by
//!   `s = min(1, tau / (eps + |e| x'x))` so the update never exceeds the
//!   size implied by `tau` on loud transients.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LmsMode {
    Plain,
    Nlms,
    DelayedLeakyClipped,
}

impl std::str::FromStr for LmsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "lms" => Ok(Self::Plain),
            "nlms" => Ok(Self::Nlms),
            "delayed-leaky-clipped" | "ans" => Ok(Self::DelayedLeakyClipped),
            other => param(format!("unknown LMS mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmsConfig {
    pub taps: usize,
    /// Delay applied to the desired signal; ignored by `Plain` and `Nlms`.
    pub delay: usize,
    pub step_size: f64,
    /// Leakage factor gamma; the per-sample leak is `gamma * step_size`.
    pub leakage: f64,
    pub clip_threshold: f64,
    pub epsilon: f64,
    pub mode: LmsMode,
}

impl Default for LmsConfig {
    fn default() -> Self {
        Self {
            taps: 256,
            delay: 64,
            step_size: 0.05,
            leakage: 2e-5,
            clip_threshold: 1.0,
            epsilon: 1e-8,
            mode: LmsMode::DelayedLeakyClipped,
        }
    }
}

impl LmsConfig {
    pub fn leak(&self) -> f64 {
        self.leakage * self.step_size
    }

    pub fn effective_delay(&self) -> usize {
        match self.mode {
            LmsMode::DelayedLeakyClipped => self.delay,
            LmsMode::Plain | LmsMode::Nlms => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return param("LMS needs at least one tap");
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return param(format!(
                "step size must be positive, got {}",
                self.step_size
            ));
        }
        let nu = self.leak();
        if !(self.leakage >= 0.0 && nu < 1.0) {
            return param(format!("leak gamma*mu = {nu} must lie in [0, 1)"));
        }
        if !(self.clip_threshold > 0.0) {
            return param("clip threshold must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return param("epsilon must be a small positive number");
        }
        Ok(())
    }
}

/// Weights plus reference and desired delay lines.
///
/// The reference line is stored twice back to back so the `taps` most
/// recent samples are always one contiguous slice, newest first.
#[derive(Debug, Clone)]
pub struct LmsState {
    weights: Vec<f64>,
    x_line: Vec<f64>,
    x_pos: usize,
    d_line: Vec<f64>,
    d_pos: usize,
    sample_index: u64,
}

/// Output of a single adaptation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmsStep {
    pub error: f64,
    /// Clipping factor actually applied (1 for `Plain`; the normalization
    /// factor `1/(eps + x'x)` for `Nlms`).
    pub scale: f64,
}

impl LmsState {
    pub fn new(config: &LmsConfig) -> Result<Self> {
        config.validate()?;
        let m = config.taps;
        Ok(Self {
            weights: vec![0.0; m],
            x_line: vec![0.0; 2 * m],
            x_pos: 0,
            d_line: vec![0.0; config.effective_delay() + 1],
            d_pos: 0,
            sample_index: 0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.weights.len() {
            return param("weight vector length does not match tap count");
        }
        self.weights.copy_from_slice(w);
        Ok(())
    }

    /// Reference vector `[x(n), x(n-1), ..., x(n-M+1)]` after the latest push.
    pub fn reference(&self) -> &[f64] {
        let m = self.weights.len();
        &self.x_line[self.x_pos..self.x_pos + m]
    }

    pub fn samples_seen(&self) -> u64 {
        self.sample_index
    }

    fn push(&mut self, x: f64, d: f64) -> f64 {
        let m = self.weights.len();
        self.x_pos = if self.x_pos == 0 {
            m - 1
        } else {
            self.x_pos - 1
        };
        self.x_line[self.x_pos] = x;
        self.x_line[self.x_pos + m] = x;

        // d_line is a ring of K+1 samples; the slot about to be overwritten
        // holds d(n-K) once the new sample is in.
        let k1 = self.d_line.len();
        self.d_line[self.d_pos] = d;
        self.d_pos = (self.d_pos + 1) % k1;
        self.d_line[self.d_pos]
    }

    /// One adaptation step with reference `x_n` and desired `d_n`.
    pub fn step(&mut self, config: &LmsConfig, x_n: f64, d_n: f64) -> Result<LmsStep> {
        let delayed = self.push(x_n, d_n);
        let m = self.weights.len();
        let x = &self.x_line[self.x_pos..self.x_pos + m];
        let h = &mut self.weights;

        let y = dot(h, x);
        let e = delayed - y;

        let (scale, leak) = match config.mode {
            LmsMode::Plain => (1.0, 0.0),
            LmsMode::Nlms => (1.0 / (config.epsilon + dot(x, x)), 0.0),
            LmsMode::DelayedLeakyClipped => {
                let drive = e.abs() * dot(x, x);
                let s = (config.clip_threshold / (config.epsilon + drive)).min(1.0);
                (s, config.leak())
            }
        };
        let g = config.step_size * scale * e;

        if leak == 0.0 {
            for (w, v) in h.iter_mut().zip(x) {
                *w += g * v;
            }
        } else {
            let keep = 1.0 - leak;
            for (w, v) in h.iter_mut().zip(x) {
                *w = keep * *w + g * v;
            }
        }
        // A NaN or infinite weight poisons the lane sum.
        let check = lane_sum(h);

        let n = self.sample_index;
        self.sample_index += 1;
        if !(check.is_finite() && e.is_finite()) {
            return Err(Error::Divergence { sample: n });
        }
        Ok(LmsStep { error: e, scale })
    }
}

const LANES: usize = 8;

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(p, q)| p * q)
        .sum();
    for (pa, pb) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += pa[i] * pb[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[inline]
fn lane_sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let ca = a.chunks_exact(LANES);
    let tail: f64 = ca.remainder().iter().sum();
    for pa in ca {
        for i in 0..LANES {
            acc[i] += pa[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Free-function form of [`LmsState::step`], returning only the error.
pub fn lms_step(state: &mut LmsState, config: &LmsConfig, x_n: f64, d_n: f64) -> Result<f64> {
    state.step(config, x_n, d_n).map(|s| s.error)
}
