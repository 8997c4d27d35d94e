//! Adaptive noise suppression of the in-ear signal using the outer-ear
//! microphone as reference.
//!
//! Both channels go through the same 200-1000 Hz Butterworth band-pass, then
//! each sample pair drives one LMS step with the outer-ear sample as
//! reference and the in-ear sample as desired signal. The LMS error is the
//! cleaned output.

use serde::{Deserialize, Serialize};

use super::biquad::{design_bandpass, BiquadCascade};
use super::lms::{LmsConfig, LmsMode, LmsState};
use crate::error::{param, Error, Result};
use crate::signal::SampleBlock;

/// What sits between the band-pass and the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiseMode {
    /// Band-pass only; the outer-ear channel is ignored.
    BandpassOnly,
    Plain,
    Nlms,
    DelayedLeakyClipped,
}

impl DenoiseMode {
    pub fn lms_mode(self) -> Option<LmsMode> {
        match self {
            Self::BandpassOnly => None,
            Self::Plain => Some(LmsMode::Plain),
            Self::Nlms => Some(LmsMode::Nlms),
            Self::DelayedLeakyClipped => Some(LmsMode::DelayedLeakyClipped),
        }
    }
}

impl From<LmsMode> for DenoiseMode {
    fn from(m: LmsMode) -> Self {
        match m {
            LmsMode::Plain => Self::Plain,
            LmsMode::Nlms => Self::Nlms,
            LmsMode::DelayedLeakyClipped => Self::DelayedLeakyClipped,
        }
    }
}

impl std::str::FromStr for DenoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpf" | "bandpass-only" => Ok(Self::BandpassOnly),
            other => other.parse::<LmsMode>().map(Self::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsConfig {
    pub sample_rate_hz: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub bandpass_order: usize,
    pub block_size: usize,
    pub bypass_lms: bool,
    /// Lives in its own config-file section.
    #[serde(skip)]
    pub lms: LmsConfig,
}

impl Default for AnsConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 8000.0,
            band_low_hz: 200.0,
            band_high_hz: 1000.0,
            bandpass_order: 4,
            block_size: 24,
            bypass_lms: false,
            lms: LmsConfig::default(),
        }
    }
}

impl AnsConfig {
    pub fn mode(&self) -> DenoiseMode {
        if self.bypass_lms {
            DenoiseMode::BandpassOnly
        } else {
            self.lms.mode.into()
        }
    }

    pub fn with_mode(mut self, mode: DenoiseMode) -> Self {
        match mode.lms_mode() {
            Some(m) => {
                self.bypass_lms = false;
                self.lms.mode = m;
            }
            None => self.bypass_lms = true,
        }
        self
    }
}

/// Streaming noise suppressor for one ear.
#[derive(Debug, Clone)]
pub struct AnsProcessor {
    config: AnsConfig,
    bp_iem: BiquadCascade,
    bp_oem: BiquadCascade,
    lms: Option<LmsState>,
}

impl AnsProcessor {
    pub fn new(config: AnsConfig) -> Result<Self> {
        let bp = design_bandpass(
            config.band_low_hz,
            config.band_high_hz,
            config.sample_rate_hz,
            config.bandpass_order,
        )?;
        let lms = if config.bypass_lms {
            None
        } else {
            Some(LmsState::new(&config.lms)?)
        };
        Ok(Self {
            config,
            bp_iem: bp.clone(),
            bp_oem: bp,
            lms,
        })
    }

    pub fn config(&self) -> &AnsConfig {
        &self.config
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.lms.as_ref().map(|s| s.weights())
    }

    /// Output latency relative to the raw in-ear signal, in samples: the LMS
    /// delay plus the band-pass group delay at the band's geometric centre.
    pub fn declared_delay_samples(&self) -> f64 {
        let centre = (self.config.band_low_hz * self.config.band_high_hz).sqrt();
        let lms_delay = if self.lms.is_some() {
            self.config.lms.effective_delay() as f64
        } else {
            0.0
        };
        lms_delay + self.bp_iem.group_delay_samples(centre)
    }

    /// Processes one pair of lockstep blocks.
    pub fn process_block(&mut self, iem: &SampleBlock, oem: &SampleBlock) -> Result<SampleBlock> {
        if iem.len() != oem.len() {
            return Err(Error::Alignment(format!(
                "block lengths differ: iem {} vs oem {}",
                iem.len(),
                oem.len()
            )));
        }
        for (name, b) in [("iem", iem), ("oem", oem)] {
            if b.sample_rate_hz() != self.config.sample_rate_hz {
                return Err(Error::Alignment(format!(
                    "{name} rate {} Hz does not match configured {} Hz",
                    b.sample_rate_hz(),
                    self.config.sample_rate_hz
                )));
            }
        }
        let mut out = Vec::with_capacity(iem.len());
        self.process_slices(iem.samples(), oem.samples(), &mut out)?;
        SampleBlock::new(out, self.config.sample_rate_hz)
    }

    /// Raw-slice variant of [`process_block`](Self::process_block); appends to `out`.
    pub fn process_slices(&mut self, iem: &[f64], oem: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if iem.len() != oem.len() {
            return Err(Error::Alignment(format!(
                "slice lengths differ: iem {} vs oem {}",
                iem.len(),
                oem.len()
            )));
        }
        match self.lms.as_mut() {
            None => out.extend(iem.iter().map(|&d| self.bp_iem.process_sample(d))),
            Some(state) => {
                for (&d, &x) in iem.iter().zip(oem) {
                    let d = self.bp_iem.process_sample(d);
                    let x = self.bp_oem.process_sample(x);
                    out.push(state.step(&self.config.lms, x, d)?.error);
                }
            }
        }
        Ok(())
    }
}

/// Cleaned signal plus the bookkeeping a caller needs to align it.
#[derive(Debug, Clone)]
pub struct DenoiseOutput {
    pub cleaned: SampleBlock,
    /// Band-passed in-ear signal before suppression (the NR reference).
    pub filtered_iem: SampleBlock,
    pub declared_delay_samples: f64,
}

/// Processes lockstep block streams. Each output block corresponds to the
/// input pair at the same position.
pub fn ans_process(
    iem: &[SampleBlock],
    oem: &[SampleBlock],
    config: &AnsConfig,
) -> Result<Vec<SampleBlock>> {
    if iem.len() != oem.len() {
        return Err(Error::Alignment(format!(
            "stream lengths differ: {} iem blocks vs {} oem blocks",
            iem.len(),
            oem.len()
        )));
    }
    let mut p = AnsProcessor::new(*config)?;
    iem.iter()
        .zip(oem)
        .map(|(d, x)| p.process_block(d, x))
        .collect()
}

/// Whole-signal convenience wrapper that streams in `config.block_size` chunks.
pub fn denoise(iem: &SampleBlock, oem: &SampleBlock, config: &AnsConfig) -> Result<DenoiseOutput> {
    if iem.len() != oem.len() {
        return Err(Error::Alignment(format!(
            "signal lengths differ: iem {} vs oem {}",
            iem.len(),
            oem.len()
        )));
    }
    if config.block_size == 0 {
        return param("block size must be positive");
    }
    let mut p = AnsProcessor::new(*config)?;
    for b in [iem, oem] {
        if b.sample_rate_hz() != config.sample_rate_hz {
            return Err(Error::Alignment(format!(
                "input rate {} Hz does not match configured {} Hz",
                b.sample_rate_hz(),
                config.sample_rate_hz
            )));
        }
    }
    let mut cleaned = Vec::with_capacity(iem.len());
    for (d, x) in iem
        .samples()
        .chunks(config.block_size)
        .zip(oem.samples().chunks(config.block_size))
    {
        p.process_slices(d, x, &mut cleaned)?;
    }
    let mut bp = design_bandpass(
        config.band_low_hz,
        config.band_high_hz,
        config.sample_rate_hz,
        config.bandpass_order,
    )?;
    let filtered = bp.process(iem.samples());
    Ok(DenoiseOutput {
        cleaned: SampleBlock::new(cleaned, config.sample_rate_hz)?,
        filtered_iem: SampleBlock::new(filtered, config.sample_rate_hz)?,
        declared_delay_samples: p.declared_delay_samples(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, seed: u64, amp: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                amp * z
            })
            .collect()
    }

    fn block(x: Vec<f64>) -> SampleBlock {
        SampleBlock::new(x, 8000.0).unwrap()
    }

    #[test]
    fn silent_reference_yields_delayed_bandpassed_iem() {
        let cfg = AnsConfig::default();
        let iem = white(8000, 1, 0.1);
        let out = denoise(&block(iem.clone()), &block(vec![0.0; 8000]), &cfg).unwrap();
        let mut bp = design_bandpass(200.0, 1000.0, 8000.0, 4).unwrap();
        let filtered = bp.process(&iem);
        let k = cfg.lms.delay;
        for n in 0..iem.len() {
            let want = if n >= k { filtered[n - k] } else { 0.0 };
            assert!((out.cleaned.samples()[n] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn independent_noise_is_left_alone() {
        let cfg = AnsConfig::default();
        let n = 30 * 8000;
        let out = denoise(&block(white(n, 2, 0.1)), &block(white(n, 3, 0.1)), &cfg).unwrap();
        let k = cfg.lms.delay;
        let e: f64 = out.cleaned.samples()[k..].iter().map(|v| v * v).sum();
        let d: f64 = out.filtered_iem.samples()[..n - k]
            .iter()
            .map(|v| v * v)
            .sum();
        let nr = 10.0 * (e / d).log10();
        assert!(nr.abs() <= 1.0, "NR {nr} dB");
    }

    #[test]
    fn block_size_does_not_change_output() {
        let n = 10 * 8000;
        let oem = white(n, 4, 0.2);
        let iem: Vec<f64> = oem
            .iter()
            .enumerate()
            .map(|(i, &v)| 0.5 * v + if i >= 3 { 0.2 * oem[i - 3] } else { 0.0 })
            .collect();
        let a = denoise(
            &block(iem.clone()),
            &block(oem.clone()),
            &AnsConfig::default(),
        )
        .unwrap();
        let cfg = AnsConfig {
            block_size: 8192,
            ..AnsConfig::default()
        };
        let b = denoise(&block(iem), &block(oem), &cfg).unwrap();
        assert_eq!(a.cleaned, b.cleaned);
    }

    #[test]
    fn mismatched_streams_are_rejected() {
        let cfg = AnsConfig::default();
        let a = vec![block(vec![0.0; 24])];
        let b = vec![block(vec![0.0; 24]), block(vec![0.0; 24])];
        assert!(matches!(
            ans_process(&a, &b, &cfg),
            Err(Error::Alignment(_))
        ));
        let c = vec![block(vec![0.0; 23])];
        assert!(matches!(
            ans_process(&a, &c, &cfg),
            Err(Error::Alignment(_))
        ));
        let slow = vec![SampleBlock::new(vec![0.0; 24], 2000.0).unwrap()];
        assert!(matches!(
            ans_process(&a, &slow, &cfg),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "bpf".parse::<DenoiseMode>().unwrap(),
            DenoiseMode::BandpassOnly
        );
        assert_eq!("nlms".parse::<DenoiseMode>().unwrap(), DenoiseMode::Nlms);
        assert_eq!(
            "delayed-leaky-clipped".parse::<DenoiseMode>().unwrap(),
            DenoiseMode::DelayedLeakyClipped
        );
        assert!("rls".parse::<DenoiseMode>().is_err());
        let c = AnsConfig::default().with_mode(DenoiseMode::BandpassOnly);
        assert_eq!(c.mode(), DenoiseMode::BandpassOnly);
    }

    #[test]
    fn declared_delay_includes_lms_delay() {
        let p = AnsProcessor::new(AnsConfig::default()).unwrap();
        let d = p.declared_delay_samples();
        assert!(d > 64.0 && d < 100.0, "{d}");
    }
}
