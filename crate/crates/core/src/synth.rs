//! Synthetic two-microphone recordings with known breathing and known noise.
//!
//! Breathing is two Hann-shaped bursts of 200–1000 Hz noise per cycle
//! (inspiration louder and shorter than expiration) plus a belt trace. The
//! in-ear noise is the outer-ear noise passed through an FIR path, so a long
//! enough adaptive filter can cancel it exactly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::biquad::design_bandpass;
use crate::error::{param, Result};
use crate::signal::SampleBlock;

pub const BELT_RATE_HZ: f64 = 400.0;
pub const CARRIER_BAND_HZ: (f64, f64) = (200.0, 1000.0);
/// Peak amplitude of an inspiration burst.
pub const BREATH_PEAK: f64 = 0.05;

const INSPIRATION_S: f64 = 0.8;
const EXPIRATION_S: f64 = 1.0;
const INSPIRATION_GAIN: f64 = 1.0;
const EXPIRATION_GAIN: f64 = 0.7;
/// Centre of the expiration burst as a fraction of the cycle. Moving it to
/// 0.725 or later makes the two bursts symmetric enough that the rate doubles.
const EXPIRATION_PHASE: f64 = 0.675;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Burst {
    pub center_s: f64,
    pub duration_s: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Breathing {
    pub audio: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Burst gain at every audio sample.
    pub envelope: Vec<f64>,
    pub bursts: Vec<Burst>,
    pub belt: Vec<f64>,
    pub belt_rate_hz: f64,
}

impl Breathing {
    pub fn audio_block(&self) -> Result<SampleBlock> {
        SampleBlock::new(self.audio.clone(), self.sample_rate_hz)
    }

    pub fn belt_block(&self) -> Result<SampleBlock> {
        SampleBlock::new(self.belt.clone(), self.belt_rate_hz)
    }
}

fn hann(u: f64) -> f64 {
    // u in [-0.5, 0.5]
    0.5 + 0.5 * (2.0 * PI * u).cos()
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Burst schedule for `duration_s` of breathing at `rate_cpm`. With the belt
/// at `-cos`, inspiration spans phases 0 to 0.5 and its burst is centred at
/// peak inspiratory flow (0.25). Passive expiratory flow peaks early, so the
/// expiration burst is centred at phase 0.675 and followed by an
/// end-expiratory pause. Only bursts that fit entirely are kept.
pub fn burst_schedule(rate_cpm: f64, duration_s: f64) -> Vec<Burst> {
    let period = 60.0 / rate_cpm;
    let scale = 15.0 / rate_cpm;
    let mut out = Vec::new();
    let mut n = 0usize;
    loop {
        let t0 = n as f64 * period;
        if t0 >= duration_s {
            break;
        }
        for (center, dur, gain) in [
            (0.25 * period, INSPIRATION_S * scale, INSPIRATION_GAIN),
            (
                EXPIRATION_PHASE * period,
                EXPIRATION_S * scale,
                EXPIRATION_GAIN,
            ),
        ] {
            let b = Burst {
                center_s: t0 + center,
                duration_s: dur,
                gain,
            };
            if b.center_s + b.duration_s / 2.0 <= duration_s {
                out.push(b);
            }
        }
        n += 1;
    }
    out
}

/// Clean breathing audio, its exact gain envelope, and a belt trace
/// `-cos(2 pi f t)` at [`BELT_RATE_HZ`] whose rising half is inspiration.
pub fn gen_breathing(rate_cpm: f64, duration_s: f64, fs_hz: f64, seed: u64) -> Result<Breathing> {
    if !(rate_cpm > 4.0 && rate_cpm < 60.0) {
        return param(format!("breathing rate {rate_cpm} CPM outside (4, 60)"));
    }
    if !(duration_s >= 0.0) || !(fs_hz > 2.0 * CARRIER_BAND_HZ.1) {
        return param(format!("cannot synthesize {duration_s} s at {fs_hz} Hz"));
    }
    let n = (duration_s * fs_hz).round() as usize;
    let bursts = burst_schedule(rate_cpm, duration_s);
    let mut envelope = vec![0.0; n];
    for b in &bursts {
        let lo = ((b.center_s - b.duration_s / 2.0) * fs_hz).ceil().max(0.0) as usize;
        let hi =
            (((b.center_s + b.duration_s / 2.0) * fs_hz).floor() as usize).min(n.saturating_sub(1));
        for (i, e) in envelope.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let u = (i as f64 / fs_hz - b.center_s) / b.duration_s;
            *e += b.gain * hann(u);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut carrier = gaussian(&mut rng, n);
    let mut bp = design_bandpass(CARRIER_BAND_HZ.0, CARRIER_BAND_HZ.1, fs_hz, 4)?;
    bp.process_in_place(&mut carrier);
    let c_rms = rms(&carrier);
    let audio = carrier
        .iter()
        .zip(&envelope)
        .map(|(&c, &e)| {
            if c_rms > 0.0 {
                BREATH_PEAK * e * c / c_rms
            } else {
                0.0
            }
        })
        .collect();

    let f = rate_cpm / 60.0;
    let nb = (duration_s * BELT_RATE_HZ).round() as usize;
    let belt = (0..nb)
        .map(|i| -(2.0 * PI * f * i as f64 / BELT_RATE_HZ).cos())
        .collect();

    Ok(Breathing {
        audio,
        sample_rate_hz: fs_hz,
        envelope,
        bursts,
        belt,
        belt_rate_hz: BELT_RATE_HZ,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    BandLimited,
    /// Babble-like noise with slow random loudness changes.
    AmplitudeModulated,
    /// Eight slowly modulated tones, a stand-in for music.
    TonalMixture,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::White,
        NoiseKind::BandLimited,
        NoiseKind::AmplitudeModulated,
        NoiseKind::TonalMixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::BandLimited => "band-limited",
            NoiseKind::AmplitudeModulated => "amplitude-modulated",
            NoiseKind::TonalMixture => "tonal-mixture",
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "band-limited" | "band" => Ok(NoiseKind::BandLimited),
            "amplitude-modulated" | "am" | "cafeteria" => Ok(NoiseKind::AmplitudeModulated),
            "tonal-mixture" | "tonal" | "music" => Ok(NoiseKind::TonalMixture),
            _ => param(format!("unknown noise kind '{s}'")),
        }
    }
}

/// Unit-RMS noise of the given kind.
pub fn gen_noise(kind: NoiseKind, n: usize, fs_hz: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = match kind {
        NoiseKind::White => gaussian(&mut rng, n),
        NoiseKind::BandLimited => {
            let mut x = gaussian(&mut rng, n);
            design_bandpass(100.0, 3000.0f64.min(0.45 * fs_hz), fs_hz, 4)?.process_in_place(&mut x);
            x
        }
        NoiseKind::AmplitudeModulated => {
            let mut x = gaussian(&mut rng, n);
            design_bandpass(150.0, 2500.0f64.min(0.45 * fs_hz), fs_hz, 4)?.process_in_place(&mut x);
            let mods: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(0.5..4.0), rng.random_range(0.0..2.0 * PI)))
                .collect();
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / fs_hz;
                let m: f64 = mods
                    .iter()
                    .map(|&(f, ph)| (2.0 * PI * f * t + ph).sin())
                    .sum::<f64>()
                    / 3.0;
                *v *= (1.0 + 0.9 * m).max(0.05);
            }
            x
        }
        NoiseKind::TonalMixture => {
            let partials: Vec<[f64; 5]> = (0..8)
                .map(|_| {
                    [
                        rng.random_range(200.0..1000.0),
                        rng.random_range(0.3..1.0),
                        rng.random_range(0.0..2.0 * PI),
                        rng.random_range(0.5..2.0),
                        rng.random_range(0.0..2.0 * PI),
                    ]
                })
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs_hz;
                    partials
                        .iter()
                        .map(|&[f, a, ph, fm, phm]| {
                            a * (0.6 + 0.4 * (2.0 * PI * fm * t + phm).sin())
                                * (2.0 * PI * f * t + ph).sin()
                        })
                        .sum()
                })
                .collect()
        }
    };
    let r = rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v /= r);
    }
    Ok(x)
}

/// Exponentially decaying random FIR with unit L2 norm.
pub fn random_path(taps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = (taps as f64 / 6.0).max(1.0);
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (-(i as f64) / decay).exp()
        })
        .collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        h.iter_mut().for_each(|v| *v /= norm);
    }
    h
}

/// Causal FIR filtering, output length equals input length.
pub fn fir(h: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            h.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, &hk)| hk * x[n - k])
                .sum()
        })
        .collect()
}

/// Energy of the DFT bins of `x` whose frequency lies in `[lo_hz, hi_hz]`,
/// scaled so a full-band measurement equals the time-domain sum of squares.
pub fn in_band_energy(x: &[f64], fs_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    crate::signal::fft_forward(&mut buf);
    let df = fs_hz / n as f64;
    let mut e = 0.0;
    for (k, z) in buf.iter().enumerate() {
        let f = if k <= n / 2 {
            k as f64 * df
        } else {
            (n - k) as f64 * df
        };
        if f >= lo_hz && f <= hi_hz {
            e += z.norm_sqr();
        }
    }
    e / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScenario {
    pub breath_rate_cpm: f64,
    pub duration_s: f64,
    pub fs_hz: f64,
    pub noise_kind: NoiseKind,
    /// In-band breathing-to-noise ratio in the in-ear signal. Infinite means
    /// no noise at all.
    pub snr_db: f64,
    pub path_taps: Vec<f64>,
    pub seed: u64,
}

impl SynthScenario {
    /// White noise through a random 128-tap path, 60 s at 8 kHz.
    pub fn new(breath_rate_cpm: f64, snr_db: f64, noise_kind: NoiseKind, seed: u64) -> Self {
        Self {
            breath_rate_cpm,
            duration_s: 60.0,
            fs_hz: 8000.0,
            noise_kind,
            snr_db,
            path_taps: random_path(128, seed ^ 0x9a7b),
            seed,
        }
    }

    pub fn with_duration(mut self, duration_s: f64) -> Self {
        self.duration_s = duration_s;
        self
    }

    /// The other ear: same breathing and ambient noise, an independent leak
    /// path of the same length.
    pub fn mirrored(&self) -> Self {
        Self {
            path_taps: random_path(self.path_taps.len(), self.seed ^ 0x51de),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub iem: SampleBlock,
    pub oem: SampleBlock,
    pub clean_breath: SampleBlock,
    /// Noise component of the in-ear signal, `iem - clean_breath`.
    pub iem_noise: SampleBlock,
    pub belt: SampleBlock,
    pub breathing: Breathing,
    /// Reference rate of every full 20 s / 10 s-stride window.
    pub truth_cpm: Vec<f64>,
}

/// Builds the two microphone signals. The outer-ear noise is scaled so that
/// the filtered copy reaching the in-ear microphone sits `snr_db` below the
/// breathing in the 200–1000 Hz band.
pub fn gen_scenario(s: &SynthScenario) -> Result<Scenario> {
    if s.duration_s <= 0.0 {
        return param("scenario duration must be positive");
    }
    if s.path_taps.is_empty() {
        return param("transfer path has no taps");
    }
    let breathing = gen_breathing(s.breath_rate_cpm, s.duration_s, s.fs_hz, s.seed)?;
    let n = breathing.audio.len();
    let noise = gen_noise(s.noise_kind, n, s.fs_hz, s.seed.wrapping_add(1))?;
    let leaked = fir(&s.path_taps, &noise);

    let gain = if s.snr_db.is_infinite() && s.snr_db > 0.0 {
        0.0
    } else {
        let (lo, hi) = CARRIER_BAND_HZ;
        let eb = in_band_energy(&breathing.audio, s.fs_hz, lo, hi);
        let en = in_band_energy(&leaked, s.fs_hz, lo, hi);
        if en <= 0.0 {
            return param("noise has no energy in the breathing band");
        }
        (eb / (en * 10f64.powf(s.snr_db / 10.0))).sqrt()
    };
    let oem: Vec<f64> = noise.iter().map(|v| v * gain).collect();
    let iem_noise: Vec<f64> = leaked.iter().map(|v| v * gain).collect();
    let iem: Vec<f64> = breathing
        .audio
        .iter()
        .zip(&iem_noise)
        .map(|(b, v)| b + v)
        .collect();

    let windows = if s.duration_s >= 20.0 {
        ((s.duration_s - 20.0) / 10.0).floor() as usize + 1
    } else {
        0
    };
    Ok(Scenario {
        iem: SampleBlock::new(iem, s.fs_hz)?,
        oem: SampleBlock::new(oem, s.fs_hz)?,
        clean_breath: breathing.audio_block()?,
        iem_noise: SampleBlock::new(iem_noise, s.fs_hz)?,
        belt: breathing.belt_block()?,
        breathing,
        truth_cpm: vec![s.breath_rate_cpm; windows],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_cpm_minute_has_thirty_bursts() {
        let b = gen_breathing(15.0, 60.0, 8000.0, 1).unwrap();
        assert_eq!(b.bursts.len(), 30);
        assert_eq!(b.audio.len(), 480_000);
        assert_eq!(b.belt.len(), 24_000);
        let insp = b
            .bursts
            .iter()
            .filter(|b| b.gain == INSPIRATION_GAIN)
            .count();
        assert_eq!(insp, 15);
    }

    #[test]
    fn envelope_autocorrelation_peaks_at_period() {
        let b = gen_breathing(15.0, 60.0, 2500.0, 2).unwrap();
        // envelope thinned to 100 Hz, lags 1 s .. 6 s
        let e: Vec<f64> = b.envelope.iter().step_by(25).copied().collect();
        let ac = |lag: usize| -> f64 { e.iter().zip(&e[lag..]).map(|(a, b)| a * b).sum() };
        let best = (100..600).max_by(|&a, &b| ac(a).total_cmp(&ac(b))).unwrap();
        assert_eq!(best, 400);
    }

    #[test]
    fn zero_duration_is_empty() {
        let b = gen_breathing(15.0, 0.0, 8000.0, 1).unwrap();
        assert!(
            b.audio.is_empty() && b.envelope.is_empty() && b.belt.is_empty() && b.bursts.is_empty()
        );
    }

    #[test]
    fn rate_outside_range_rejected() {
        assert!(gen_breathing(3.0, 10.0, 8000.0, 1).is_err());
        assert!(gen_breathing(60.0, 10.0, 8000.0, 1).is_err());
    }

    #[test]
    fn belt_rises_during_inspiration() {
        let b = gen_breathing(12.0, 10.0, 8000.0, 1).unwrap();
        let insp = b.bursts[0];
        let i = (insp.center_s * BELT_RATE_HZ) as usize;
        assert!(b.belt[i + 1] > b.belt[i]);
        let exp = b.bursts[1];
        let start = ((exp.center_s - exp.duration_s / 2.0) * BELT_RATE_HZ).round() as usize;
        let end = ((exp.center_s + exp.duration_s / 2.0) * BELT_RATE_HZ).round() as usize;
        let i = (exp.center_s * BELT_RATE_HZ) as usize;
        assert!(b.belt[i + 1] < b.belt[i]);
        // the whole expiration sound falls between the belt maximum and the next minimum
        let period = (BELT_RATE_HZ * 5.0) as usize;
        let top = (0..period)
            .max_by(|&x, &y| b.belt[x].total_cmp(&b.belt[y]))
            .unwrap();
        assert!(top < start && end < period);
    }

    #[test]
    fn no_noise_means_clean_iem() {
        let s = SynthScenario::new(15.0, f64::INFINITY, NoiseKind::White, 4).with_duration(5.0);
        let sc = gen_scenario(&s).unwrap();
        assert_eq!(sc.iem.samples(), sc.clean_breath.samples());
        assert!(sc.oem.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_bits() {
        for kind in NoiseKind::ALL {
            let s = SynthScenario::new(18.0, -10.0, kind, 11).with_duration(3.0);
            let (a, b) = (gen_scenario(&s).unwrap(), gen_scenario(&s).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn noise_is_linear_in_oem() {
        let s = SynthScenario::new(18.0, -10.0, NoiseKind::TonalMixture, 3).with_duration(1.0);
        let sc = gen_scenario(&s).unwrap();
        let again = fir(&s.path_taps, sc.oem.samples());
        for (a, b) in again.iter().zip(sc.iem_noise.samples()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn path_has_unit_norm() {
        let h = random_path(128, 5);
        assert_eq!(h.len(), 128);
        assert!((h.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_kinds_have_unit_rms() {
        for kind in NoiseKind::ALL {
            let x = gen_noise(kind, 16000, 8000.0, 1).unwrap();
            assert!((rms(&x) - 1.0).abs() < 1e-9, "{kind}");
            assert_eq!(kind.name().parse::<NoiseKind>().unwrap(), kind);
        }
    }

    #[test]
    fn fir_matches_hand_convolution() {
        assert_eq!(fir(&[1.0, 0.5], &[2.0, 4.0, 0.0]), vec![2.0, 5.0, 2.0]);
    }

    // Naive DFT over the band, independent of the FFT path.
    fn naive_band_energy(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
        let n = x.len();
        let tw: Vec<(f64, f64)> = (0..n)
            .map(|m| {
                let a = -2.0 * PI * m as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .collect();
        let mut e = 0.0;
        for k in 0..n {
            let f = if k <= n / 2 {
                k as f64 * fs / n as f64
            } else {
                (n - k) as f64 * fs / n as f64
            };
            if f < lo || f > hi {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let (c, si) = tw[k * j % n];
                re += v * c;
                im += v * si;
            }
            e += re * re + im * im;
        }
        e / n as f64
    }

    #[test]
    fn unit_path_snr_matches_request() {
        for kind in NoiseKind::ALL {
            let mut s = SynthScenario::new(15.0, -10.0, kind, 21).with_duration(4.0);
            s.fs_hz = 4000.0;
            s.path_taps = vec![1.0];
            let sc = gen_scenario(&s).unwrap();
            let eb = naive_band_energy(sc.clean_breath.samples(), 4000.0, 200.0, 1000.0);
            let en = naive_band_energy(sc.iem_noise.samples(), 4000.0, 200.0, 1000.0);
            let ratio_db = 10.0 * (en / eb).log10();
            assert!((ratio_db - 10.0).abs() <= 0.2, "{kind}: {ratio_db}");
        }
    }

    #[test]
    fn parseval_full_band() {
        let x = gen_noise(NoiseKind::White, 1000, 8000.0, 3).unwrap();
        let e: f64 = x.iter().map(|v| v * v).sum();
        assert!((in_band_energy(&x, 8000.0, 0.0, 4000.0) - e).abs() < 1e-9 * e);
    }
}
