//! Butterworth filters realized as cascades of second-order sections.
//!
//! Designs go through the analog prototype, get frequency-transformed in the
//! s-plane (low-pass, high-pass or band-pass), and are mapped to the z-plane
//! with the bilinear transform using pre-warped edge frequencies. Every
//! section is checked for stability before a cascade is handed out.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{param, Error, Result};

/// Coefficients of one section, `a0` normalized to 1:
/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SosCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl SosCoeffs {
    /// Stability triangle test for `z^2 + a1 z + a2`.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b0 + z1 * self.b1 + z2 * self.b2) / (1.0 + z1 * self.a1 + z2 * self.a2)
    }

    fn scaled(self, g: f64) -> Self {
        Self {
            b0: self.b0 * g,
            b1: self.b1 * g,
            b2: self.b2 * g,
            ..self
        }
    }
}

/// Ordered second-order sections with their transposed direct-form II state.
#[derive(Debug, Clone)]
pub struct BiquadCascade {
    sections: Vec<SosCoeffs>,
    state: Vec<[f64; 2]>,
    sample_rate_hz: f64,
}

impl BiquadCascade {
    pub fn new(sections: Vec<SosCoeffs>, sample_rate_hz: f64) -> Result<Self> {
        if sections.is_empty() {
            return param("a cascade needs at least one section");
        }
        if let Some(section) = sections.iter().position(|s| !s.is_stable()) {
            return Err(Error::UnstableFilter { section });
        }
        let state = vec![[0.0; 2]; sections.len()];
        Ok(Self {
            sections,
            state,
            sample_rate_hz,
        })
    }

    pub fn sections(&self) -> &[SosCoeffs] {
        &self.sections
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }

    #[inline]
    pub fn process_sample(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (c, s) in self.sections.iter().zip(self.state.iter_mut()) {
            let y = c.b0 * v + s[0];
            s[0] = c.b1 * v - c.a1 * y + s[1];
            s[1] = c.b2 * v - c.a2 * y;
            v = y;
        }
        v
    }

    pub fn process_in_place(&mut self, buf: &mut [f64]) {
        for x in buf.iter_mut() {
            *x = self.process_sample(*x);
        }
    }

    pub fn process(&mut self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        self.process_in_place(&mut out);
        out
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate_hz;
        self.sections
            .iter()
            .map(|s| s.response(omega))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    /// Group delay in samples at `freq_hz`, from a central difference of the
    /// unwrapped per-section phase.
    pub fn group_delay_samples(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let dw = 1e-6;
        self.sections
            .iter()
            .map(|s| {
                let lo = s.response(omega - dw).arg();
                let hi = s.response(omega + dw).arg();
                let mut d = hi - lo;
                if d > PI {
                    d -= 2.0 * PI;
                } else if d < -PI {
                    d += 2.0 * PI;
                }
                -d / (2.0 * dw)
            })
            .sum()
    }
}

fn prewarp(freq_hz: f64, sample_rate_hz: f64) -> f64 {
    (PI * freq_hz / sample_rate_hz).tan()
}

/// Left-half-plane poles of the normalized Butterworth prototype of `order`,
/// upper half plane and real axis only (conjugates are implied).
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| Complex64::from_polar(1.0, PI * (2 * k + order + 1) as f64 / (2 * order) as f64))
        .filter(|p| p.im >= -1e-12)
        .map(|p| {
            if p.im.abs() < 1e-12 {
                Complex64::new(p.re, 0.0)
            } else {
                p
            }
        })
        .collect()
}

fn bilinear(s: Complex64) -> Complex64 {
    (1.0 + s) / (1.0 - s)
}

/// Denominator for a z-plane pole and its conjugate (or a real pole pair).
fn denominator(p: Complex64, q: Complex64) -> (f64, f64) {
    let a1 = -(p + q).re;
    let a2 = (p * q).re;
    (a1, a2)
}

fn check_rate(sample_rate_hz: f64) -> Result<()> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return param(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        ));
    }
    Ok(())
}

fn check_cutoff(cutoff_hz: f64, sample_rate_hz: f64) -> Result<()> {
    check_rate(sample_rate_hz)?;
    if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
        return param(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            sample_rate_hz / 2.0
        ));
    }
    Ok(())
}

/// Splits the z-plane poles into sections. A real pole is paired with the
/// next real pole when there is one, otherwise it gets a first-order section.
fn pole_sections(poles: &[Complex64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut pending_real: Option<Complex64> = None;
    for &p in poles {
        if p.im.abs() < 1e-12 {
            match pending_real.take() {
                Some(r) => out.push(denominator(r, p)),
                None => pending_real = Some(p),
            }
        } else {
            out.push(denominator(p, p.conj()));
        }
    }
    if let Some(r) = pending_real {
        out.push((-r.re, 0.0));
    }
    out
}

/// Butterworth low-pass of `order` with -3 dB at `cutoff_hz`; unity DC gain.
pub fn design_lowpass(cutoff_hz: f64, sample_rate_hz: f64, order: usize) -> Result<BiquadCascade> {
    check_cutoff(cutoff_hz, sample_rate_hz)?;
    if order == 0 {
        return param("filter order must be positive");
    }
    let wc = prewarp(cutoff_hz, sample_rate_hz);
    let poles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * wc))
        .collect();
    let sections = pole_sections(&poles)
        .into_iter()
        .map(|(a1, a2)| {
            let first_order = a2 == 0.0;
            let (b0, b1, b2) = if first_order {
                (1.0, 1.0, 0.0)
            } else {
                (1.0, 2.0, 1.0)
            };
            let s = SosCoeffs { b0, b1, b2, a1, a2 };
            let g = 1.0 / s.response(0.0).norm();
            s.scaled(g)
        })
        .collect();
    BiquadCascade::new(sections, sample_rate_hz)
}

/// Butterworth high-pass of `order` with -3 dB at `cutoff_hz`; unity gain at Nyquist.
pub fn design_highpass(cutoff_hz: f64, sample_rate_hz: f64, order: usize) -> Result<BiquadCascade> {
    check_cutoff(cutoff_hz, sample_rate_hz)?;
    if order == 0 {
        return param("filter order must be positive");
    }
    let wc = prewarp(cutoff_hz, sample_rate_hz);
    let poles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(wc / p))
        .collect();
    let sections = pole_sections(&poles)
        .into_iter()
        .map(|(a1, a2)| {
            let first_order = a2 == 0.0;
            let (b0, b1, b2) = if first_order {
                (1.0, -1.0, 0.0)
            } else {
                (1.0, -2.0, 1.0)
            };
            let s = SosCoeffs { b0, b1, b2, a1, a2 };
            let g = 1.0 / s.response(PI).norm();
            s.scaled(g)
        })
        .collect();
    BiquadCascade::new(sections, sample_rate_hz)
}

/// Butterworth band-pass with `order` poles (even), -3 dB at both edges and
/// unity gain at the pre-warped geometric centre. Produces `order / 2` sections,
/// each with one zero at DC and one at Nyquist.
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    sample_rate_hz: f64,
    order: usize,
) -> Result<BiquadCascade> {
    check_rate(sample_rate_hz)?;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate_hz / 2.0) {
        return param(format!(
            "band edges must satisfy 0 < {low_hz} < {high_hz} < {} Hz",
            sample_rate_hz / 2.0
        ));
    }
    if order == 0 || order % 2 != 0 {
        return param(format!(
            "band-pass order must be even and positive, got {order}"
        ));
    }
    let w1 = prewarp(low_hz, sample_rate_hz);
    let w2 = prewarp(high_hz, sample_rate_hz);
    let bw = w2 - w1;
    let w0sq = w1 * w2;

    let mut z_poles = Vec::with_capacity(order);
    for p in prototype_poles(order / 2) {
        // s^2 - p*bw*s + w0^2 = 0
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0sq).sqrt();
        let s1 = (pb + disc) / 2.0;
        let s2 = (pb - disc) / 2.0;
        if p.im.abs() < 1e-12 {
            // Real prototype pole: its two band-pass poles are a conjugate
            // pair or both real; one section either way.
            z_poles.push((bilinear(s1), bilinear(s2)));
        } else {
            z_poles.push((bilinear(s1), bilinear(s1).conj()));
            z_poles.push((bilinear(s2), bilinear(s2).conj()));
        }
    }

    let omega0 = 2.0 * w0sq.sqrt().atan();
    let sections = z_poles
        .into_iter()
        .map(|(p, q)| {
            let (a1, a2) = denominator(p, q);
            let s = SosCoeffs {
                b0: 1.0,
                b1: 0.0,
                b2: -1.0,
                a1,
                a2,
            };
            let g = 1.0 / s.response(omega0).norm();
            s.scaled(g)
        })
        .collect();
    BiquadCascade::new(sections, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// Analog Butterworth band-pass magnitude at a pre-warped frequency.
    fn analog_bandpass_mag(f: f64, lo: f64, hi: f64, fs: f64, order: usize) -> f64 {
        let w = prewarp(f, fs);
        let (w1, w2) = (prewarp(lo, fs), prewarp(hi, fs));
        let x = (w * w - w1 * w2).abs() / ((w2 - w1) * w);
        1.0 / (1.0 + x.powi(order as i32)).sqrt()
    }

    #[test]
    fn bandpass_edges_are_minus_three_db() {
        let f = design_bandpass(200.0, 1000.0, 8000.0, 4).unwrap();
        assert_eq!(f.sections().len(), 2);
        for edge in [200.0, 1000.0] {
            let db = f.magnitude_db(edge);
            assert!((db + 3.0103).abs() < 0.5, "edge {edge}: {db} dB");
        }
    }

    #[test]
    fn bandpass_matches_analog_prototype() {
        let f = design_bandpass(200.0, 1000.0, 8000.0, 4).unwrap();
        for freq in [50.0, 150.0, 300.0, 600.0, 1500.0, 3000.0] {
            let want = analog_bandpass_mag(freq, 200.0, 1000.0, 8000.0, 4);
            let got = f.response(freq).norm();
            assert!((want - got).abs() < 1e-9, "{freq}: {want} vs {got}");
        }
    }

    #[test]
    fn bandpass_rejects_dc() {
        let mut f = design_bandpass(200.0, 1000.0, 8000.0, 4).unwrap();
        let out = f.process(&vec![1.0; 8000]);
        let tail = rms(&out[4000..]);
        assert!(20.0 * tail.log10() <= -60.0, "DC residual {tail}");
    }

    #[test]
    fn bandpass_passes_600_hz_and_rejects_50_hz() {
        let fs = 8000.0;
        let expected_600 = 20.0 * analog_bandpass_mag(600.0, 200.0, 1000.0, fs, 4).log10();
        let expected_50 = 20.0 * analog_bandpass_mag(50.0, 200.0, 1000.0, fs, 4).log10();
        assert!(expected_600.abs() < 1.0);
        assert!(expected_50 <= -24.0);

        let mut f = design_bandpass(200.0, 1000.0, fs, 4).unwrap();
        let out = f.process(&tone(600.0, fs, 16000));
        let gain = 20.0 * (rms(&out[8000..]) / (0.5f64).sqrt()).log10();
        assert!(gain.abs() <= 1.0, "600 Hz gain {gain}");

        let mut f = design_bandpass(200.0, 1000.0, fs, 4).unwrap();
        let out = f.process(&tone(50.0, fs, 32000));
        let gain = 20.0 * (rms(&out[16000..]) / (0.5f64).sqrt()).log10();
        assert!(gain <= -24.0, "50 Hz gain {gain}");
    }

    #[test]
    fn bandpass_rejects_bad_edges() {
        assert!(design_bandpass(1000.0, 200.0, 8000.0, 4).is_err());
        assert!(design_bandpass(200.0, 4000.0, 8000.0, 4).is_err());
        assert!(design_bandpass(0.0, 1000.0, 8000.0, 4).is_err());
        assert!(design_bandpass(200.0, 1000.0, 8000.0, 3).is_err());
    }

    #[test]
    fn odd_prototype_orders_are_supported() {
        let bp = design_bandpass(200.0, 1000.0, 8000.0, 6).unwrap();
        assert_eq!(bp.sections().len(), 3);
        assert!((bp.magnitude_db(200.0) + 3.0103).abs() < 0.01);
        let lp = design_lowpass(500.0, 8000.0, 3).unwrap();
        assert!((lp.magnitude_db(500.0) + 3.0103).abs() < 0.01);
        assert!(lp.magnitude_db(1.0).abs() < 1e-6);
    }

    #[test]
    fn lowpass_and_highpass_corners() {
        let lp = design_lowpass(1.9, 125.0, 2).unwrap();
        assert!((lp.magnitude_db(1.9) + 3.0103).abs() < 1e-6);
        let hp = design_highpass(0.05, 125.0, 2).unwrap();
        assert!((hp.magnitude_db(0.05) + 3.0103).abs() < 1e-6);
        assert!(hp.magnitude_db(10.0).abs() < 0.01);
    }

    #[test]
    fn zero_in_zero_out() {
        let mut f = design_bandpass(200.0, 1000.0, 8000.0, 4).unwrap();
        assert!(f.process(&[0.0; 256]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unstable_section_is_rejected() {
        let bad = SosCoeffs {
            b0: 1.0,
            b1: 0.0,
            b2: 0.0,
            a1: 0.0,
            a2: 1.0,
        };
        assert!(matches!(
            BiquadCascade::new(vec![bad], 8000.0),
            Err(Error::UnstableFilter { section: 0 })
        ));
    }

    #[test]
    fn group_delay_is_positive_in_band() {
        let f = design_bandpass(200.0, 1000.0, 8000.0, 4).unwrap();
        let gd = f.group_delay_samples(447.0);
        assert!(gd > 0.0 && gd < 40.0, "group delay {gd}");
    }
}
