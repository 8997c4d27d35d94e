//! Respiration-rate estimation from a pair of earphone microphones.
//!
//! The in-ear microphone picks up breathing sounds amplified by the occluded
//! ear canal, but also ambient noise leaking past the ear tip. The outer-ear
//! microphone hears mostly that ambient noise, so an adaptive filter can
//! learn the leak path and subtract it. What remains is turned into a
//! respiration rate by looking for periodicity in short-time spectral
//! features, and the two ears are fused with a discrepancy check.
//!
//! Module map:
//!
//! * [`dsp`]: band-pass and anti-alias filters, decimation, LMS family, noise suppression
//! * [`rr`]: STFT, breath features, harmonic-spectrum rate estimation
//! * [`fusion`]: binaural fusion and discrepancy-based rejection
//! * [`ground_truth`]: reference rates from a respiration belt
//! * [`eval`]: error metrics, noise reduction, respiratory information, sweeps
//! * [`synth`]: synthetic dual-microphone scenarios with known answers
//! * [`io`]: WAV container, CSV records, key-value reports, config, manifests
//! * [`session`]: end-to-end processing of a two-ear recording

pub mod dsp;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod ground_truth;
pub mod io;
pub mod rr;
pub mod session;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use signal::SampleBlock;
