//! Filtering, decimation and adaptive noise suppression.

pub mod ans;
pub mod biquad;
pub mod decimate;
pub mod lms;

pub use ans::{ans_process, denoise, AnsConfig, AnsProcessor, DenoiseMode, DenoiseOutput};
pub use biquad::{design_bandpass, design_highpass, design_lowpass, BiquadCascade, SosCoeffs};
pub use decimate::{decimate, Decimator};
pub use lms::{lms_step, LmsConfig, LmsMode, LmsState, LmsStep};
